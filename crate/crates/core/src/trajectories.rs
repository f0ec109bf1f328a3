//! Quantum-trajectory unraveling of the master equation: evolution under the
//! effective non-Hermitian Hamiltonian interrupted by spontaneous Raman jumps.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::angmom::{Axis, PureState};
use crate::error::{Error, Result};
use crate::expm::{exp_action, expm};
use crate::lindblad::{validate_grid, DensityMatrix, Integrator, ObservableErrors, ObservableRecord, ObservableSeries};
use crate::model::{Model, StateMoments};
use crate::ode::{Dopri5, OdeStats};
use crate::operator::{components, norm_sqr, SparseOp, C64, I, ZERO};

/// Random stream of trajectory `index` under `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on `(0, 1]`.
fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub t: f64,
    pub channel: Axis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    /// Substream index under `seed`.
    pub index: u64,
    pub jumps: Vec<JumpEvent>,
    pub times: Vec<f64>,
    /// Normalized state at every grid time.
    pub snapshots: Vec<PureState>,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub n_traj: usize,
    /// Observables of the ensemble density matrix, with standard errors.
    pub series: ObservableSeries,
    /// Ensemble density matrix at the requested grid indices.
    pub density_matrices: Vec<(f64, DensityMatrix)>,
    /// Jump history of every trajectory, by index.
    pub jumps: Vec<Vec<JumpEvent>>,
}

impl EnsembleResult {
    pub fn total_jumps(&self) -> usize {
        self.jumps.iter().map(Vec::len).sum()
    }

    /// Mean number of jumps per trajectory and its standard error.
    pub fn jump_count_mean(&self) -> (f64, f64) {
        let n = self.jumps.len() as f64;
        let mean = self.total_jumps() as f64 / n;
        if self.jumps.len() < 2 {
            return (mean, 0.0);
        }
        let ss: f64 = self.jumps.iter().map(|j| (j.len() as f64 - mean).powi(2)).sum();
        (mean, (ss / (n - 1.0) / n).sqrt())
    }

    pub fn channel_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for j in self.jumps.iter().flatten() {
            counts[j.channel.index()] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryOptions {
    pub integrator: Integrator,
    pub tolerance: Dopri5,
    /// Relative resolution of jump times.
    pub time_tolerance: f64,
    pub leakage_threshold: f64,
    /// Grid indices at which the ensemble density matrix is kept.
    pub density_snapshots: Vec<usize>,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions {
            integrator: Integrator::Auto,
            tolerance: Dopri5::default(),
            time_tolerance: 1e-10,
            leakage_threshold: 1e-6,
            density_snapshots: Vec::new(),
        }
    }
}

/// Evolution under `H_eff` on the model sector.
struct NoJump<'a> {
    model: &'a Model,
    exact: Option<ExactNoJump>,
    tolerance: Dopri5,
}

struct ExactNoJump {
    /// `−i H_eff`
    generator: SparseOp,
    bound: f64,
    blocks: Vec<Vec<usize>>,
    /// Cached `exp(−i H_eff Δt)` per block for the grid interval.
    step: Option<(f64, Vec<Array2<C64>>)>,
}

impl<'a> NoJump<'a> {
    fn new(model: &'a Model, grid: &[f64], integrator: Integrator, tolerance: Dopri5) -> Result<Self> {
        let independent = model.generator().is_time_independent();
        let exact = match integrator {
            Integrator::Auto => independent,
            Integrator::Exact if !independent => {
                return Err(Error::Domain("the exact propagator needs a time-independent field".into()))
            }
            Integrator::Exact => true,
            Integrator::Adaptive => false,
        };
        let exact = exact.then(|| {
            let heff = model.generator().at(0.0).effective.clone();
            let generator = heff.scale(-I);
            let blocks = components(heff.nrows(), &[&heff]);
            let step = uniform_step(grid).map(|dt| {
                let u = blocks
                    .iter()
                    .map(|b| expm(&heff.restrict(b).to_dense().mapv(|v| -I * v * dt)))
                    .collect();
                (dt, u)
            });
            ExactNoJump { bound: generator.norm1(), generator, blocks, step }
        });
        Ok(NoJump { model, exact, tolerance })
    }

    fn evolve(&self, psi: &[C64], t0: f64, t1: f64) -> Result<Vec<C64>> {
        match &self.exact {
            Some(ex) => Ok(exp_action(&psi.to_vec(), t1 - t0, ex.bound, |x: &Vec<C64>, out: &mut Vec<C64>| {
                ex.generator.mul_vec_into(x, out)
            })),
            None => {
                let gen = self.model.generator();
                let mut stats = OdeStats::default();
                self.tolerance.integrate(
                    |t, x: &Vec<C64>, out: &mut Vec<C64>| {
                        gen.at(t).effective.mul_vec_into(x, out);
                        out.iter_mut().for_each(|v| *v *= -I);
                    },
                    t0,
                    psi.to_vec(),
                    t1,
                    &mut stats,
                )
            }
        }
    }

    /// One grid interval; uses the cached propagator when it applies.
    fn interval(&self, psi: &[C64], t0: f64, t1: f64) -> Result<Vec<C64>> {
        if let Some(ExactNoJump { blocks, step: Some((dt, us)), .. }) = &self.exact {
            if same_step(t1 - t0, *dt) {
                let mut out = vec![ZERO; psi.len()];
                for (b, u) in blocks.iter().zip(us) {
                    for (r, &i) in b.iter().enumerate() {
                        out[i] = b.iter().enumerate().fold(ZERO, |s, (c, &k)| s + u[[r, c]] * psi[k]);
                    }
                }
                return Ok(out);
            }
        }
        self.evolve(psi, t0, t1)
    }

    /// Earliest time in `(t0, t1]` at which `‖ψ(t)‖² ≤ r`, given `‖ψ(t0)‖² > r`
    /// and `‖ψ(t1)‖² ≤ r`, with the state there.
    fn bisect(&self, psi: &[C64], t0: f64, t1: f64, r: f64, psi1: Vec<C64>, tol: f64) -> Result<(f64, Vec<C64>)> {
        let (mut lo, mut hi) = (t0, t1);
        let mut psi_lo = psi.to_vec();
        let mut psi_hi = psi1;
        while hi - lo > tol * hi.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let psi_mid = self.evolve(&psi_lo, lo, mid)?;
            if norm_sqr(&psi_mid) > r {
                lo = mid;
                psi_lo = psi_mid;
            } else {
                hi = mid;
                psi_hi = psi_mid;
            }
        }
        Ok((hi, psi_hi))
    }
}

fn uniform_step(grid: &[f64]) -> Option<f64> {
    if grid.len() < 2 {
        return None;
    }
    let dt = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    grid.windows(2).all(|w| same_step(w[1] - w[0], dt)).then_some(dt)
}

fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs()
}

/// `U_eff(t1, t0) ψ` without renormalization.
pub fn evolve_no_jump(model: &Model, psi: &PureState, t0: f64, t1: f64, options: &TrajectoryOptions) -> Result<PureState> {
    if t1 < t0 {
        return Err(Error::Domain("evolve_no_jump needs t1 ≥ t0".into()));
    }
    let local = model.restrict_state(psi)?;
    let prop = NoJump::new(model, &[], options.integrator, options.tolerance)?;
    Ok(model.lift_state(&prop.evolve(&local, t0, t1)?))
}

/// Time at which the no-jump norm of a normalized `psi` first drops to `r`,
/// searched over `(t0, horizon]` in steps of `coarse`.
pub fn sample_jump_time(
    model: &Model,
    psi: &PureState,
    t0: f64,
    r: f64,
    horizon: f64,
    coarse: f64,
    options: &TrajectoryOptions,
) -> Result<Option<f64>> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Domain(format!("uniform draw {r} outside (0, 1]")));
    }
    if coarse.is_nan() || coarse <= 0.0 {
        return Err(Error::Domain("coarse step must be positive".into()));
    }
    let prop = NoJump::new(model, &[], options.integrator, options.tolerance)?;
    let mut state = model.restrict_state(psi)?;
    crate::operator::normalize(&mut state);
    let mut t = t0;
    while t < horizon {
        let next = (t + coarse).min(horizon);
        let moved = prop.evolve(&state, t, next)?;
        if norm_sqr(&moved) <= r {
            let (tj, _) = prop.bisect(&state, t, next, r, moved, options.time_tolerance)?;
            return Ok(Some(tj));
        }
        state = moved;
        t = next;
    }
    Ok(None)
}

/// Channel for weights `w` (summing to one) and a draw `r ∈ (0, 1]`.
pub fn channel_from_weights(w: [f64; 3], r: f64) -> Axis {
    if r <= w[0] {
        Axis::X
    } else if r <= w[0] + w[1] {
        Axis::Y
    } else {
        Axis::Z
    }
}

/// Normalized channel weights `W_i` for a sector-local state.
fn channel_weights(model: &Model, psi: &[C64], t: f64) -> Result<[f64; 3]> {
    let ops = model.generator().at(t);
    let raw = ops.jump_weights.clone().map(|w| w.expectation(psi).re.max(0.0));
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ImpossibleJump { t });
    }
    Ok(raw.map(|v| v / total))
}

fn apply_jump(model: &Model, psi: &[C64], t: f64, r: f64) -> Result<(Axis, Vec<C64>)> {
    let w = channel_weights(model, psi, t)?;
    let channel = channel_from_weights(w, r);
    let mut out = model.generator().at(t).jumps[channel.index()].mul_vec(psi);
    if crate::operator::normalize(&mut out) == 0.0 {
        return Err(Error::ImpossibleJump { t });
    }
    Ok((channel, out))
}

/// Channel weights of a pre-jump state.
pub fn jump_channel_weights(model: &Model, psi: &PureState, t: f64) -> Result<[f64; 3]> {
    channel_weights(model, &model.restrict_state(psi)?, t)
}

/// Chooses the emission channel with draw `r` and returns the normalized post-jump state.
pub fn select_jump_channel(model: &Model, psi: &PureState, t: f64, r: f64) -> Result<(Axis, PureState)> {
    let (channel, out) = apply_jump(model, &model.restrict_state(psi)?, t, r)?;
    Ok((channel, model.lift_state(&out)))
}

struct Walker {
    rng: ChaCha8Rng,
    threshold: f64,
    /// `None` while the trajectory still follows the shared no-jump branch.
    state: Option<Vec<C64>>,
    jumps: Vec<JumpEvent>,
}

impl Walker {
    /// Jumps at `t` from the pre-jump state `pre`, then evolves on to `t1`.
    fn jump_and_advance(&mut self, prop: &NoJump, pre: &[C64], t: f64, t1: f64, tol: f64) -> Result<Vec<C64>> {
        let (channel, post) = apply_jump(prop.model, pre, t, unit_draw(&mut self.rng))?;
        self.jumps.push(JumpEvent { t, channel });
        self.threshold = unit_draw(&mut self.rng);
        self.advance(prop, post, t, t1, tol)
    }

    fn advance(&mut self, prop: &NoJump, mut psi: Vec<C64>, mut t: f64, t1: f64, tol: f64) -> Result<Vec<C64>> {
        let start = t;
        loop {
            let moved = if t == start { prop.interval(&psi, t, t1)? } else { prop.evolve(&psi, t, t1)? };
            if norm_sqr(&moved) > self.threshold {
                return Ok(moved);
            }
            let (tj, pre) = prop.bisect(&psi, t, t1, self.threshold, moved, tol)?;
            let (channel, post) = apply_jump(prop.model, &pre, tj, unit_draw(&mut self.rng))?;
            self.jumps.push(JumpEvent { t: tj, channel });
            self.threshold = unit_draw(&mut self.rng);
            psi = post;
            t = tj;
            if t >= t1 {
                return Ok(psi);
            }
        }
    }
}

/// A distinct normalized state carried by `count` trajectories.
struct Class<'a> {
    state: &'a [C64],
    count: usize,
}

fn normalized(psi: &[C64]) -> Vec<C64> {
    let mut v = psi.to_vec();
    crate::operator::normalize(&mut v);
    v
}

/// Ensemble observables and errors from the distinct states at one time.
fn reduce(model: &Model, classes: &[Class], t: f64, leakage_threshold: f64) -> Result<(ObservableRecord, ObservableErrors)> {
    let n: usize = classes.iter().map(|c| c.count).sum();
    let nf = n as f64;
    let moments: Vec<StateMoments> = classes.iter().map(|c| model.state_moments(c.state)).collect();
    if let Some(m) = moments.iter().find(|m| m.leakage > leakage_threshold) {
        return Err(Error::Leakage { t, leakage: m.leakage, threshold: leakage_threshold });
    }

    // linear observables: mean and plain standard error
    let linear = |f: &dyn Fn(&StateMoments) -> f64| -> (f64, f64) {
        let mean = classes.iter().zip(&moments).map(|(c, m)| c.count as f64 * f(m)).sum::<f64>() / nf;
        if n < 2 {
            return (mean, 0.0);
        }
        let ss: f64 = classes.iter().zip(&moments).map(|(c, m)| c.count as f64 * (f(m) - mean).powi(2)).sum();
        (mean, (ss / (nf - 1.0) / nf).sqrt())
    };
    let mean: [(f64, f64); 3] = std::array::from_fn(|a| linear(&|m| m.mean[a]));
    let second: [(f64, f64); 3] = std::array::from_fn(|a| linear(&|m| m.second[a]));
    let j2 = linear(&|m| m.second.iter().sum());
    let leakage = linear(&|m| m.leakage);
    let trace = linear(&|m| m.norm_sqr).0;

    let jackknife = |values: &dyn Fn(usize) -> f64| -> f64 {
        if n < 2 {
            return 0.0;
        }
        let avg = classes.iter().enumerate().map(|(i, c)| c.count as f64 * values(i)).sum::<f64>() / nf;
        let ss: f64 = classes.iter().enumerate().map(|(i, c)| c.count as f64 * (values(i) - avg).powi(2)).sum();
        ((nf - 1.0) / nf * ss).sqrt()
    };
    let var_err: [f64; 3] = std::array::from_fn(|a| {
        jackknife(&|i| {
            let m = (nf * mean[a].0 - moments[i].mean[a]) / (nf - 1.0);
            let s = (nf * second[a].0 - moments[i].second[a]) / (nf - 1.0);
            s - m * m
        })
    });

    // q_i = ⟨φ_i|ρ|φ_i⟩, Tr ρ² = Σ_i w_i q_i
    let q = overlaps_with_ensemble(classes, nf);
    let purity: f64 = classes.iter().zip(&q).map(|(c, qi)| c.count as f64 / nf * qi).sum();
    let purity_err = jackknife(&|i| (nf * nf * purity - 2.0 * nf * q[i] + 1.0) / ((nf - 1.0) * (nf - 1.0)));

    let record = ObservableRecord::from_moments(
        t,
        mean.map(|m| m.0),
        second.map(|s| s.0),
        purity,
        trace,
        leakage.0,
    );
    let errors =
        ObservableErrors { mean_j: mean.map(|m| m.1), var_j: var_err, j2: j2.1, purity: purity_err, leakage: leakage.1 };
    Ok((record, errors))
}

/// `⟨φ_i|ρ|φ_i⟩` for each class, through the Gram matrix when there are few
/// classes and through ρ itself otherwise.
fn overlaps_with_ensemble(classes: &[Class], nf: f64) -> Vec<f64> {
    let k = classes.len();
    let d = classes.first().map_or(0, |c| c.state.len());
    if k <= 2 * d {
        let mut gram = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let ov = classes[a].state.iter().zip(classes[b].state).fold(ZERO, |s, (x, y)| s + x.conj() * y);
                gram[a * k + b] = ov.norm_sqr();
                gram[b * k + a] = ov.norm_sqr();
            }
        }
        (0..k).map(|a| (0..k).map(|b| classes[b].count as f64 / nf * gram[a * k + b]).sum()).collect()
    } else {
        let rho = ensemble_matrix(classes, nf);
        classes
            .iter()
            .map(|c| {
                let v = c.state;
                (0..d).map(|r| v[r].conj() * (0..d).fold(ZERO, |s, col| s + rho[[r, col]] * v[col])).sum::<C64>().re
            })
            .collect()
    }
}

fn ensemble_matrix(classes: &[Class], nf: f64) -> Array2<C64> {
    let d = classes.first().map_or(0, |c| c.state.len());
    let mut rho = Array2::zeros((d, d));
    for c in classes {
        let w = c.count as f64 / nf;
        for r in 0..d {
            let vr = c.state[r] * w;
            for col in 0..d {
                rho[[r, col]] += vr * c.state[col].conj();
            }
        }
    }
    rho
}

struct Engine<'a> {
    model: &'a Model,
    grid: &'a [f64],
    options: &'a TrajectoryOptions,
    prop: NoJump<'a>,
}

struct EngineOutput {
    series: ObservableSeries,
    density_matrices: Vec<(f64, DensityMatrix)>,
    jumps: Vec<Vec<JumpEvent>>,
    /// Per walker, per grid time (only when requested).
    snapshots: Option<Vec<Vec<Vec<C64>>>>,
}

impl<'a> Engine<'a> {
    fn new(model: &'a Model, grid: &'a [f64], options: &'a TrajectoryOptions) -> Result<Self> {
        validate_grid(grid)?;
        let prop = NoJump::new(model, grid, options.integrator, options.tolerance)?;
        Ok(Engine { model, grid, options, prop })
    }

    /// Runs walkers `indices` in lockstep over the grid.
    fn run(&self, psi0: &[C64], seed: u64, indices: &[u64], keep_snapshots: bool) -> Result<EngineOutput> {
        let tol = self.options.time_tolerance;
        let mut shared = normalized(psi0);
        let mut walkers: Vec<Walker> = indices
            .iter()
            .map(|&index| {
                let mut rng = trajectory_rng(seed, index);
                let threshold = unit_draw(&mut rng);
                Walker { rng, threshold, state: None, jumps: Vec::new() }
            })
            .collect();
        let mut series = ObservableSeries { records: Vec::new(), errors: Some(Vec::new()) };
        let mut density_matrices = Vec::new();
        let mut snapshots = keep_snapshots.then(|| vec![Vec::with_capacity(self.grid.len()); walkers.len()]);

        for (k, &t) in self.grid.iter().enumerate() {
            if k > 0 {
                let t0 = self.grid[k - 1];
                let next_shared = self.prop.interval(&shared, t0, t)?;
                let shared_norm = norm_sqr(&next_shared);
                let results: Vec<Result<()>> = walkers
                    .par_iter_mut()
                    .map(|w| {
                        let new_state = match w.state.take() {
                            Some(psi) => Some(w.advance(&self.prop, psi, t0, t, tol)?),
                            None if shared_norm <= w.threshold => {
                                let (tj, pre) =
                                    self.prop.bisect(&shared, t0, t, w.threshold, next_shared.clone(), tol)?;
                                Some(w.jump_and_advance(&self.prop, &pre, tj, t, tol)?)
                            }
                            None => None,
                        };
                        w.state = new_state;
                        Ok(())
                    })
                    .collect();
                results.into_iter().collect::<Result<Vec<()>>>()?;
                shared = next_shared;
            }

            let shared_state = normalized(&shared);
            let own: Vec<Option<Vec<C64>>> = walkers.iter().map(|w| w.state.as_deref().map(normalized)).collect();
            let mut classes: Vec<Class> = Vec::new();
            let mut shared_slot: Option<usize> = None;
            for own_state in &own {
                match own_state {
                    Some(v) => classes.push(Class { state: v, count: 1 }),
                    None => match shared_slot {
                        Some(i) => classes[i].count += 1,
                        None => {
                            shared_slot = Some(classes.len());
                            classes.push(Class { state: &shared_state, count: 1 });
                        }
                    },
                }
            }
            let (record, errors) = reduce(self.model, &classes, t, self.options.leakage_threshold)?;
            series.records.push(record);
            series.errors.as_mut().expect("ensemble errors").push(errors);
            if self.options.density_snapshots.contains(&k) {
                let rho = ensemble_matrix(&classes, walkers.len() as f64);
                density_matrices.push((t, self.model.lift_density(&rho.view())));
            }
            if let Some(snaps) = snapshots.as_mut() {
                for (s, o) in snaps.iter_mut().zip(&own) {
                    s.push(o.clone().unwrap_or_else(|| shared_state.clone()));
                }
            }
        }
        let jumps = walkers.into_iter().map(|w| w.jumps).collect();
        Ok(EngineOutput { series, density_matrices, jumps, snapshots })
    }
}

/// One trajectory, a deterministic function of `(seed, index)` and the inputs.
pub fn run_trajectory(
    model: &Model,
    psi0: &PureState,
    grid: &[f64],
    seed: u64,
    index: u64,
    options: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    let engine = Engine::new(model, grid, options)?;
    let local = model.restrict_state(psi0)?;
    let out = engine.run(&local, seed, &[index], true)?;
    let snapshots = out.snapshots.expect("snapshots requested").remove(0);
    Ok(TrajectoryRecord {
        seed,
        index,
        jumps: out.jumps.into_iter().next().unwrap_or_default(),
        times: grid.to_vec(),
        snapshots: snapshots.iter().map(|s| model.lift_state(s)).collect(),
    })
}

/// `n_traj` trajectories with substreams `0..n_traj` of `seed`, reduced at every grid time.
pub fn run_ensemble(
    model: &Model,
    psi0: &PureState,
    grid: &[f64],
    seed: u64,
    n_traj: usize,
    options: &TrajectoryOptions,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::Domain("at least one trajectory is required".into()));
    }
    let engine = Engine::new(model, grid, options)?;
    let local = model.restrict_state(psi0)?;
    let indices: Vec<u64> = (0..n_traj as u64).collect();
    let out = engine.run(&local, seed, &indices, false)?;
    Ok(EnsembleResult { n_traj, series: out.series, density_matrices: out.density_matrices, jumps: out.jumps })
}

/// Reduces independently computed trajectory records.
pub fn ensemble_average(model: &Model, records: &[TrajectoryRecord], options: &TrajectoryOptions) -> Result<EnsembleResult> {
    let first = records.first().ok_or_else(|| Error::Domain("no trajectory records".into()))?;
    if records.iter().any(|r| r.times != first.times || r.snapshots.len() != first.times.len()) {
        return Err(Error::GridMismatch);
    }
    let n = records.len();
    let mut series = ObservableSeries { records: Vec::new(), errors: Some(Vec::new()) };
    let mut density_matrices = Vec::new();
    for (k, &t) in first.times.iter().enumerate() {
        let states: Vec<Vec<C64>> =
            records.iter().map(|r| model.restrict_state(&r.snapshots[k])).collect::<Result<_>>()?;
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut classes: Vec<Class> = Vec::new();
        for s in &states {
            let key: Vec<u64> = s.iter().flat_map(|v| [v.re.to_bits(), v.im.to_bits()]).collect();
            match seen.get(&key) {
                Some(&i) => classes[i].count += 1,
                None => {
                    seen.insert(key, classes.len());
                    classes.push(Class { state: s, count: 1 });
                }
            }
        }
        let (record, errors) = reduce(model, &classes, t, options.leakage_threshold)?;
        series.records.push(record);
        series.errors.as_mut().expect("ensemble errors").push(errors);
        if options.density_snapshots.contains(&k) {
            let rho = ensemble_matrix(&classes, n as f64);
            density_matrices.push((t, model.lift_density(&rho.view())));
        }
    }
    Ok(EnsembleResult {
        n_traj: n,
        series,
        density_matrices,
        jumps: records.iter().map(|r| r.jumps.clone()).collect(),
    })
}
