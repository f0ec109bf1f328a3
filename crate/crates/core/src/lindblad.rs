//! Direct integration of the rotational master equation.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::angmom::{angular_momentum, Axis, PureState, RotBasis};
use crate::coupling::Operators;
use crate::error::{Error, Result};
use crate::expm::exp_action;
use crate::model::Model;
use crate::ode::{Dopri5, OdeStats};
use crate::operator::{adjoint_into, hermiticity_residual, C64, I};

/// Density operator on a rotational ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    basis: Arc<RotBasis>,
    matrix: Array2<C64>,
}

impl DensityMatrix {
    /// Wraps a matrix without checks beyond the shape.
    pub fn from_matrix(basis: Arc<RotBasis>, matrix: Array2<C64>) -> Self {
        assert_eq!(matrix.dim(), (basis.len(), basis.len()), "matrix does not match the basis");
        DensityMatrix { basis, matrix }
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`
    pub fn pure(state: &PureState) -> Self {
        let a = state.amplitudes();
        let n = state.norm_sqr();
        let matrix = Array2::from_shape_fn((a.len(), a.len()), |(r, c)| a[r] * a[c].conj() / n);
        DensityMatrix { basis: state.basis().clone(), matrix }
    }

    pub fn maximally_mixed(basis: Arc<RotBasis>) -> Self {
        let n = basis.len();
        let matrix = Array2::from_diag_elem(n, C64::new(1.0 / n as f64, 0.0));
        DensityMatrix { basis, matrix }
    }

    pub fn basis(&self) -> &Arc<RotBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|v| v.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.matrix.view())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix.view())
    }

    /// Checks the invariants expected of a valid input state.
    pub fn validate(&self) -> Result<()> {
        if self.hermiticity_residual() > 1e-10 {
            return Err(Error::Domain(format!(
                "density matrix is not Hermitian (residual {:.3e})",
                self.hermiticity_residual()
            )));
        }
        if (self.trace() - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("density matrix trace is {}", self.trace())));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::Domain(format!("density matrix has eigenvalue {min:.3e}")));
        }
        Ok(())
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &ArrayView2<C64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let dm = DMatrix::from_fn(n, n, |r, c| (m[[r, c]] + m[[c, r]].conj()) * 0.5);
    dm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub mean_j: [f64; 3],
    pub var_j: [f64; 3],
    /// `⟨J²⟩`
    pub j2: f64,
    /// `Tr σ²`
    pub purity: f64,
    pub trace: f64,
    /// Population with `j ≥ j_max − 2`.
    pub leakage: f64,
}

impl ObservableRecord {
    /// Builds a record from `Tr(σJ_a)` and `Tr(σJ_a²)`.
    pub fn from_moments(t: f64, mean: [f64; 3], second: [f64; 3], purity: f64, trace: f64, leakage: f64) -> Self {
        ObservableRecord {
            t,
            mean_j: mean,
            var_j: std::array::from_fn(|a| second[a] - mean[a] * mean[a]),
            j2: second.iter().sum(),
            purity,
            trace,
            leakage,
        }
    }
}

/// Standard errors attached to an ensemble estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ObservableErrors {
    pub mean_j: [f64; 3],
    pub var_j: [f64; 3],
    pub j2: f64,
    pub purity: f64,
    pub leakage: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservableSeries {
    pub records: Vec<ObservableRecord>,
    /// Present for Monte-Carlo estimates.
    pub errors: Option<Vec<ObservableErrors>>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn mean(&self, axis: Axis) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_j[axis.index()]).collect()
    }

    pub fn variance(&self, axis: Axis) -> Vec<f64> {
        self.records.iter().map(|r| r.var_j[axis.index()]).collect()
    }
}

/// Observables of a density matrix on its own ladder.
pub fn observables(rho: &DensityMatrix) -> ObservableRecord {
    let basis = rho.basis();
    let view = rho.matrix().view();
    let mean = Axis::ALL.map(|a| angular_momentum(basis, a).trace_with(&view).re);
    let second = Axis::ALL.map(|a| {
        let j = angular_momentum(basis, a);
        j.matmul(&j).trace_with(&view).re
    });
    let edge = basis.j_max().saturating_sub(2);
    let leakage =
        basis.states().iter().enumerate().filter(|(_, s)| s.0 >= edge).map(|(i, _)| view[[i, i]].re).sum();
    ObservableRecord::from_moments(0.0, mean, second, rho.purity(), rho.trace(), leakage)
}

/// Scratch space for [`rhs_into`].
#[derive(Clone, Debug)]
pub struct RhsWorkspace {
    b: Array2<C64>,
    bt: Array2<C64>,
    c: Array2<C64>,
    w: Array2<C64>,
    x: Array2<C64>,
    y: Array2<C64>,
    yt: Array2<C64>,
    c_sq: Array2<C64>,
    acc: Array2<C64>,
}

impl RhsWorkspace {
    pub fn new(ops: &Operators) -> Self {
        let d = ops.factored.drive.ncols();
        let e = ops.factored.drive.nrows();
        let z = |r, c| Array2::zeros((r, c));
        RhsWorkspace {
            b: z(e, d),
            bt: z(d, e),
            c: z(e, d),
            w: z(d, d),
            x: z(e, e),
            y: z(d, e),
            yt: z(e, d),
            c_sq: z(d, d),
            acc: z(d, d),
        }
    }
}

/// `dσ/dt = −i(Kσ − σK†) + Σ_i S_i σ S_i†` with `K` the Lindblad drift, for
/// Hermitian `σ`. The result is Hermitian to the last bit.
pub fn rhs_into(ops: &Operators, sigma: &ArrayView2<C64>, out: &mut Array2<C64>, ws: &mut RhsWorkspace) {
    let f = &ops.factored;
    let n = sigma.nrows();
    // Kσ = H_M σ + A† Q (Aσ)
    f.drive.mul_dense_into(sigma, &mut ws.b);
    f.inner.mul_dense_into(&ws.b.view(), &mut ws.c);
    f.drive_adjoint.mul_dense_into(&ws.c.view(), &mut ws.w);
    {
        let w = ws.w.as_slice_mut().expect("standard layout");
        for (r, row) in sigma.outer_iter().enumerate() {
            let e = f.energies[r];
            for (c, v) in row.iter().enumerate() {
                w[r * n + c] += v * e;
            }
        }
    }
    let jumps = !f.emission.is_empty();
    if jumps {
        adjoint_into(&ws.b.view(), &mut ws.bt);
        f.drive.mul_dense_into(&ws.bt.view(), &mut ws.x);
        ws.acc.fill(C64::new(0.0, 0.0));
        for nq in &f.emission {
            nq.mul_dense_into(&ws.x.view(), &mut ws.y);
            adjoint_into(&ws.y.view(), &mut ws.yt);
            nq.mul_dense_into(&ws.yt.view(), &mut ws.c_sq);
            ws.acc += &ws.c_sq;
        }
    }
    // σK† = (Kσ)† for Hermitian σ; the jump sum is symmetrized the same way
    let w = ws.w.as_slice().expect("standard layout");
    let acc = ws.acc.as_slice().expect("standard layout");
    let o = out.as_slice_mut().expect("output must be in standard layout");
    for r in 0..n {
        for c in 0..n {
            let (rc, cr) = (r * n + c, c * n + r);
            let mut v = -I * (w[rc] - w[cr].conj());
            if jumps {
                v += (acc[rc] + acc[cr].conj()) * 0.5;
            }
            o[rc] = v;
        }
    }
}

/// Time derivative of a full-ladder density matrix under `model` at time `t`.
pub fn rhs(model: &Model, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let sigma = model.restrict_density(rho)?;
    let mut out = Array2::zeros(sigma.raw_dim());
    let ops = model.generator().at(t);
    let mut ws = RhsWorkspace::new(&ops);
    rhs_into(&ops, &sigma.view(), &mut out, &mut ws);
    Ok(model.lift_density(&out.view()))
}

/// Bound on `‖L‖` used to size Taylor sub-steps. The drift enters through a
/// commutator-like form, so a real diagonal shift of `K` does not change `L`.
fn liouvillian_norm_bound(ops: &Operators) -> f64 {
    let diag: Vec<f64> = ops.drift.diag().iter().map(|v| v.re).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let shift = if diag.is_empty() { 0.0 } else { 0.5 * (lo + hi) };
    let shifted = ops.drift.add(&crate::operator::SparseOp::diagonal(&vec![-shift; diag.len()]));
    let jumps: f64 = ops.jumps.iter().map(|s| s.norm1() * s.norm_inf()).sum();
    shifted.norm1() + shifted.norm_inf() + jumps
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Exact for time-independent generators, adaptive otherwise.
    #[default]
    Auto,
    /// Propagator `exp(L Δt)` applied to σ through a converged Taylor series.
    Exact,
    Adaptive,
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Integrator::Auto),
            "exact" => Ok(Integrator::Exact),
            "adaptive" => Ok(Integrator::Adaptive),
            _ => Err(Error::Domain(format!("unknown integrator `{s}` (expected auto, exact or adaptive)"))),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Auto => "auto",
            Integrator::Exact => "exact",
            Integrator::Adaptive => "adaptive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagateOptions {
    pub integrator: Integrator,
    pub tolerance: Dopri5,
    /// Exact steps per output interval.
    pub exact_substeps: usize,
    pub leakage_threshold: f64,
    pub trace_tolerance: f64,
    pub positivity_tolerance: f64,
    /// Check the smallest eigenvalue every this many grid points (0 disables).
    pub positivity_stride: usize,
    /// Grid indices at which σ is kept.
    pub snapshots: Vec<usize>,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            integrator: Integrator::Auto,
            tolerance: Dopri5::default(),
            exact_substeps: 1,
            leakage_threshold: 1e-6,
            trace_tolerance: 1e-6,
            positivity_tolerance: 1e-8,
            positivity_stride: 1,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PropagationDiagnostics {
    /// Integrator actually used.
    pub integrator: Integrator,
    pub max_trace_drift: f64,
    pub max_hermiticity_residual: f64,
    pub min_eigenvalue: f64,
    /// `Tr(σ Σ S_i†S_i)` at each grid point.
    pub jump_rate: Vec<f64>,
    /// `Tr(σ (H_M + H_R))` at each grid point.
    pub energy: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    pub largest_step: f64,
}

impl PropagationDiagnostics {
    /// `∫ Tr(σ Σ S_i†S_i) dt` by the trapezoidal rule on the output grid.
    pub fn expected_jumps(&self, grid: &[f64]) -> f64 {
        grid.windows(2).zip(self.jump_rate.windows(2)).map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1])).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Propagation {
    pub series: ObservableSeries,
    pub snapshots: Vec<(f64, DensityMatrix)>,
    pub diagnostics: PropagationDiagnostics,
}

/// Uniform output grid of `points` times on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect(),
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::Domain("time grid must start at 0".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Integrates the master equation from `rho0` and records observables at every grid time.
pub fn propagate(model: &Model, rho0: &DensityMatrix, grid: &[f64], options: &PropagateOptions) -> Result<Propagation> {
    validate_grid(grid)?;
    rho0.validate()?;
    if options.exact_substeps == 0 {
        return Err(Error::Domain("exact_substeps must be positive".into()));
    }
    let integrator = match options.integrator {
        Integrator::Auto if model.generator().is_time_independent() => Integrator::Exact,
        Integrator::Auto => Integrator::Adaptive,
        Integrator::Exact if !model.generator().is_time_independent() => {
            return Err(Error::Domain("the exact propagator needs a time-independent field".into()))
        }
        other => other,
    };

    let mut sigma = model.restrict_density(rho0)?;
    let static_ops = model.generator().at(0.0);
    let mut ws = RhsWorkspace::new(&static_ops);
    let mut stats = OdeStats::default();
    let mut diag = PropagationDiagnostics { integrator, min_eigenvalue: f64::INFINITY, ..Default::default() };
    let mut series = ObservableSeries::default();
    let mut snapshots = Vec::new();

    let norm_bound = if integrator == Integrator::Exact { liouvillian_norm_bound(&static_ops) } else { 0.0 };

    for (k, &t) in grid.iter().enumerate() {
        if k > 0 {
            let t0 = grid[k - 1];
            sigma = match integrator {
                Integrator::Exact => {
                    let h = (t - t0) / options.exact_substeps as f64;
                    let mut s = sigma;
                    for _ in 0..options.exact_substeps {
                        s = exp_action(&s, h, norm_bound, |x: &Array2<C64>, out: &mut Array2<C64>| {
                            stats.rhs_evals += 1;
                            rhs_into(&static_ops, &x.view(), out, &mut ws)
                        });
                        stats.accepted += 1;
                        stats.largest_step = stats.largest_step.max(h);
                    }
                    s
                }
                _ => {
                    let gen = model.generator();
                    options.tolerance.integrate(
                        |tt, x: &Array2<C64>, out: &mut Array2<C64>| rhs_into(&gen.at(tt), &x.view(), out, &mut ws),
                        t0,
                        sigma,
                        t,
                        &mut stats,
                    )?
                }
            };
        }
        let view = sigma.view();
        let record = model.observe_density(&view, t);
        let drift = (record.trace - 1.0).abs();
        diag.max_trace_drift = diag.max_trace_drift.max(drift);
        diag.max_hermiticity_residual = diag.max_hermiticity_residual.max(hermiticity_residual(&view));
        diag.jump_rate.push(model.jump_rate(&view, t));
        diag.energy.push(model.energy(&view, t));
        if drift > options.trace_tolerance {
            return Err(Error::TraceDrift { t, drift });
        }
        if record.leakage > options.leakage_threshold {
            return Err(Error::Leakage { t, leakage: record.leakage, threshold: options.leakage_threshold });
        }
        let last = k + 1 == grid.len();
        if options.positivity_stride > 0 && (k % options.positivity_stride == 0 || last) {
            let min = min_eigenvalue(&view);
            diag.min_eigenvalue = diag.min_eigenvalue.min(min);
            if min < -options.positivity_tolerance {
                return Err(Error::Positivity { t, min_eigenvalue: min });
            }
        }
        if options.snapshots.contains(&k) {
            snapshots.push((t, model.lift_density(&view)));
        }
        series.records.push(record);
    }
    diag.accepted_steps = stats.accepted;
    diag.rejected_steps = stats.rejected;
    diag.rhs_evaluations = stats.rhs_evals;
    diag.largest_step = stats.largest_step;
    Ok(Propagation { series, snapshots, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angmom::coherent_state;
    use crate::coupling::{CouplingSet, FieldConfig};
    use crate::operator::{max_abs, trace};
    use std::f64::consts::FRAC_PI_2;

    fn kerr_model(j_max: u32, g: f64) -> (Model, DensityMatrix) {
        let cs = Arc::new(CouplingSet::new(j_max));
        let psi = coherent_state(cs.ground().clone(), 2, FRAC_PI_2, FRAC_PI_2).unwrap();
        let field = FieldConfig::kerr(0.1, g);
        let model = Model::for_state(cs, &field, &psi);
        (model, DensityMatrix::pure(&psi))
    }

    #[test]
    fn free_eigenstate_is_stationary() {
        let cs = Arc::new(CouplingSet::new(4));
        let model = Model::full(cs.clone(), &FieldConfig::kerr(0.0, 0.01));
        let psi = PureState::basis_state(cs.ground().clone(), 3, -1).unwrap();
        let d = rhs(&model, &DensityMatrix::pure(&psi), 0.0).unwrap();
        assert_eq!(max_abs(&d.matrix().view()), 0.0);
    }

    #[test]
    fn derivative_is_traceless_and_hermitian() {
        let (model, rho) = kerr_model(8, 0.05);
        let mixed = {
            let m = model.restrict_density(&rho).unwrap();
            let d = m.nrows();
            let mut x = m.mapv(|v| v * 0.5);
            for i in 0..d {
                x[[i, i]] += C64::new(0.5 / d as f64, 0.0);
            }
            model.lift_density(&x.view())
        };
        for r in [&rho, &mixed] {
            let d = rhs(&model, r, 0.0).unwrap();
            assert!(trace(&d.matrix().view()).norm() < 1e-13);
            assert_eq!(d.hermiticity_residual(), 0.0);
        }
    }

    #[test]
    fn unitary_derivative_keeps_purity() {
        let (model, rho) = kerr_model(8, 0.0);
        let d = rhs(&model, &rho, 0.0).unwrap();
        // d/dt Tr σ² = 2 Re Tr(σ σ̇)
        let rate = 2.0 * rho.matrix().dot(d.matrix()).diag().iter().map(|v| v.re).sum::<f64>();
        assert!(rate.abs() < 1e-12, "{rate}");
    }

    #[test]
    fn reference_observables() {
        let basis = Arc::new(RotBasis::ground(3));
        let psi = PureState::basis_state(basis.clone(), 2, -1).unwrap();
        let o = observables(&DensityMatrix::pure(&psi));
        assert_eq!(o.mean_j, [0.0, 0.0, -1.0]);
        assert!((o.j2 - 6.0).abs() < 1e-14);
        assert!((o.purity - 1.0).abs() < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(Arc::new(RotBasis::ground(1)));
        let o = observables(&mixed);
        assert!((o.purity - 0.25).abs() < 1e-15);
        assert!(o.mean_j.iter().all(|v| v.abs() < 1e-15));

        let psi = coherent_state(Arc::new(RotBasis::ground(4)), 2, FRAC_PI_2, FRAC_PI_2).unwrap();
        let o = observables(&DensityMatrix::pure(&psi));
        assert!((o.mean_j[1] - 2.0).abs() < 1e-12 && o.mean_j[0].abs() < 1e-12 && o.mean_j[2].abs() < 1e-12);
        assert!((o.j2 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_kerr_conserves_charges() {
        let (model, rho) = kerr_model(8, 0.0);
        let grid = uniform_grid(5.0, 51);
        let run = propagate(&model, &rho, &grid, &PropagateOptions::default()).unwrap();
        assert_eq!(run.diagnostics.integrator, Integrator::Exact);
        let r0 = run.series.records[0];
        for r in &run.series.records {
            assert!(r.mean_j[0].abs() < 1e-10 && r.mean_j[2].abs() < 1e-10);
            assert!((r.var_j[0] - r0.var_j[0]).abs() < 1e-8);
            assert!((r.purity - 1.0).abs() < 1e-8);
        }
        let e0 = run.diagnostics.energy[0];
        assert!(run.diagnostics.energy.iter().all(|e| (e - e0).abs() < 1e-8));
    }

    #[test]
    fn exact_and_adaptive_agree() {
        let (model, rho) = kerr_model(8, 0.05);
        let grid = uniform_grid(2.0, 21);
        let exact = propagate(&model, &rho, &grid, &PropagateOptions::default()).unwrap();
        let opts = PropagateOptions { integrator: Integrator::Adaptive, ..Default::default() };
        let adaptive = propagate(&model, &rho, &grid, &opts).unwrap();
        for (a, b) in exact.series.records.iter().zip(&adaptive.series.records) {
            assert!((a.mean_j[1] - b.mean_j[1]).abs() < 1e-8);
            assert!((a.purity - b.purity).abs() < 1e-8);
        }
        assert!(exact.series.records.last().unwrap().purity < 1.0);
    }

    #[test]
    fn bad_grids_are_rejected() {
        let (model, rho) = kerr_model(6, 0.0);
        let opts = PropagateOptions::default();
        assert!(propagate(&model, &rho, &[0.1, 0.2], &opts).is_err());
        assert!(propagate(&model, &rho, &[0.0, 0.2, 0.2], &opts).is_err());
    }

    #[test]
    fn leakage_abort_names_time() {
        let (model, rho) = kerr_model(5, 0.0);
        let opts = PropagateOptions { leakage_threshold: 1e-12, ..Default::default() };
        match propagate(&model, &rho, &uniform_grid(1.0, 11), &opts) {
            Err(Error::Leakage { t, .. }) => assert!(t > 0.0),
            other => panic!("expected leakage abort, got {other:?}"),
        }
    }
}
