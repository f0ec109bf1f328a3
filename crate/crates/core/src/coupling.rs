//! Operators of the reduced rotational master equation.
//!
//! Units: ħ = 1 and every energy or rate is measured in the rotational
//! constant `B`, so time is the dimensionless `τ = B t`. The transition dipole
//! of a Σ–Σ transition lies along the internuclear axis; its rotational
//! matrix elements are those of the unit vector `n̂`, normalized so that
//! `Σ_i n_i n_i = 1` and the total decay rate is the same for every excited
//! rotational level.
//!
//! With `A(t) = n̂·ε(t)` (ground → excited, `ε(t)` the normalized positive
//! frequency field envelope):
//!
//! * `H_R(t) = −Ω_R A†A`
//! * `S_i(t) = √(Ω_R Γ/Δ) n_i A` with `n_i` mapping excited → ground
//! * `H_eff(t) = H_M + (1 + iΓ/2Δ) H_R(t)`, `H_M = diag(j(j+1))`

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::angmom::{cg, Axis, Manifold, RotBasis};
use crate::error::{Error, Result};
use crate::operator::{closure, SparseOp, C64, I, ONE, ZERO};

/// Spectral-width bound (units of `B`) above which a component is flagged.
pub const DETUNING_WARN: f64 = 10.0;
/// `Γ/Δ` above which the off-resonance assumption is flagged.
pub const GAMMA_OVER_DELTA_WARN: f64 = 0.1;

const UNIT_NORM_TOL: f64 = 1e-9;

/// One spectral component of the laser envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldComponent {
    /// Relative complex amplitude; components are renormalized to unit total weight.
    pub amplitude: C64,
    /// Complex polarization vector (Cartesian), unit Euclidean norm.
    pub polarization: [C64; 3],
    /// Frequency offset from the carrier, in units of `B`.
    #[serde(default)]
    pub detuning: f64,
}

impl FieldComponent {
    pub fn linear(axis: Axis) -> Self {
        let mut polarization = [ZERO; 3];
        polarization[axis.index()] = ONE;
        FieldComponent { amplitude: ONE, polarization, detuning: 0.0 }
    }
}

/// Sign of the laser detuning from the electronic resonance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetuningSign {
    /// Δ > 0: the Raman light shift is attractive (`H_R ≤ 0`).
    #[default]
    Blue,
    /// Δ < 0: flips the coherent Raman term; the dissipator only sees `|Δ|`.
    Red,
}

impl DetuningSign {
    fn factor(self) -> f64 {
        match self {
            DetuningSign::Blue => 1.0,
            DetuningSign::Red => -1.0,
        }
    }
}

/// Laser field and the two dimensionless couplings of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub components: Vec<FieldComponent>,
    /// Two-photon Raman Rabi frequency `Ω_R / B`.
    pub omega_r: f64,
    /// `Γ/|Δ|`, the spontaneous-to-stimulated Raman ratio.
    pub gamma_over_delta: f64,
    #[serde(default)]
    pub detuning_sign: DetuningSign,
}

impl FieldConfig {
    /// Continuous-wave field linearly polarized along `x` (optical Kerr geometry).
    pub fn kerr(omega_r: f64, gamma_over_delta: f64) -> Self {
        FieldConfig {
            components: vec![FieldComponent::linear(Axis::X)],
            omega_r,
            gamma_over_delta,
            detuning_sign: DetuningSign::Blue,
        }
    }

    /// Rejects invalid fields; returns warnings for fields outside the regime
    /// where the reduced model is trustworthy.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.components.is_empty() {
            return Err(Error::config("field.components", "at least one component is required"));
        }
        if !(self.omega_r.is_finite() && self.omega_r >= 0.0) {
            return Err(Error::config("field.omega_r", "must be finite and non-negative"));
        }
        if !(self.gamma_over_delta.is_finite() && (0.0..1.0).contains(&self.gamma_over_delta)) {
            return Err(Error::config("field.gamma_over_delta", "must lie in [0, 1)"));
        }
        if self.gamma_over_delta > GAMMA_OVER_DELTA_WARN {
            warnings.push(format!(
                "field.gamma_over_delta = {} exceeds {GAMMA_OVER_DELTA_WARN}: the laser is not far off resonance",
                self.gamma_over_delta
            ));
        }
        let mut weight = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            let norm: f64 = c.polarization.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::config(
                    format!("field.components[{k}].polarization"),
                    format!("must have unit norm (got {norm})"),
                ));
            }
            if !c.detuning.is_finite() {
                return Err(Error::config(format!("field.components[{k}].detuning"), "must be finite"));
            }
            if c.detuning.abs() > DETUNING_WARN {
                warnings.push(format!(
                    "field.components[{k}].detuning = {} B exceeds the rotational spectral width",
                    c.detuning
                ));
            }
            weight += c.amplitude.norm_sqr();
        }
        if weight == 0.0 || !weight.is_finite() {
            return Err(Error::config("field.components", "amplitudes must not all vanish"));
        }
        Ok(warnings)
    }

    /// True when `H_R` and the dissipator do not depend on time: every
    /// component shares one frequency, so the envelope only carries a global phase.
    pub fn is_time_independent(&self) -> bool {
        self.components.windows(2).all(|w| w[0].detuning == w[1].detuning)
    }

    /// Normalized envelope weights `c_k(t) = a_k e^{−iδ_k t} / √Σ|a|²`.
    pub fn envelope(&self, t: f64) -> Vec<C64> {
        let norm = self.components.iter().map(|c| c.amplitude.norm_sqr()).sum::<f64>().sqrt();
        self.components
            .iter()
            .map(|c| c.amplitude / norm * C64::from_polar(1.0, -c.detuning * t))
            .collect()
    }
}

/// Direction-cosine operator `n_q` (spherical component `q`) mapping the
/// ground ladder into the excited ladder.
pub fn direction_cosine(ground: &RotBasis, excited: &RotBasis, q: i32) -> Result<SparseOp> {
    if ground.manifold() != Manifold::Ground || excited.manifold() != Manifold::Excited {
        return Err(Error::Manifold(format!(
            "direction cosines map ground → excited, got {:?} → {:?}",
            ground.manifold(),
            excited.manifold()
        )));
    }
    if excited.j_max() < ground.j_max() {
        return Err(Error::Manifold(format!(
            "excited ladder (j_max = {}) must cover the ground ladder (j_max = {})",
            excited.j_max(),
            ground.j_max()
        )));
    }
    if !(-1..=1).contains(&q) {
        return Err(Error::Domain(format!("spherical component q = {q}")));
    }
    let mut triplets = Vec::new();
    for (col, &(j, m)) in ground.states().iter().enumerate() {
        for je in [j as i32 - 1, j as i32 + 1] {
            let me = m + q;
            if je < 0 || je as u32 > excited.j_max() || me.abs() > je {
                continue;
            }
            let reduced = cg(j as i32, 0, 1, 0, je, 0)? * ((2 * j + 1) as f64 / (2 * je + 1) as f64).sqrt();
            let v = cg(j as i32, m, 1, q, je, me)? * reduced;
            if v != 0.0 {
                let row = excited.index(je as u32, me).expect("excited state inside ladder");
                triplets.push((row, col, C64::new(v, 0.0)));
            }
        }
    }
    Ok(SparseOp::from_triplets(excited.len(), ground.len(), triplets))
}

/// Static building blocks shared by every field configuration on one truncation.
#[derive(Clone, Debug)]
pub struct CouplingSet {
    ground: Arc<RotBasis>,
    excited: Arc<RotBasis>,
    spherical: [SparseOp; 3],
    cartesian: [SparseOp; 3],
    emission: [SparseOp; 3],
    free: Vec<f64>,
}

impl CouplingSet {
    /// Ground ladder truncated at `j_max`, excited ladder at `j_max + 1`.
    pub fn new(j_max: u32) -> Self {
        let ground = Arc::new(RotBasis::ground(j_max));
        let excited = Arc::new(RotBasis::excited(j_max + 1));
        let spherical = [-1, 0, 1].map(|q| direction_cosine(&ground, &excited, q).expect("consistent ladders"));
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let [dm, d0, dp] = &spherical;
        let cartesian = [
            SparseOp::linear_combination(&[(C64::new(s2, 0.0), dm), (C64::new(-s2, 0.0), dp)]),
            SparseOp::linear_combination(&[(I * s2, dm), (I * s2, dp)]),
            d0.clone(),
        ];
        let emission = cartesian.clone().map(|d| d.adjoint());
        let free = ground.states().iter().map(|&(j, _)| (j * (j + 1)) as f64).collect();
        CouplingSet { ground, excited, spherical, cartesian, emission, free }
    }

    pub fn ground(&self) -> &Arc<RotBasis> {
        &self.ground
    }

    pub fn excited(&self) -> &Arc<RotBasis> {
        &self.excited
    }

    pub fn j_max(&self) -> u32 {
        self.ground.j_max()
    }

    /// `n_q`, ground → excited, for `q ∈ {−1, 0, 1}`.
    pub fn spherical(&self, q: i32) -> &SparseOp {
        &self.spherical[(q + 1) as usize]
    }

    /// Cartesian `n_i`, ground → excited.
    pub fn cartesian(&self, axis: Axis) -> &SparseOp {
        &self.cartesian[axis.index()]
    }

    /// Cartesian `n_i`, excited → ground (emission of an `i`-polarized photon).
    pub fn emission(&self, axis: Axis) -> &SparseOp {
        &self.emission[axis.index()]
    }

    /// Diagonal of `H_M`: `j(j+1)` in units of `B`.
    pub fn free_energies(&self) -> &[f64] {
        &self.free
    }

    pub fn free_hamiltonian(&self) -> SparseOp {
        SparseOp::diagonal(&self.free)
    }

    /// Ground-state indices with `j ≤ j_max − 2`, where the truncation does
    /// not cut any two-photon path.
    pub fn interior(&self) -> Vec<usize> {
        let j_max = self.j_max() as i64;
        (0..self.ground.len()).filter(|&i| (self.ground.state(i).0 as i64) <= j_max - 2).collect()
    }

    /// `n̂·ε` for one polarization vector.
    pub fn polarization_projection(&self, polarization: &[C64; 3]) -> SparseOp {
        let terms: Vec<(C64, &SparseOp)> =
            Axis::ALL.iter().map(|&a| (polarization[a.index()], &self.cartesian[a.index()])).collect();
        SparseOp::linear_combination(&terms)
    }

    /// `A(t)`, the normalized field-projected dipole (ground → excited).
    pub fn drive(&self, field: &FieldConfig, t: f64) -> SparseOp {
        let env = field.envelope(t);
        let parts: Vec<SparseOp> =
            field.components.iter().map(|c| self.polarization_projection(&c.polarization)).collect();
        let terms: Vec<(C64, &SparseOp)> = env.into_iter().zip(parts.iter()).collect();
        SparseOp::linear_combination(&terms)
    }

    /// Stimulated Raman Hamiltonian `H_R(t) = −Ω_R A†A` (sign flipped for red detuning).
    pub fn raman_hamiltonian(&self, field: &FieldConfig, t: f64) -> SparseOp {
        let a = self.drive(field, t);
        a.adjoint().matmul(&a).scale(C64::new(-field.omega_r * field.detuning_sign.factor(), 0.0))
    }

    /// Spontaneous Raman jump operators `S_x, S_y, S_z`.
    pub fn jump_operators(&self, field: &FieldConfig, t: f64) -> [SparseOp; 3] {
        let n = self.ground.len();
        let rate = field.omega_r * field.gamma_over_delta;
        if rate == 0.0 {
            return [SparseOp::zeros(n, n), SparseOp::zeros(n, n), SparseOp::zeros(n, n)];
        }
        let a = self.drive(field, t);
        let amp = C64::new(rate.sqrt(), 0.0);
        Axis::ALL.map(|ax| self.emission(ax).matmul(&a).scale(amp))
    }

    /// `H_eff(t) = H_M + (1 + iΓ/2Δ) H_R(t)`.
    pub fn effective_hamiltonian(&self, field: &FieldConfig, t: f64) -> SparseOp {
        let a = self.drive(field, t);
        let ata = a.adjoint().matmul(&a);
        let coherent = -field.omega_r * field.detuning_sign.factor();
        let damping = -field.omega_r * field.gamma_over_delta / 2.0;
        SparseOp::linear_combination(&[
            (ONE, &self.free_hamiltonian()),
            (C64::new(coherent, damping), &ata),
        ])
    }
}

/// Time-resolved operators of the master equation on a (possibly reduced) index set.
#[derive(Clone, Debug)]
pub struct Operators {
    /// `H_M + H_R`.
    pub hamiltonian: SparseOp,
    pub raman: SparseOp,
    pub jumps: [SparseOp; 3],
    /// `S_i† S_i` for each channel.
    pub jump_weights: [SparseOp; 3],
    /// `H_M + H_R − (i/2) Σ S_i†S_i`, the exact Lindblad drift.
    pub drift: SparseOp,
    /// `H_M + (1 + iΓ/2Δ) H_R`.
    pub effective: SparseOp,
    pub factored: Factored,
}

/// The drift and dissipator written through the drive `A`:
/// `K = H_M + A† Q A` and `Σ_i S_i σ S_i† = Σ_q N_q (A σ A†) N_q†`.
#[derive(Clone, Debug)]
pub struct Factored {
    /// Diagonal of `H_M`.
    pub energies: Vec<f64>,
    /// `A(t)`, sector → reached excited states.
    pub drive: SparseOp,
    pub drive_adjoint: SparseOp,
    /// `−s Ω_R 1 − (i/2) Ω_R Γ/Δ Σ_q N_q†N_q` on the reached excited states.
    pub inner: SparseOp,
    /// `√(Ω_R Γ/Δ) n_q†` for `q = −1, 0, 1`; empty without spontaneous scattering.
    pub emission: Vec<SparseOp>,
}

impl Operators {
    /// `Σ_i S_i†S_i`.
    pub fn total_jump_weight(&self) -> SparseOp {
        let [a, b, c] = &self.jump_weights;
        SparseOp::linear_combination(&[(ONE, a), (ONE, b), (ONE, c)])
    }
}

/// Precomputed decomposition of the operators into time-independent pieces
/// multiplying envelope products, restricted to a sector of the ground ladder.
#[derive(Clone, Debug)]
pub struct Generator {
    field: FieldConfig,
    free: Vec<f64>,
    /// `(k, l, A_k† A_l)`
    raman_terms: Vec<(usize, usize, SparseOp)>,
    /// per channel, `n_i A_k` for every component
    jump_terms: [Vec<SparseOp>; 3],
    /// `A_k` restricted to the sector columns and the excited rows they reach
    drive_terms: Vec<SparseOp>,
    /// spherical `n_q†` on sector rows and reached excited columns
    emission: [SparseOp; 3],
    /// `Σ_q n_q n_q†` on the reached excited states
    emission_weight: SparseOp,
    cached: Option<Arc<Operators>>,
    dim: usize,
}

impl Generator {
    /// Generator on the full ground ladder.
    pub fn new(coupling: &CouplingSet, field: &FieldConfig) -> Self {
        let all: Vec<usize> = (0..coupling.ground().len()).collect();
        Self::restricted(coupling, field, &all)
    }

    /// Generator on the index subset `sector` of the ground ladder. The
    /// sector must be invariant under every operator (see [`reachable_sector`]).
    pub fn restricted(coupling: &CouplingSet, field: &FieldConfig, sector: &[usize]) -> Self {
        let parts: Vec<SparseOp> =
            field.components.iter().map(|c| coupling.polarization_projection(&c.polarization)).collect();
        let excited: Vec<usize> = (0..coupling.excited().len()).collect();
        let cols: Vec<SparseOp> = parts.iter().map(|a| a.submatrix(&excited, sector)).collect();
        let mut raman_terms = Vec::new();
        for (k, ak) in cols.iter().enumerate() {
            let ak_dag = ak.adjoint();
            for (l, al) in cols.iter().enumerate() {
                raman_terms.push((k, l, ak_dag.matmul(al)));
            }
        }
        let jump_terms = Axis::ALL.map(|ax| {
            let n_i = coupling.emission(ax).submatrix(sector, &excited);
            cols.iter().map(|a| n_i.matmul(a)).collect::<Vec<_>>()
        });
        let mut reached = vec![false; excited.len()];
        for a in &cols {
            for (r, _, _) in a.iter() {
                reached[r] = true;
            }
        }
        let reached: Vec<usize> = (0..excited.len()).filter(|&r| reached[r]).collect();
        let drive_terms = cols.iter().map(|a| a.submatrix(&reached, &(0..sector.len()).collect::<Vec<_>>())).collect();
        let emission = [-1, 0, 1].map(|q| coupling.spherical(q).adjoint().submatrix(sector, &reached));
        let emission_weight = {
            let parts: Vec<SparseOp> = emission.iter().map(|n| n.adjoint().matmul(n)).collect();
            SparseOp::linear_combination(&parts.iter().map(|p| (ONE, p)).collect::<Vec<_>>())
        };
        let free = sector.iter().map(|&i| coupling.free_energies()[i]).collect();
        let mut gen = Generator {
            field: field.clone(),
            free,
            raman_terms,
            jump_terms,
            drive_terms,
            emission,
            emission_weight,
            cached: None,
            dim: sector.len(),
        };
        if field.is_time_independent() {
            gen.cached = Some(Arc::new(gen.evaluate(0.0)));
        }
        gen
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field(&self) -> &FieldConfig {
        &self.field
    }

    pub fn is_time_independent(&self) -> bool {
        self.cached.is_some()
    }

    pub fn free_energies(&self) -> &[f64] {
        &self.free
    }

    /// Operators at time `t` (shared when the generator is time independent).
    pub fn at(&self, t: f64) -> Arc<Operators> {
        match &self.cached {
            Some(ops) => ops.clone(),
            None => Arc::new(self.evaluate(t)),
        }
    }

    fn evaluate(&self, t: f64) -> Operators {
        let env = self.field.envelope(t);
        let sign = self.field.detuning_sign.factor();
        let omega_r = self.field.omega_r;
        let rate = omega_r * self.field.gamma_over_delta;

        let ata_terms: Vec<(C64, &SparseOp)> =
            self.raman_terms.iter().map(|(k, l, op)| (env[*k].conj() * env[*l], op)).collect();
        let ata = SparseOp::linear_combination(&ata_terms);
        let raman = ata.scale(C64::new(-omega_r * sign, 0.0));
        let free = SparseOp::diagonal(&self.free);
        let hamiltonian = free.add(&raman);

        let jumps: [SparseOp; 3] = std::array::from_fn(|i| {
            if rate == 0.0 {
                return SparseOp::zeros(self.dim, self.dim);
            }
            let terms: Vec<(C64, &SparseOp)> =
                self.jump_terms[i].iter().zip(&env).map(|(op, c)| (*c * rate.sqrt(), op)).collect();
            SparseOp::linear_combination(&terms)
        });
        let jump_weights = jumps.clone().map(|s| s.adjoint().matmul(&s));
        let [wx, wy, wz] = &jump_weights;
        let half = C64::new(0.0, -0.5);
        let drift =
            SparseOp::linear_combination(&[(ONE, &hamiltonian), (half, wx), (half, wy), (half, wz)]);
        let effective = SparseOp::linear_combination(&[
            (ONE, &free),
            (C64::new(-omega_r * sign, -rate / 2.0), &ata),
        ]);

        let drive_parts: Vec<(C64, &SparseOp)> = env.iter().copied().zip(&self.drive_terms).collect();
        let drive = SparseOp::linear_combination(&drive_parts);
        let n_exc = self.emission_weight.nrows();
        let inner = SparseOp::linear_combination(&[
            (C64::new(-omega_r * sign, 0.0), &SparseOp::identity(n_exc)),
            (C64::new(0.0, -rate / 2.0), &self.emission_weight),
        ]);
        let emission = if rate == 0.0 {
            Vec::new()
        } else {
            self.emission.iter().map(|n| n.scale(C64::new(rate.sqrt(), 0.0))).collect()
        };
        let factored =
            Factored { energies: self.free.clone(), drive_adjoint: drive.adjoint(), drive, inner, emission };
        Operators { hamiltonian, raman, jumps, jump_weights, drift, effective, factored }
    }

    /// Every distinct sparsity pattern the generator can produce, for sector analysis.
    fn patterns(&self) -> Vec<&SparseOp> {
        self.raman_terms
            .iter()
            .map(|(_, _, op)| op)
            .chain(self.jump_terms.iter().flatten())
            .collect()
    }
}

/// Smallest index set containing `support` that is closed under `H_R`, the
/// jump operators and their adjoints, for any time.
pub fn reachable_sector(coupling: &CouplingSet, field: &FieldConfig, support: &[usize]) -> Vec<usize> {
    let full = Generator::new(coupling, field);
    closure(coupling.ground().len(), support.iter().copied(), &full.patterns())
}
