//! A configured rotor: couplings, field and the invariant sector the dynamics
//! lives in, together with the observables evaluated on it.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::angmom::{angular_momentum, Axis, PureState, RotBasis};
use crate::coupling::{reachable_sector, CouplingSet, FieldConfig, Generator};
use crate::error::{Error, Result};
use crate::lindblad::{DensityMatrix, ObservableRecord};
use crate::operator::{SparseOp, C64, ZERO};

#[derive(Clone, Debug)]
pub struct Model {
    coupling: Arc<CouplingSet>,
    sector: Vec<usize>,
    generator: Generator,
    j: [SparseOp; 3],
    j_sq: [SparseOp; 3],
    edge: Vec<usize>,
}

impl Model {
    /// Model restricted to the smallest invariant sector containing `support`.
    pub fn new(coupling: Arc<CouplingSet>, field: &FieldConfig, support: &[usize]) -> Self {
        let sector = reachable_sector(&coupling, field, support);
        Self::on_sector(coupling, field, sector)
    }

    /// Model on the full ground ladder.
    pub fn full(coupling: Arc<CouplingSet>, field: &FieldConfig) -> Self {
        let sector = (0..coupling.ground().len()).collect();
        Self::on_sector(coupling, field, sector)
    }

    pub fn for_state(coupling: Arc<CouplingSet>, field: &FieldConfig, state: &PureState) -> Self {
        let support: Vec<usize> =
            state.amplitudes().iter().enumerate().filter(|(_, a)| **a != ZERO).map(|(i, _)| i).collect();
        Self::new(coupling, field, &support)
    }

    pub fn for_density(coupling: Arc<CouplingSet>, field: &FieldConfig, rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let support: Vec<usize> =
            (0..m.nrows()).filter(|&i| m.row(i).iter().any(|v| *v != ZERO)).collect();
        Self::new(coupling, field, &support)
    }

    fn on_sector(coupling: Arc<CouplingSet>, field: &FieldConfig, sector: Vec<usize>) -> Self {
        let generator = Generator::restricted(&coupling, field, &sector);
        let basis = coupling.ground().clone();
        let full_j = Axis::ALL.map(|a| angular_momentum(&basis, a));
        let j = full_j.clone().map(|op| op.restrict(&sector));
        // squares are formed before restriction: J_a connects the sector to states outside it
        let j_sq = full_j.map(|op| op.matmul(&op).restrict(&sector));
        let edge_j = basis.j_max().saturating_sub(2);
        let edge = sector.iter().enumerate().filter(|(_, &i)| basis.state(i).0 >= edge_j).map(|(k, _)| k).collect();
        Model { coupling, sector, generator, j, j_sq, edge }
    }

    pub fn coupling(&self) -> &Arc<CouplingSet> {
        &self.coupling
    }

    pub fn basis(&self) -> &Arc<RotBasis> {
        self.coupling.ground()
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn field(&self) -> &FieldConfig {
        self.generator.field()
    }

    /// Ground-ladder indices of the sector, ascending.
    pub fn sector(&self) -> &[usize] {
        &self.sector
    }

    pub fn dim(&self) -> usize {
        self.sector.len()
    }

    pub fn angular_momentum(&self, axis: Axis) -> &SparseOp {
        &self.j[axis.index()]
    }

    pub fn angular_momentum_squared(&self, axis: Axis) -> &SparseOp {
        &self.j_sq[axis.index()]
    }

    /// Sector-local indices with `j ≥ j_max − 2`.
    pub fn edge(&self) -> &[usize] {
        &self.edge
    }

    /// Amplitudes on the sector; fails if the state has weight outside it.
    pub fn restrict_state(&self, state: &PureState) -> Result<Vec<C64>> {
        self.check_basis(state.basis())?;
        let amps = state.amplitudes();
        let inside: f64 = self.sector.iter().map(|&i| amps[i].norm_sqr()).sum();
        if (state.norm_sqr() - inside).abs() > 0.0 {
            return Err(Error::Domain("state has weight outside the model sector".into()));
        }
        Ok(self.sector.iter().map(|&i| amps[i]).collect())
    }

    pub fn lift_state(&self, local: &[C64]) -> PureState {
        let mut amps = vec![ZERO; self.basis().len()];
        for (&i, &a) in self.sector.iter().zip(local) {
            amps[i] = a;
        }
        PureState::new(self.basis().clone(), amps)
    }

    pub fn restrict_density(&self, rho: &DensityMatrix) -> Result<Array2<C64>> {
        self.check_basis(rho.basis())?;
        let m = rho.matrix();
        let total: f64 = m.iter().map(|v| v.norm_sqr()).sum();
        let local = Array2::from_shape_fn((self.dim(), self.dim()), |(r, c)| m[[self.sector[r], self.sector[c]]]);
        let inside: f64 = local.iter().map(|v| v.norm_sqr()).sum();
        if total != inside {
            return Err(Error::Domain("density matrix has weight outside the model sector".into()));
        }
        Ok(local)
    }

    pub fn lift_density(&self, local: &ArrayView2<C64>) -> DensityMatrix {
        let n = self.basis().len();
        let mut m = Array2::zeros((n, n));
        for (r, &i) in self.sector.iter().enumerate() {
            for (c, &k) in self.sector.iter().enumerate() {
                m[[i, k]] = local[[r, c]];
            }
        }
        DensityMatrix::from_matrix(self.basis().clone(), m)
    }

    fn check_basis(&self, basis: &RotBasis) -> Result<()> {
        if basis != self.basis().as_ref() {
            return Err(Error::Manifold(format!(
                "state lives on a ladder with j_max = {}, model uses j_max = {}",
                basis.j_max(),
                self.basis().j_max()
            )));
        }
        Ok(())
    }

    /// Observables of a sector-local density matrix at time `t`.
    pub fn observe_density(&self, sigma: &ArrayView2<C64>, t: f64) -> ObservableRecord {
        let mean = Axis::ALL.map(|a| self.j[a.index()].trace_with(sigma).re);
        let second = Axis::ALL.map(|a| self.j_sq[a.index()].trace_with(sigma).re);
        let purity = sigma.iter().map(|v| v.norm_sqr()).sum();
        let trace = sigma.diag().iter().map(|v| v.re).sum();
        let leakage = self.edge.iter().map(|&k| sigma[[k, k]].re).sum();
        ObservableRecord::from_moments(t, mean, second, purity, trace, leakage)
    }

    /// Raw moments of a sector-local pure state, without normalization.
    pub fn state_moments(&self, psi: &[C64]) -> StateMoments {
        StateMoments {
            norm_sqr: crate::operator::norm_sqr(psi),
            mean: Axis::ALL.map(|a| self.j[a.index()].expectation(psi).re),
            second: Axis::ALL.map(|a| self.j_sq[a.index()].expectation(psi).re),
            leakage: self.edge.iter().map(|&k| psi[k].norm_sqr()).sum(),
        }
    }

    /// `Tr(σ Σ_i S_i†S_i)`, the instantaneous jump rate.
    pub fn jump_rate(&self, sigma: &ArrayView2<C64>, t: f64) -> f64 {
        let ops = self.generator.at(t);
        ops.jump_weights.iter().map(|w| w.trace_with(sigma).re).sum()
    }

    /// `Tr(σ (H_M + H_R))`.
    pub fn energy(&self, sigma: &ArrayView2<C64>, t: f64) -> f64 {
        self.generator.at(t).hamiltonian.trace_with(sigma).re
    }
}

/// Expectation values of a pure state, linear in `|ψ⟩⟨ψ|`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateMoments {
    pub norm_sqr: f64,
    pub mean: [f64; 3],
    /// `⟨J_a²⟩`
    pub second: [f64; 3],
    pub leakage: f64,
}

impl StateMoments {
    pub fn scaled(&self, s: f64) -> StateMoments {
        StateMoments {
            norm_sqr: self.norm_sqr * s,
            mean: self.mean.map(|v| v * s),
            second: self.second.map(|v| v * s),
            leakage: self.leakage * s,
        }
    }
}
