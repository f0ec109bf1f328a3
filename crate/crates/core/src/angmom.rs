//! Angular-momentum algebra on truncated rigid-rotor ladders.
//!
//! States `|j, m⟩` are ordered lexicographically (`j` ascending, then `m`
//! ascending), so `(j, m)` sits at index `j² + j + m`. Ladder operators follow
//! the Condon–Shortley convention, `J₊|j,m⟩ = √(j(j+1) − m(m+1)) |j,m+1⟩`.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{SparseOp, C64};

/// Electronic manifold a rotational ladder belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
}

/// Cartesian axis label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Truncated rotational ladder `{|j, m⟩ : 0 ≤ j ≤ j_max, |m| ≤ j}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotBasis {
    j_max: u32,
    manifold: Manifold,
    states: Vec<(u32, i32)>,
}

impl RotBasis {
    pub fn new(j_max: u32, manifold: Manifold) -> Self {
        let states = (0..=j_max)
            .flat_map(|j| (-(j as i32)..=j as i32).map(move |m| (j, m)))
            .collect();
        RotBasis { j_max, manifold, states }
    }

    pub fn ground(j_max: u32) -> Self {
        Self::new(j_max, Manifold::Ground)
    }

    pub fn excited(j_max: u32) -> Self {
        Self::new(j_max, Manifold::Excited)
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[(u32, i32)] {
        &self.states
    }

    pub fn state(&self, index: usize) -> (u32, i32) {
        self.states[index]
    }

    pub fn index(&self, j: u32, m: i32) -> Option<usize> {
        if j > self.j_max || m.unsigned_abs() > j {
            return None;
        }
        Some(((j * j + j) as i64 + m as i64) as usize)
    }

    /// Indices of all states in the `j` block, in ascending `m`.
    pub fn block(&self, j: u32) -> std::ops::Range<usize> {
        let start = (j * j) as usize;
        start..start + (2 * j + 1) as usize
    }
}

/// One Cartesian component of the angular momentum on `basis`.
pub fn angular_momentum(basis: &RotBasis, axis: Axis) -> SparseOp {
    let n = basis.len();
    let mut triplets = Vec::new();
    for (i, &(j, m)) in basis.states().iter().enumerate() {
        match axis {
            Axis::Z => triplets.push((i, i, C64::new(m as f64, 0.0))),
            Axis::X | Axis::Y => {
                // ⟨m+1|J₊|m⟩ and ⟨m−1|J₋|m⟩
                for dm in [1i32, -1] {
                    let mp = m + dm;
                    if mp.unsigned_abs() > j {
                        continue;
                    }
                    let jj = (j * (j + 1)) as f64;
                    let amp = (jj - (m * mp) as f64).sqrt() / 2.0;
                    let r = basis.index(j, mp).expect("m' within block");
                    // J_x = (J₊ + J₋)/2, J_y = (J₊ − J₋)/(2i)
                    let v = match axis {
                        Axis::X => C64::new(amp, 0.0),
                        _ => C64::new(0.0, -amp * dm as f64),
                    };
                    triplets.push((r, i, v));
                }
            }
        }
    }
    SparseOp::from_triplets(n, n, triplets)
}

/// `J_x² + J_y² + J_z²`, diagonal with entries `j(j+1)`.
pub fn j_squared(basis: &RotBasis) -> SparseOp {
    SparseOp::diagonal(&basis.states().iter().map(|&(j, _)| (j * (j + 1)) as f64).collect::<Vec<_>>())
}

fn factorial(n: i64) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn check_pair(j: i32, m: i32) -> Result<()> {
    if j < 0 || m.abs() > j {
        return Err(Error::Domain(format!("(j, m) = ({j}, {m}) is not a valid angular-momentum pair")));
    }
    Ok(())
}

/// Clebsch–Gordan coefficient `⟨j1 m1; j2 m2 | J M⟩` (Condon–Shortley phase).
///
/// Evaluated with the Racah sum in exact rational arithmetic; only the final
/// square root is taken in floating point.
pub fn cg(j1: i32, m1: i32, j2: i32, m2: i32, jt: i32, mt: i32) -> Result<f64> {
    check_pair(j1, m1)?;
    check_pair(j2, m2)?;
    if jt < 0 {
        return Err(Error::Domain(format!("total angular momentum J = {jt} is negative")));
    }
    // the coupled projection is only constrained through the selection rules
    if mt != m1 + m2 || mt.abs() > jt || jt < (j1 - j2).abs() || jt > j1 + j2 {
        return Ok(0.0);
    }
    let (j1, m1, j2, m2, jt, mt) = (j1 as i64, m1 as i64, j2 as i64, m2 as i64, jt as i64, mt as i64);

    let k_min = 0.max(j2 - jt - m1).max(j1 - jt + m2);
    let k_max = (j1 + j2 - jt).min(j1 - m1).min(j2 + m2);
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(j1 + j2 - jt - k)
            * factorial(j1 - m1 - k)
            * factorial(j2 + m2 - k)
            * factorial(jt - j2 + m1 + k)
            * factorial(jt - j1 - m2 + k);
        let term = BigRational::new(BigInt::one(), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return Ok(0.0);
    }

    let triangle = BigRational::new(
        factorial(jt + j1 - j2) * factorial(jt - j1 + j2) * factorial(j1 + j2 - jt),
        factorial(j1 + j2 + jt + 1),
    );
    let projections = factorial(jt + mt)
        * factorial(jt - mt)
        * factorial(j1 - m1)
        * factorial(j1 + m1)
        * factorial(j2 - m2)
        * factorial(j2 + m2);
    let squared = BigRational::from_integer(BigInt::from(2 * jt + 1) * projections)
        * triangle
        * &sum
        * &sum;
    let magnitude = squared.to_f64().expect("finite Clebsch-Gordan coefficient").sqrt();
    Ok(if sum.is_negative() { -magnitude } else { magnitude })
}

/// Pure rotational state: amplitudes over a shared basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    basis: Arc<RotBasis>,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(basis: Arc<RotBasis>, amplitudes: Vec<C64>) -> Self {
        assert_eq!(basis.len(), amplitudes.len(), "one amplitude per basis state");
        PureState { basis, amplitudes }
    }

    /// `|j, m⟩`.
    pub fn basis_state(basis: Arc<RotBasis>, j: u32, m: i32) -> Result<Self> {
        check_pair(j as i32, m)?;
        let idx = basis.index(j, m).ok_or(Error::Truncation { j, j_max: basis.j_max() })?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.len()];
        amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(PureState { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<RotBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        crate::operator::norm_sqr(&self.amplitudes)
    }

    pub fn normalize(&mut self) {
        crate::operator::normalize(&mut self.amplitudes);
    }

    pub fn expectation(&self, op: &SparseOp) -> C64 {
        op.expectation(&self.amplitudes)
    }
}

/// Coherent angular-momentum state `|j, θ, φ⟩` with `⟨J⟩ = j (sinθ cosφ, sinθ sinφ, cosθ)`.
///
/// Amplitudes are `√C(2j, j+m) cos^{j+m}(θ/2) sin^{j−m}(θ/2) e^{−imφ}`; the
/// negative phase is what points the mean along `(θ, φ)` with Condon–Shortley
/// ladder operators.
pub fn coherent_state(basis: Arc<RotBasis>, j: u32, theta: f64, phi: f64) -> Result<PureState> {
    if j > basis.j_max() {
        return Err(Error::Truncation { j, j_max: basis.j_max() });
    }
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut amplitudes = vec![C64::new(0.0, 0.0); basis.len()];
    let two_j = 2 * j as i32;
    for m in -(j as i32)..=(j as i32) {
        let k = (j as i32 + m) as u32;
        let weight = binomial(two_j as u32, k).sqrt() * c.powi(k as i32) * s.powi(two_j - k as i32);
        let idx = basis.index(j, m).expect("j within truncation");
        amplitudes[idx] = C64::from_polar(weight, -(m as f64) * phi);
    }
    let mut state = PureState { basis, amplitudes };
    // exact up to rounding; the explicit pass keeps the norm at 1 to the last bit
    state.normalize();
    Ok(state)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{max_abs, I};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn basis_sizes_and_ordering() {
        let b0 = RotBasis::ground(0);
        assert_eq!(b0.states(), &[(0, 0)]);
        assert_eq!(RotBasis::ground(2).len(), 9);
        let b = RotBasis::ground(10);
        assert_eq!(b.len(), 121);
        assert_eq!(b.index(10, -10), Some(100));
        assert_eq!(b.index(11, 0), None);
        assert_eq!(b.index(3, 4), None);
        for (i, &(j, m)) in b.states().iter().enumerate() {
            assert_eq!(b.index(j, m), Some(i));
        }
        assert!(b.states().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn jz_diagonal_in_lexicographic_order() {
        let b = RotBasis::ground(1);
        let jz = angular_momentum(&b, Axis::Z);
        let d: Vec<f64> = jz.diag().iter().map(|v| v.re).collect();
        assert_eq!(d, vec![0.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn commutation_relations() {
        let b = RotBasis::ground(5);
        let [jx, jy, jz] = Axis::ALL.map(|a| angular_momentum(&b, a).to_dense());
        let res = jx.dot(&jy) - jy.dot(&jx) - jz.mapv(|v| v * I);
        assert!(max_abs(&res.view()) < 1e-12);
        let res = jy.dot(&jz) - jz.dot(&jy) - jx.mapv(|v| v * I);
        assert!(max_abs(&res.view()) < 1e-12);
        let casimir = jx.dot(&jx) + jy.dot(&jy) + jz.dot(&jz);
        assert!(max_abs(&(casimir - j_squared(&b).to_dense()).view()) < 1e-12);
    }

    #[test]
    fn cg_reference_values() {
        for q in -1..=1 {
            assert_eq!(cg(0, 0, 1, q, 1, q).unwrap(), 1.0);
        }
        assert!((cg(1, 1, 1, -1, 0, 0).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(cg(1, 1, 1, 1, 1, 2).unwrap(), 0.0);
        // ⟨1 0; 1 0 | 1 0⟩ vanishes by symmetry
        assert_eq!(cg(1, 0, 1, 0, 1, 0).unwrap(), 0.0);
        assert!((cg(1, 1, 1, 0, 2, 1).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((cg(1, 0, 1, 0, 2, 0).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cg_rejects_bad_pairs() {
        assert!(matches!(cg(1, 2, 1, 0, 1, 2), Err(Error::Domain(_))));
        assert!(matches!(cg(-1, 0, 1, 0, 1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn coherent_state_poles_and_y_axis() {
        let b = Arc::new(RotBasis::ground(4));
        let up = coherent_state(b.clone(), 2, 0.0, 0.0).unwrap();
        assert_eq!(up, PureState::basis_state(b.clone(), 2, 2).unwrap());
        let down = coherent_state(b.clone(), 2, PI, 0.0).unwrap();
        let idx = b.index(2, -2).unwrap();
        assert!((down.amplitudes()[idx].norm() - 1.0).abs() < 1e-15);
        assert!((down.norm_sqr() - 1.0).abs() < 1e-15);

        let psi = coherent_state(b.clone(), 2, FRAC_PI_2, FRAC_PI_2).unwrap();
        let mean = Axis::ALL.map(|a| psi.expectation(&angular_momentum(&b, a)).re);
        assert!(mean[0].abs() < 1e-12);
        assert!((mean[1] - 2.0).abs() < 1e-12);
        assert!(mean[2].abs() < 1e-12);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coherent_state_beyond_truncation() {
        let b = Arc::new(RotBasis::ground(2));
        assert!(matches!(coherent_state(b, 3, 0.1, 0.1), Err(Error::Truncation { j: 3, j_max: 2 })));
    }
}
