//! Vibrational heating by spontaneous Raman scattering and the interaction
//! time over which the rotational model stays valid.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::operator::C64;

/// Default margin in the "much less than" validity bound.
pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_NU_MAX: usize = 60;
/// Largest acceptable column-sum deficit of the retained kernel.
pub const KERNEL_DEFICIT: f64 = 1e-8;
/// Largest population allowed in the upper half of the ladder.
const UPPER_POPULATION: f64 = 1e-12;
const NU_MAX_LIMIT: usize = 4000;

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n + 1];
    for k in 2..=n {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

/// Generalized Laguerre polynomial `L_n^{(α)}(x)` by upward recurrence.
fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 + alpha - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `|⟨m|D(β)|n⟩|²`, the Franck–Condon factor between oscillator levels `m`
/// and `n` of potentials displaced by `β` in annihilation-operator units.
pub fn fc_overlap(m: i64, n: i64, beta: f64) -> Result<f64> {
    if m < 0 || n < 0 {
        return Err(Error::Domain(format!("vibrational quantum numbers must be non-negative, got ({m}, {n})")));
    }
    let hi = m.max(n) as usize;
    Ok(overlap(m as usize, n as usize, beta, &ln_factorials(hi)))
}

fn overlap(m: usize, n: usize, beta: f64, ln_fact: &[f64]) -> f64 {
    let (hi, lo) = if m >= n { (m, n) } else { (n, m) };
    let x = beta * beta;
    if x == 0.0 {
        return if hi == lo { 1.0 } else { 0.0 };
    }
    let l = laguerre(lo, (hi - lo) as f64, x);
    if l == 0.0 {
        return 0.0;
    }
    let log = ln_fact[lo] - ln_fact[hi] + (hi - lo) as f64 * x.ln() - x + 2.0 * l.abs().ln();
    log.exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibRateModel {
    /// Dimensionless displacement `η`.
    pub eta: f64,
    /// `Ω_R Γ/Δ` in units of `B`.
    pub rate_prefactor: f64,
    pub nu_max: usize,
    pub omega_nu_over_b: f64,
    pub delta_over_b: f64,
}

impl VibRateModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.eta, self.rate_prefactor, self.omega_nu_over_b, self.delta_over_b];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("vibrational parameters must be finite".into()));
        }
        if self.eta < 0.0 || self.rate_prefactor < 0.0 {
            return Err(Error::Domain("eta and rate_prefactor must be non-negative".into()));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.eta / 2.0
    }

    /// `g = ½ η² Ω_R Γ/Δ`
    pub fn gain(&self) -> f64 {
        0.5 * self.eta * self.eta * self.rate_prefactor
    }
}

/// Two-step redistribution kernel `K_νν′ = Σ_νe fc(ν, νe) fc(νe, ν′)` on `0..=nu_max`.
pub fn fc_kernel(beta: f64, nu_max: usize) -> Array2<f64> {
    let n = nu_max + 1;
    let ln_fact = ln_factorials(nu_max);
    let fc = Array2::from_shape_fn((n, n), |(a, b)| overlap(a, b, beta, &ln_fact));
    fc.dot(&fc)
}

/// Largest column-sum deficit among the first `cols` columns of `kernel`.
pub fn kernel_deficit(kernel: &Array2<f64>, cols: usize) -> f64 {
    kernel.columns().into_iter().take(cols).map(|c| (1.0 - c.sum()).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct VibMoments {
    pub t: f64,
    pub nu_bar: f64,
    pub var_nu: f64,
}

impl VibMoments {
    fn of(t: f64, p: &[f64]) -> Self {
        let nu_bar: f64 = p.iter().enumerate().map(|(v, w)| v as f64 * w).sum();
        let second: f64 = p.iter().enumerate().map(|(v, w)| (v * v) as f64 * w).sum();
        VibMoments { t, nu_bar, var_nu: (second - nu_bar * nu_bar).max(0.0) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateSolution {
    /// Truncation actually used.
    pub nu_max: usize,
    pub distributions: Vec<Vec<f64>>,
    pub moments: Vec<VibMoments>,
}

/// Solves `dP/dt = rate · (K − diag(Σ_ν K_νν′)) P` exactly on the grid.
///
/// The loss term uses the retained column sums, so probability is conserved
/// to rounding whatever the truncation. With `auto_extend`, `nu_max` is
/// doubled until the kernel is stochastic to within [`KERNEL_DEFICIT`] on
/// the lower half of the ladder and the solution never populates the upper
/// half; without it an inadequate truncation is an error.
pub fn integrate_rate_eq(model: &VibRateModel, p0: &[f64], grid: &[f64], auto_extend: bool) -> Result<RateSolution> {
    model.validate()?;
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must be non-negative and strictly increasing".into()));
    }
    if p0.iter().any(|p| *p < 0.0 || !p.is_finite()) || (p0.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::Domain("initial vibrational distribution must be a probability vector".into()));
    }
    let mut nu_max = model.nu_max.max(p0.len().saturating_sub(1)).max(1);
    loop {
        let kernel = fc_kernel(model.beta(), nu_max);
        let half = nu_max / 2 + 1;
        let deficit = kernel_deficit(&kernel, half);
        let solution = if deficit <= KERNEL_DEFICIT { Some(solve(model, &kernel, p0, grid)) } else { None };
        let upper = solution
            .as_ref()
            .map(|s| s.distributions.iter().map(|p| p[half..].iter().sum::<f64>()).fold(0.0, f64::max));
        match (solution, upper) {
            (Some(mut s), Some(u)) if u <= UPPER_POPULATION => {
                s.nu_max = nu_max;
                return Ok(s);
            }
            _ if auto_extend && nu_max < NU_MAX_LIMIT => nu_max *= 2,
            _ => {
                return Err(Error::VibTruncation {
                    nu_max,
                    reason: if deficit > KERNEL_DEFICIT {
                        format!("kernel column deficit {deficit:.3e} on the lower half")
                    } else {
                        "population reaches the upper half of the ladder".into()
                    },
                })
            }
        }
    }
}

fn solve(model: &VibRateModel, kernel: &Array2<f64>, p0: &[f64], grid: &[f64]) -> RateSolution {
    let n = kernel.nrows();
    let col_sums: Vec<f64> = kernel.columns().into_iter().map(|c| c.sum()).collect();
    let generator = Array2::from_shape_fn((n, n), |(r, c)| {
        let loss = if r == c { col_sums[c] } else { 0.0 };
        C64::new(model.rate_prefactor * (kernel[[r, c]] - loss), 0.0)
    });
    let mut p: Vec<f64> = (0..n).map(|i| p0.get(i).copied().unwrap_or(0.0)).collect();
    let mut distributions = Vec::with_capacity(grid.len());
    let mut moments = Vec::with_capacity(grid.len());
    let mut t_prev = 0.0;
    let mut cached: Option<(f64, Array2<C64>)> = None;
    for &t in grid {
        let dt = t - t_prev;
        if dt > 0.0 {
            let reuse = matches!(&cached, Some((h, _)) if (h - dt).abs() <= 1e-12 * dt);
            if !reuse {
                cached = Some((dt, expm(&generator.mapv(|v| v * dt))));
            }
            let u = &cached.as_ref().expect("propagator").1;
            p = (0..n).map(|r| (0..n).map(|c| u[[r, c]].re * p[c]).sum()).collect();
        }
        t_prev = t;
        moments.push(VibMoments::of(t, &p));
        distributions.push(p.clone());
    }
    RateSolution { nu_max: n - 1, distributions, moments }
}

/// `ν̄ = g t`, `Δν² = (g t)² + g t (1 + ¾ η²)`.
pub fn closed_form_moments(model: &VibRateModel, t: f64) -> VibMoments {
    let x = model.gain() * t;
    VibMoments { t, nu_bar: x, var_nu: x * x + x * (1.0 + 0.75 * model.eta * model.eta) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidityBound {
    /// `c · (Δ/B) / (Ω_R Γ/Δ · ω_ν/B) · η⁻²`
    pub margin_bound: f64,
    pub margin: f64,
    /// Time at which `ω_ν (ν̄ + Δν) = Δ` under the closed forms.
    pub exact_crossing: f64,
}

/// Interaction-time bound with the default margin.
pub fn max_valid_time(model: &VibRateModel) -> Result<ValidityBound> {
    max_valid_time_with_margin(model, DEFAULT_MARGIN)
}

pub fn max_valid_time_with_margin(model: &VibRateModel, margin: f64) -> Result<ValidityBound> {
    model.validate()?;
    let ratios = [model.eta, model.rate_prefactor, model.omega_nu_over_b, model.delta_over_b, margin];
    if ratios.iter().any(|v| *v <= 0.0) {
        return Err(Error::Domain("validity bound needs positive eta, rates, frequency ratios and margin".into()));
    }
    let eta2 = model.eta * model.eta;
    let margin_bound = margin * model.delta_over_b / (model.rate_prefactor * model.omega_nu_over_b) / eta2;
    // x + sqrt(x² + k x) = a with x = g t
    let a = model.delta_over_b / model.omega_nu_over_b;
    let k = 1.0 + 0.75 * eta2;
    let exact_crossing = a * a / (k + 2.0 * a) / model.gain();
    Ok(ValidityBound { margin_bound, margin, exact_crossing })
}
