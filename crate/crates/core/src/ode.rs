//! Adaptive Dormand–Prince 5(4) stepping over generic linear state spaces.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::operator::C64;

/// Minimal vector-space interface the integrators need.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a · x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
    /// Largest component modulus.
    fn max_abs(&self) -> f64;
    /// RMS of `|err_i| / (atol + rtol · max(|y0_i|, |y1_i|))`.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
}

fn rms<I: Iterator<Item = (f64, f64, f64)>>(it: I, atol: f64, rtol: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (e, a, b) in it {
        let w = atol + rtol * a.max(b);
        sum += (e / w).powi(2);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

impl OdeState for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, v)| *s += a * v);
    }
    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|s| *s *= a);
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        rms(err.iter().zip(y0).zip(y1).map(|((e, a), b)| (e.abs(), a.abs(), b.abs())), atol, rtol)
    }
}

impl OdeState for Vec<C64> {
    fn zeros_like(&self) -> Self {
        vec![C64::new(0.0, 0.0); self.len()]
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, v)| *s += v * a);
    }
    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|s| *s *= a);
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m: f64, v| m.max(v.norm_sqr())).sqrt()
    }
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        rms(err.iter().zip(y0).zip(y1).map(|((e, a), b)| (e.norm(), a.norm(), b.norm())), atol, rtol)
    }
}

impl OdeState for Array2<C64> {
    fn zeros_like(&self) -> Self {
        Array2::zeros(self.raw_dim())
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.zip_mut_with(x, |s, v| *s += v * a);
    }
    fn scale(&mut self, a: f64) {
        self.mapv_inplace(|s| s * a);
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m: f64, v| m.max(v.norm_sqr())).sqrt()
    }
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        rms(err.iter().zip(y0).zip(y1).map(|((e, a), b)| (e.norm(), a.norm(), b.norm())), atol, rtol)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand–Prince 5(4) with standard step-size control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on any single step.
    pub max_step: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 { rtol: 1e-9, atol: 1e-12, max_step: f64::INFINITY }
    }
}

/// Running statistics shared across successive `integrate` calls.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub largest_step: f64,
    /// Step size proposed for the next call.
    pub next_step: f64,
}

impl Dopri5 {
    /// Advances `y` from `t0` to `t1` (which may lie before `t0`).
    pub fn integrate<S, F>(&self, mut rhs: F, t0: f64, y: S, t1: f64, stats: &mut OdeStats) -> Result<S>
    where
        S: OdeState,
        F: FnMut(f64, &S, &mut S),
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(y);
        }
        let dir = span.signum();
        let mut t = t0;
        let mut y = y;
        let mut k1 = y.zeros_like();
        rhs(t, &y, &mut k1);
        stats.rhs_evals += 1;

        let mut h = if stats.next_step > 0.0 {
            stats.next_step
        } else {
            let scale = y.max_abs().max(self.atol);
            let slope = k1.max_abs().max(1e-300);
            (0.01 * scale / slope).min(span.abs())
        };
        h = h.min(self.max_step).min(span.abs());

        let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
            (y.zeros_like(), y.zeros_like(), y.zeros_like(), y.zeros_like(), y.zeros_like(), y.zeros_like());
        loop {
            let remaining = (t1 - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            let hs = dir * step;

            let mut tmp = y.clone();
            tmp.axpy(hs * A21, &k1);
            rhs(t + C2 * hs, &tmp, &mut k2);
            let mut tmp = y.clone();
            tmp.axpy(hs * A31, &k1);
            tmp.axpy(hs * A32, &k2);
            rhs(t + C3 * hs, &tmp, &mut k3);
            let mut tmp = y.clone();
            tmp.axpy(hs * A41, &k1);
            tmp.axpy(hs * A42, &k2);
            tmp.axpy(hs * A43, &k3);
            rhs(t + C4 * hs, &tmp, &mut k4);
            let mut tmp = y.clone();
            tmp.axpy(hs * A51, &k1);
            tmp.axpy(hs * A52, &k2);
            tmp.axpy(hs * A53, &k3);
            tmp.axpy(hs * A54, &k4);
            rhs(t + C5 * hs, &tmp, &mut k5);
            let mut tmp = y.clone();
            tmp.axpy(hs * A61, &k1);
            tmp.axpy(hs * A62, &k2);
            tmp.axpy(hs * A63, &k3);
            tmp.axpy(hs * A64, &k4);
            tmp.axpy(hs * A65, &k5);
            rhs(t + hs, &tmp, &mut k6);
            let mut y_new = y.clone();
            y_new.axpy(hs * B1, &k1);
            y_new.axpy(hs * B3, &k3);
            y_new.axpy(hs * B4, &k4);
            y_new.axpy(hs * B5, &k5);
            y_new.axpy(hs * B6, &k6);
            rhs(t + hs, &y_new, &mut k7);
            stats.rhs_evals += 6;

            let mut err = y.zeros_like();
            err.axpy(hs * E1, &k1);
            err.axpy(hs * E3, &k3);
            err.axpy(hs * E4, &k4);
            err.axpy(hs * E5, &k5);
            err.axpy(hs * E6, &k6);
            err.axpy(hs * E7, &k7);
            let en = S::error_norm(&err, &y, &y_new, self.atol, self.rtol);

            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if en <= 1.0 {
                stats.accepted += 1;
                stats.largest_step = stats.largest_step.max(step);
                t = if last { t1 } else { t + hs };
                y = y_new;
                std::mem::swap(&mut k1, &mut k7);
                // keep the regular step for the next call when this one was clipped
                h = if last { h.max(step) } else { (step * factor).min(self.max_step) };
                if last {
                    stats.next_step = h;
                    return Ok(y);
                }
            } else {
                stats.rejected += 1;
                h = step * factor.min(1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut stats = OdeStats::default();
        let y = Dopri5::default()
            .integrate(|_, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = -y[0], 0.0, vec![1.0], 3.0, &mut stats)
            .unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-10);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_over_many_periods() {
        let mut stats = OdeStats::default();
        let mut y = vec![C64::new(1.0, 0.0)];
        let solver = Dopri5::default();
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.5).collect();
        for w in grid.windows(2) {
            y = solver
                .integrate(|_, y: &Vec<C64>, dy: &mut Vec<C64>| dy[0] = C64::new(0.0, -3.0) * y[0], w[0], y, w[1], &mut stats)
                .unwrap();
        }
        let exact = C64::from_polar(1.0, -150.0);
        assert!((y[0] - exact).norm() < 1e-7);
    }

    #[test]
    fn max_step_is_respected() {
        let mut stats = OdeStats::default();
        let solver = Dopri5 { max_step: 0.01, ..Dopri5::default() };
        solver.integrate(|_, _y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = 1.0, 0.0, vec![0.0], 1.0, &mut stats).unwrap();
        assert!(stats.largest_step <= 0.01 + 1e-15);
        assert!(stats.accepted >= 100);
    }
}
