//! Matrix exponentials.
//!
//! [`expm`] is the Padé(13) scaling-and-squaring exponential of a dense
//! complex matrix (Higham 2005). [`exp_action`] applies `exp(τ L)` to a state
//! through a truncated Taylor series with sub-stepping, which only needs the
//! action of `L`; it is used where the generator is too large to exponentiate
//! densely (the Liouvillian) or where `τ` varies call by call (jump-time search).

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::ode::OdeState;
use crate::operator::C64;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &Array2<C64>) -> f64 {
    a.columns().into_iter().map(|c| c.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(a)` for a square complex matrix.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = norm1(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.mapv(|v| v / 2f64.powi(s));

    let ident = Array2::<C64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = &PADE13;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> Array2<C64> {
        a6.mapv(|v| v * c6) + a4.mapv(|v| v * c4) + a2.mapv(|v| v * c2) + ident.mapv(|v| v * c0)
    };
    let u_inner = a6.dot(&(a6.mapv(|v| v * b[13]) + a4.mapv(|v| v * b[11]) + a2.mapv(|v| v * b[9])))
        + lin(b[7], b[5], b[3], b[1]);
    let u = a.dot(&u_inner);
    let v = a6.dot(&(a6.mapv(|v| v * b[12]) + a4.mapv(|v| v * b[10]) + a2.mapv(|v| v * b[8])))
        + lin(b[6], b[4], b[2], b[0]);

    // (V − U) X = (V + U)
    let lhs = DMatrix::from_fn(n, n, |r, c| v[[r, c]] - u[[r, c]]);
    let rhs = DMatrix::from_fn(n, n, |r, c| v[[r, c]] + u[[r, c]]);
    let x = lhs.lu().solve(&rhs).expect("Padé denominator is nonsingular after scaling");
    let mut result = Array2::from_shape_fn((n, n), |(r, c)| x[(r, c)]);
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// Largest `‖τL‖` bound handled by one Taylor sub-step.
const TAYLOR_THETA: f64 = 4.0;
const TAYLOR_MAX_TERMS: usize = 80;

/// `exp(τ L) x` where `apply(y, out)` writes `L y` into `out` and
/// `norm_bound ≥ ‖L‖`. Terms are added until two consecutive ones fall
/// below double-precision resolution of the running sum.
pub fn exp_action<S, F>(x: &S, tau: f64, norm_bound: f64, mut apply: F) -> S
where
    S: OdeState,
    F: FnMut(&S, &mut S),
{
    if tau == 0.0 {
        return x.clone();
    }
    let substeps = ((norm_bound * tau.abs()) / TAYLOR_THETA).ceil().max(1.0) as usize;
    let h = tau / substeps as f64;
    let mut acc = x.clone();
    let mut term = x.clone();
    let mut next = x.zeros_like();
    for _ in 0..substeps {
        term.clone_from(&acc);
        let mut previous_small = false;
        for k in 1..=TAYLOR_MAX_TERMS {
            apply(&term, &mut next);
            std::mem::swap(&mut term, &mut next);
            term.scale(h / k as f64);
            acc.axpy(1.0, &term);
            let small = term.max_abs() <= f64::EPSILON / 2.0 * acc.max_abs();
            if small && previous_small {
                break;
            }
            previous_small = small;
        }
    }
    acc
}
