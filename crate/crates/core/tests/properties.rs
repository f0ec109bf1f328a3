use std::sync::Arc;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rotmaster::angmom::{angular_momentum, cg, coherent_state, j_squared, Axis, RotBasis};
use rotmaster::coupling::{CouplingSet, DetuningSign, FieldComponent, FieldConfig};
use rotmaster::operator::SparseOp;
use rotmaster::vibvalidity::{closed_form_moments, integrate_rate_eq, VibRateModel};

fn commutator(a: &SparseOp, b: &SparseOp) -> SparseOp {
    a.matmul(b).add(&b.matmul(a).scale(C64::new(-1.0, 0.0)))
}

fn field_strategy() -> impl Strategy<Value = FieldConfig> {
    let component = (0.1f64..1.0, -0.5f64..0.5, prop::array::uniform6(-1.0f64..1.0), -2.0f64..2.0).prop_filter_map(
        "polarization must be nonzero",
        |(re, im, p, detuning)| {
            let v = [C64::new(p[0], p[1]), C64::new(p[2], p[3]), C64::new(p[4], p[5])];
            let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            (n > 1e-3).then(|| FieldComponent { amplitude: C64::new(re, im), polarization: v.map(|c| c / n), detuning })
        },
    );
    (prop::collection::vec(component, 1..=3), 0.01f64..1.0, 0.0f64..0.1).prop_map(|(components, omega_r, g)| {
        FieldConfig { components, omega_r, gamma_over_delta: g, detuning_sign: DetuningSign::Blue }
    })
}

fn state_strategy(dim: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map("nonzero state", |v| {
        let mut x: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        (rotmaster::operator::normalize(&mut x) > 1e-6).then_some(x)
    })
}

#[test]
fn angular_momentum_algebra_and_casimir() {
    let basis = RotBasis::ground(6);
    let [jx, jy, jz] = Axis::ALL.map(|a| angular_momentum(&basis, a));
    let i = C64::new(0.0, 1.0);
    assert!(commutator(&jx, &jy).add(&jz.scale(-i)).max_abs() < 1e-12);
    assert!(commutator(&jy, &jz).add(&jx.scale(-i)).max_abs() < 1e-12);
    assert!(commutator(&jz, &jx).add(&jy.scale(-i)).max_abs() < 1e-12);
    let casimir = jx.matmul(&jx).add(&jy.matmul(&jy)).add(&jz.matmul(&jz));
    assert!(casimir.add(&j_squared(&basis).scale(C64::new(-1.0, 0.0))).max_abs() < 1e-12);
}

#[test]
fn clebsch_gordan_orthogonality() {
    for (j1, j2) in [(1i32, 1i32), (2, 1), (3, 2), (5, 1)] {
        for jt in (j1 - j2)..=(j1 + j2) {
            for jt2 in (j1 - j2)..=(j1 + j2) {
                let mt = 0.min(jt).min(jt2);
                let mut s = 0.0;
                for m1 in -j1..=j1 {
                    let m2 = mt - m1;
                    if m2.abs() <= j2 {
                        s += cg(j1, m1, j2, m2, jt, mt).unwrap() * cg(j1, m1, j2, m2, jt2, mt).unwrap();
                    }
                }
                let want = if jt == jt2 { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-13, "j1={j1} j2={j2} J={jt} J'={jt2}: {s}");
            }
        }
    }
}

#[test]
fn coherent_states_point_along_their_axis() {
    let basis = Arc::new(RotBasis::ground(4));
    let ops = Axis::ALL.map(|a| angular_momentum(&basis, a));
    for j in 1..=4u32 {
        for k in 0..7 {
            for l in 0..8 {
                let (theta, phi) = (std::f64::consts::PI * k as f64 / 6.0, std::f64::consts::TAU * l as f64 / 8.0);
                let s = coherent_state(basis.clone(), j, theta, phi).unwrap();
                assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
                let want = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()].map(|c| c * j as f64);
                for (op, w) in ops.iter().zip(want) {
                    let got = s.expectation(op);
                    assert!((got.re - w).abs() < 1e-12 && got.im.abs() < 1e-12, "j={j} θ={theta} φ={phi}");
                }
            }
        }
    }
}

#[test]
fn kerr_light_shift_commutes_with_jx_in_the_interior() {
    let cs = CouplingSet::new(8);
    let field = FieldConfig::kerr(0.2, 0.0);
    let hr = cs.raman_hamiltonian(&field, 0.0);
    let jx = angular_momentum(cs.ground(), Axis::X);
    let p = cs.interior();
    // J_x couples only within a j-block, so the restriction is exact away from the edge
    let inner: Vec<usize> = p.iter().copied().filter(|&i| cs.ground().state(i).0 + 2 < cs.j_max()).collect();
    assert!(commutator(&jx, &hr).submatrix(&inner, &inner).max_abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn light_shift_is_negative_semidefinite(field in field_strategy(), t in 0.0f64..10.0, x in state_strategy(RotBasis::ground(4).len())) {
        let cs = CouplingSet::new(4);
        let e = cs.raman_hamiltonian(&field, t).expectation(&x);
        prop_assert!(e.im.abs() < 1e-12);
        prop_assert!(e.re <= 1e-12);
    }

    #[test]
    fn effective_hamiltonian_is_dissipative(field in field_strategy(), t in 0.0f64..10.0, x in state_strategy(RotBasis::ground(4).len())) {
        let cs = CouplingSet::new(4);
        prop_assert!(cs.effective_hamiltonian(&field, t).expectation(&x).im <= 1e-12);
    }

    #[test]
    fn sum_rule_holds_for_random_fields(field in field_strategy(), t in 0.0f64..10.0) {
        let cs = CouplingSet::new(5);
        let [a, b, c] = cs.jump_operators(&field, t);
        let weight = a.adjoint().matmul(&a).add(&b.adjoint().matmul(&b)).add(&c.adjoint().matmul(&c));
        let residual = weight.add(&cs.raman_hamiltonian(&field, t).scale(C64::new(field.gamma_over_delta, 0.0)));
        let p = cs.interior();
        prop_assert!(residual.submatrix(&p, &p).max_abs() < 1e-12);
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn vibrational_spread_grows_linearly_beyond_the_drift(eta in 0.3f64..2.0, rate in 0.5f64..2.0) {
        let model = VibRateModel { eta, rate_prefactor: rate, nu_max: 40, omega_nu_over_b: 300.0, delta_over_b: 1e6 };
        let g = model.gain();
        let times: Vec<f64> = (0..=4).map(|k| 0.125 * k as f64 / g).collect();
        let mut p0 = vec![0.0; 41];
        p0[0] = 1.0;
        let sol = integrate_rate_eq(&model, &p0, &times, true).unwrap();
        // Var(ν) − ν̄² is linear in t from the ground state
        let excess: Vec<f64> = sol.moments.iter().map(|m| m.var_nu - m.nu_bar * m.nu_bar).collect();
        for w in excess.windows(3) {
            prop_assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-7 * (1.0 + w[2].abs()), "{excess:?}");
        }
        for (m, t) in sol.moments.iter().zip(&times) {
            let want = closed_form_moments(&model, *t);
            prop_assert!((m.nu_bar - want.nu_bar).abs() < 1e-8 * (1.0 + want.nu_bar));
        }
    }
}
