mod common;

use std::sync::Arc;

use proptest::prelude::*;
use subfreq::p_sub_laplacian::{apply_operator, dirichlet_energy, rayleigh_quotient, weak_form_residual};
use subfreq::{DiscreteGradient, GridDomain, HorizontalVectorField, VectorFieldFamily};

use common::random_function;

fn family(which: u8) -> (VectorFieldFamily, Arc<GridDomain>) {
    match which {
        0 => (
            VectorFieldFamily::euclidean(2).unwrap(),
            Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 2.0)], &[11, 15]).unwrap()),
        ),
        1 => (
            VectorFieldFamily::grushin(),
            Arc::new(
                GridDomain::make_mask(&[(-1.0, 1.0), (-1.0, 1.0)], &[17, 17], |x| x[0] * x[0] + x[1] * x[1] < 0.8)
                    .unwrap(),
            ),
        ),
        _ => (
            VectorFieldFamily::heisenberg(1).unwrap(),
            Arc::new(GridDomain::make_box(&[(-1.0, 1.0); 3], &[7, 8, 9]).unwrap()),
        ),
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-300
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn field_adjoints_are_transposes(which in 0u8..3, seed in any::<u64>()) {
        let (fam, d) = family(which);
        let g = DiscreteGradient::new(&fam, &d).unwrap();
        let u = random_function(&d, seed);
        let f = random_function(&d, seed ^ 0x9e37);
        let scale = u.lp_norm(2.0).unwrap() * f.lp_norm(2.0).unwrap();
        for k in 0..g.num_fields() {
            let lhs = g.apply_field(k, &u).unwrap().dot(&f).unwrap();
            let rhs = u.dot(&g.apply_adjoint_field(k, &f).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn oriented_bundle_divergence_is_adjoint(which in 0u8..3, seed in any::<u64>()) {
        let (fam, d) = family(which);
        let g = DiscreteGradient::new(&fam, &d).unwrap();
        let u = random_function(&d, seed);
        let bundle = g.oriented_gradient(&random_function(&d, seed.wrapping_add(1))).unwrap();
        let lhs = g.oriented_gradient(&u).unwrap().dot(&bundle).unwrap();
        let rhs = u.dot(&g.horizontal_adjoint_divergence(&bundle).unwrap()).unwrap();
        prop_assert!(close(lhs, rhs, 1e-11), "{lhs} vs {rhs}");
    }

    #[test]
    fn energy_and_operator_homogeneity(which in 0u8..3, seed in any::<u64>(), p in 1.2f64..5.0, c in 0.1f64..10.0) {
        let (fam, d) = family(which);
        let g = DiscreteGradient::new(&fam, &d).unwrap();
        let u = random_function(&d, seed);
        let e1 = dirichlet_energy(&g, &u, p).unwrap();
        let e2 = dirichlet_energy(&g, &u.scaled(c), p).unwrap();
        prop_assert!(close(e2, c.powf(p) * e1, 1e-11));
        let r1 = rayleigh_quotient(&g, &u, p).unwrap();
        let r2 = rayleigh_quotient(&g, &u.scaled(c), p).unwrap();
        prop_assert!(close(r1, r2, 1e-11));
        let l1 = apply_operator(&g, &u, p, 0.0).unwrap();
        let l2 = apply_operator(&g, &u.scaled(c), p, 0.0).unwrap();
        let k = c.powf(p - 1.0);
        let scale = l1.max_abs() * k;
        for (a, b) in l1.values().iter().zip(l2.values()) {
            prop_assert!((k * a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn operator_pairing_matches_weak_form(which in 0u8..3, seed in any::<u64>(), p in 1.2f64..5.0) {
        let (fam, d) = family(which);
        let g = DiscreteGradient::new(&fam, &d).unwrap();
        let u = random_function(&d, seed);
        let phi = random_function(&d, seed.wrapping_mul(3));
        let lu = apply_operator(&g, &u, p, 0.0).unwrap();
        let pairing = lu.dot(&phi).unwrap();
        let weak = weak_form_residual(&g, &u, 0.0, p, &phi).unwrap();
        prop_assert!(close(pairing, weak, 1e-10), "{pairing} vs {weak}");
        // Euler identity: ⟨L_p u, u⟩ = ∫ |∇_X u|^p
        let energy = dirichlet_energy(&g, &u, p).unwrap();
        prop_assert!(close(lu.dot(&u).unwrap(), energy, 1e-10));
    }

    #[test]
    fn operator_is_monotone(which in 0u8..3, seed in any::<u64>(), p in 1.2f64..5.0) {
        let (fam, d) = family(which);
        let g = DiscreteGradient::new(&fam, &d).unwrap();
        let u = random_function(&d, seed);
        let v = random_function(&d, seed.wrapping_add(17));
        let diff = u.add_scaled(-1.0, &v).unwrap();
        let lu = apply_operator(&g, &u, p, 0.0).unwrap();
        let lv = apply_operator(&g, &v, p, 0.0).unwrap();
        let gap = lu.add_scaled(-1.0, &lv).unwrap().dot(&diff).unwrap();
        prop_assert!(gap >= -1e-12 * (lu.dot(&u).unwrap() + lv.dot(&v).unwrap()));
    }
}

#[test]
fn centered_components_round_trip() {
    let (fam, d) = family(1);
    let g = DiscreteGradient::new(&fam, &d).unwrap();
    let u = random_function(&d, 3);
    let grad = g.horizontal_gradient(&u).unwrap();
    let parts: Vec<_> = (0..g.num_fields()).map(|k| grad.centered(k)).collect();
    let rebuilt = HorizontalVectorField::from_components(&parts, 1).unwrap();
    assert_eq!(rebuilt.dot(&grad).unwrap(), grad.dot(&grad).unwrap());
    for (k, part) in parts.iter().enumerate() {
        assert_eq!(part, &g.apply_field(k, &u).unwrap());
    }
}

#[test]
fn p_two_euclidean_operator_is_five_point_laplacian() {
    let d = Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 1.0)], &[9, 9]).unwrap());
    let g = DiscreteGradient::new(&VectorFieldFamily::euclidean(2).unwrap(), &d).unwrap();
    let u = random_function(&d, 8);
    let lu = apply_operator(&g, &u, 2.0, 0.0).unwrap();
    let h2 = (1.0f64 / 8.0).powi(2);
    for &i in d.interior_nodes() {
        let idx = d.unravel(i);
        let at = |a: usize, b: usize| u.value_at(&[a, b]);
        let (a, b) = (idx[0], idx[1]);
        let five = (4.0 * at(a, b) - at(a + 1, b) - at(a - 1, b) - at(a, b + 1) - at(a, b - 1)) / h2;
        assert!((lu.values()[i] - five).abs() <= 1e-10 * five.abs().max(1.0), "{} vs {five}", lu.values()[i]);
    }
}
