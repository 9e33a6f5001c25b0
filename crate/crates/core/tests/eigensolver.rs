mod common;

use std::sync::Arc;

use nalgebra::DMatrix;
use subfreq::eigensolver::{
    domain_monotonicity_check, linear_principal, scaling_check, solve_with, uniqueness_check, StopReason,
};
use subfreq::p_sub_laplacian::{apply_operator, rayleigh_quotient};
use subfreq::{
    solve_principal, CustomFamilySpec, DiscreteGradient, Error, GridDomain, GridFunction, SolverOptions, Status,
    VectorFieldFamily,
};

use common::{closed_form_lambda, shooting_lambda};

fn grushin_box(n: usize) -> Arc<GridDomain> {
    Arc::new(GridDomain::make_box(&[(-1.0, 1.0), (-1.0, 1.0)], &[n, n]).unwrap())
}

#[test]
fn shooting_oracle_agrees_with_closed_form() {
    for p in [1.5, 2.0, 3.0] {
        let shot = shooting_lambda(p);
        let exact = closed_form_lambda(p);
        assert!((shot / exact - 1.0).abs() < 1e-4, "p = {p}: {shot} vs {exact}");
    }
}

/// Dense matrix of the p = 2 operator restricted to interior nodes, built
/// column by column; its smallest eigenvalue checks the nonlinear solver.
#[test]
fn grushin_solver_matches_dense_eigenvalue() {
    let d = grushin_box(13);
    let g = DiscreteGradient::new(&VectorFieldFamily::grushin(), &d).unwrap();
    let interior = d.interior_nodes().to_vec();
    let m = interior.len();
    let mut a = DMatrix::zeros(m, m);
    for (col, &node) in interior.iter().enumerate() {
        let mut e = vec![0.0; d.num_nodes()];
        e[node] = 1.0;
        let column = apply_operator(&g, &GridFunction::from_values(&d, e).unwrap(), 2.0, 0.0).unwrap();
        for (row, &r) in interior.iter().enumerate() {
            a[(row, col)] = column.values()[r];
        }
    }
    let asym = (&a - a.transpose()).abs().max();
    assert!(asym <= 1e-12 * a.abs().max(), "operator is not symmetric: {asym:e}");
    let dense = a.symmetric_eigenvalues().min();
    let pair = solve_with(&g, &SolverOptions::default(), None).unwrap();
    assert!(pair.converged);
    assert!((pair.lambda1 / dense - 1.0).abs() < 1e-9, "{} vs {dense}", pair.lambda1);
    let lin = linear_principal(&g, 1e-14).unwrap();
    assert!((lin.lambda / dense - 1.0).abs() < 1e-11);
}

#[test]
fn heisenberg_solver_matches_inverse_iteration() {
    let d = Arc::new(GridDomain::make_box(&[(-1.0, 1.0); 3], &[11; 3]).unwrap());
    let g = DiscreteGradient::new(&VectorFieldFamily::heisenberg(1).unwrap(), &d).unwrap();
    let pair = solve_with(&g, &SolverOptions::default(), None).unwrap();
    let lin = linear_principal(&g, 1e-14).unwrap();
    assert!((pair.lambda1 / lin.lambda - 1.0).abs() < 1e-9, "{} vs {}", pair.lambda1, lin.lambda);
}

#[test]
fn rectangle_matches_closed_form() {
    let d = Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 3.0)], &[17, 49]).unwrap());
    let pair = solve_principal(&VectorFieldFamily::euclidean(2).unwrap(), &d, &SolverOptions::default()).unwrap();
    let h = 1.0 / 16.0;
    let mode = |len: f64| 4.0 / (h * h) * (std::f64::consts::PI * h / (2.0 * len)).sin().powi(2);
    let exact = mode(1.0) + mode(3.0);
    assert!((pair.lambda1 / exact - 1.0).abs() < 1e-9);
}

#[test]
fn ground_state_is_normalized_positive_and_minimal() {
    let d = grushin_box(17);
    let g = DiscreteGradient::new(&VectorFieldFamily::grushin(), &d).unwrap();
    for p in [1.5, 3.0] {
        let pair = solve_with(&g, &SolverOptions::with_p(p), None).unwrap();
        assert!(pair.converged, "{:?}", pair.stop);
        assert!((pair.u1.lp_norm(p).unwrap() - 1.0).abs() < 1e-12);
        assert!(pair.u1.min_interior().0 > 0.0);
        assert!(pair.lambda_history.windows(2).all(|w| w[1] <= w[0]));
        let rq = rayleigh_quotient(&g, &pair.u1, p).unwrap();
        assert!((rq / pair.lambda1 - 1.0).abs() < 1e-12);
        for seed in 0..5 {
            let other = subfreq::random_positive_function(&d, seed);
            assert!(rayleigh_quotient(&g, &other, p).unwrap() >= pair.lambda1);
        }
    }
}

#[test]
fn identical_options_give_identical_bits() {
    let d = grushin_box(15);
    let f = VectorFieldFamily::grushin();
    let opts = SolverOptions {
        seed: 9,
        ..SolverOptions::with_p(2.5)
    };
    let a = solve_principal(&f, &d, &opts).unwrap();
    let b = solve_principal(&f, &d, &opts).unwrap();
    assert_eq!(a.lambda1.to_bits(), b.lambda1.to_bits());
    assert_eq!(a.u1, b.u1);
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let d = grushin_box(15);
    let opts = SolverOptions {
        max_iterations: 1,
        ..SolverOptions::default()
    };
    let pair = solve_principal(&VectorFieldFamily::grushin(), &d, &opts).unwrap();
    assert!(!pair.converged);
    assert_eq!(pair.stop, StopReason::MaxIterations);
}

#[test]
fn uniqueness_hypotheses() {
    let d = grushin_box(17);
    let g = DiscreteGradient::new(&VectorFieldFamily::grushin(), &d).unwrap();
    let opts = SolverOptions::default();
    let pair = solve_with(&g, &opts, None).unwrap();

    let r = uniqueness_check(&g, &pair.u1, 1.05 * pair.lambda1, 2.0, 1e-6, &opts).unwrap();
    assert_eq!(r.status, Status::Inapplicable);

    let signed = GridFunction::from_fn(&d, |x| x[0]);
    let r = uniqueness_check(&g, &signed, pair.lambda1, 2.0, 1e-6, &opts).unwrap();
    assert_eq!(r.status, Status::Inapplicable);

    let r = uniqueness_check(&g, &pair.u1, pair.lambda1, 2.0, 1e-6, &opts).unwrap();
    assert!(r.passed());
}

#[test]
fn monotonicity_rejects_non_nested_domains() {
    let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
    let left = Arc::new(GridDomain::make_mask(&bounds, &[17, 17], |x| x[0] < 0.2 && x[0] > -0.9 && x[1].abs() < 0.9).unwrap());
    let right = Arc::new(GridDomain::make_mask(&bounds, &[17, 17], |x| x[0] > -0.2 && x[0] < 0.9 && x[1].abs() < 0.9).unwrap());
    let e = domain_monotonicity_check(&VectorFieldFamily::grushin(), &left, &right, 2.0, 1e-9, &SolverOptions::default());
    assert!(matches!(e, Err(Error::Precondition(_))));
}

#[test]
fn scaling_needs_a_dilation_law() {
    let spec: CustomFamilySpec =
        serde_json::from_str(r#"{"ambient_dim": 2, "fields": [["1", "0"], ["0", "1 + x1^2"]]}"#).unwrap();
    let family = VectorFieldFamily::custom(spec.into()).unwrap();
    let e = scaling_check(&family, &grushin_box(9), 2.0, 2.0, 0.01, &SolverOptions::default());
    assert!(matches!(e, Err(Error::NoDilation(_))));
}

#[test]
fn custom_grushin_reproduces_builtin() {
    let d = grushin_box(17);
    let custom = VectorFieldFamily::from_json(r#"{"ambient_dim": 2, "fields": [["1", "0"], ["0", "x1"]]}"#).unwrap();
    let a = solve_principal(&custom, &d, &SolverOptions::default()).unwrap();
    let b = solve_principal(&VectorFieldFamily::grushin(), &d, &SolverOptions::default()).unwrap();
    assert!((a.lambda1 / b.lambda1 - 1.0).abs() < 1e-12);
}

#[test]
fn simplicity_reports_disconnected_domains() {
    let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
    let d = Arc::new(
        GridDomain::make_mask(&bounds, &[17, 17], |x| x[0].abs() > 0.2 && x[0].abs() < 0.9 && x[1].abs() < 0.9)
            .unwrap(),
    );
    let g = DiscreteGradient::new(&VectorFieldFamily::euclidean(2).unwrap(), &d).unwrap();
    let r = subfreq::eigensolver::simplicity_check(&g, 2.0, &Default::default(), &SolverOptions::default()).unwrap();
    assert_eq!(r.metrics["components"], 2.0);
    assert!(r.notes.iter().any(|n| n.contains("2 connected components")));
}
