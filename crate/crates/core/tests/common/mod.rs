#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subfreq::{GridDomain, GridFunction, VectorFieldFamily};

/// Uniform values in `[−1, 1]` on the interior, zero elsewhere.
pub fn random_function(d: &Arc<GridDomain>, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..d.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    GridFunction::from_values_masked(d, values).unwrap()
}

/// Euclidean(2) on the unit square and Grushin on `[−1, 1]²` with `n²`
/// nodes, Heisenberg(1) on `[−1, 1]³` with `m³` nodes.
pub fn three_families(n: usize, m: usize) -> Vec<(VectorFieldFamily, Arc<GridDomain>)> {
    vec![
        (
            VectorFieldFamily::euclidean(2).unwrap(),
            Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 1.0)], &[n, n]).unwrap()),
        ),
        (
            VectorFieldFamily::grushin(),
            Arc::new(GridDomain::make_box(&[(-1.0, 1.0), (-1.0, 1.0)], &[n, n]).unwrap()),
        ),
        (
            VectorFieldFamily::heisenberg(1).unwrap(),
            Arc::new(GridDomain::make_box(&[(-1.0, 1.0); 3], &[m; 3]).unwrap()),
        ),
    ]
}

/// Smooth pair on the unit square vanishing on the boundary with a smooth
/// positive ratio, so that `|u|^p / v^{p−1}` is smooth as well.
pub fn smooth_pair(n: usize) -> (Arc<GridDomain>, GridFunction, GridFunction) {
    let pi = std::f64::consts::PI;
    let d = Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 1.0)], &[n, n]).unwrap());
    let bubble = |x: &[f64]| (pi * x[0]).sin() * (pi * x[1]).sin();
    let u = GridFunction::from_fn(&d, |x| bubble(x) * (1.0 + x[0] * x[1]));
    let v = GridFunction::from_fn(&d, |x| bubble(x) * (2.0 + (x[0] - x[1]).cos()));
    (d, u, v)
}

fn signed_power(x: f64, a: f64) -> f64 {
    x.signum() * x.abs().powf(a)
}

/// First positive zero of the solution of `(|u'|^{p−2}u')' + λ|u|^{p−2}u = 0`,
/// `u(0) = 0`, `u'(0) = 1`, by classical RK4 on `(u, |u'|^{p−2}u')`.
fn first_zero(p: f64, lambda: f64) -> f64 {
    let h = 2e-5;
    let rhs = |u: f64, w: f64| (signed_power(w, 1.0 / (p - 1.0)), -lambda * signed_power(u, p - 1.0));
    let (mut u, mut w, mut x) = (0.0f64, 1.0f64, 0.0f64);
    while x < 10.0 {
        let (k1u, k1w) = rhs(u, w);
        let (k2u, k2w) = rhs(u + 0.5 * h * k1u, w + 0.5 * h * k1w);
        let (k3u, k3w) = rhs(u + 0.5 * h * k2u, w + 0.5 * h * k2w);
        let (k4u, k4w) = rhs(u + h * k3u, w + h * k3w);
        let un = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        let wn = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        if x > 0.0 && un <= 0.0 {
            return x + h * u / (u - un);
        }
        u = un;
        w = wn;
        x += h;
    }
    f64::INFINITY
}

/// Principal Dirichlet eigenvalue of the 1D p-Laplacian on `(0, 1)` by
/// shooting: bisection on λ until the first zero sits at `x = 1`.
pub fn shooting_lambda(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.5, 200.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if first_zero(p, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(p − 1) π_p^p` with `π_p = 2π / (p sin(π/p))`.
pub fn closed_form_lambda(p: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let pi_p = 2.0 * pi / (p * (pi / p).sin());
    (p - 1.0) * pi_p.powf(p)
}
