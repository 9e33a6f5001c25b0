//! Inverse iteration for the linear case `p = 2`, with conjugate-gradient
//! inner solves. Only used as an independent cross-check of the nonlinear
//! solver, never as a result path.

use crate::domain_grid::{dot_raw, GridFunction};
use crate::error::{Error, Result};
use crate::p_sub_laplacian::energy_kernel;
use crate::vector_fields::DiscreteGradient;

#[derive(Debug, Clone)]
pub struct LinearPrincipal {
    pub lambda: f64,
    /// Nonnegative, unit lattice `L²` norm.
    pub u: GridFunction,
    pub outer_iterations: usize,
}

fn apply(fields: &DiscreteGradient, x: &[f64], out: &mut [f64]) {
    energy_kernel(fields, x, 2.0, 0.0, Some(out), None);
}

fn conjugate_gradient(fields: &DiscreteGradient, b: &[f64], x: &mut [f64]) -> Result<()> {
    let n = b.len();
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    apply(fields, x, &mut ax);
    r.iter_mut().zip(&ax).for_each(|(ri, a)| *ri -= a);
    let mut d = r.clone();
    let mut rr = dot_raw(&r, &r);
    let target = 1e-28 * dot_raw(b, b);
    let mut ad = vec![0.0; n];
    for _ in 0..20 * n + 100 {
        if rr <= target {
            return Ok(());
        }
        apply(fields, &d, &mut ad);
        let dad = dot_raw(&d, &ad);
        if dad <= 0.0 {
            return Err(Error::InvalidArgument("operator is not positive definite".into()));
        }
        let alpha = rr / dad;
        x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += alpha * di);
        r.iter_mut().zip(&ad).for_each(|(ri, a)| *ri -= alpha * a);
        let next = dot_raw(&r, &r);
        let beta = next / rr;
        rr = next;
        d.iter_mut().zip(&r).for_each(|(di, ri)| *di = ri + beta * *di);
    }
    Ok(())
}

/// Smallest eigenvalue of the `p = 2` operator by inverse iteration, stopping
/// once the Rayleigh quotient changes by at most `tol` relative.
pub fn linear_principal(fields: &DiscreteGradient, tol: f64) -> Result<LinearPrincipal> {
    let domain = fields.domain();
    let n = domain.num_nodes();
    let mut u = vec![0.0; n];
    for &i in domain.interior_nodes() {
        u[i] = 1.0;
    }
    let mut lambda = f64::INFINITY;
    let mut lu = vec![0.0; n];
    for outer in 1..=500 {
        let norm = dot_raw(&u, &u).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        let mut next = u.clone();
        conjugate_gradient(fields, &u, &mut next)?;
        let norm = dot_raw(&next, &next).sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        apply(fields, &next, &mut lu);
        let rq = dot_raw(&next, &lu);
        u = next;
        let done = (lambda - rq).abs() <= tol * rq;
        lambda = rq;
        if done {
            let sign = if u.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let scale = sign / domain.cell_volume().sqrt();
            u.iter_mut().for_each(|x| *x = (*x * scale).max(0.0));
            return Ok(LinearPrincipal {
                lambda,
                u: GridFunction::from_raw(domain, u),
                outer_iterations: outer,
            });
        }
    }
    Err(Error::InvalidArgument("inverse iteration did not settle".into()))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain_grid::GridDomain;
    use crate::vector_fields::VectorFieldFamily;

    #[test]
    fn matches_discrete_laplacian_spectrum() {
        let d = Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 2.0)], &[17, 33]).unwrap());
        let g = DiscreteGradient::new(&VectorFieldFamily::euclidean(2).unwrap(), &d).unwrap();
        let lp = linear_principal(&g, 1e-14).unwrap();
        let h = 1.0 / 16.0;
        let mode = |len: f64| 4.0 / (h * h) * (std::f64::consts::PI * h / (2.0 * len)).sin().powi(2);
        let exact = mode(1.0) + mode(2.0);
        assert!((lp.lambda / exact - 1.0).abs() < 1e-12, "{} vs {exact}", lp.lambda);
        assert!((lp.u.lp_norm(2.0).unwrap() - 1.0).abs() < 1e-9);
    }
}
