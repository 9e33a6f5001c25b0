//! Both sides of the Caccioppoli estimate for a positive sub-solution `v` of
//! `L_p v = λ v^{p−1}` and a nonnegative cutoff `φ`:
//!
//! ```text
//! ∫ v^{q−p} φ^p |∇_X v|^p  ≤  (p/(q−p+1))^p ∫ v^q |∇_X φ|^p + (λp/(q−p+1)) ∫ v^q φ^p
//! ```
//!
//! Gradient integrals use the same oriented quadrature as the energy.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain_grid::{random_positive_function, GridDomain, GridFunction};
use crate::error::{check_exponent, Error, Result};
use crate::p_sub_laplacian::{classify_solution, SolutionKind, TestFunctions};
use crate::vector_fields::DiscreteGradient;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaccioppoliTolerance {
    /// Pass iff `rhs − lhs ≥ −margin · |rhs|`.
    pub margin: f64,
    /// Tolerance of the sub-solution classification of `v`.
    pub hypothesis: f64,
}

impl Default for CaccioppoliTolerance {
    fn default() -> Self {
        Self {
            margin: 1e-9,
            hypothesis: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    /// `(p/(q−p+1))^p`.
    pub constant_used: f64,
    /// `∫ v^q |∇_X φ|^p`.
    pub cutoff_gradient_term: f64,
    /// `∫ v^q φ^p`.
    pub mass_term: f64,
    /// `None` until judged by [`verify_caccioppoli`].
    pub pass: Option<bool>,
    /// `v` could not be certified as a sub-solution.
    pub inapplicable: bool,
    pub classification: Option<SolutionKind>,
    pub hypothesis_violation: Option<f64>,
    pub notes: Vec<String>,
}

/// `(p/(q−p+1))^p`.
pub fn caccioppoli_constant(p: f64, q: f64) -> f64 {
    (p / (q - p + 1.0)).powf(p)
}

fn check_q(p: f64, q: f64) -> Result<()> {
    if q.is_finite() && q > p - 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("q must exceed p − 1 = {}, got {q}", p - 1.0)))
    }
}

/// Orientation mean of `|G_σ u|^p` per node.
fn gradient_power(fields: &DiscreteGradient, u: &[f64], p: f64) -> Vec<f64> {
    let n = fields.domain().dim();
    let nf = fields.num_fields();
    let inv_o = 1.0 / fields.num_orientations() as f64;
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    let mut g = vec![0.0; nf];
    let mut out = vec![0.0; u.len()];
    for &i in fields.active_nodes() {
        fields.one_sided(u, i, &mut fwd, &mut bwd);
        let mut acc = 0.0;
        for o in 0..fields.num_orientations() {
            fields.combine(i, o, &fwd, &bwd, &mut g);
            let s: f64 = g.iter().map(|x| x * x).sum();
            if s > 0.0 {
                acc += s.powf(0.5 * p);
            }
        }
        out[i] = acc * inv_o;
    }
    out
}

/// Quantities shared by every `q` of a sweep.
struct Cache {
    grad_v: Vec<f64>,
    grad_phi: Vec<f64>,
}

fn prepare(fields: &DiscreteGradient, v: &GridFunction, phi: &GridFunction, p: f64, lambda: f64) -> Result<Cache> {
    check_exponent(p)?;
    fields.check_function(v)?;
    fields.check_function(phi)?;
    v.require_strictly_positive()?;
    if let Some(i) = phi.values().iter().position(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Negative {
            node: fields.domain().unravel(i),
            value: phi.values()[i],
        });
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("λ must be finite, got {lambda}")));
    }
    Ok(Cache {
        grad_v: gradient_power(fields, v.values(), p),
        grad_phi: gradient_power(fields, phi.values(), p),
    })
}

fn sides(
    fields: &DiscreteGradient,
    cache: &Cache,
    v: &GridFunction,
    phi: &GridFunction,
    p: f64,
    q: f64,
    lambda: f64,
) -> CaccioppoliReport {
    let vol = fields.domain().cell_volume();
    let (mut lhs, mut grad_term, mut mass) = (0.0, 0.0, 0.0);
    // v vanishes off the interior and q > 0, so only interior nodes contribute
    for &i in fields.domain().interior_nodes() {
        let vi = v.values()[i];
        let fi = phi.values()[i];
        let vq = vi.powf(q);
        grad_term += vq * cache.grad_phi[i];
        if fi > 0.0 {
            let fp = fi.powf(p);
            lhs += vi.powf(q - p) * fp * cache.grad_v[i];
            mass += vq * fp;
        }
    }
    let (lhs, grad_term, mass) = (lhs * vol, grad_term * vol, mass * vol);
    let constant = caccioppoli_constant(p, q);
    let rhs = constant * grad_term + lambda * p / (q - p + 1.0) * mass;
    let mut notes = Vec::new();
    if rhs < 0.0 {
        notes.push("rhs is negative (λ < 0)".into());
    }
    CaccioppoliReport {
        lhs,
        rhs,
        margin: rhs - lhs,
        p,
        q,
        lambda,
        constant_used: constant,
        cutoff_gradient_term: grad_term,
        mass_term: mass,
        pass: None,
        inapplicable: false,
        classification: None,
        hypothesis_violation: None,
        notes,
    }
}

/// Evaluates both sides without judging them.
pub fn caccioppoli_sides(
    fields: &DiscreteGradient,
    v: &GridFunction,
    phi: &GridFunction,
    p: f64,
    q: f64,
    lambda: f64,
) -> Result<CaccioppoliReport> {
    check_exponent(p)?;
    check_q(p, q)?;
    let cache = prepare(fields, v, phi, p, lambda)?;
    Ok(sides(fields, &cache, v, phi, p, q, lambda))
}

fn judge(report: &mut CaccioppoliReport, tol: f64) {
    report.pass = Some(report.margin >= -tol * report.rhs.abs());
}

/// Certifies `v` as a sub-solution against the hats on the support of `φ`,
/// then judges the estimate. An uncertified `v` yields an inapplicable report.
pub fn verify_caccioppoli(
    fields: &DiscreteGradient,
    v: &GridFunction,
    phi: &GridFunction,
    p: f64,
    q: f64,
    lambda: f64,
    tol: &CaccioppoliTolerance,
) -> Result<CaccioppoliReport> {
    let mut out = caccioppoli_sweep_with(fields, v, phi, p, lambda, &[q], Some(tol))?;
    Ok(out.remove(0))
}

/// One unjudged report per `q`, sharing the gradient evaluations. Any invalid
/// `q` rejects the whole sweep.
pub fn caccioppoli_sweep(
    fields: &DiscreteGradient,
    v: &GridFunction,
    phi: &GridFunction,
    p: f64,
    lambda: f64,
    q_grid: &[f64],
) -> Result<Vec<CaccioppoliReport>> {
    caccioppoli_sweep_with(fields, v, phi, p, lambda, q_grid, None)
}

/// As [`caccioppoli_sweep`], judged against `tol` when given.
pub fn caccioppoli_sweep_with(
    fields: &DiscreteGradient,
    v: &GridFunction,
    phi: &GridFunction,
    p: f64,
    lambda: f64,
    q_grid: &[f64],
    tol: Option<&CaccioppoliTolerance>,
) -> Result<Vec<CaccioppoliReport>> {
    check_exponent(p)?;
    for &q in q_grid {
        check_q(p, q)?;
    }
    if q_grid.is_empty() {
        return Ok(Vec::new());
    }
    let cache = prepare(fields, v, phi, p, lambda)?;
    let certificate = match tol {
        None => None,
        Some(t) => {
            if !(t.margin.is_finite() && t.margin >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid tolerance {}", t.margin)));
            }
            if phi.values().iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidArgument("cutoff vanishes identically".into()));
            }
            let tests = TestFunctions::on_support(phi);
            Some((classify_solution(fields, v, lambda, p, &tests, t.hypothesis)?, t.margin))
        }
    };
    Ok(q_grid
        .par_iter()
        .map(|&q| {
            let mut r = sides(fields, &cache, v, phi, p, q, lambda);
            if let Some((class, margin_tol)) = &certificate {
                r.classification = Some(class.kind);
                match class.kind {
                    SolutionKind::WeakSolution | SolutionKind::SubSolution => {
                        r.hypothesis_violation = Some(class.max_nonnegative_residual.unwrap_or(0.0).max(0.0));
                        judge(&mut r, *margin_tol);
                    }
                    _ => {
                        r.inapplicable = true;
                        r.hypothesis_violation = class.max_nonnegative_residual;
                        r.notes.push(format!(
                            "v is not a sub-solution on the cutoff support (classified {:?})",
                            class.kind
                        ));
                    }
                }
            }
            r
        })
        .collect())
}

fn sub_box_coordinate(lo: f64, hi: f64, x: f64) -> f64 {
    (2.0 * x - lo - hi) / (hi - lo)
}

fn check_sub_box(domain: &GridDomain, lo: &[f64], hi: &[f64]) -> Result<()> {
    let n = domain.dim();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if lo.len() != n { lo.len() } else { hi.len() },
        });
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
        return Err(Error::InvalidArgument("cutoff box needs lo < hi on every axis".into()));
    }
    Ok(())
}

/// Tensor-product bump `Π_j ((1 − ξ_j²)₊)^m` on the box `[lo, hi]`, with `ξ`
/// the normalized coordinate; zero off the interior.
pub fn bump_cutoff(domain: &Arc<GridDomain>, lo: &[f64], hi: &[f64], m: u32) -> Result<GridFunction> {
    check_sub_box(domain, lo, hi)?;
    if m == 0 {
        return Err(Error::InvalidArgument("bump order must be positive".into()));
    }
    Ok(GridFunction::from_fn(domain, |x| {
        (0..x.len())
            .map(|j| {
                let xi = sub_box_coordinate(lo[j], hi[j], x[j]);
                (1.0 - xi * xi).max(0.0).powi(m as i32)
            })
            .product()
    }))
}

/// A seeded positive function restricted to the open box `(lo, hi)`.
pub fn random_cutoff(domain: &Arc<GridDomain>, lo: &[f64], hi: &[f64], seed: u64) -> Result<GridFunction> {
    check_sub_box(domain, lo, hi)?;
    let base = random_positive_function(domain, seed);
    let mut values = base.into_values();
    let mut x = vec![0.0; domain.dim()];
    for (i, val) in values.iter_mut().enumerate() {
        domain.coords_into(i, &mut x);
        if !(0..x.len()).all(|j| x[j] > lo[j] && x[j] < hi[j]) {
            *val = 0.0;
        }
    }
    GridFunction::from_values_masked(domain, values)
}
