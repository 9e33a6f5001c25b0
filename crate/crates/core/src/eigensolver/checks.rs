use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_with, EigenPair, SolverOptions};
use crate::domain_grid::{dot_raw, random_positive_function, GridDomain, GridFunction};
use crate::error::{check_exponent, Error, Result};
use crate::p_sub_laplacian::{apply_operator, classify_solution, SolutionKind, TestFunctions};
use crate::report::VerificationReport;
use crate::vector_fields::{DiscreteGradient, VectorFieldFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BartaBound {
    pub value: f64,
    /// Flat index of the minimizing interior node (lowest on ties).
    pub node: usize,
}

/// `min_i (L_p v)_i / max(v_i, ε)^{p−1}` over interior nodes, with
/// `ε = 1e−12 · max v`. For strictly positive `v` this λ makes `v` a discrete
/// sup-solution against nonnegative test functions, hence a lower bound for
/// the discrete principal frequency.
pub fn barta_lower_bound(fields: &DiscreteGradient, v: &GridFunction, p: f64) -> Result<BartaBound> {
    check_exponent(p)?;
    fields.check_function(v)?;
    v.require_strictly_positive()?;
    let lv = apply_operator(fields, v, p, 0.0)?;
    let floor = 1e-12 * v.max_abs();
    let mut best = BartaBound {
        value: f64::INFINITY,
        node: usize::MAX,
    };
    for &i in fields.domain().interior_nodes() {
        let q = lv.values()[i] / v.values()[i].max(floor).powf(p - 1.0);
        if q < best.value {
            best = BartaBound { value: q, node: i };
        }
    }
    Ok(best)
}

/// Lower bounds from `samples` seeded positive functions must not exceed
/// `λ₁(1 + tol)`, and the bound from the ground state itself must reproduce
/// `λ₁` within `pair_tol · λ₁`.
pub fn barta_check(
    fields: &DiscreteGradient,
    pair: &EigenPair,
    samples: usize,
    seed: u64,
    tol: f64,
    pair_tol: f64,
) -> Result<VerificationReport> {
    fields.check_function(&pair.u1)?;
    let lambda = pair.lambda1;
    let mut report = VerificationReport::new("barta");
    note_convergence(&mut report, "principal solve", pair);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_node = None;
    for i in 0..samples as u64 {
        let v = random_positive_function(fields.domain(), seed.wrapping_add(i));
        let b = barta_lower_bound(fields, &v, pair.p)?;
        if b.value - lambda > worst {
            worst = b.value - lambda;
            worst_node = Some(b.node);
        }
    }
    let mut margin = if samples > 0 { tol * lambda - worst } else { f64::INFINITY };
    if samples > 0 {
        report.metric("max_relative_excess", worst / lambda);
    }
    match barta_lower_bound(fields, &pair.u1, pair.p) {
        Ok(b) => {
            let gap = (b.value - lambda).abs();
            report.metric("ground_state_bound", b.value).metric("ground_state_gap", gap / lambda);
            margin = margin.min(pair_tol * lambda - gap);
        }
        Err(e) => {
            report.inapplicable(format!("ground state bound unavailable: {e}"));
            return Ok(report);
        }
    }
    report.worst_location = worst_node.map(|n| fields.domain().coords(n));
    report
        .metric("lambda1", lambda)
        .metric("samples", samples as f64)
        .metric("tol", tol)
        .metric("pair_tol", pair_tol)
        .judge(margin);
    Ok(report)
}

fn solve(fields: &DiscreteGradient, opts: &SolverOptions, p: f64) -> Result<EigenPair> {
    let opts = SolverOptions {
        p,
        ..opts.clone()
    };
    solve_with(fields, &opts, None)
}

fn note_convergence(report: &mut VerificationReport, label: &str, pair: &EigenPair) {
    if !pair.converged {
        report.partial = true;
        report.note(format!(
            "{label}: solver stopped ({:?}) after {} iterations with residual {:.3e}",
            pair.stop, pair.iterations, pair.residual
        ));
    }
}

/// A strictly positive weak eigenpair `(v, λ)` must carry the principal
/// frequency. Inapplicable unless `v > 0` on the interior and `(v, λ)`
/// classifies as a weak solution against all interior hats at `tol`; passes
/// iff `|λ − λ₁| ≤ tol · λ`.
pub fn uniqueness_check(
    fields: &DiscreteGradient,
    v: &GridFunction,
    lambda: f64,
    p: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<VerificationReport> {
    check_exponent(p)?;
    fields.check_function(v)?;
    let mut report = VerificationReport::new("uniqueness");
    report.metric("lambda", lambda).metric("tol", tol);
    if let Err(e) = v.require_strictly_positive() {
        report.inapplicable(format!("hypothesis fails: {e}"));
        return Ok(report);
    }
    let class = classify_solution(fields, v, lambda, p, &TestFunctions::Hats, tol)?;
    report.metric("weak_form_violation", class.min_residual.abs().max(class.max_residual.abs()));
    if class.kind != SolutionKind::WeakSolution {
        report.inapplicable(format!(
            "hypothesis fails: the pair classifies as {:?}, not a weak solution",
            class.kind
        ));
        if let Some(node) = class.worst_node {
            report.worst_location = Some(fields.domain().coords(node));
        }
        return Ok(report);
    }
    let pair = solve(fields, opts, p)?;
    note_convergence(&mut report, "principal solve", &pair);
    let gap = (lambda - pair.lambda1).abs();
    report
        .metric("lambda1", pair.lambda1)
        .metric("relative_gap", gap / lambda.abs())
        .judge(tol * lambda.abs() - gap);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimplicityOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Bound on the pairwise proportionality defect.
    pub defect_tol: f64,
    /// Bound on `(max λ − min λ) / min λ`.
    pub lambda_tol: f64,
}

impl Default for SimplicityOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            defect_tol: 1e-6,
            lambda_tol: 1e-6,
        }
    }
}

/// `1 − ⟨a, b⟩ / (‖a‖₂‖b‖₂)` for nonnegative `a, b`, evaluated as
/// `½‖â − b̂‖²` to avoid cancellation.
fn proportionality_defect(a: &[f64], b: &[f64]) -> f64 {
    let na = dot_raw(a, a).sqrt();
    let nb = dot_raw(b, b).sqrt();
    0.5 * a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum::<f64>()
}

/// Restarts the solver from `restarts` random positive initial guesses
/// (seeds `seed, seed + 1, …`) and checks that all ground states are
/// proportional with equal frequencies.
pub fn simplicity_check(
    fields: &DiscreteGradient,
    p: f64,
    check: &SimplicityOptions,
    opts: &SolverOptions,
) -> Result<VerificationReport> {
    check_exponent(p)?;
    if check.restarts < 2 {
        return Err(Error::InvalidArgument(format!(
            "simplicity needs at least 2 restarts, got {}",
            check.restarts
        )));
    }
    let pairs: Vec<EigenPair> = (0..check.restarts as u64)
        .into_par_iter()
        .map(|i| {
            let o = SolverOptions {
                p,
                seed: check.seed.wrapping_add(i),
                ..opts.clone()
            };
            solve_with(fields, &o, None)
        })
        .collect::<Result<_>>()?;

    let mut report = VerificationReport::new("simplicity");
    let components = fields.domain().num_components();
    if components > 1 {
        report.notes.push(format!(
            "domain has {components} connected components; restarts may land on different ones"
        ));
    }
    for (i, pair) in pairs.iter().enumerate() {
        note_convergence(&mut report, &format!("restart {i}"), pair);
    }
    let mut defect: f64 = 0.0;
    for a in 0..pairs.len() {
        for b in a + 1..pairs.len() {
            defect = defect.max(proportionality_defect(
                pairs[a].u1.values(),
                pairs[b].u1.values(),
            ));
        }
    }
    let lo = pairs.iter().map(|e| e.lambda1).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|e| e.lambda1).fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    report
        .metric("restarts", check.restarts as f64)
        .metric("components", components as f64)
        .metric("proportionality_defect", defect)
        .metric("lambda_spread", spread)
        .metric("lambda_min", lo)
        .metric("lambda_max", hi)
        .judge((check.defect_tol - defect).min(check.lambda_tol - spread));
    Ok(report)
}

/// `λ₁(inner) ≥ λ₁(outer) − tol · λ₁(outer)` for nested domains on one lattice.
pub fn domain_monotonicity_check(
    family: &VectorFieldFamily,
    inner: &Arc<GridDomain>,
    outer: &Arc<GridDomain>,
    p: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<VerificationReport> {
    check_exponent(p)?;
    let nested = inner
        .is_subdomain(outer)
        .map_err(|_| Error::Precondition("domains do not share a lattice".into()))?;
    if !nested {
        return Err(Error::Precondition(
            "the inner domain is not contained in the outer one".into(),
        ));
    }
    let inner_pair = solve(&DiscreteGradient::new(family, inner)?, opts, p)?;
    let outer_pair = solve(&DiscreteGradient::new(family, outer)?, opts, p)?;
    let mut report = VerificationReport::new("monotonicity");
    note_convergence(&mut report, "inner domain", &inner_pair);
    note_convergence(&mut report, "outer domain", &outer_pair);
    let (li, lo) = (inner_pair.lambda1, outer_pair.lambda1);
    report
        .metric("lambda_inner", li)
        .metric("lambda_outer", lo)
        .metric("ratio", li / lo)
        .metric("tol", tol)
        .judge(li - lo + tol * lo);
    Ok(report)
}

/// `λ₁(δ_s Ω) = s^{γp} λ₁(Ω)`, with `γ` the gradient homogeneity of the family;
/// passes iff the ratio of the two sides is within `tol` of 1.
pub fn scaling_check(
    family: &VectorFieldFamily,
    domain: &Arc<GridDomain>,
    p: f64,
    s: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<VerificationReport> {
    check_exponent(p)?;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidArgument(format!("dilation factor must be positive, got {s}")));
    }
    let gamma = family.gradient_homogeneity().ok_or_else(|| {
        Error::NoDilation(format!("family `{}` has no gradient homogeneity", family.name()))
    })?;
    let scaled = Arc::new(family.dilate_domain(s, domain)?);
    let base = solve(&DiscreteGradient::new(family, domain)?, opts, p)?;
    let image = solve(&DiscreteGradient::new(family, &scaled)?, opts, p)?;
    let mut report = VerificationReport::new("scaling");
    note_convergence(&mut report, "original domain", &base);
    note_convergence(&mut report, "dilated domain", &image);
    let ratio = image.lambda1 / (s.powf(gamma * p) * base.lambda1);
    report
        .metric("s", s)
        .metric("lambda", base.lambda1)
        .metric("lambda_dilated", image.lambda1)
        .metric("ratio", ratio)
        .metric("tol", tol)
        .judge(tol - (ratio - 1.0).abs());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64, nodes: usize) -> Arc<GridDomain> {
        Arc::new(GridDomain::make_box(&[(lo, hi)], &[nodes]).unwrap())
    }

    #[test]
    fn barta_of_constant_and_shifted_sine() {
        let d = interval(0.0, 1.0, 65);
        let g = DiscreteGradient::new(&VectorFieldFamily::euclidean(1).unwrap(), &d).unwrap();
        let c = barta_lower_bound(&g, &GridFunction::constant(&d, 1.0), 2.0).unwrap();
        assert!(c.value <= 0.0);

        let pi = std::f64::consts::PI;
        let v = GridFunction::from_fn(&d, |x| (pi * x[0]).sin() + 0.2);
        let b = barta_lower_bound(&g, &v, 2.0).unwrap();
        let h = 1.0 / 64.0;
        let mu = 4.0 / (h * h) * (pi * h / 2.0).sin().powi(2);
        // the discrete Laplacian maps the sine to μ·sine except where the
        // shift meets the zero extension, i.e. the first and last interior node
        let oracle = (2..63)
            .map(|i| {
                let s = (pi * i as f64 * h).sin();
                mu * s / (s + 0.2)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((b.value - oracle).abs() < 1e-9 * oracle, "{} vs {oracle}", b.value);
        assert!(b.value < pi * pi);

        assert!(barta_lower_bound(&g, &GridFunction::zeros(&d), 2.0).is_err());
    }

    #[test]
    fn monotonicity_precondition() {
        let e1 = VectorFieldFamily::euclidean(1).unwrap();
        let a = interval(0.0, 1.0, 17);
        let b = interval(0.0, 1.0, 33);
        let opts = SolverOptions::default();
        assert!(matches!(
            domain_monotonicity_check(&e1, &a, &b, 2.0, 1e-9, &opts),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn defect_formula() {
        assert_eq!(proportionality_defect(&[1.0, 2.0], &[3.0, 6.0]), 0.0);
        let d = proportionality_defect(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((d - 1.0).abs() < 1e-15);
    }
}
