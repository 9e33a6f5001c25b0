//! Discrete p-energy, Rayleigh quotient, the p-sub-Laplacian
//! `L_p u = ∇_X^*·(|∇_X u|^{p−2} ∇_X u)`, weak-form residuals and the
//! weak/sup/sub-solution classifier.
//!
//! All integrals of gradient quantities use the oriented quadrature of
//! [`DiscreteGradient`]: the mean over the `2ⁿ` one-sided orientations of the
//! rectangle rule on the nodes touching the interior. The operator is the
//! exact transpose of that quadrature, so
//! `⟨L_p u, φ⟩_h = ∫ |∇_X u|^{p−2} ⟨∇_X u, ∇_X φ⟩` holds to rounding.

use serde::{Deserialize, Serialize};

use crate::domain_grid::GridFunction;
use crate::error::{check_exponent, Error, Result};
use crate::vector_fields::DiscreteGradient;

/// `Σ_σ Σ_i (|G_σ u|² + ε²)^{p/2} − ε^p`, scaled by `vol / 2ⁿ`. When `op` is
/// given it receives `(1/2ⁿ) Σ_σ G_σᵀ flux` masked to the interior, and `abs`
/// the same sum over contribution magnitudes.
pub(crate) fn energy_kernel(
    fields: &DiscreteGradient,
    u: &[f64],
    p: f64,
    eps: f64,
    mut op: Option<&mut [f64]>,
    mut abs: Option<&mut [f64]>,
) -> f64 {
    let n = fields.domain().dim();
    let nf = fields.num_fields();
    let orientations = fields.num_orientations();
    let eps2 = eps * eps;
    let eps_p = if eps > 0.0 { eps.powf(p) } else { 0.0 };
    let half_p = 0.5 * p;
    let weight_exp = 0.5 * (p - 2.0);
    let quadratic = p == 2.0;

    if let Some(o) = op.as_deref_mut() {
        o.fill(0.0);
    }
    if let Some(a) = abs.as_deref_mut() {
        a.fill(0.0);
    }

    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    let mut g = vec![0.0; nf];
    let mut energy = 0.0;
    for &i in fields.active_nodes() {
        fields.one_sided(u, i, &mut fwd, &mut bwd);
        for orientation in 0..orientations {
            fields.combine(i, orientation, &fwd, &bwd, &mut g);
            let s = g.iter().map(|v| v * v).sum::<f64>() + eps2;
            if s == 0.0 {
                continue;
            }
            let w = if quadratic {
                energy += s - eps2;
                1.0
            } else {
                energy += s.powf(half_p) - eps_p;
                s.powf(weight_exp)
            };
            if op.is_none() && abs.is_none() {
                continue;
            }
            g.iter_mut().for_each(|v| *v *= w);
            if let Some(o) = op.as_deref_mut() {
                fields.scatter_transpose(i, orientation, &g, o);
            }
            if let Some(a) = abs.as_deref_mut() {
                fields.scatter_transpose_abs(i, orientation, &g, a);
            }
        }
    }

    let inv_o = 1.0 / orientations as f64;
    for buf in [op, abs].into_iter().flatten() {
        buf.iter_mut().for_each(|v| *v *= inv_o);
        fields.mask_in_place(buf);
    }
    energy * fields.domain().cell_volume() * inv_o
}

fn check_regularization(eps_reg: f64) -> Result<()> {
    if eps_reg.is_finite() && eps_reg >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "regularization must be finite and nonnegative, got {eps_reg}"
        )))
    }
}

/// `∫ |∇_X u|^p`, the p-th power of the functional `J_p`.
pub fn dirichlet_energy(fields: &DiscreteGradient, u: &GridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    fields.check_function(u)?;
    Ok(energy_kernel(fields, u.values(), p, 0.0, None, None))
}

/// `∫ |∇_X u|^p / ∫ |u|^p`.
pub fn rayleigh_quotient(fields: &DiscreteGradient, u: &GridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    fields.check_function(u)?;
    let mass = u.power_mass(p);
    if mass == 0.0 {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient of the zero function".into(),
        ));
    }
    Ok(energy_kernel(fields, u.values(), p, 0.0, None, None) / mass)
}

/// `∇_X^*·((|∇_X u|² + ε²)^{(p−2)/2} ∇_X u)`; with `eps_reg = 0` the flux is
/// taken to vanish wherever the gradient does.
pub fn apply_operator(
    fields: &DiscreteGradient,
    u: &GridFunction,
    p: f64,
    eps_reg: f64,
) -> Result<GridFunction> {
    check_exponent(p)?;
    check_regularization(eps_reg)?;
    fields.check_function(u)?;
    let mut out = vec![0.0; u.values().len()];
    energy_kernel(fields, u.values(), p, eps_reg, Some(&mut out), None);
    Ok(GridFunction::from_raw(fields.domain(), out))
}

/// `|u|^{p−2} u`, nodewise.
pub(crate) fn signed_power(u: f64, p: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else if p == 2.0 {
        u
    } else {
        u.signum() * u.abs().powf(p - 1.0)
    }
}

/// `∫ |∇_X u|^{p−2} ⟨∇_X u, ∇_X φ⟩ − λ ∫ |u|^{p−2} u φ`, evaluated from the
/// gradients of `u` and `φ`.
pub fn weak_form_residual(
    fields: &DiscreteGradient,
    u: &GridFunction,
    lambda: f64,
    p: f64,
    phi: &GridFunction,
) -> Result<f64> {
    check_exponent(p)?;
    fields.check_function(u)?;
    fields.check_function(phi)?;
    let n = fields.domain().dim();
    let nf = fields.num_fields();
    let (uv, fv) = (u.values(), phi.values());
    let mut buf = vec![0.0; 4 * n];
    let (uf, rest) = buf.split_at_mut(n);
    let (ub, rest) = rest.split_at_mut(n);
    let (ff, fb) = rest.split_at_mut(n);
    let mut gu = vec![0.0; nf];
    let mut gf = vec![0.0; nf];
    let mut flux_term = 0.0;
    for &i in fields.active_nodes() {
        fields.one_sided(uv, i, uf, ub);
        fields.one_sided(fv, i, ff, fb);
        for orientation in 0..fields.num_orientations() {
            fields.combine(i, orientation, uf, ub, &mut gu);
            let s: f64 = gu.iter().map(|v| v * v).sum();
            if s == 0.0 {
                continue;
            }
            fields.combine(i, orientation, ff, fb, &mut gf);
            let w = if p == 2.0 { 1.0 } else { s.powf(0.5 * (p - 2.0)) };
            flux_term += w * gu.iter().zip(&gf).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let vol = fields.domain().cell_volume();
    flux_term *= vol / fields.num_orientations() as f64;
    let mass_term: f64 = fields
        .domain()
        .interior_nodes()
        .iter()
        .map(|&i| signed_power(uv[i], p) * fv[i])
        .sum::<f64>()
        * vol;
    Ok(flux_term - lambda * mass_term)
}

/// Test functions against which the weak form is paired.
#[derive(Debug, Clone)]
pub enum TestFunctions {
    /// Nodal hat (indicator) functions at every interior node.
    Hats,
    /// Hats at interior nodes whose `ℓ∞` ball of the given radius lies in the
    /// interior. With radius 2 the pairing never sees the zero extension of
    /// the tested function.
    InnerHats(usize),
    /// Hats at the listed nodes (non-interior nodes are skipped).
    HatsAt(Vec<usize>),
    /// Explicit test functions.
    Functions(Vec<GridFunction>),
}

impl TestFunctions {
    /// Hats at interior nodes where `phi` is nonzero.
    pub fn on_support(phi: &GridFunction) -> Self {
        let d = phi.domain();
        TestFunctions::HatsAt(
            d.interior_nodes()
                .iter()
                .copied()
                .filter(|&i| phi.values()[i] != 0.0)
                .collect(),
        )
    }

    fn hat_nodes(&self, fields: &DiscreteGradient) -> Option<Vec<usize>> {
        let d = fields.domain();
        match self {
            TestFunctions::Hats => Some(d.interior_nodes().to_vec()),
            TestFunctions::InnerHats(radius) => Some(
                d.interior_nodes()
                    .iter()
                    .copied()
                    .filter(|&i| ball_inside(d, i, *radius))
                    .collect(),
            ),
            TestFunctions::HatsAt(nodes) => Some(
                nodes
                    .iter()
                    .copied()
                    .filter(|&i| i < d.num_nodes() && d.is_interior(i))
                    .collect(),
            ),
            TestFunctions::Functions(_) => None,
        }
    }
}

fn ball_inside(d: &crate::domain_grid::GridDomain, node: usize, radius: usize) -> bool {
    let idx = d.unravel(node);
    let n = idx.len();
    let side = 2 * radius + 1;
    let mut offset = vec![0usize; n];
    let mut probe = vec![0usize; n];
    loop {
        for j in 0..n {
            let c = idx[j] + offset[j];
            if c < radius || c - radius >= d.shape()[j] {
                return false;
            }
            probe[j] = c - radius;
        }
        if !d.is_interior(d.ravel(&probe)) {
            return false;
        }
        let mut j = 0;
        loop {
            if j == n {
                return true;
            }
            offset[j] += 1;
            if offset[j] < side {
                break;
            }
            offset[j] = 0;
            j += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    WeakSolution,
    SupSolution,
    SubSolution,
    Neither,
}

/// Outcome of [`classify_solution`]. Residuals are normalized by
/// `‖φ‖_p (‖L_p v‖_{p'} + |λ| ‖v‖_p^{p−1})`, the Hölder bound of the pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionClass {
    pub kind: SolutionKind,
    /// Largest normalized violation of the returned kind's defining inequality
    /// (for `neither`, the largest normalized `|residual|`).
    pub worst_violation: f64,
    pub num_test_functions: usize,
    /// Normalized residual extremes over all test functions.
    pub min_residual: f64,
    pub max_residual: f64,
    /// Normalized residual extremes over the nonnegative test functions, used
    /// for the sup/sub decisions; `None` when there are none.
    pub min_nonnegative_residual: Option<f64>,
    pub max_nonnegative_residual: Option<f64>,
    /// Flat index of the hat with the largest `|residual|`, if hats were used.
    pub worst_node: Option<usize>,
}

impl SolutionClass {
    pub fn is_sup_solution(&self, tol: f64) -> bool {
        self.min_nonnegative_residual.is_some_and(|m| m >= -tol)
    }

    pub fn is_sub_solution(&self, tol: f64) -> bool {
        self.max_nonnegative_residual.is_some_and(|m| m <= tol)
    }
}

/// Classifies `v` as a weak, sup- or sub-solution of `L_p v = λ |v|^{p−2} v`
/// against a finite test set. Weak takes precedence, then sup, then sub.
/// Signed test functions only count towards the weak decision.
pub fn classify_solution(
    fields: &DiscreteGradient,
    v: &GridFunction,
    lambda: f64,
    p: f64,
    tests: &TestFunctions,
    tol: f64,
) -> Result<SolutionClass> {
    check_exponent(p)?;
    fields.check_function(v)?;
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid tolerance {tol}")));
    }
    let lv = apply_operator(fields, v, p, 0.0)?;
    let d = fields.domain();
    let vol = d.cell_volume();
    let r: Vec<f64> = lv
        .values()
        .iter()
        .zip(v.values())
        .map(|(l, &x)| l - lambda * signed_power(x, p))
        .collect();
    let q = p / (p - 1.0);
    let scale = lv.lp_norm_unchecked(q) + lambda.abs() * v.lp_norm_unchecked(p).powf(p - 1.0);
    let normalize = |res: f64, phi_norm: f64| {
        let s = phi_norm * scale;
        if res == 0.0 {
            0.0
        } else {
            res / s
        }
    };

    // (normalized residual, nonnegative test function, hat node)
    let samples: Vec<(f64, bool, Option<usize>)> = match tests.hat_nodes(fields) {
        Some(nodes) => {
            let hat_norm = vol.powf(1.0 / p);
            nodes
                .into_iter()
                .map(|i| (normalize(r[i] * vol, hat_norm), true, Some(i)))
                .collect()
        }
        None => {
            let TestFunctions::Functions(list) = tests else {
                unreachable!()
            };
            let mut out = Vec::with_capacity(list.len());
            for phi in list {
                fields.check_function(phi)?;
                let res = crate::domain_grid::dot_raw(&r, phi.values()) * vol;
                let nonneg = phi.values().iter().all(|&x| x >= 0.0);
                out.push((normalize(res, phi.lp_norm_unchecked(p)), nonneg, None));
            }
            out
        }
    };
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if let Some((_, _, _)) = samples.iter().find(|s| !s.0.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite residual (zero test function or non-finite data)".into(),
        ));
    }

    let mut min_r = f64::INFINITY;
    let mut max_r = f64::NEG_INFINITY;
    let mut min_nn: Option<f64> = None;
    let mut max_nn: Option<f64> = None;
    let mut worst = (0.0f64, None);
    for &(rho, nonneg, node) in &samples {
        min_r = min_r.min(rho);
        max_r = max_r.max(rho);
        if nonneg {
            min_nn = Some(min_nn.map_or(rho, |m| m.min(rho)));
            max_nn = Some(max_nn.map_or(rho, |m| m.max(rho)));
        }
        if rho.abs() > worst.0 || worst.1.is_none() && node.is_some() && rho.abs() == worst.0 {
            worst = (rho.abs(), node);
        }
    }
    let max_abs = min_r.abs().max(max_r.abs());
    let mut class = SolutionClass {
        kind: SolutionKind::Neither,
        worst_violation: max_abs,
        num_test_functions: samples.len(),
        min_residual: min_r,
        max_residual: max_r,
        min_nonnegative_residual: min_nn,
        max_nonnegative_residual: max_nn,
        worst_node: worst.1,
    };
    if max_abs <= tol {
        class.kind = SolutionKind::WeakSolution;
    } else if class.is_sup_solution(tol) {
        class.kind = SolutionKind::SupSolution;
        class.worst_violation = (-min_nn.unwrap_or(0.0)).max(0.0);
    } else if class.is_sub_solution(tol) {
        class.kind = SolutionKind::SubSolution;
        class.worst_violation = max_nn.unwrap_or(0.0).max(0.0);
    }
    Ok(class)
}
