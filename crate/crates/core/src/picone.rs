//! Pointwise Picone quantities for a pair `(u, v)` with `v > 0`:
//!
//! ```text
//! L(u,v) = |∇u|^p − p (|u|^{p−2}u / v^{p−1}) |∇v|^{p−2}⟨∇v, ∇u⟩ + (p−1)(|u|^p / v^p)|∇v|^p
//! R(u,v) = |∇u|^p − |∇v|^{p−2}⟨∇v, ∇(|u|^p / v^{p−1})⟩
//! ```
//!
//! with `∇ = ∇_X` the centered horizontal gradient on interior nodes.

use serde::{Deserialize, Serialize};

use crate::domain_grid::GridFunction;
use crate::error::{check_exponent, Result};
use crate::p_sub_laplacian::signed_power;
use crate::vector_fields::DiscreteGradient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiconeMode {
    /// `∇(|u|^p / v^{p−1})` expanded by the chain rule from the nodal
    /// gradients of `u` and `v`; `L = R` up to rounding.
    Algebraic,
    /// `|u|^p / v^{p−1}` formed nodewise and differentiated by the stencil;
    /// `L = R` up to discretization error.
    Discrete,
}

/// Tolerances relative to the nodal scale (the sum of the magnitudes of the
/// three terms of `L` at each node).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiconeTolerance {
    /// Allowed negative excursion of `L`.
    pub nonnegativity: f64,
    /// Allowed `|L − R|`.
    pub identity: f64,
    /// `u` counts as proportional to `v` when `‖u − cv‖₂ / ‖u‖₂` is below this.
    pub equality: f64,
}

impl PiconeTolerance {
    pub fn for_mode(mode: PiconeMode) -> Self {
        Self {
            nonnegativity: 1e-10,
            identity: match mode {
                PiconeMode::Algebraic => 1e-12,
                PiconeMode::Discrete => 0.25,
            },
            equality: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiconeReport {
    pub mode: PiconeMode,
    pub p: f64,
    pub min_l: f64,
    /// Minimum over interior nodes of `L / scale`.
    pub min_l_relative: f64,
    /// Node attaining `min_l_relative` (lowest index on ties).
    pub argmin: usize,
    pub argmin_location: Vec<f64>,
    pub max_abs_l_minus_r: f64,
    pub max_rel_l_minus_r: f64,
    /// Best `c` in `‖u − c v‖₂`.
    pub proportionality_constant: f64,
    /// `‖u − c v‖₂ / ‖u‖₂`.
    pub proportionality_residual: f64,
    /// `max |L|` when `u` is numerically proportional to `v`.
    pub equality_case_defect: Option<f64>,
    pub tolerance: PiconeTolerance,
    pub pass: bool,
}

struct Gradients {
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn prepare(fields: &DiscreteGradient, u: &GridFunction, v: &GridFunction, p: f64) -> Result<Gradients> {
    check_exponent(p)?;
    fields.check_function(u)?;
    fields.check_function(v)?;
    v.require_strictly_positive()?;
    let nf = fields.num_fields();
    Ok(Gradients {
        u: (0..nf).map(|k| fields.centered_raw(k, u.values())).collect(),
        v: (0..nf).map(|k| fields.centered_raw(k, v.values())).collect(),
    })
}

fn guard(v: &GridFunction) -> f64 {
    1e-14 * v.max_abs()
}

/// Per-node terms `(|∇u|^p, p (|u|^{p−2}u / v^{p−1}) |∇v|^{p−2}⟨∇v,∇u⟩,
/// (p−1)(|u|/v)^p |∇v|^p)`.
fn terms(grads: &Gradients, i: usize, ui: f64, vi: f64, p: f64) -> (f64, f64, f64) {
    let (mut gu2, mut gv2, mut cross) = (0.0, 0.0, 0.0);
    for k in 0..grads.u.len() {
        let (a, b) = (grads.u[k][i], grads.v[k][i]);
        gu2 += a * a;
        gv2 += b * b;
        cross += a * b;
    }
    let weight = if gv2 == 0.0 { 0.0 } else { gv2.powf(0.5 * (p - 2.0)) };
    let ratio = signed_power(ui, p) / vi.powf(p - 1.0);
    (
        gu2.powf(0.5 * p),
        p * ratio * weight * cross,
        (p - 1.0) * (ui.abs() / vi).powf(p) * gv2.powf(0.5 * p),
    )
}

/// `L(u, v)` at interior nodes, zero elsewhere.
pub fn picone_l(fields: &DiscreteGradient, u: &GridFunction, v: &GridFunction, p: f64) -> Result<GridFunction> {
    let grads = prepare(fields, u, v, p)?;
    let floor = guard(v);
    let mut out = vec![0.0; u.values().len()];
    for &i in fields.domain().interior_nodes() {
        let (a, b, c) = terms(&grads, i, u.values()[i], v.values()[i].max(floor), p);
        out[i] = a - b + c;
    }
    Ok(GridFunction::from_raw(fields.domain(), out))
}

/// `R(u, v)` at interior nodes, zero elsewhere.
pub fn picone_r(
    fields: &DiscreteGradient,
    u: &GridFunction,
    v: &GridFunction,
    p: f64,
    mode: PiconeMode,
) -> Result<GridFunction> {
    let grads = prepare(fields, u, v, p)?;
    Ok(GridFunction::from_raw(fields.domain(), r_values(fields, &grads, u, v, p, mode)))
}

fn r_values(
    fields: &DiscreteGradient,
    grads: &Gradients,
    u: &GridFunction,
    v: &GridFunction,
    p: f64,
    mode: PiconeMode,
) -> Vec<f64> {
    let floor = guard(v);
    let nf = grads.u.len();
    let quotient_grad: Option<Vec<Vec<f64>>> = match mode {
        PiconeMode::Algebraic => None,
        PiconeMode::Discrete => {
            let mut f = vec![0.0; u.values().len()];
            for &i in fields.domain().interior_nodes() {
                let vi = v.values()[i].max(floor);
                f[i] = u.values()[i].abs().powf(p) / vi.powf(p - 1.0);
            }
            Some((0..nf).map(|k| fields.centered_raw(k, &f)).collect())
        }
    };
    let mut out = vec![0.0; u.values().len()];
    let mut q = vec![0.0; nf];
    for &i in fields.domain().interior_nodes() {
        let ui = u.values()[i];
        let vi = v.values()[i].max(floor);
        match &quotient_grad {
            None => {
                let a = p * signed_power(ui, p) / vi.powf(p - 1.0);
                let b = (p - 1.0) * (ui.abs() / vi).powf(p);
                for k in 0..nf {
                    q[k] = a * grads.u[k][i] - b * grads.v[k][i];
                }
            }
            Some(g) => {
                for k in 0..nf {
                    q[k] = g[k][i];
                }
            }
        }
        let (mut gu2, mut gv2, mut dot) = (0.0, 0.0, 0.0);
        for k in 0..nf {
            gu2 += grads.u[k][i] * grads.u[k][i];
            gv2 += grads.v[k][i] * grads.v[k][i];
            dot += grads.v[k][i] * q[k];
        }
        let weight = if gv2 == 0.0 { 0.0 } else { gv2.powf(0.5 * (p - 2.0)) };
        out[i] = gu2.powf(0.5 * p) - weight * dot;
    }
    out
}

/// Evaluates `L`, `R` and the equality case for one pair and judges
/// `min L ≥ −tol·scale` and `|L − R| ≤ tol·scale` nodewise.
pub fn verify_picone(
    fields: &DiscreteGradient,
    u: &GridFunction,
    v: &GridFunction,
    p: f64,
    mode: PiconeMode,
    tol: &PiconeTolerance,
) -> Result<PiconeReport> {
    let grads = prepare(fields, u, v, p)?;
    let floor = guard(v);
    let r = r_values(fields, &grads, u, v, p, mode);
    let domain = fields.domain();

    let mut min_l = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    let mut argmin = usize::MAX;
    let mut max_abs_diff: f64 = 0.0;
    let mut max_rel_diff: f64 = 0.0;
    let mut max_abs_l: f64 = 0.0;
    for &i in domain.interior_nodes() {
        let (a, b, c) = terms(&grads, i, u.values()[i], v.values()[i].max(floor), p);
        let l = a - b + c;
        let scale = a + b.abs() + c;
        let rel = if l == 0.0 { 0.0 } else { l / scale };
        min_l = min_l.min(l);
        if rel < min_rel {
            min_rel = rel;
            argmin = i;
        }
        let diff = (l - r[i]).abs();
        max_abs_diff = max_abs_diff.max(diff);
        if diff > 0.0 {
            max_rel_diff = max_rel_diff.max(diff / scale);
        }
        max_abs_l = max_abs_l.max(l.abs());
    }

    let uv = crate::domain_grid::dot_raw(u.values(), v.values());
    let vv = crate::domain_grid::dot_raw(v.values(), v.values());
    let c = uv / vv;
    let misfit: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a - c * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let unorm = u.l2_nodal();
    let prop = if misfit == 0.0 { 0.0 } else { misfit / unorm };
    let equality_case_defect = (prop <= tol.equality).then_some(max_abs_l);

    let pass = min_rel >= -tol.nonnegativity && max_rel_diff <= tol.identity;
    Ok(PiconeReport {
        mode,
        p,
        min_l,
        min_l_relative: min_rel,
        argmin,
        argmin_location: domain.coords(argmin),
        max_abs_l_minus_r: max_abs_diff,
        max_rel_l_minus_r: max_rel_diff,
        proportionality_constant: c,
        proportionality_residual: prop,
        equality_case_defect,
        tolerance: *tol,
        pass,
    })
}
