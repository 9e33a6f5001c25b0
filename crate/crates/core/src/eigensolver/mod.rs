//! Principal frequency by constrained minimization of the Rayleigh quotient,
//! and the verification checks built on it.
//!
//! The minimization runs nonlinear conjugate gradients (Polak–Ribière+) on
//! the sphere `{u ≥ 0, ‖u‖_p = 1}`: every trial point is `(u + t d)₊`
//! renormalized, and a step is only taken when it satisfies the Armijo
//! condition, so the Rayleigh quotient never increases.

mod checks;
mod linear;

pub use checks::{
    barta_check, barta_lower_bound, domain_monotonicity_check, scaling_check, simplicity_check,
    uniqueness_check, BartaBound, SimplicityOptions,
};
pub use linear::{linear_principal, LinearPrincipal};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain_grid::{dot_raw, random_positive_function, GridDomain, GridFunction};
use crate::error::{check_exponent, Error, Result};
use crate::p_sub_laplacian::{energy_kernel, signed_power};
use crate::vector_fields::{DiscreteGradient, VectorFieldFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub p: f64,
    pub max_iterations: usize,
    /// Relative change of the Rayleigh quotient per iteration.
    pub tol_lambda: f64,
    /// Bound on the relative nodal residual (see [`relative_residual`]).
    pub tol_residual: f64,
    /// Consecutive iterations the λ criterion must hold.
    pub stall_window: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Line search stops once `|φ'(t)| ≤ curvature · |φ'(0)|`.
    pub curvature: f64,
    pub max_line_search: usize,
    pub seed: u64,
    /// Flux regularization used while iterating; `None` selects
    /// `1e−10 × diameter` for `p < 2` and `0` otherwise.
    pub eps_reg: Option<f64>,
    pub preconditioner: Preconditioner,
    /// Relative residual at which the inner preconditioner solve stops.
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
}

/// Scaling of the search directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Hessian scaling for `p ≠ 2`, none for `p = 2`.
    Auto,
    None,
    /// Inexact solve with the Hessian of the p-energy at the current iterate.
    Hessian,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            p: 2.0,
            max_iterations: 50_000,
            tol_lambda: 1e-9,
            tol_residual: 1e-7,
            stall_window: 5,
            armijo: 1e-4,
            curvature: 0.1,
            max_line_search: 40,
            seed: 0,
            eps_reg: None,
            preconditioner: Preconditioner::Auto,
            inner_tolerance: 1e-3,
            max_inner_iterations: 2000,
        }
    }
}

impl SolverOptions {
    pub fn with_p(p: f64) -> Self {
        Self {
            p,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tol_lambda", self.tol_lambda)?;
        positive("tol_residual", self.tol_residual)?;
        positive("inner_tolerance", self.inner_tolerance)?;
        if self.max_iterations == 0
            || self.stall_window == 0
            || self.max_line_search == 0
            || self.max_inner_iterations == 0
        {
            return Err(Error::InvalidArgument(
                "iteration limits and stall_window must be at least 1".into(),
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < self.curvature && self.curvature < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "line search constants need 0 < armijo < curvature < 1, got {} and {}",
                self.armijo, self.curvature
            )));
        }
        if let Some(e) = self.eps_reg {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::InvalidArgument(format!("invalid eps_reg {e}")));
            }
        }
        Ok(())
    }

    pub fn regularization(&self, domain: &GridDomain) -> f64 {
        self.eps_reg.unwrap_or(if self.p < 2.0 {
            1e-10 * domain.diameter_scale()
        } else {
            0.0
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No step satisfying the Armijo condition exists along steepest descent,
    /// typically because the Rayleigh quotient is at its rounding floor.
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Nonnegative, `‖u1‖_p = 1`.
    pub u1: GridFunction,
    pub p: f64,
    pub iterations: usize,
    /// Relative nodal residual of the unregularized equation.
    pub residual: f64,
    pub converged: bool,
    pub stop: StopReason,
    /// Rayleigh quotient of every iterate, starting with the initial guess.
    pub lambda_history: Vec<f64>,
    pub eps_reg: f64,
}

/// Relative nodal residual of `L_p u = λ u^{p−1}`:
/// `max_i |r_i| / (λ|u_i|^{p−1} + 64 ε_mach Σ|L contributions|_i)` over
/// interior nodes, with `r = L_p u − λ|u|^{p−2}u`. The second denominator
/// term is the rounding floor of evaluating `(L_p u)_i`.
pub fn relative_residual(
    fields: &DiscreteGradient,
    u: &GridFunction,
    lambda: f64,
    p: f64,
) -> Result<f64> {
    check_exponent(p)?;
    fields.check_function(u)?;
    let n = u.values().len();
    let mut op = vec![0.0; n];
    let mut abs = vec![0.0; n];
    energy_kernel(fields, u.values(), p, 0.0, Some(&mut op), Some(&mut abs));
    Ok(relative_residual_raw(fields.domain(), u.values(), lambda, p, &op, &abs))
}

fn relative_residual_raw(
    domain: &GridDomain,
    u: &[f64],
    lambda: f64,
    p: f64,
    op: &[f64],
    abs: &[f64],
) -> f64 {
    let floor = 64.0 * f64::EPSILON;
    domain
        .interior_nodes()
        .iter()
        .map(|&i| {
            let up = signed_power(u[i], p);
            let r = (op[i] - lambda * up).abs();
            if r == 0.0 {
                0.0
            } else {
                r / (lambda.abs() * up.abs() + floor * abs[i])
            }
        })
        .fold(0.0, f64::max)
}

/// Computes the principal eigenpair of the p-sub-Laplacian of `family` on
/// `domain` from the seeded random positive initial guess.
pub fn solve_principal(
    family: &VectorFieldFamily,
    domain: &Arc<GridDomain>,
    opts: &SolverOptions,
) -> Result<EigenPair> {
    let fields = DiscreteGradient::new(family, domain)?;
    solve_with(&fields, opts, None)
}

/// As [`solve_principal`] on an already sampled family, optionally from a
/// given initial guess (its positive part is used).
pub fn solve_with(
    fields: &DiscreteGradient,
    opts: &SolverOptions,
    initial: Option<&GridFunction>,
) -> Result<EigenPair> {
    opts.validate()?;
    let domain = Arc::clone(fields.domain());
    let u0 = match initial {
        Some(u) => {
            fields.check_function(u)?;
            u.clone()
        }
        None => random_positive_function(&domain, opts.seed),
    };
    let mut solver = Solver::new(fields, opts);
    let start = solver
        .start(u0.values())
        .ok_or_else(|| Error::InvalidArgument("initial guess has no positive part".into()))?;
    solver.run(start)
}

/// An iterate on the constraint set together with its oriented gradients.
struct Point {
    u: Vec<f64>,
    /// `G_σ u` per active node and orientation, `num_fields` values each.
    g: Vec<f64>,
    /// Rayleigh quotient, tracked through accurately computed increments.
    lambda: f64,
    mass: f64,
    /// Euclidean gradient of the Rayleigh quotient in nodal coordinates.
    grad: Vec<f64>,
}

struct Trial {
    point: Point,
    /// Change of the quotient relative to the base point, resolved far
    /// below the rounding level of the quotient itself.
    increment: f64,
    /// `d/dt` of the quotient along the search line at this step.
    slope: f64,
}

struct Solver<'a> {
    fields: &'a DiscreteGradient,
    opts: &'a SolverOptions,
    p: f64,
    eps: f64,
    vol: f64,
    hessian: bool,
}

/// `(a + b)^{k} − a^{k}` without cancellation, for `a ≥ 0`, `a + b ≥ 0`.
#[inline]
fn power_increment(a: f64, b: f64, k: f64) -> f64 {
    if k == 1.0 {
        b
    } else if a == 0.0 {
        b.max(0.0).powf(k)
    } else {
        a.powf(k) * (k * (b / a).max(-1.0).ln_1p()).exp_m1()
    }
}

impl<'a> Solver<'a> {
    fn new(fields: &'a DiscreteGradient, opts: &'a SolverOptions) -> Self {
        Self {
            fields,
            opts,
            p: opts.p,
            eps: opts.regularization(fields.domain()),
            vol: fields.domain().cell_volume(),
            hessian: match opts.preconditioner {
                Preconditioner::Auto => opts.p != 2.0,
                Preconditioner::None => false,
                Preconditioner::Hessian => true,
            },
        }
    }

    /// Search-direction scaling `P⁻¹ grad` with `P` the Hessian of the
    /// p-energy at `x`, `(1/2ⁿ) Σ_σ G_σᵀ D_σ G_σ` with
    /// `D = w I + (p−2) w' g gᵀ`, `w = (|g|² + δ²)^{(p−2)/2}`,
    /// `w' = (|g|² + δ²)^{(p−4)/2}`, solved by Jacobi-preconditioned CG.
    fn precondition(&self, x: &Point) -> Vec<f64> {
        if !self.hessian {
            return x.grad.clone();
        }
        let fields = self.fields;
        let nf = fields.num_fields();
        let n = fields.domain().dim();
        let p = self.p;
        let slots = x.g.len() / nf;
        let mean_sq = x.g.iter().map(|v| v * v).sum::<f64>() / slots.max(1) as f64;
        let delta2 = (1e-6 * mean_sq).max(f64::MIN_POSITIVE);
        let mut w = vec![0.0; slots];
        let mut c = vec![0.0; slots];
        for s in 0..slots {
            let gs = &x.g[s * nf..(s + 1) * nf];
            let q = gs.iter().map(|v| v * v).sum::<f64>() + delta2;
            w[s] = q.powf(0.5 * (p - 2.0));
            c[s] = (p - 2.0) * w[s] / q;
        }
        let quad = |s: usize, col: &[f64]| {
            let gs = &x.g[s * nf..(s + 1) * nf];
            let gc: f64 = gs.iter().zip(col).map(|(a, b)| a * b).sum();
            w[s] * col.iter().map(|v| v * v).sum::<f64>() + c[s] * gc * gc
        };

        let num = x.u.len();
        let mut diag = vec![0.0; num];
        let mut own = vec![0.0; nf];
        let mut nbr = vec![0.0; n * nf];
        let mut nodes = vec![0usize; n];
        let mut s = 0;
        for &i in fields.active_nodes() {
            for orientation in 0..fields.num_orientations() {
                fields.slot_columns(i, orientation, &mut own, &mut nbr, &mut nodes);
                diag[i] += quad(s, &own);
                for j in 0..n {
                    if nodes[j] != usize::MAX {
                        diag[nodes[j]] += quad(s, &nbr[j * nf..(j + 1) * nf]);
                    }
                }
                s += 1;
            }
        }

        let inv_o = 1.0 / fields.num_orientations() as f64;
        let mut fwd = vec![0.0; n];
        let mut bwd = vec![0.0; n];
        let mut gv = vec![0.0; nf];
        let mut flux = vec![0.0; nf];
        let apply = |v: &[f64], out: &mut [f64], fwd: &mut [f64], bwd: &mut [f64], gv: &mut [f64], flux: &mut [f64]| {
            out.fill(0.0);
            let mut s = 0;
            for &i in fields.active_nodes() {
                fields.one_sided(v, i, fwd, bwd);
                for orientation in 0..fields.num_orientations() {
                    fields.combine(i, orientation, fwd, bwd, gv);
                    let gs = &x.g[s * nf..(s + 1) * nf];
                    let gg: f64 = gs.iter().zip(gv.iter()).map(|(a, b)| a * b).sum();
                    for k in 0..nf {
                        flux[k] = w[s] * gv[k] + c[s] * gg * gs[k];
                    }
                    fields.scatter_transpose(i, orientation, flux, out);
                    s += 1;
                }
            }
            out.iter_mut().for_each(|o| *o *= inv_o);
            fields.mask_in_place(out);
        };

        let interior = fields.domain().interior_nodes();
        let minv: Vec<f64> = (0..num)
            .map(|i| if diag[i] > 0.0 { inv_o.recip() / diag[i] } else { 0.0 })
            .collect();
        let b = &x.grad;
        let mut z = vec![0.0; num];
        let mut r = b.clone();
        let mut y: Vec<f64> = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
        let mut d = y.clone();
        let mut ry = dot_raw(&r, &y);
        let target = self.opts.inner_tolerance * self.opts.inner_tolerance * dot_raw(b, b);
        let mut ad = vec![0.0; num];
        for _ in 0..self.opts.max_inner_iterations {
            if dot_raw(&r, &r) <= target {
                break;
            }
            apply(&d, &mut ad, &mut fwd, &mut bwd, &mut gv, &mut flux);
            let dad = dot_raw(&d, &ad);
            if !(dad > 0.0) {
                break;
            }
            let alpha = ry / dad;
            for &i in interior {
                z[i] += alpha * d[i];
                r[i] -= alpha * ad[i];
                y[i] = r[i] * minv[i];
            }
            let next = dot_raw(&r, &y);
            let beta = next / ry;
            ry = next;
            for &i in interior {
                d[i] = y[i] + beta * d[i];
            }
        }
        if dot_raw(&z, b) > 0.0 {
            z
        } else {
            x.grad.clone()
        }
    }

    fn slots(&self) -> usize {
        self.fields.active_nodes().len() * self.fields.num_orientations() * self.fields.num_fields()
    }

    /// Normalized positive part of `u0` as the first iterate.
    fn start(&self, u0: &[f64]) -> Option<Point> {
        let zero = Point {
            u: vec![0.0; u0.len()],
            g: vec![0.0; self.slots()],
            lambda: 0.0,
            mass: 0.0,
            grad: vec![0.0; u0.len()],
        };
        let mut v: Vec<f64> = u0.iter().map(|x| x.max(0.0)).collect();
        self.fields.mask_in_place(&mut v);
        let mass: f64 = v.iter().map(|x| x.powf(self.p)).sum::<f64>() * self.vol;
        if !(mass > 0.0 && mass.is_finite()) {
            return None;
        }
        // The increment formulas from the zero function give the plain
        // energy and mass; the quotient is then set directly.
        let mut t = self.evaluate(&zero, &v, None)?;
        let mut op = vec![0.0; v.len()];
        let energy = energy_kernel(self.fields, &t.point.u, self.p, self.eps, Some(&mut op), None);
        t.point.lambda = energy / t.point.mass;
        self.set_gradient(&mut t.point, &op);
        Some(t.point)
    }

    fn set_gradient(&self, x: &mut Point, op: &[f64]) {
        let scale = self.p * self.vol / x.mass;
        for &i in self.fields.domain().interior_nodes() {
            x.grad[i] = scale * (op[i] - x.lambda * signed_power(x.u[i], self.p));
        }
    }

    /// Moves from `base` to the normalized `v` (nonnegative, interior
    /// supported). The quotient increment is accumulated from per-term
    /// increments of the energy and mass densities, so steps far below the
    /// rounding level of the quotient itself are still resolved. `d` enables
    /// the directional slope computation.
    fn evaluate(&self, base: &Point, v: &[f64], d: Option<&[f64]>) -> Option<Trial> {
        let p = self.p;
        let fields = self.fields;
        let nf = fields.num_fields();
        let n = fields.domain().dim();
        let orientations = fields.num_orientations();

        let delta: Vec<f64> = v.iter().zip(&base.u).map(|(a, b)| a - b).collect();
        let mut dmass = 0.0;
        for &i in fields.domain().interior_nodes() {
            let (u, dv) = (base.u[i], delta[i]);
            dmass += if p == 2.0 {
                dv * (2.0 * u + dv)
            } else if u > 0.0 && v[i] > 0.0 {
                u.powf(p) * (p * (dv / u).ln_1p()).exp_m1()
            } else {
                v[i].powf(p) - u.powf(p)
            };
        }
        let mass_v = base.mass + dmass * self.vol;
        if !(mass_v > 0.0 && mass_v.is_finite()) {
            return None;
        }

        let eps2 = self.eps * self.eps;
        let half_p = 0.5 * p;
        let mut g = vec![0.0; self.slots()];
        let mut op = vec![0.0; v.len()];
        let mut fwd = vec![0.0; n];
        let mut bwd = vec![0.0; n];
        let mut gd = vec![0.0; nf];
        let mut flux = vec![0.0; nf];
        let mut denergy = 0.0;
        let mut slot = 0;
        for &i in fields.active_nodes() {
            fields.one_sided(&delta, i, &mut fwd, &mut bwd);
            for orientation in 0..orientations {
                fields.combine(i, orientation, &fwd, &bwd, &mut gd);
                let gu = &base.g[slot..slot + nf];
                let mut a = eps2;
                let mut b = 0.0;
                let mut s = eps2;
                for k in 0..nf {
                    let gv = gu[k] + gd[k];
                    g[slot + k] = gv;
                    a += gu[k] * gu[k];
                    b += gd[k] * (2.0 * gu[k] + gd[k]);
                    s += gv * gv;
                }
                denergy += power_increment(a, b.max(-a), half_p);
                if s > 0.0 {
                    let w = if p == 2.0 { 1.0 } else { s.powf(half_p - 1.0) };
                    for k in 0..nf {
                        flux[k] = w * g[slot + k];
                    }
                    fields.scatter_transpose(i, orientation, &flux, &mut op);
                }
                slot += nf;
            }
        }
        denergy *= self.vol / orientations as f64;
        let increment = (denergy - base.lambda * dmass * self.vol) / mass_v;
        let lambda = base.lambda + increment;
        if !lambda.is_finite() {
            return None;
        }

        let norm = mass_v.powf(1.0 / p);
        let inv = 1.0 / norm;
        let u: Vec<f64> = v.iter().map(|x| x * inv).collect();
        g.iter_mut().for_each(|x| *x *= inv);
        let op_scale = norm.powf(1.0 - p) / orientations as f64;
        op.iter_mut().for_each(|x| *x *= op_scale);
        let mut point = Point {
            u,
            g,
            lambda,
            mass: mass_v / norm.powf(p),
            grad: vec![0.0; v.len()],
        };
        self.set_gradient(&mut point, &op);
        let slope = d.map_or(0.0, |d| {
            let mut s = 0.0;
            for &i in fields.domain().interior_nodes() {
                if v[i] > 0.0 {
                    s += point.grad[i] * d[i];
                }
            }
            s * inv
        });
        Some(Trial {
            point,
            increment,
            slope,
        })
    }

    fn trial(&self, x: &Point, d: &[f64], t: f64) -> Option<Trial> {
        let mut v: Vec<f64> = x
            .u
            .iter()
            .zip(d)
            .map(|(a, b)| (a + t * b).max(0.0))
            .collect();
        self.fields.mask_in_place(&mut v);
        self.evaluate(x, &v, Some(d))
    }

    /// Safeguarded secant search on the directional derivative with Armijo
    /// acceptance. Returns the accepted point and step.
    fn line_search(&self, x: &Point, d: &[f64], slope0: f64, t_init: f64) -> Option<(Point, f64)> {
        let c1 = self.opts.armijo;
        let c2 = self.opts.curvature;
        let armijo = |t: f64, inc: f64| inc <= c1 * t * slope0;

        let (mut lo, mut slope_lo) = (0.0, slope0);
        let mut hi: Option<(f64, f64)> = None;
        let mut t = t_init;
        let mut best: Option<(Point, f64, f64)> = None;
        for _ in 0..self.opts.max_line_search {
            if !(t.is_finite() && t > 0.0) {
                break;
            }
            let Some(Trial {
                point: w,
                increment: inc,
                slope: s,
            }) = self.trial(x, d, t)
            else {
                hi = Some((t, f64::INFINITY));
                t = 0.5 * (lo + t);
                continue;
            };
            let ok = armijo(t, inc);
            if ok && s.abs() <= c2 * slope0.abs() {
                return Some((w, t));
            }
            let improves = ok && best.as_ref().is_none_or(|b| inc < b.2);
            if ok && s < 0.0 {
                let (prev_lo, prev_slope) = (lo, slope_lo);
                lo = t;
                slope_lo = s;
                if improves {
                    best = Some((w, t, inc));
                }
                t = match hi {
                    Some((h, sh)) => interpolate(lo, slope_lo, h, sh),
                    None => {
                        let grow = if s > prev_slope {
                            t - s * (t - prev_lo) / (s - prev_slope)
                        } else {
                            4.0 * t
                        };
                        grow.clamp(1.5 * t, 10.0 * t)
                    }
                };
            } else {
                if improves {
                    best = Some((w, t, inc));
                }
                let sh = if ok { s } else { f64::INFINITY };
                hi = Some((t, sh));
                t = interpolate(lo, slope_lo, t, sh);
            }
            if let Some((h, _)) = hi {
                if h - lo <= 1e-14 * h {
                    break;
                }
            }
        }
        best.map(|(w, t, _)| (w, t))
    }

    fn run(&mut self, start: Point) -> Result<EigenPair> {
        let opts = self.opts;
        let mut x = start;
        let mut history = vec![x.lambda];
        let mut z = self.precondition(&x);
        let mut d: Vec<f64> = z.iter().map(|g| -g).collect();
        let mut steepest = true;
        let mut t_prev = None::<(f64, f64)>;
        let mut quiet = 0usize;
        let mut iterations = 0usize;
        let mut residual = f64::INFINITY;
        let mut stop = StopReason::MaxIterations;

        while iterations < opts.max_iterations {
            let mut slope0 = dot_raw(&x.grad, &d);
            if slope0 >= 0.0 || !slope0.is_finite() {
                d = z.iter().map(|g| -g).collect();
                steepest = true;
                slope0 = -dot_raw(&x.grad, &z);
            }
            if slope0 == 0.0 {
                residual = self.residual(&x);
                stop = if residual <= opts.tol_residual {
                    StopReason::Converged
                } else {
                    StopReason::Stagnated
                };
                break;
            }
            let t_init = match t_prev {
                Some((t, s)) => (t * s / slope0).min(100.0 * t),
                None => {
                    let umax = x.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    1e-3 * umax / dmax
                }
            };
            let Some((next, t)) = self.line_search(&x, &d, slope0, t_init) else {
                if !steepest {
                    d = z.iter().map(|g| -g).collect();
                    steepest = true;
                    t_prev = None;
                    continue;
                }
                residual = self.residual(&x);
                stop = if residual <= opts.tol_residual {
                    StopReason::Converged
                } else {
                    StopReason::Stagnated
                };
                break;
            };
            iterations += 1;
            assert!(
                next.lambda <= x.lambda,
                "Rayleigh quotient increased: {} -> {}",
                x.lambda,
                next.lambda
            );
            let change = (x.lambda - next.lambda) / next.lambda;
            quiet = if change <= opts.tol_lambda { quiet + 1 } else { 0 };
            t_prev = Some((t, slope0));

            // preconditioned Polak–Ribière+
            let z_next = self.precondition(&next);
            let gz = dot_raw(&x.grad, &z);
            let beta = if gz > 0.0 {
                let cross = dot_raw(&next.grad, &z);
                ((dot_raw(&next.grad, &z_next) - cross) / gz).max(0.0)
            } else {
                0.0
            };
            z = z_next;
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = -zi + beta * *di;
            }
            steepest = beta == 0.0;
            x = next;
            history.push(x.lambda);

            if quiet >= opts.stall_window {
                residual = self.residual(&x);
                if residual <= opts.tol_residual {
                    stop = StopReason::Converged;
                    break;
                }
            }
        }
        if stop == StopReason::MaxIterations {
            residual = self.residual(&x);
            if quiet >= opts.stall_window && residual <= opts.tol_residual {
                stop = StopReason::Converged;
            }
        }

        // Report the directly evaluated, unregularized quotient of the final
        // iterate; it agrees with the tracked value to rounding.
        let u1 = GridFunction::from_raw(self.fields.domain(), x.u);
        let lambda1 = crate::p_sub_laplacian::rayleigh_quotient(self.fields, &u1, self.p)?;
        Ok(EigenPair {
            lambda1,
            u1,
            p: self.p,
            iterations,
            residual,
            converged: stop == StopReason::Converged,
            stop,
            lambda_history: history,
            eps_reg: self.eps,
        })
    }

    fn residual(&self, x: &Point) -> f64 {
        let n = x.u.len();
        let mut op = vec![0.0; n];
        let mut abs = vec![0.0; n];
        energy_kernel(self.fields, &x.u, self.p, 0.0, Some(&mut op), Some(&mut abs));
        relative_residual_raw(self.fields.domain(), &x.u, x.lambda, self.p, &op, &abs)
    }
}

/// Secant step on the slope between `(a, sa)` with `sa < 0` and `(b, sb)`,
/// kept inside the middle 80% of the bracket; bisection when the secant is
/// unusable.
fn interpolate(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let width = b - a;
    let t = if sb.is_finite() && sb > sa {
        a - sa * width / (sb - sa)
    } else {
        a + 0.5 * width
    };
    t.clamp(a + 0.1 * width, b - 0.1 * width)
}
