//! Lattice discretization of a vector-field family on a [`GridDomain`].
//!
//! Two first-order stencils are provided.
//!
//! * The *centered* field `X_k u(i) = Σ_j a_kj(i) (u(i+e_j) − u(i−e_j)) / 2h_j`,
//!   evaluated and masked on interior nodes, with its exact transpose. It is
//!   used for pointwise quantities.
//! * The *oriented* gradient bundle: for each orientation `σ ∈ {+,−}ⁿ` the
//!   one-sided field `X_k^σ u(i) = Σ_j a_kj(i) D_j^{σ_j} u(i)`, evaluated on
//!   every node touching the interior. Integrals of `|∇_X u|^p` average over
//!   all `2ⁿ` orientations. The centered field is the orientation mean, and
//!   the bundle has no checkerboard null space, which the centered stencil does.
//!
//! Grid functions are zero outside the mask, and neighbors that fall off the
//! lattice count as zero as well.

use std::sync::Arc;

use super::VectorFieldFamily;
use crate::domain_grid::{dot_raw, GridDomain, GridFunction};
use crate::error::{Error, Result};

const OFF_LATTICE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct FieldTerm {
    axis: usize,
    coef: Vec<f64>,
}

/// A vector-field family sampled on a lattice.
#[derive(Debug, Clone)]
pub struct DiscreteGradient {
    domain: Arc<GridDomain>,
    family_name: String,
    num_fields: usize,
    terms: Vec<Vec<FieldTerm>>,
    inv_h: Vec<f64>,
    plus: Vec<u32>,
    minus: Vec<u32>,
    active: Vec<usize>,
}

impl DiscreteGradient {
    pub fn new(family: &VectorFieldFamily, domain: &Arc<GridDomain>) -> Result<Self> {
        let n = domain.dim();
        if family.ambient_dim() != n {
            return Err(Error::DimensionMismatch {
                expected: family.ambient_dim(),
                found: n,
            });
        }
        if domain.num_nodes() >= OFF_LATTICE as usize {
            return Err(Error::InvalidArgument("lattice too large".into()));
        }
        let nodes = domain.num_nodes();
        let shape = domain.shape();
        let strides = domain.strides();

        let mut plus = vec![OFF_LATTICE; nodes * n];
        let mut minus = vec![OFF_LATTICE; nodes * n];
        let mut idx = vec![0; n];
        for i in 0..nodes {
            domain.unravel_into(i, &mut idx);
            for j in 0..n {
                if idx[j] + 1 < shape[j] {
                    plus[i * n + j] = (i + strides[j]) as u32;
                }
                if idx[j] > 0 {
                    minus[i * n + j] = (i - strides[j]) as u32;
                }
            }
        }

        let mask = domain.mask();
        let active: Vec<usize> = (0..nodes)
            .filter(|&i| {
                mask[i]
                    || (0..n).any(|j| {
                        let p = plus[i * n + j];
                        let m = minus[i * n + j];
                        (p != OFF_LATTICE && mask[p as usize])
                            || (m != OFF_LATTICE && mask[m as usize])
                    })
            })
            .collect();

        let mut terms = Vec::with_capacity(family.num_fields());
        let mut x = vec![0.0; n];
        let mut a = vec![0.0; n];
        for k in 0..family.num_fields() {
            let mut coefs = vec![vec![0.0; nodes]; n];
            for &i in &active {
                domain.coords_into(i, &mut x);
                family.coefficients_into(k, &x, &mut a);
                for j in 0..n {
                    if !a[j].is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "coefficient a[{k}][{j}] of `{}` is not finite at {x:?}",
                            family.name()
                        )));
                    }
                    coefs[j][i] = a[j];
                }
            }
            let field_terms = coefs
                .into_iter()
                .enumerate()
                .filter(|(j, c)| !family.structural_zero(k, *j) && c.iter().any(|&v| v != 0.0))
                .map(|(axis, coef)| FieldTerm { axis, coef })
                .collect();
            terms.push(field_terms);
        }

        Ok(Self {
            domain: Arc::clone(domain),
            family_name: family.name().to_string(),
            num_fields: family.num_fields(),
            terms,
            inv_h: domain.spacing().iter().map(|h| 1.0 / h).collect(),
            plus,
            minus,
            active,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn family_name(&self) -> &str {
        &self.family_name
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    /// `2ⁿ` one-sided orientations.
    pub fn num_orientations(&self) -> usize {
        1 << self.domain.dim()
    }

    pub(crate) fn check_function(&self, u: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(u.domain(), &self.domain) || **u.domain() == *self.domain {
            Ok(())
        } else if u.domain().dim() != self.domain.dim() {
            Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                found: u.domain().dim(),
            })
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    fn check_field(&self, k: usize) -> Result<()> {
        if k < self.num_fields {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "field index {k} out of range for {} fields",
                self.num_fields
            )))
        }
    }

    #[inline]
    fn at(u: &[f64], idx: u32) -> f64 {
        if idx == OFF_LATTICE {
            0.0
        } else {
            u[idx as usize]
        }
    }

    /// Centered `X_k u`, masked to the interior.
    pub fn apply_field(&self, k: usize, u: &GridFunction) -> Result<GridFunction> {
        self.check_function(u)?;
        self.check_field(k)?;
        Ok(GridFunction::from_raw(&self.domain, self.centered_raw(k, u.values())))
    }

    pub(crate) fn centered_raw(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let n = self.domain.dim();
        let mut out = vec![0.0; u.len()];
        for &i in self.domain.interior_nodes() {
            let mut acc = 0.0;
            for t in &self.terms[k] {
                let j = t.axis;
                let d = Self::at(u, self.plus[i * n + j]) - Self::at(u, self.minus[i * n + j]);
                acc += t.coef[i] * d * 0.5 * self.inv_h[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Exact transpose of [`apply_field`](Self::apply_field) for the lattice
    /// inner product on interior-supported functions.
    pub fn apply_adjoint_field(&self, k: usize, f: &GridFunction) -> Result<GridFunction> {
        self.check_function(f)?;
        self.check_field(k)?;
        let mut out = vec![0.0; f.values().len()];
        self.centered_transpose_into(k, f.values(), &mut out);
        self.mask_in_place(&mut out);
        Ok(GridFunction::from_raw(&self.domain, out))
    }

    fn centered_transpose_into(&self, k: usize, u: &[f64], out: &mut [f64]) {
        let n = self.domain.dim();
        for &i in self.domain.interior_nodes() {
            for t in &self.terms[k] {
                let j = t.axis;
                let c = t.coef[i] * u[i] * 0.5 * self.inv_h[j];
                let p = self.plus[i * n + j];
                let m = self.minus[i * n + j];
                if p != OFF_LATTICE {
                    out[p as usize] += c;
                }
                if m != OFF_LATTICE {
                    out[m as usize] -= c;
                }
            }
        }
    }

    /// Centered horizontal gradient: a single-orientation section whose
    /// component `k` is [`apply_field`](Self::apply_field)`(k, u)`.
    pub fn horizontal_gradient(&self, u: &GridFunction) -> Result<HorizontalVectorField> {
        self.check_function(u)?;
        let mut field = HorizontalVectorField::zeros(&self.domain, self.num_fields, 1);
        for k in 0..self.num_fields {
            field
                .component_mut(0, k)
                .copy_from_slice(&self.centered_raw(k, u.values()));
        }
        Ok(field)
    }

    /// The oriented gradient bundle of `u`, one section per orientation.
    pub fn oriented_gradient(&self, u: &GridFunction) -> Result<HorizontalVectorField> {
        self.check_function(u)?;
        let mut field = HorizontalVectorField::zeros(
            &self.domain,
            self.num_fields,
            self.num_orientations(),
        );
        let nodes = self.domain.num_nodes();
        let nf = self.num_fields;
        self.visit_oriented(u.values(), |node, orientation, g| {
            for (k, &gk) in g.iter().enumerate() {
                field.data[(orientation * nf + k) * nodes + node] = gk;
            }
        });
        Ok(field)
    }

    /// Discrete `∇_X^* · F`, masked to the interior: the transpose of
    /// [`horizontal_gradient`](Self::horizontal_gradient) for single-orientation
    /// sections, and the orientation-averaged transpose of
    /// [`oriented_gradient`](Self::oriented_gradient) for bundles.
    pub fn horizontal_adjoint_divergence(&self, f: &HorizontalVectorField) -> Result<GridFunction> {
        if !(Arc::ptr_eq(&f.domain, &self.domain) || *f.domain == *self.domain) {
            return Err(Error::LatticeMismatch);
        }
        if f.num_fields != self.num_fields {
            return Err(Error::DimensionMismatch {
                expected: self.num_fields,
                found: f.num_fields,
            });
        }
        if f.num_orientations == 1 {
            let mut out = vec![0.0; self.domain.num_nodes()];
            for k in 0..self.num_fields {
                self.centered_transpose_into(k, f.component(0, k), &mut out);
            }
            self.mask_in_place(&mut out);
            return Ok(GridFunction::from_raw(&self.domain, out));
        }
        if f.num_orientations != self.num_orientations() {
            return Err(Error::DimensionMismatch {
                expected: self.num_orientations(),
                found: f.num_orientations,
            });
        }
        let nodes = self.domain.num_nodes();
        let nf = self.num_fields;
        let mut out = vec![0.0; nodes];
        let mut flux = vec![0.0; nf];
        for orientation in 0..self.num_orientations() {
            for &i in &self.active {
                for (k, fk) in flux.iter_mut().enumerate() {
                    *fk = f.data[(orientation * nf + k) * nodes + i];
                }
                self.scatter_transpose(i, orientation, &flux, &mut out);
            }
        }
        let w = 1.0 / self.num_orientations() as f64;
        out.iter_mut().for_each(|v| *v *= w);
        self.mask_in_place(&mut out);
        Ok(GridFunction::from_raw(&self.domain, out))
    }

    pub(crate) fn mask_in_place(&self, v: &mut [f64]) {
        for (x, &m) in v.iter_mut().zip(self.domain.mask()) {
            if !m {
                *x = 0.0;
            }
        }
    }

    /// Calls `visit(node, orientation, g)` with `g[k] = X_k^σ u(node)` for every
    /// active node and orientation. Inactive nodes have zero gradient.
    pub(crate) fn visit_oriented(&self, u: &[f64], mut visit: impl FnMut(usize, usize, &[f64])) {
        let n = self.domain.dim();
        let mut fwd = vec![0.0; n];
        let mut bwd = vec![0.0; n];
        let mut g = vec![0.0; self.num_fields];
        for &i in &self.active {
            self.one_sided(u, i, &mut fwd, &mut bwd);
            for orientation in 0..self.num_orientations() {
                self.combine(i, orientation, &fwd, &bwd, &mut g);
                visit(i, orientation, &g);
            }
        }
    }

    #[inline]
    pub(crate) fn one_sided(&self, u: &[f64], i: usize, fwd: &mut [f64], bwd: &mut [f64]) {
        let n = fwd.len();
        let ui = u[i];
        for j in 0..n {
            fwd[j] = (Self::at(u, self.plus[i * n + j]) - ui) * self.inv_h[j];
            bwd[j] = (ui - Self::at(u, self.minus[i * n + j])) * self.inv_h[j];
        }
    }

    /// Bit `j` of `orientation` selects the backward difference along axis `j`.
    #[inline]
    pub(crate) fn combine(&self, i: usize, orientation: usize, fwd: &[f64], bwd: &[f64], g: &mut [f64]) {
        for (k, gk) in g.iter_mut().enumerate() {
            let mut acc = 0.0;
            for t in &self.terms[k] {
                let d = if orientation >> t.axis & 1 == 0 {
                    fwd[t.axis]
                } else {
                    bwd[t.axis]
                };
                acc += t.coef[i] * d;
            }
            *gk = acc;
        }
    }

    /// Adds `(X^σ)ᵀ flux` contributions of node `i` into `out`.
    #[inline]
    pub(crate) fn scatter_transpose(&self, i: usize, orientation: usize, flux: &[f64], out: &mut [f64]) {
        let n = self.domain.dim();
        for (k, &fk) in flux.iter().enumerate() {
            if fk == 0.0 {
                continue;
            }
            for t in &self.terms[k] {
                let j = t.axis;
                let c = t.coef[i] * fk * self.inv_h[j];
                if orientation >> j & 1 == 0 {
                    let p = self.plus[i * n + j];
                    if p != OFF_LATTICE {
                        out[p as usize] += c;
                    }
                    out[i] -= c;
                } else {
                    out[i] += c;
                    let m = self.minus[i * n + j];
                    if m != OFF_LATTICE {
                        out[m as usize] -= c;
                    }
                }
            }
        }
    }

    /// Like [`scatter_transpose`](Self::scatter_transpose) with every
    /// contribution replaced by its magnitude.
    #[inline]
    pub(crate) fn scatter_transpose_abs(&self, i: usize, orientation: usize, flux: &[f64], out: &mut [f64]) {
        let n = self.domain.dim();
        for (k, &fk) in flux.iter().enumerate() {
            if fk == 0.0 {
                continue;
            }
            for t in &self.terms[k] {
                let j = t.axis;
                let c = (t.coef[i] * fk * self.inv_h[j]).abs();
                let other = if orientation >> j & 1 == 0 {
                    self.plus[i * n + j]
                } else {
                    self.minus[i * n + j]
                };
                if other != OFF_LATTICE {
                    out[other as usize] += c;
                }
                out[i] += c;
            }
        }
    }

    /// Partial derivatives of `X_k^σ u(i)` with respect to nodal values: the
    /// column of node `i` itself goes to `own`, the column of its neighbor
    /// along axis `j` to `nbr[j·N..(j+1)·N]` with the neighbor index in
    /// `nodes[j]` (`usize::MAX` when off-lattice or unused). Buffers are
    /// overwritten.
    pub(crate) fn slot_columns(
        &self,
        i: usize,
        orientation: usize,
        own: &mut [f64],
        nbr: &mut [f64],
        nodes: &mut [usize],
    ) {
        let n = self.domain.dim();
        let nf = self.num_fields;
        own.fill(0.0);
        nbr.fill(0.0);
        nodes.fill(usize::MAX);
        for k in 0..nf {
            for t in &self.terms[k] {
                let j = t.axis;
                let c = t.coef[i] * self.inv_h[j];
                let (sign, other) = if orientation >> j & 1 == 0 {
                    (1.0, self.plus[i * n + j])
                } else {
                    (-1.0, self.minus[i * n + j])
                };
                own[k] -= sign * c;
                nbr[j * nf + k] += sign * c;
                if other != OFF_LATTICE {
                    nodes[j] = other as usize;
                }
            }
        }
    }

    pub(crate) fn active_nodes(&self) -> &[usize] {
        &self.active
    }
}

/// Horizontal section `(F_1, …, F_N)` sampled per orientation. Centered
/// sections have one orientation and live on the interior; oriented bundles
/// have `2ⁿ`, with component `(σ, k)` holding `X_k^σ u` (or a general flux)
/// on the interior and the layer of nodes adjacent to it.
#[derive(Debug, Clone)]
pub struct HorizontalVectorField {
    domain: Arc<GridDomain>,
    num_fields: usize,
    num_orientations: usize,
    data: Vec<f64>,
}

impl HorizontalVectorField {
    pub fn zeros(domain: &Arc<GridDomain>, num_fields: usize, num_orientations: usize) -> Self {
        Self {
            domain: Arc::clone(domain),
            num_fields,
            num_orientations,
            data: vec![0.0; num_fields * num_orientations * domain.num_nodes()],
        }
    }

    /// Section whose every orientation carries the same components.
    pub fn from_components(components: &[GridFunction], num_orientations: usize) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("no components".into()))?;
        let domain = Arc::clone(first.domain());
        let mut field = Self::zeros(&domain, components.len(), num_orientations);
        let nodes = domain.num_nodes();
        for (k, c) in components.iter().enumerate() {
            first.check_same_lattice(c)?;
            for o in 0..num_orientations {
                let start = (o * components.len() + k) * nodes;
                field.data[start..start + nodes].copy_from_slice(c.values());
            }
        }
        Ok(field)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    pub fn num_orientations(&self) -> usize {
        self.num_orientations
    }

    pub fn component(&self, orientation: usize, k: usize) -> &[f64] {
        let nodes = self.domain.num_nodes();
        let start = (orientation * self.num_fields + k) * nodes;
        &self.data[start..start + nodes]
    }

    pub fn component_mut(&mut self, orientation: usize, k: usize) -> &mut [f64] {
        let nodes = self.domain.num_nodes();
        let start = (orientation * self.num_fields + k) * nodes;
        &mut self.data[start..start + nodes]
    }

    /// Orientation mean of component `k`, masked to the interior; equals the
    /// centered field there.
    pub fn centered(&self, k: usize) -> GridFunction {
        let nodes = self.domain.num_nodes();
        let mut out = vec![0.0; nodes];
        for o in 0..self.num_orientations {
            for (dst, v) in out.iter_mut().zip(self.component(o, k)) {
                *dst += v;
            }
        }
        let w = 1.0 / self.num_orientations as f64;
        for (i, v) in out.iter_mut().enumerate() {
            *v = if self.domain.is_interior(i) { *v * w } else { 0.0 };
        }
        GridFunction::from_raw(&self.domain, out)
    }

    /// Orientation-averaged lattice inner product of two sections.
    pub fn dot(&self, other: &HorizontalVectorField) -> Result<f64> {
        if !self.domain.same_lattice(&other.domain)
            || self.num_fields != other.num_fields
            || self.num_orientations != other.num_orientations
        {
            return Err(Error::LatticeMismatch);
        }
        Ok(dot_raw(&self.data, &other.data) * self.domain.cell_volume()
            / self.num_orientations as f64)
    }
}
