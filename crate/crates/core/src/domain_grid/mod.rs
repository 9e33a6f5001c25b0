//! Masked rectangular lattices standing in for open sets, and grid functions
//! that vanish outside the mask.
//!
//! Nodes are stored in row-major order: the last coordinate varies fastest.
//! A node is *interior* when the mask marks it as inside the open set; all
//! other nodes carry the value zero, which is how membership in the
//! zero-trace Sobolev class is encoded on the lattice.

mod io;

pub use io::{read_pgm_mask, write_csv, write_pgm_mask, write_pgm_slice};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_exponent, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    bounds: Vec<(f64, f64)>,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    mask: Vec<bool>,
    interior: Vec<usize>,
}

impl GridDomain {
    /// Box domain: every node except the outermost layer is interior.
    pub fn make_box(bounds: &[(f64, f64)], shape: &[usize]) -> Result<Self> {
        validate_lattice(bounds, shape)?;
        let skeleton = Self::skeleton(bounds, shape);
        let mut idx = vec![0; shape.len()];
        let mask = (0..skeleton.num_nodes())
            .map(|flat| {
                skeleton.unravel_into(flat, &mut idx);
                !skeleton.on_edge(&idx)
            })
            .collect();
        Self::from_mask(bounds, shape, mask)
    }

    /// Domain whose interior is `{node : predicate(node coordinates)}`. The
    /// predicate must be false on the outermost lattice layer.
    pub fn make_mask(
        bounds: &[(f64, f64)],
        shape: &[usize],
        predicate: impl Fn(&[f64]) -> bool,
    ) -> Result<Self> {
        validate_lattice(bounds, shape)?;
        let skeleton = Self::skeleton(bounds, shape);
        let mut x = vec![0.0; shape.len()];
        let mask = (0..skeleton.num_nodes())
            .map(|flat| {
                skeleton.coords_into(flat, &mut x);
                predicate(&x)
            })
            .collect();
        Self::from_mask(bounds, shape, mask)
    }

    /// Domain from an explicit interior mask in row-major order.
    pub fn from_mask(bounds: &[(f64, f64)], shape: &[usize], mask: Vec<bool>) -> Result<Self> {
        validate_lattice(bounds, shape)?;
        let mut domain = Self::skeleton(bounds, shape);
        if mask.len() != domain.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_nodes(),
                found: mask.len(),
            });
        }
        let mut idx = vec![0; shape.len()];
        for (flat, &m) in mask.iter().enumerate() {
            if m {
                domain.unravel_into(flat, &mut idx);
                if domain.on_edge(&idx) {
                    return Err(Error::MaskOnEdge(idx));
                }
            }
        }
        domain.interior = (0..mask.len()).filter(|&i| mask[i]).collect();
        domain.mask = mask;
        if domain.interior.is_empty() {
            return Err(Error::EmptyInterior);
        }
        Ok(domain)
    }

    fn skeleton(bounds: &[(f64, f64)], shape: &[usize]) -> Self {
        let n = shape.len();
        let spacing = (0..n)
            .map(|j| (bounds[j].1 - bounds[j].0) / (shape[j] - 1) as f64)
            .collect();
        let mut strides = vec![1; n];
        for j in (0..n.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * shape[j + 1];
        }
        let total = shape.iter().product();
        Self {
            bounds: bounds.to_vec(),
            shape: shape.to_vec(),
            spacing,
            strides,
            mask: vec![false; total],
            interior: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn num_nodes(&self) -> usize {
        self.mask.len()
    }

    /// Volume weight of one node, `Π h_j`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        self.mask[flat]
    }

    /// Flat indices of interior nodes, ascending.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Largest edge length of the bounding box.
    pub fn diameter_scale(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords_into(flat, &mut x);
        x
    }

    pub fn coords_into(&self, flat: usize, x: &mut [f64]) {
        let mut rem = flat;
        for j in 0..self.dim() {
            let i = rem / self.strides[j];
            rem %= self.strides[j];
            x[j] = self.bounds[j].0 + i as f64 * self.spacing[j];
        }
    }

    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        self.unravel_into(flat, &mut idx);
        idx
    }

    pub fn unravel_into(&self, flat: usize, idx: &mut [usize]) {
        let mut rem = flat;
        for j in 0..self.dim() {
            idx[j] = rem / self.strides[j];
            rem %= self.strides[j];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    fn on_edge(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(&self.shape)
            .any(|(&i, &s)| i == 0 || i + 1 == s)
    }

    /// Number of face-connected components of the interior.
    pub fn num_components(&self) -> usize {
        let mut seen = vec![false; self.num_nodes()];
        let mut stack = Vec::new();
        let mut count = 0;
        for &start in &self.interior {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                // interior nodes never touch the outer layer, so i ± stride stays in range
                for &s in &self.strides {
                    for j in [i - s, i + s] {
                        if self.mask[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }

    /// True when both domains share bounds and shape (and hence spacing).
    pub fn same_lattice(&self, other: &GridDomain) -> bool {
        self.shape == other.shape && self.bounds == other.bounds
    }

    /// Nodewise mask inclusion `self ⊆ other` on a shared lattice.
    pub fn is_subdomain(&self, other: &GridDomain) -> Result<bool> {
        if !self.same_lattice(other) {
            return Err(Error::LatticeMismatch);
        }
        Ok(self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b))
    }

    /// Image of the domain under `x_j ↦ s^{orders_j} x_j`, keeping node
    /// counts and mask and scaling spacings accordingly.
    pub fn dilated(&self, orders: &[f64], s: f64) -> Result<Self> {
        if orders.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: orders.len(),
            });
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dilation factor must be positive, got {s}"
            )));
        }
        let bounds: Vec<(f64, f64)> = self
            .bounds
            .iter()
            .zip(orders)
            .map(|(&(lo, hi), &o)| {
                let f = s.powf(o);
                (lo * f, hi * f)
            })
            .collect();
        Self::from_mask(&bounds, &self.shape, self.mask.clone())
    }
}

fn validate_lattice(bounds: &[(f64, f64)], shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidArgument("lattice needs at least one axis".into()));
    }
    if bounds.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.len(),
            found: bounds.len(),
        });
    }
    for (j, (&(lo, hi), &s)) in bounds.iter().zip(shape).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "axis {j}: degenerate bounds [{lo}, {hi}]"
            )));
        }
        if s < 3 {
            return Err(Error::InvalidArgument(format!(
                "axis {j}: need at least 3 nodes, got {s}"
            )));
        }
    }
    Ok(())
}

/// A real-valued function on a [`GridDomain`], zero at every non-interior node.
#[derive(Debug, Clone)]
pub struct GridFunction {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.domain.same_lattice(&other.domain) && self.values == other.values
    }
}

impl GridFunction {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        Self {
            domain: Arc::clone(domain),
            values: vec![0.0; domain.num_nodes()],
        }
    }

    /// Samples `f` at interior nodes; non-interior nodes are zero.
    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; domain.num_nodes()];
        let mut x = vec![0.0; domain.dim()];
        for &i in domain.interior_nodes() {
            domain.coords_into(i, &mut x);
            values[i] = f(&x);
        }
        Self {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub fn constant(domain: &Arc<GridDomain>, c: f64) -> Self {
        Self::from_fn(domain, |_| c)
    }

    /// Validating constructor: values must be finite and vanish off the mask.
    pub fn from_values(domain: &Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_nodes(),
                found: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value at node {:?}",
                    domain.unravel(i)
                )));
            }
            if v != 0.0 && !domain.is_interior(i) {
                return Err(Error::InvalidArgument(format!(
                    "nonzero value {v} outside the interior at node {:?}",
                    domain.unravel(i)
                )));
            }
        }
        Ok(Self {
            domain: Arc::clone(domain),
            values,
        })
    }

    /// Like [`GridFunction::from_values`] but zeroes non-interior entries instead of
    /// rejecting them.
    pub fn from_values_masked(domain: &Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: domain.num_nodes(),
                found: values.len(),
            });
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !domain.is_interior(i) {
                *v = 0.0;
            }
        }
        Self::from_values(domain, values)
    }

    pub(crate) fn from_raw(domain: &Arc<GridDomain>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.num_nodes());
        Self {
            domain: Arc::clone(domain),
            values,
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.domain.ravel(idx)]
    }

    pub fn check_same_lattice(&self, other: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(&self.domain, &other.domain) || self.domain.same_lattice(&other.domain) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(&self.domain, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: f64, other: &GridFunction) -> Result<Self> {
        self.check_same_lattice(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Self::from_raw(&self.domain, values))
    }

    /// Applies `f` at interior nodes; non-interior nodes stay zero.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for &i in self.domain.interior_nodes() {
            values[i] = f(self.values[i]);
        }
        Self::from_raw(&self.domain, values)
    }

    /// Re-masks onto `domain`, which must share the lattice.
    pub fn restricted_to(&self, domain: &Arc<GridDomain>) -> Result<Self> {
        if !self.domain.same_lattice(domain) {
            return Err(Error::LatticeMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(domain.mask())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(Self::from_raw(domain, values))
    }

    /// Rectangle rule `Σ f · Π h_j`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    /// Lattice inner product `Σ u v Π h_j`.
    pub fn dot(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_lattice(other)?;
        Ok(dot_raw(&self.values, &other.values) * self.domain.cell_volume())
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        check_exponent(p)?;
        Ok(self.lp_norm_unchecked(p))
    }

    pub(crate) fn lp_norm_unchecked(&self, p: f64) -> f64 {
        self.power_mass(p).powf(1.0 / p)
    }

    /// `∫ |f|^p`.
    pub(crate) fn power_mass(&self, p: f64) -> f64 {
        self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.domain.cell_volume()
    }

    /// Unweighted Euclidean norm of the nodal vector.
    pub fn l2_nodal(&self) -> f64 {
        dot_raw(&self.values, &self.values).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Smallest interior value and its flat index (lowest index on ties).
    pub fn min_interior(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for &i in self.domain.interior_nodes() {
            if self.values[i] < best.0 {
                best = (self.values[i], i);
            }
        }
        best
    }

    pub fn require_strictly_positive(&self) -> Result<()> {
        let (min, at) = self.min_interior();
        if min > 0.0 {
            Ok(())
        } else {
            Err(Error::NotStrictlyPositive {
                node: self.domain.unravel(at),
                value: min,
            })
        }
    }

    pub fn require_nonnegative(&self) -> Result<()> {
        let (min, at) = self.min_interior();
        if min >= 0.0 {
            Ok(())
        } else {
            Err(Error::Negative {
                node: self.domain.unravel(at),
                value: min,
            })
        }
    }
}

pub(crate) fn dot_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const FOURIER_MODES: usize = 6;

/// Deterministic smooth positive test function with interior values spanning
/// exactly `[0.1, 1.1]`, built from a few low-frequency random cosines.
pub fn random_positive_function(domain: &Arc<GridDomain>, seed: u64) -> GridFunction {
    let n = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..FOURIER_MODES)
        .map(|_| {
            let mut k: Vec<f64> = (0..n).map(|_| rng.random_range(0..=2) as f64).collect();
            if k.iter().all(|&v| v == 0.0) {
                k[rng.random_range(0..n)] = 1.0;
            }
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(-1.0..1.0);
            (k, phase, amp)
        })
        .collect();

    let bounds = domain.bounds();
    let raw = GridFunction::from_fn(domain, |x| {
        modes
            .iter()
            .map(|(k, phase, amp)| {
                let arg: f64 = (0..n)
                    .map(|j| k[j] * (x[j] - bounds[j].0) / (bounds[j].1 - bounds[j].0))
                    .sum();
                amp * (std::f64::consts::PI * arg + phase).cos()
            })
            .sum()
    });

    let (lo, hi) = domain
        .interior_nodes()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(raw.values[i]), hi.max(raw.values[i]))
        });
    let span = hi - lo;
    raw.map(|r| {
        if span > 0.0 {
            0.1 + (r - lo) / span
        } else {
            0.6
        }
    })
}
