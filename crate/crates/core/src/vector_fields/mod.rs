//! Families `{X_k}` of first-order vector fields `X_k = Σ_j a_kj(x) ∂/∂x_j`
//! and their lattice discretization.

mod stencil;

pub use stencil::{DiscreteGradient, HorizontalVectorField};

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain_grid::GridDomain;
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Coefficient closure: writes `a_k(x)` (length `ambient_dim`) into the slice.
pub type CoefficientFn = Arc<dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Coefficients {
    Euclidean,
    Grushin,
    Heisenberg { n: usize },
    Expressions(Vec<Vec<Expr>>),
    Closure(CoefficientFn),
}

/// Anisotropic dilation `x_j ↦ s^{orders_j} x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dilation {
    pub orders: Vec<f64>,
}

impl Dilation {
    pub fn apply(&self, s: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.orders)
            .map(|(xi, o)| s.powf(*o) * xi)
            .collect()
    }
}

/// Which family to build.
#[derive(Clone)]
pub enum FamilyKind {
    Euclidean(usize),
    Grushin,
    Heisenberg(usize),
    Custom(CustomFamily),
}

/// User-defined family, either from coefficient expressions or a closure.
#[derive(Clone)]
pub struct CustomFamily {
    pub name: String,
    pub ambient_dim: usize,
    pub num_fields: usize,
    pub coefficients: CustomCoefficients,
    pub dilation: Option<Dilation>,
    pub gradient_homogeneity: Option<f64>,
}

#[derive(Clone)]
pub enum CustomCoefficients {
    Expressions(Vec<Vec<String>>),
    Closure(CoefficientFn),
}

/// JSON form of a custom family:
/// `{"ambient_dim": n, "fields": [["1", "0"], ["0", "x1"]]}` plus optional
/// `name`, `dilation` (per-coordinate orders) and `gradient_homogeneity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFamilySpec {
    #[serde(default)]
    pub name: Option<String>,
    pub ambient_dim: usize,
    pub fields: Vec<Vec<String>>,
    #[serde(default)]
    pub dilation: Option<Vec<f64>>,
    #[serde(default)]
    pub gradient_homogeneity: Option<f64>,
}

impl From<CustomFamilySpec> for CustomFamily {
    fn from(spec: CustomFamilySpec) -> Self {
        CustomFamily {
            name: spec.name.unwrap_or_else(|| "custom".into()),
            ambient_dim: spec.ambient_dim,
            num_fields: spec.fields.len(),
            coefficients: CustomCoefficients::Expressions(spec.fields),
            gradient_homogeneity: spec
                .gradient_homogeneity
                .or(spec.dilation.as_ref().map(|_| -1.0)),
            dilation: spec.dilation.map(|orders| Dilation { orders }),
        }
    }
}

#[derive(Clone)]
pub struct VectorFieldFamily {
    name: String,
    ambient_dim: usize,
    num_fields: usize,
    coefficients: Coefficients,
    dilation: Option<Dilation>,
    gradient_homogeneity: Option<f64>,
}

impl fmt::Debug for VectorFieldFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldFamily")
            .field("name", &self.name)
            .field("ambient_dim", &self.ambient_dim)
            .field("num_fields", &self.num_fields)
            .field("dilation", &self.dilation)
            .field("gradient_homogeneity", &self.gradient_homogeneity)
            .finish_non_exhaustive()
    }
}

impl VectorFieldFamily {
    pub fn make(kind: FamilyKind) -> Result<Self> {
        match kind {
            FamilyKind::Euclidean(n) => Self::euclidean(n),
            FamilyKind::Grushin => Ok(Self::grushin()),
            FamilyKind::Heisenberg(n) => Self::heisenberg(n),
            FamilyKind::Custom(c) => Self::custom(c),
        }
    }

    /// `X_k = ∂/∂x_k` on ℝⁿ, isotropic dilations.
    pub fn euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("euclidean dimension must be ≥ 1".into()));
        }
        Ok(Self {
            name: format!("euclidean({n})"),
            ambient_dim: n,
            num_fields: n,
            coefficients: Coefficients::Euclidean,
            dilation: Some(Dilation { orders: vec![1.0; n] }),
            gradient_homogeneity: Some(-1.0),
        })
    }

    /// Grushin plane: `X_1 = ∂/∂x_1`, `X_2 = x_1 ∂/∂x_2`, dilation `(s x_1, s² x_2)`.
    pub fn grushin() -> Self {
        Self {
            name: "grushin".into(),
            ambient_dim: 2,
            num_fields: 2,
            coefficients: Coefficients::Grushin,
            dilation: Some(Dilation { orders: vec![1.0, 2.0] }),
            gradient_homogeneity: Some(-1.0),
        }
    }

    /// Heisenberg group ℍⁿ with coordinates `(x_1..x_n, y_1..y_n, t)` and
    /// fields `X_j = ∂/∂x_j + 2y_j ∂/∂t`, `Y_j = ∂/∂y_j − 2x_j ∂/∂t`, ordered
    /// `X_1..X_n, Y_1..Y_n`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("heisenberg dimension must be ≥ 1".into()));
        }
        let mut orders = vec![1.0; 2 * n + 1];
        orders[2 * n] = 2.0;
        Ok(Self {
            name: format!("heisenberg({n})"),
            ambient_dim: 2 * n + 1,
            num_fields: 2 * n,
            coefficients: Coefficients::Heisenberg { n },
            dilation: Some(Dilation { orders }),
            gradient_homogeneity: Some(-1.0),
        })
    }

    pub fn custom(c: CustomFamily) -> Result<Self> {
        if c.ambient_dim == 0 || c.num_fields == 0 {
            return Err(Error::InvalidArgument(
                "custom family needs ambient_dim ≥ 1 and at least one field".into(),
            ));
        }
        if c.num_fields > c.ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "custom family has {} fields but ambient dimension {}",
                c.num_fields, c.ambient_dim
            )));
        }
        if let Some(d) = &c.dilation {
            if d.orders.len() != c.ambient_dim {
                return Err(Error::DimensionMismatch {
                    expected: c.ambient_dim,
                    found: d.orders.len(),
                });
            }
        }
        let coefficients = match c.coefficients {
            CustomCoefficients::Closure(f) => Coefficients::Closure(f),
            CustomCoefficients::Expressions(rows) => {
                if rows.len() != c.num_fields {
                    return Err(Error::DimensionMismatch {
                        expected: c.num_fields,
                        found: rows.len(),
                    });
                }
                let mut parsed = Vec::with_capacity(rows.len());
                for row in rows {
                    if row.len() != c.ambient_dim {
                        return Err(Error::DimensionMismatch {
                            expected: c.ambient_dim,
                            found: row.len(),
                        });
                    }
                    parsed.push(
                        row.iter()
                            .map(|s| Expr::parse(s, c.ambient_dim))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                Coefficients::Expressions(parsed)
            }
        };
        let family = Self {
            name: c.name,
            ambient_dim: c.ambient_dim,
            num_fields: c.num_fields,
            coefficients,
            dilation: c.dilation,
            gradient_homogeneity: c.gradient_homogeneity,
        };
        family.probe()?;
        Ok(family)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CustomFamilySpec = serde_json::from_str(text)?;
        Self::custom(spec.into())
    }

    /// Rejects families whose coefficients are non-finite at the origin or at
    /// a fixed set of pseudo-random points of `[-1, 1]ⁿ`.
    fn probe(&self) -> Result<()> {
        let n = self.ambient_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut points = vec![vec![0.0; n]];
        points.extend((0..8).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()));
        let mut a = vec![0.0; n];
        for x in &points {
            for k in 0..self.num_fields {
                self.coefficients_into(k, x, &mut a);
                if let Some(j) = a.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient a[{k}][{j}] is not finite at {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    pub fn dilation(&self) -> Option<&Dilation> {
        self.dilation.as_ref()
    }

    pub fn gradient_homogeneity(&self) -> Option<f64> {
        self.gradient_homogeneity
    }

    pub fn coefficients(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.ambient_dim];
        self.coefficients_into(k, x, &mut a);
        a
    }

    /// Writes `(a_k1(x), …, a_kn(x))` into `a`.
    pub fn coefficients_into(&self, k: usize, x: &[f64], a: &mut [f64]) {
        debug_assert!(k < self.num_fields);
        match &self.coefficients {
            Coefficients::Euclidean => {
                a.fill(0.0);
                a[k] = 1.0;
            }
            Coefficients::Grushin => {
                a.fill(0.0);
                if k == 0 {
                    a[0] = 1.0;
                } else {
                    a[1] = x[0];
                }
            }
            Coefficients::Heisenberg { n } => {
                let n = *n;
                a.fill(0.0);
                if k < n {
                    a[k] = 1.0;
                    a[2 * n] = 2.0 * x[n + k];
                } else {
                    let j = k - n;
                    a[n + j] = 1.0;
                    a[2 * n] = -2.0 * x[j];
                }
            }
            Coefficients::Expressions(rows) => {
                for (dst, e) in a.iter_mut().zip(&rows[k]) {
                    *dst = e.eval(x);
                }
            }
            Coefficients::Closure(f) => f(k, x, a),
        }
    }

    /// Coordinates that are structurally absent from field `k` (always zero
    /// coefficients), when known without sampling.
    pub(crate) fn structural_zero(&self, k: usize, j: usize) -> bool {
        match &self.coefficients {
            Coefficients::Euclidean => j != k,
            Coefficients::Grushin => j != k,
            Coefficients::Heisenberg { n } => {
                let n = *n;
                !(j == k || j == 2 * n)
            }
            Coefficients::Expressions(rows) => rows[k][j].is_literal_zero(),
            Coefficients::Closure(_) => false,
        }
    }

    pub fn dilate_point(&self, s: f64, x: &[f64]) -> Result<Vec<f64>> {
        let d = self
            .dilation
            .as_ref()
            .ok_or_else(|| Error::NoDilation(self.name.clone()))?;
        Ok(d.apply(s, x))
    }

    /// Image of `domain` under the family's dilation with factor `s`.
    pub fn dilate_domain(&self, s: f64, domain: &GridDomain) -> Result<GridDomain> {
        let d = self
            .dilation
            .as_ref()
            .ok_or_else(|| Error::NoDilation(self.name.clone()))?;
        domain.dilated(&d.orders, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_coefficients() {
        let e = VectorFieldFamily::euclidean(2).unwrap();
        assert_eq!(e.coefficients(0, &[0.3, -2.0]), vec![1.0, 0.0]);
        assert_eq!(e.coefficients(1, &[0.3, -2.0]), vec![0.0, 1.0]);

        let g = VectorFieldFamily::grushin();
        assert_eq!(g.coefficients(0, &[3.0, 7.0]), vec![1.0, 0.0]);
        assert_eq!(g.coefficients(1, &[3.0, 7.0]), vec![0.0, 3.0]);

        let h = VectorFieldFamily::heisenberg(1).unwrap();
        assert_eq!((h.ambient_dim(), h.num_fields()), (3, 2));
        assert_eq!(h.coefficients(0, &[1.0, 2.0, 0.0]), vec![1.0, 0.0, 4.0]);
        assert_eq!(h.coefficients(1, &[1.0, 2.0, 0.0]), vec![0.0, 1.0, -2.0]);

        let h2 = VectorFieldFamily::heisenberg(2).unwrap();
        assert_eq!((h2.ambient_dim(), h2.num_fields()), (5, 4));
        // Y_2 at (x1, x2, y1, y2, t) = (1, 5, 0, 0, 0)
        assert_eq!(h2.coefficients(3, &[1.0, 5.0, 0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0, 1.0, -10.0]);
    }

    #[test]
    fn dilation_at_one_is_identity() {
        for f in [
            VectorFieldFamily::euclidean(3).unwrap(),
            VectorFieldFamily::grushin(),
            VectorFieldFamily::heisenberg(1).unwrap(),
        ] {
            let x: Vec<f64> = (0..f.ambient_dim()).map(|j| 0.3 * j as f64 - 0.7).collect();
            assert_eq!(f.dilate_point(1.0, &x).unwrap(), x);
        }
        let h = VectorFieldFamily::heisenberg(1).unwrap();
        assert_eq!(h.dilate_point(2.0, &[1.0, -1.0, 1.0]).unwrap(), vec![2.0, -2.0, 4.0]);
    }

    #[test]
    fn custom_from_json() {
        let f = VectorFieldFamily::from_json(
            r#"{"ambient_dim": 2, "fields": [["1", "0"], ["0", "x1^2"]], "name": "grushin2"}"#,
        )
        .unwrap();
        assert_eq!(f.name(), "grushin2");
        assert_eq!(f.coefficients(1, &[3.0, 1.0]), vec![0.0, 9.0]);
        assert!(f.dilation().is_none());
        assert!(f.structural_zero(0, 1));
        assert!(!f.structural_zero(1, 1));
    }

    #[test]
    fn custom_rejections() {
        // more fields than dimensions
        assert!(VectorFieldFamily::from_json(
            r#"{"ambient_dim": 1, "fields": [["1"], ["x1"]]}"#
        )
        .is_err());
        // non-finite at probe points (the origin)
        assert!(VectorFieldFamily::from_json(
            r#"{"ambient_dim": 1, "fields": [["1/x1"]]}"#
        )
        .is_err());
        // wrong row length
        assert!(VectorFieldFamily::from_json(
            r#"{"ambient_dim": 2, "fields": [["1"]]}"#
        )
        .is_err());
        // unknown key
        assert!(VectorFieldFamily::from_json(
            r#"{"ambient_dim": 1, "fields": [["1"]], "colour": 3}"#
        )
        .is_err());
    }

    #[test]
    fn missing_dilation_is_an_error() {
        let f = VectorFieldFamily::from_json(r#"{"ambient_dim": 1, "fields": [["1"]]}"#).unwrap();
        let d = GridDomain::make_box(&[(0.0, 1.0)], &[5]).unwrap();
        assert!(matches!(f.dilate_domain(2.0, &d), Err(Error::NoDilation(_))));
    }
}
