//! Run configuration: parsed from JSON with unknown keys rejected, then
//! resolved (defaults filled in) and validated before any compute.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::caccioppoli::CaccioppoliTolerance;
use crate::domain_grid::{read_pgm_mask, GridDomain};
use crate::eigensolver::{Preconditioner, SimplicityOptions, SolverOptions};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::picone::{PiconeMode, PiconeTolerance};
use crate::vector_fields::{CustomFamilySpec, VectorFieldFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Picone,
    Caccioppoli,
    Monotonicity,
    Simplicity,
    Scaling,
    Barta,
    Uniqueness,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::Picone,
        CheckName::Caccioppoli,
        CheckName::Monotonicity,
        CheckName::Simplicity,
        CheckName::Scaling,
        CheckName::Barta,
        CheckName::Uniqueness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Picone => "picone",
            CheckName::Caccioppoli => "caccioppoli",
            CheckName::Monotonicity => "monotonicity",
            CheckName::Simplicity => "simplicity",
            CheckName::Scaling => "scaling",
            CheckName::Barta => "barta",
            CheckName::Uniqueness => "uniqueness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Euclidean { n: usize },
    Grushin {},
    Heisenberg { n: usize },
    Custom { spec: CustomFamilySpec },
}

impl FamilyConfig {
    pub fn build(&self) -> Result<VectorFieldFamily> {
        match self {
            FamilyConfig::Euclidean { n } => VectorFieldFamily::euclidean(*n),
            FamilyConfig::Grushin {} => Ok(VectorFieldFamily::grushin()),
            FamilyConfig::Heisenberg { n } => VectorFieldFamily::heisenberg(*n),
            FamilyConfig::Custom { spec } => VectorFieldFamily::custom(spec.clone().into()),
        }
    }
}

/// Lattice `bounds` × `shape` with an interior chosen by `kind`. The
/// outermost lattice layer is never interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Box {
        bounds: Vec<(f64, f64)>,
        shape: Vec<usize>,
    },
    /// Nodes with `|x − center| < radius`.
    Ball {
        bounds: Vec<(f64, f64)>,
        shape: Vec<usize>,
        center: Vec<f64>,
        radius: f64,
    },
    /// Nodes strictly inside `(lo, hi)`.
    SubBox {
        bounds: Vec<(f64, f64)>,
        shape: Vec<usize>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Nodes where the expression in `x1 … xn` is positive.
    Expression {
        bounds: Vec<(f64, f64)>,
        shape: Vec<usize>,
        interior: String,
    },
    /// 2D mask image; the shape is read from the file. Relative paths are
    /// taken from the config file's directory.
    Pgm { path: PathBuf, bounds: Vec<(f64, f64)> },
}

impl DomainConfig {
    pub fn bounds(&self) -> &[(f64, f64)] {
        match self {
            DomainConfig::Box { bounds, .. }
            | DomainConfig::Ball { bounds, .. }
            | DomainConfig::SubBox { bounds, .. }
            | DomainConfig::Expression { bounds, .. }
            | DomainConfig::Pgm { bounds, .. } => bounds,
        }
    }

    pub fn build(&self, base: &Path) -> Result<Arc<GridDomain>> {
        let check_len = |what: &str, len: usize, n: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "domain.{what} has {len} entries, the lattice has dimension {n}"
                )))
            }
        };
        let domain = match self {
            DomainConfig::Box { bounds, shape } => GridDomain::make_box(bounds, shape)?,
            DomainConfig::Ball {
                bounds,
                shape,
                center,
                radius,
            } => {
                check_len("center", center.len(), bounds.len())?;
                GridDomain::make_mask(bounds, shape, |x| {
                    x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() < radius * radius
                })?
            }
            DomainConfig::SubBox { bounds, shape, lo, hi } => {
                check_len("lo", lo.len(), bounds.len())?;
                check_len("hi", hi.len(), bounds.len())?;
                GridDomain::make_mask(bounds, shape, |x| {
                    (0..x.len()).all(|j| x[j] > lo[j] && x[j] < hi[j])
                })?
            }
            DomainConfig::Expression {
                bounds,
                shape,
                interior,
            } => {
                let e = Expr::parse(interior, bounds.len())?;
                GridDomain::make_mask(bounds, shape, |x| e.eval(x) > 0.0)?
            }
            DomainConfig::Pgm { path, bounds } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let file = std::fs::File::open(&full)
                    .map_err(|e| Error::InvalidArgument(format!("cannot open mask {}: {e}", full.display())))?;
                read_pgm_mask(std::io::BufReader::new(file), bounds)?
            }
        };
        Ok(Arc::new(domain))
    }

    /// Same lattice, interior strictly inside the middle `1 − 2·margin` of
    /// every axis.
    fn shrunk(&self, margin: f64) -> Option<DomainConfig> {
        let shape = match self {
            DomainConfig::Box { shape, .. }
            | DomainConfig::Ball { shape, .. }
            | DomainConfig::SubBox { shape, .. }
            | DomainConfig::Expression { shape, .. } => shape.clone(),
            DomainConfig::Pgm { .. } => return None,
        };
        let bounds = self.bounds().to_vec();
        Some(DomainConfig::SubBox {
            lo: bounds.iter().map(|(a, b)| a + margin * (b - a)).collect(),
            hi: bounds.iter().map(|(a, b)| b - margin * (b - a)).collect(),
            bounds,
            shape,
        })
    }
}

/// Solver options other than `p` and `seed`, which live at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub tol_lambda: f64,
    pub tol_residual: f64,
    pub stall_window: usize,
    pub armijo: f64,
    pub curvature: f64,
    pub max_line_search: usize,
    pub eps_reg: Option<f64>,
    pub preconditioner: Preconditioner,
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            max_iterations: d.max_iterations,
            tol_lambda: d.tol_lambda,
            tol_residual: d.tol_residual,
            stall_window: d.stall_window,
            armijo: d.armijo,
            curvature: d.curvature,
            max_line_search: d.max_line_search,
            eps_reg: d.eps_reg,
            preconditioner: d.preconditioner,
            inner_tolerance: d.inner_tolerance,
            max_inner_iterations: d.max_inner_iterations,
        }
    }
}

impl SolverSection {
    pub fn options(&self, p: f64, seed: u64) -> SolverOptions {
        SolverOptions {
            p,
            seed,
            max_iterations: self.max_iterations,
            tol_lambda: self.tol_lambda,
            tol_residual: self.tol_residual,
            stall_window: self.stall_window,
            armijo: self.armijo,
            curvature: self.curvature,
            max_line_search: self.max_line_search,
            eps_reg: self.eps_reg,
            preconditioner: self.preconditioner,
            inner_tolerance: self.inner_tolerance,
            max_inner_iterations: self.max_inner_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiconeConfig {
    pub mode: PiconeMode,
    /// Number of seeded random pairs; pair `i` uses seeds `seed + 2i` and
    /// `seed + 2i + 1`.
    pub pairs: usize,
    /// Shift `u` down so that it changes sign.
    pub signed_u: bool,
    pub tolerance: Option<PiconeTolerance>,
}

impl Default for PiconeConfig {
    fn default() -> Self {
        Self {
            mode: PiconeMode::Algebraic,
            pairs: 10,
            signed_u: false,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaccioppoliSubject {
    /// The computed ground state with its frequency.
    Eigenfunction,
    /// `v ≡ 1`.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffConfig {
    Bump {
        #[serde(default = "default_bump_order")]
        m: u32,
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
}

fn default_bump_order() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaccioppoliConfig {
    /// Defaults to `{p − 0.4, p, p + 1, 2p}`.
    pub q: Option<Vec<f64>>,
    pub subject: CaccioppoliSubject,
    /// Defaults to `λ₁` for the eigenfunction and `0` for the constant.
    pub lambda: Option<f64>,
    pub cutoff: CutoffConfig,
    pub tolerance: CaccioppoliTolerance,
}

impl Default for CaccioppoliConfig {
    fn default() -> Self {
        Self {
            q: None,
            subject: CaccioppoliSubject::Eigenfunction,
            lambda: None,
            cutoff: CutoffConfig::Bump {
                m: 2,
                lo: None,
                hi: None,
            },
            tolerance: CaccioppoliTolerance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotonicityConfig {
    /// Defaults to the middle 60% sub-box of the main lattice.
    pub inner: Option<DomainConfig>,
    pub tol: f64,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        Self { inner: None, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub s: Vec<f64>,
    pub tol: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            s: vec![0.5, 2.0],
            tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BartaConfig {
    pub samples: usize,
    /// Allowed relative excess of a random bound over `λ₁`.
    pub tol: f64,
    /// Allowed relative gap of the ground-state bound, in units of the
    /// solver's residual tolerance.
    pub residual_factor: f64,
}

impl Default for BartaConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            tol: 1e-8,
            residual_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessConfig {
    /// Frequency paired with the ground state; defaults to `λ₁`.
    pub lambda: Option<f64>,
    pub tol: f64,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        Self { lambda: None, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub picone: PiconeConfig,
    pub caccioppoli: CaccioppoliConfig,
    pub monotonicity: MonotonicityConfig,
    pub simplicity: SimplicityOptions,
    pub scaling: ScalingConfig,
    pub barta: BartaConfig,
    pub uniqueness: UniquenessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyConfig,
    pub domain: DomainConfig,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub checks: ChecksConfig,
    /// Checks run by `suite`; all of them when absent.
    #[serde(default)]
    pub suite: Option<Vec<CheckName>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_p() -> f64 {
    2.0
}

/// A validated configuration with its built family and domain.
pub struct Resolved {
    pub config: RunConfig,
    pub family: VectorFieldFamily,
    pub domain: Arc<GridDomain>,
    pub base_dir: PathBuf,
}

impl Resolved {
    pub fn solver_options(&self) -> SolverOptions {
        self.config.solver.options(self.config.p, self.config.seed)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills every defaulted field and validates everything that can be
    /// checked without solving.
    pub fn resolve(mut self, base_dir: &Path) -> Result<Resolved> {
        let family = self.family.build()?;
        let domain = self.domain.build(base_dir)?;
        if family.ambient_dim() != domain.dim() {
            return Err(Error::InvalidArgument(format!(
                "family `{}` acts on dimension {} but the domain has dimension {}",
                family.name(),
                family.ambient_dim(),
                domain.dim()
            )));
        }
        let p = self.p;
        self.solver.options(p, self.seed).validate()?;

        let c = &mut self.checks;
        if c.picone.pairs == 0 {
            return Err(Error::InvalidArgument("checks.picone.pairs must be positive".into()));
        }
        let mode = c.picone.mode;
        c.picone.tolerance.get_or_insert_with(|| PiconeTolerance::for_mode(mode));

        let q = c
            .caccioppoli
            .q
            .get_or_insert_with(|| vec![p - 0.4, p, p + 1.0, 2.0 * p]);
        if let Some(bad) = q.iter().find(|&&q| !(q.is_finite() && q > p - 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "checks.caccioppoli.q: {bad} does not exceed p − 1 = {}",
                p - 1.0
            )));
        }
        let bounds = self.domain.bounds().to_vec();
        let middle = |r: f64| -> (Vec<f64>, Vec<f64>) {
            (
                bounds.iter().map(|(a, b)| a + r * (b - a)).collect(),
                bounds.iter().map(|(a, b)| b - r * (b - a)).collect(),
            )
        };
        match &mut c.caccioppoli.cutoff {
            CutoffConfig::Bump { lo, hi, .. } => {
                let (l, h) = middle(0.25);
                lo.get_or_insert(l);
                hi.get_or_insert(h);
            }
            CutoffConfig::Random { seed, lo, hi } => {
                let (l, h) = middle(0.25);
                lo.get_or_insert(l);
                hi.get_or_insert(h);
                seed.get_or_insert(self.seed);
            }
        }

        if c.monotonicity.inner.is_none() {
            c.monotonicity.inner = self.domain.shrunk(0.2);
        }
        if c.scaling.s.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("checks.scaling.s must be positive".into()));
        }
        if c.simplicity.restarts < 2 {
            return Err(Error::InvalidArgument("checks.simplicity.restarts must be at least 2".into()));
        }
        for (name, tol) in [
            ("checks.monotonicity.tol", c.monotonicity.tol),
            ("checks.scaling.tol", c.scaling.tol),
            ("checks.barta.tol", c.barta.tol),
            ("checks.uniqueness.tol", c.uniqueness.tol),
            ("checks.simplicity.defect_tol", c.simplicity.defect_tol),
            ("checks.simplicity.lambda_tol", c.simplicity.lambda_tol),
            ("checks.caccioppoli.tolerance.margin", c.caccioppoli.tolerance.margin),
            ("checks.caccioppoli.tolerance.hypothesis", c.caccioppoli.tolerance.hypothesis),
        ] {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {tol}")));
            }
        }
        if self.suite.is_none() {
            self.suite = Some(CheckName::ALL.to_vec());
        }
        Ok(Resolved {
            config: self,
            family,
            domain,
            base_dir: base_dir.to_path_buf(),
        })
    }
}
