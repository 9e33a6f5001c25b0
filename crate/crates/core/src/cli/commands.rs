use std::cell::OnceCell;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use super::config::{CaccioppoliSubject, CheckName, CutoffConfig, Resolved, RunConfig};
use crate::caccioppoli::{bump_cutoff, caccioppoli_sweep_with, random_cutoff, CaccioppoliReport};
use crate::domain_grid::{random_positive_function, write_csv, write_pgm_slice, GridFunction};
use crate::eigensolver::{
    barta_check, domain_monotonicity_check, scaling_check, simplicity_check, solve_with,
    uniqueness_check, EigenPair, StopReason,
};
use crate::error::{Error, Result};
use crate::json;
use crate::picone::{verify_picone, PiconeReport};
use crate::report::{Status, VerificationReport};
use crate::vector_fields::DiscreteGradient;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INAPPLICABLE: i32 = 4;
pub const EXIT_FAILED: i32 = 5;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code for a library error: I/O problems are internal, everything
/// else is a rejected input.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_INTERNAL,
        _ => EXIT_CONFIG,
    }
}

fn status_code(status: Status) -> i32 {
    match status {
        Status::Pass => EXIT_OK,
        Status::Fail => EXIT_FAILED,
        Status::Inapplicable => EXIT_INAPPLICABLE,
    }
}

/// Suite precedence `2 > 5 > 4 > 3 > 1 > 0`.
fn severity(code: i32) -> u8 {
    match code {
        EXIT_CONFIG => 5,
        EXIT_FAILED => 4,
        EXIT_INAPPLICABLE => 3,
        EXIT_NOT_CONVERGED => 2,
        EXIT_INTERNAL => 1,
        _ => 0,
    }
}

/// Aggregate exit code of a suite.
pub fn combine_codes(codes: &[i32]) -> i32 {
    codes.iter().copied().max_by_key(|&c| severity(c)).unwrap_or(EXIT_OK)
}

/// UTC time as `YYYY-MM-DDTHH:MM:SSZ`.
fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs()) as i64;
    let (days, rem) = (secs.div_euclid(86_400), secs.rem_euclid(86_400));
    // civil-from-days on the proleptic Gregorian calendar
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        rem % 3600 / 60,
        rem % 60
    )
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    version: &'static str,
    timestamp: String,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, command: &str, config: &RunConfig, body: T) -> Result<()> {
    let envelope = Envelope {
        command,
        version: VERSION,
        timestamp: timestamp(),
        config,
        body,
    };
    fs::write(path, json::to_string(&envelope)?)?;
    Ok(())
}

/// Per-run state shared by the checks of a suite: the sampled fields and a
/// lazily computed ground state.
pub struct Context<'a> {
    pub resolved: &'a Resolved,
    pub fields: DiscreteGradient,
    pair: OnceCell<EigenPair>,
}

impl<'a> Context<'a> {
    pub fn new(resolved: &'a Resolved) -> Result<Self> {
        Ok(Self {
            fields: DiscreteGradient::new(&resolved.family, &resolved.domain)?,
            resolved,
            pair: OnceCell::new(),
        })
    }

    pub fn ground_state(&self) -> Result<&EigenPair> {
        if let Some(p) = self.pair.get() {
            return Ok(p);
        }
        let pair = solve_with(&self.fields, &self.resolved.solver_options(), None)?;
        Ok(self.pair.get_or_init(|| pair))
    }
}

#[derive(Serialize)]
struct EigenpairBody<'a> {
    lambda1: f64,
    p: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    stop: StopReason,
    eps_reg: f64,
    num_interior: usize,
    num_components: usize,
    lambda_history: &'a [f64],
}

/// Solves and writes `eigenpair.json`, `u1.csv` and, in two or more
/// dimensions, `u1.pgm`. Exit 0 iff converged.
pub fn cmd_solve(resolved: &Resolved, out: &Path) -> Result<i32> {
    let ctx = Context::new(resolved)?;
    let pair = ctx.ground_state()?;
    fs::create_dir_all(out)?;
    write_json(
        &out.join("eigenpair.json"),
        "solve",
        &resolved.config,
        EigenpairBody {
            lambda1: pair.lambda1,
            p: pair.p,
            iterations: pair.iterations,
            residual: pair.residual,
            converged: pair.converged,
            stop: pair.stop,
            eps_reg: pair.eps_reg,
            num_interior: resolved.domain.num_interior(),
            num_components: resolved.domain.num_components(),
            lambda_history: &pair.lambda_history,
        },
    )?;
    write_csv(&pair.u1, BufWriter::new(File::create(out.join("u1.csv"))?))?;
    if resolved.domain.dim() >= 2 {
        write_pgm_slice(&pair.u1, BufWriter::new(File::create(out.join("u1.pgm"))?))?;
    }
    Ok(if pair.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Details {
    None,
    Picone(Vec<PiconeReport>),
    Caccioppoli(Vec<CaccioppoliReport>),
    Reports(Vec<VerificationReport>),
}

pub struct CheckOutcome {
    pub report: VerificationReport,
    pub details: Details,
}

impl CheckOutcome {
    fn plain(report: VerificationReport) -> Self {
        Self {
            report,
            details: Details::None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        status_code(self.report.status)
    }
}

fn check_picone(ctx: &Context) -> Result<CheckOutcome> {
    let cfg = &ctx.resolved.config;
    let pc = &cfg.checks.picone;
    let tol = pc.tolerance.expect("resolved");
    let domain = &ctx.resolved.domain;
    let mut reports = Vec::with_capacity(pc.pairs);
    for i in 0..pc.pairs as u64 {
        let mut u = random_positive_function(domain, cfg.seed.wrapping_add(2 * i));
        if pc.signed_u {
            u = u.add_scaled(-0.6, &GridFunction::constant(domain, 1.0))?;
        }
        let v = random_positive_function(domain, cfg.seed.wrapping_add(2 * i + 1));
        reports.push(verify_picone(&ctx.fields, &u, &v, cfg.p, pc.mode, &tol)?);
    }
    let mut report = VerificationReport::new("picone");
    let worst = reports
        .iter()
        .min_by(|a, b| a.min_l_relative.total_cmp(&b.min_l_relative))
        .expect("at least one pair");
    let max_rel = reports.iter().map(|r| r.max_rel_l_minus_r).fold(0.0, f64::max);
    let margin = reports
        .iter()
        .map(|r| (r.min_l_relative + tol.nonnegativity).min(tol.identity - r.max_rel_l_minus_r))
        .fold(f64::INFINITY, f64::min);
    report.worst_location = Some(worst.argmin_location.clone());
    report
        .metric("pairs", pc.pairs as f64)
        .metric("min_l_relative", worst.min_l_relative)
        .metric("max_rel_l_minus_r", max_rel)
        .judge(margin);
    Ok(CheckOutcome {
        report,
        details: Details::Picone(reports),
    })
}

fn check_caccioppoli(ctx: &Context) -> Result<CheckOutcome> {
    let cfg = &ctx.resolved.config;
    let cc = &cfg.checks.caccioppoli;
    let domain = &ctx.resolved.domain;
    let mut report = VerificationReport::new("caccioppoli");
    let (v, lambda) = match cc.subject {
        CaccioppoliSubject::Eigenfunction => {
            let pair = ctx.ground_state()?;
            if !pair.converged {
                report.partial = true;
                report.note(format!("ground state solve stopped ({:?})", pair.stop));
            }
            (pair.u1.clone(), cc.lambda.unwrap_or(pair.lambda1))
        }
        CaccioppoliSubject::Constant => (GridFunction::constant(domain, 1.0), cc.lambda.unwrap_or(0.0)),
    };
    if let Err(e) = v.require_strictly_positive() {
        report.inapplicable(format!("hypothesis fails: {e}"));
        return Ok(CheckOutcome::plain(report));
    }
    let phi = match &cc.cutoff {
        CutoffConfig::Bump { m, lo, hi } => {
            bump_cutoff(domain, lo.as_deref().expect("resolved"), hi.as_deref().expect("resolved"), *m)?
        }
        CutoffConfig::Random { seed, lo, hi } => random_cutoff(
            domain,
            lo.as_deref().expect("resolved"),
            hi.as_deref().expect("resolved"),
            seed.expect("resolved"),
        )?,
    };
    let q = cc.q.as_deref().expect("resolved");
    let reports = caccioppoli_sweep_with(&ctx.fields, &v, &phi, cfg.p, lambda, q, Some(&cc.tolerance))?;
    report.metric("lambda", lambda).metric("tol", cc.tolerance.margin);
    if let Some(r) = reports.iter().find(|r| r.inapplicable) {
        let why = r.notes.last().cloned().unwrap_or_default();
        report.inapplicable(format!("hypothesis fails: {why}"));
    } else if !reports.is_empty() {
        let margin = reports
            .iter()
            .map(|r| {
                let scale = r.lhs.abs().max(r.rhs.abs());
                if scale == 0.0 {
                    cc.tolerance.margin
                } else {
                    r.margin / scale + cc.tolerance.margin
                }
            })
            .fold(f64::INFINITY, f64::min);
        report.metric("min_relative_margin", margin - cc.tolerance.margin).judge(margin);
    }
    Ok(CheckOutcome {
        report,
        details: Details::Caccioppoli(reports),
    })
}

fn check_monotonicity(ctx: &Context) -> Result<CheckOutcome> {
    let r = ctx.resolved;
    let mc = &r.config.checks.monotonicity;
    let inner_cfg = mc.inner.as_ref().ok_or_else(|| {
        Error::InvalidArgument("checks.monotonicity.inner is required for mask-file domains".into())
    })?;
    let inner = inner_cfg.build(&r.base_dir)?;
    let report = domain_monotonicity_check(&r.family, &inner, &r.domain, r.config.p, mc.tol, &r.solver_options())?;
    Ok(CheckOutcome::plain(report))
}

fn check_simplicity(ctx: &Context) -> Result<CheckOutcome> {
    let r = ctx.resolved;
    let report = simplicity_check(&ctx.fields, r.config.p, &r.config.checks.simplicity, &r.solver_options())?;
    Ok(CheckOutcome::plain(report))
}

fn check_scaling(ctx: &Context) -> Result<CheckOutcome> {
    let r = ctx.resolved;
    let sc = &r.config.checks.scaling;
    let mut report = VerificationReport::new("scaling");
    let mut parts = Vec::with_capacity(sc.s.len());
    for &s in &sc.s {
        match scaling_check(&r.family, &r.domain, r.config.p, s, sc.tol, &r.solver_options()) {
            Ok(part) => parts.push(part),
            Err(Error::NoDilation(why)) => {
                report.inapplicable(format!("hypothesis fails: {why} has no dilation law"));
                return Ok(CheckOutcome::plain(report));
            }
            Err(e) => return Err(e),
        }
    }
    let margin = parts.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    report.partial = parts.iter().any(|p| p.partial);
    for (s, part) in sc.s.iter().zip(&parts) {
        report.metric(&format!("ratio_s{s}"), part.metrics["ratio"]);
    }
    report.metric("tol", sc.tol);
    if parts.is_empty() {
        report.inapplicable("no dilation factors given");
    } else {
        report.judge(margin);
    }
    Ok(CheckOutcome {
        report,
        details: Details::Reports(parts),
    })
}

fn check_barta(ctx: &Context) -> Result<CheckOutcome> {
    let r = ctx.resolved;
    let bc = &r.config.checks.barta;
    let pair = ctx.ground_state()?;
    let pair_tol = bc.residual_factor * r.config.solver.tol_residual;
    let report = barta_check(&ctx.fields, pair, bc.samples, r.config.seed, bc.tol, pair_tol)?;
    Ok(CheckOutcome::plain(report))
}

fn check_uniqueness(ctx: &Context) -> Result<CheckOutcome> {
    let r = ctx.resolved;
    let uc = &r.config.checks.uniqueness;
    let pair = ctx.ground_state()?;
    let lambda = uc.lambda.unwrap_or(pair.lambda1);
    let mut report = uniqueness_check(&ctx.fields, &pair.u1, lambda, r.config.p, uc.tol, &r.solver_options())?;
    if !pair.converged {
        report.partial = true;
        report.note(format!("ground state solve stopped ({:?})", pair.stop));
    }
    Ok(CheckOutcome::plain(report))
}

pub fn run_check(ctx: &Context, which: CheckName) -> Result<CheckOutcome> {
    match which {
        CheckName::Picone => check_picone(ctx),
        CheckName::Caccioppoli => check_caccioppoli(ctx),
        CheckName::Monotonicity => check_monotonicity(ctx),
        CheckName::Simplicity => check_simplicity(ctx),
        CheckName::Scaling => check_scaling(ctx),
        CheckName::Barta => check_barta(ctx),
        CheckName::Uniqueness => check_uniqueness(ctx),
    }
}

#[derive(Serialize)]
struct VerifyBody<'a> {
    check: CheckName,
    exit_code: i32,
    report: &'a VerificationReport,
    details: &'a Details,
}

fn write_check(path: &Path, config: &RunConfig, which: CheckName, outcome: &CheckOutcome) -> Result<()> {
    write_json(
        path,
        "verify",
        config,
        VerifyBody {
            check: which,
            exit_code: outcome.exit_code(),
            report: &outcome.report,
            details: &outcome.details,
        },
    )
}

/// Runs one check and writes `report.json`; exit 0 pass, 4 inapplicable,
/// 5 fail.
pub fn cmd_verify(resolved: &Resolved, which: CheckName, out: &Path) -> Result<i32> {
    let ctx = Context::new(resolved)?;
    let outcome = run_check(&ctx, which)?;
    fs::create_dir_all(out)?;
    write_check(&out.join("report.json"), &resolved.config, which, &outcome)?;
    Ok(outcome.exit_code())
}

#[derive(Debug, Serialize)]
pub struct SuiteEntry {
    pub check: CheckName,
    pub status: String,
    pub exit_code: i32,
    pub margin: Option<f64>,
    pub partial: bool,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct SuiteBody<'a> {
    exit_code: i32,
    checks: &'a [SuiteEntry],
}

/// Runs every listed check, never stopping at a failure, and writes
/// `suite_summary.json` plus one report per check under `reports/`.
pub fn cmd_suite(resolved: &Resolved, out: &Path) -> Result<i32> {
    let list = resolved.config.suite.as_deref().unwrap_or_default();
    if list.is_empty() {
        return Err(Error::InvalidArgument("suite: the check list is empty".into()));
    }
    let ctx = Context::new(resolved)?;
    let reports_dir = out.join("reports");
    fs::create_dir_all(&reports_dir)?;
    let mut entries = Vec::with_capacity(list.len());
    for &which in list {
        let entry = match run_check(&ctx, which) {
            Ok(outcome) => {
                write_check(
                    &reports_dir.join(format!("{}.json", which.as_str())),
                    &resolved.config,
                    which,
                    &outcome,
                )?;
                SuiteEntry {
                    check: which,
                    status: serde_json::to_value(outcome.report.status)?
                        .as_str()
                        .unwrap_or_default()
                        .to_string(),
                    exit_code: outcome.exit_code(),
                    margin: outcome.report.margin.is_finite().then_some(outcome.report.margin),
                    partial: outcome.report.partial,
                    error: None,
                }
            }
            Err(e) => SuiteEntry {
                check: which,
                status: "error".into(),
                exit_code: error_code(&e),
                margin: None,
                partial: false,
                error: Some(e.to_string()),
            },
        };
        entries.push(entry);
    }
    let codes: Vec<i32> = entries.iter().map(|e| e.exit_code).collect();
    let code = combine_codes(&codes);
    write_json(
        &out.join("suite_summary.json"),
        "suite",
        &resolved.config,
        SuiteBody {
            exit_code: code,
            checks: &entries,
        },
    )?;
    Ok(code)
}

/// Parses and resolves a config given as text, with relative paths taken
/// from the working directory.
pub fn resolve_str(text: &str) -> Result<Resolved> {
    RunConfig::from_json(text)?.resolve(Path::new("."))
}
