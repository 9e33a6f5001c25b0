//! The `subfreq` command line: `solve`, `verify --check <name>` and `suite`,
//! each driven by a JSON run configuration.
//!
//! Exit codes: 0 success, 1 internal (I/O) error, 2 configuration or
//! precondition error, 3 solver did not converge, 4 hypothesis inapplicable,
//! 5 verification failed.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_solve, cmd_suite, cmd_verify, combine_codes, run_check, CheckOutcome, Context, EXIT_CONFIG,
    EXIT_FAILED, EXIT_INAPPLICABLE, EXIT_INTERNAL, EXIT_NOT_CONVERGED, EXIT_OK,
};
pub use config::{CheckName, Resolved, RunConfig};

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "SUBFREQ_OUT";
const DEFAULT_OUT: &str = "subfreq_out";

#[derive(Parser, Debug)]
#[command(name = "subfreq", version, about = "Principal Dirichlet frequency of p-sub-Laplacians on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overridden by SUBFREQ_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the principal eigenpair.
    Solve(Common),
    /// Run one verification.
    Verify {
        #[arg(long, value_enum)]
        check: CheckName,
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured list of verifications.
    Suite(Common),
}

fn output_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    flag.map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn execute(common: &Common, run: impl FnOnce(&Resolved, &Path) -> crate::Result<i32> + Send) -> i32 {
    let prepared = RunConfig::load(&common.config).and_then(|mut config| {
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve(&base)
    });
    let resolved = match prepared {
        Ok(r) => r,
        Err(e) => {
            eprintln!("subfreq: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = output_dir(common.out.as_deref(), &resolved.config);
    let go = || match run(&resolved, &out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("subfreq: {e}");
            commands::error_code(&e)
        }
    };
    if common.threads == 0 {
        return go();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(common.threads).build() {
        Ok(pool) => pool.install(go),
        Err(e) => {
            eprintln!("subfreq: cannot start {} threads: {e}", common.threads);
            EXIT_INTERNAL
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Solve(common) => execute(common, cmd_solve),
        Command::Verify { check, common } => execute(common, |r, out| cmd_verify(r, *check, out)),
        Command::Suite(common) => execute(common, cmd_suite),
    }
}
