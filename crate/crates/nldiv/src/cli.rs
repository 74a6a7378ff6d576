//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, ConfigError, Experiment, ExperimentConfig};
use crate::experiments;
use crate::table::{write_atomic, Cell};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nldiv", version, about = "Batch experiments on anisotropic nonlocal divergence-form operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// c_ns and its limits at s -> 0 and s -> 1.
    Constants,
    /// Spectral correspondence round trip A -> N_A -> A.
    RecoverA,
    /// Build M from the field and check structure and kernel bounds.
    BuildM,
    /// Solve the semilinear Dirichlet problem at one s.
    Solve,
    /// Distances of u_s to the local solution along an s grid.
    SweepS,
    /// Form limits s -> 1, s -> 0 and the smoothing double limit.
    Limits,
    /// Seeded invariant suite.
    Verify,
}

impl Command {
    pub fn experiment(self) -> Experiment {
        match self {
            Command::Constants => Experiment::Constants,
            Command::RecoverA => Experiment::RecoverA,
            Command::BuildM => Experiment::BuildM,
            Command::Solve => Experiment::Solve,
            Command::SweepS => Experiment::SweepS,
            Command::Limits => Experiment::Limits,
            Command::Verify => Experiment::Verify,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Byte-reproducible output (no timing column).
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, env = "NLDIV_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub s: Option<f64>,
    #[arg(long, global = true)]
    pub elements: Option<usize>,
    /// Horizon; `inf` for none.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true)]
    pub field: Option<String>,
    #[arg(long, global = true)]
    pub probe: Option<String>,
}

/// Config file (or defaults) with command-line overrides applied, validated for `kind`.
pub fn resolve(common: &Common, kind: Experiment) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = common.n {
        cfg.n = v;
    }
    if let Some(v) = common.s {
        cfg.s = v;
    }
    if let Some(v) = common.elements {
        cfg.elements = v;
    }
    if let Some(v) = common.rho {
        cfg.rho = v;
    }
    if let Some(v) = &common.field {
        cfg.field = v.clone();
    }
    if let Some(v) = &common.probe {
        cfg.probe = v.clone();
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    cfg.deterministic |= common.deterministic;
    cfg.validate(kind)?;
    Ok(cfg)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let kind = cli.command.experiment();
    let cfg = match resolve(&cli.common, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("nldiv: config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(t) = cli.common.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let start = Instant::now();
    let outcome = match experiments::run(kind, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("nldiv {kind}: {e:#}");
            return EXIT_RUNTIME;
        }
    };
    let mut table = outcome.table;
    table.prepend_column("config_hash", Cell::S(cfg.hash(kind)));
    if !cfg.deterministic {
        table.append_column("elapsed_ms", Cell::I(start.elapsed().as_millis() as i64));
    }
    let bytes = match table.to_csv() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("nldiv {kind}: {e}");
            return EXIT_RUNTIME;
        }
    };
    let written = match &cli.common.out {
        Some(p) => write_atomic(p, &bytes).map_err(|e| e.to_string()),
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("nldiv {kind}: cannot write output: {e}");
        return EXIT_RUNTIME;
    }
    for f in &outcome.failures {
        eprintln!("nldiv {kind}: FAILED {f}");
    }
    if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_ASSERTION
    }
}
