//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! numerical routine fails or an optimum cannot be certified.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{read_config, Params};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// Wraps a library error, naming the operation that raised it.
    pub(crate) fn from_model(op: &str, e: crate::Error) -> Self {
        let msg = format!("{op}: {e}");
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Usage(msg)
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "csopt",
    version,
    about = "Carrier-sensing threshold analysis for CSMA/CA networks with binary exponential backoff"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Model parameters shared by every command. List-valued flags take
/// `a,b,c` or `start:stop:step`.
#[derive(Debug, Args)]
struct CommonArgs {
    /// Node density λ in nodes/m² (list for tau-table)
    #[arg(long, global = true, value_name = "LIST")]
    lambda: Option<String>,
    /// Transmit power in dBm
    #[arg(long = "p-dbm", global = true, allow_hyphen_values = true, value_name = "DBM")]
    p_dbm: Option<String>,
    /// Carrier-sensing threshold(s) in dBm
    #[arg(long = "is-dbm", global = true, allow_hyphen_values = true, value_name = "LIST")]
    is_dbm: Option<String>,
    /// Data target SIR(s) β in dB
    #[arg(long = "beta-db", global = true, allow_hyphen_values = true, value_name = "LIST")]
    beta_db: Option<String>,
    /// Control-message target SIR(s) β_c in dB
    #[arg(long = "beta-c-db", global = true, allow_hyphen_values = true, value_name = "LIST")]
    beta_c_db: Option<String>,
    /// Link distance r_t in meters
    #[arg(long = "rt-m", global = true, value_name = "M")]
    rt_m: Option<String>,
    /// Path-loss exponent
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Initial contention window W0
    #[arg(long, global = true)]
    w0: Option<String>,
    /// Maximum backoff stage m
    #[arg(long, global = true)]
    m: Option<String>,
    /// Seed for every stochastic output; drawn and printed when omitted
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<String>,
    /// Write the result here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<String>,
    /// key=value file; flags given on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl CommonArgs {
    fn entries(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("lambda", self.lambda.clone()),
            ("p-dbm", self.p_dbm.clone()),
            ("is-dbm", self.is_dbm.clone()),
            ("beta-db", self.beta_db.clone()),
            ("beta-c-db", self.beta_c_db.clone()),
            ("rt-m", self.rt_m.clone()),
            ("alpha", self.alpha.clone()),
            ("w0", self.w0.clone()),
            ("m", self.m.clone()),
            ("seed", self.seed.clone()),
            ("jobs", self.jobs.clone()),
            ("out", self.out.clone()),
        ]
    }
}

/// Settings of the slotted MAC simulator.
#[derive(Debug, Args)]
struct MacArgs {
    /// Independent runs per cell
    #[arg(long)]
    seeds: Option<String>,
    /// Slots per run, warmup included
    #[arg(long)]
    slots: Option<String>,
    /// Side of the square region in meters
    #[arg(long = "region-m")]
    region_m: Option<String>,
    /// Use a bounded square instead of a torus
    #[arg(long)]
    bounded: bool,
}

impl MacArgs {
    fn entries(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("seeds", self.seeds.clone()),
            ("slots", self.slots.clone()),
            ("region-m", self.region_m.clone()),
            ("bounded", self.bounded.then(|| "true".to_string())),
        ]
    }
}

/// Settings of the snapshot simulator.
#[derive(Debug, Args)]
struct GeoArgs {
    /// Snapshots per estimate
    #[arg(long)]
    replications: Option<String>,
    /// Side of the square region in meters
    #[arg(long = "region-m")]
    region_m: Option<String>,
    /// Use a bounded square instead of a torus
    #[arg(long)]
    bounded: bool,
}

impl GeoArgs {
    fn entries(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("replications", self.replications.clone()),
            ("region-m", self.region_m.clone()),
            ("bounded", self.bounded.then(|| "true".to_string())),
        ]
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Medium access probability τ, analytic and simulated, as CSV
    TauTable {
        /// Leave the simulated columns empty
        #[arg(long = "skip-sim")]
        skip_sim: bool,
        #[command(flatten)]
        mac: MacArgs,
    },
    /// Area spectral efficiency against the sensing threshold, as CSV
    AseSweep {
        /// Sweep start in dBm (ignored when --is-dbm is given)
        #[arg(long = "from-dbm", allow_hyphen_values = true)]
        from_dbm: Option<String>,
        /// Sweep end in dBm, inclusive
        #[arg(long = "to-dbm", allow_hyphen_values = true)]
        to_dbm: Option<String>,
        /// Sweep step in dB
        #[arg(long = "step-db")]
        step_db: Option<String>,
        /// Add snapshot-simulation columns
        #[arg(long = "with-sim")]
        with_sim: bool,
        #[command(flatten)]
        geo: GeoArgs,
    },
    /// ASE-optimal sensing threshold for each β, as JSON
    Optimize {
        /// newton or grid
        #[arg(long)]
        method: Option<String>,
        /// full (re-solve τ inside derivatives) or frozen
        #[arg(long)]
        derivative: Option<String>,
        /// contention (BEB τ) or full-access (τ = 1) mapping of the no-BEB range
        #[arg(long = "no-beb-mapping")]
        no_beb_mapping: Option<String>,
    },
    /// Slotted backoff simulation at one operating point, as JSON
    MacSim {
        #[command(flatten)]
        mac: MacArgs,
    },
    /// Snapshot estimates of busy probability, p_s, λ_t and η, as JSON
    GeoSim {
        #[command(flatten)]
        geo: GeoArgs,
    },
}

impl Command {
    fn entries(&self) -> Vec<(&'static str, Option<String>)> {
        let yes = |b: bool| b.then(|| "true".to_string());
        match self {
            Command::TauTable { skip_sim, mac } => {
                let mut v = mac.entries();
                v.push(("skip-sim", yes(*skip_sim)));
                v
            }
            Command::AseSweep {
                from_dbm,
                to_dbm,
                step_db,
                with_sim,
                geo,
            } => {
                let mut v = geo.entries();
                v.push(("from-dbm", from_dbm.clone()));
                v.push(("to-dbm", to_dbm.clone()));
                v.push(("step-db", step_db.clone()));
                v.push(("with-sim", yes(*with_sim)));
                v
            }
            Command::Optimize {
                method,
                derivative,
                no_beb_mapping,
            } => vec![
                ("method", method.clone()),
                ("derivative", derivative.clone()),
                ("no-beb-mapping", no_beb_mapping.clone()),
            ],
            Command::MacSim { mac } => mac.entries(),
            Command::GeoSim { geo } => geo.entries(),
        }
    }

    fn is_stochastic(&self, params: &Params) -> Result<bool, CliError> {
        Ok(match self {
            Command::TauTable { .. } => !params.flag("skip-sim")?,
            Command::AseSweep { .. } => params.flag("with-sim")?,
            Command::Optimize { .. } => false,
            Command::MacSim { .. } | Command::GeoSim { .. } => true,
        })
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{e}");
                EXIT_OK
            };
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(path) => read_config(path)?,
        None => Default::default(),
    };
    let mut flags = cli.common.entries();
    flags.extend(cli.command.entries());
    let params = Params::layered(file, flags);

    let seed = if cli.command.is_stochastic(&params)? {
        match params.opt_u64("seed")? {
            Some(s) => Some(s),
            None => {
                let s: u64 = rand::random();
                let _ = writeln!(stderr, "seed: {s}");
                Some(s)
            }
        }
    } else {
        None
    };

    let jobs = params.usize_or("jobs", 0)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;

    let outcome = pool.install(|| match &cli.command {
        Command::TauTable { .. } => commands::tau_table(&params, seed),
        Command::AseSweep { .. } => commands::ase_sweep(&params, seed),
        Command::Optimize { .. } => commands::optimize(&params),
        Command::MacSim { .. } => commands::mac_sim(&params, seed),
        Command::GeoSim { .. } => commands::geo_sim(&params, seed),
    })?;

    match params.raw("out") {
        Some(path) => {
            std::fs::write(path, &outcome.text).map_err(|e| CliError::Usage(format!("cannot write {path}: {e}")))?
        }
        None => stdout
            .write_all(outcome.text.as_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))?,
    }
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// A command's rendered output, plus a failure to report after writing it.
pub(crate) struct Outcome {
    pub text: String,
    pub deferred: Option<CliError>,
}
