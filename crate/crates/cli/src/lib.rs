//! Command-line front end: loads a scenario file, orchestrates the analyses
//! and emits CSV/JSON results plus a run manifest.
//!
//! Every run is reproducible: outputs depend only on the scenario file and
//! the seed, never on the thread count. Exit code 2 flags scenario/schema
//! problems, 3 flags physics or capacity errors surfaced by the simulation;
//! both print a machine-readable error JSON on stderr.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

pub use output::Manifest;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "VLCSIM_OUT";

#[derive(Parser)]
#[command(name = "vlcsim", version, about = "Indoor VLC system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing); VLCSIM_OUT overrides.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale both discretization edges by 4 for a quick run.
    #[arg(long)]
    coarse: bool,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Illuminance grid and lighting compliance.
    Illumination(RunArgs),
    /// Impulse responses at configured positions.
    Impulse(RunArgs),
    /// Delay spread, bandwidth and SNR along walking lines.
    Sweep(RunArgs),
    /// Tone-detection statistics and identification error probability.
    ScmCalibrate(RunArgs),
    /// Multiuser allocation and per-channel data rates.
    Multiuser(RunArgs),
    /// Occupancy-weighted SINR distributions.
    Mobility(RunArgs),
    /// Write the bundled reference scenario files.
    EmitScenarios {
        #[arg(long)]
        out: PathBuf,
    },
}

/// A run failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub exit: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn schema(message: impl Into<String>) -> Self {
        Self {
            exit: 2,
            kind: "schema",
            message: message.into(),
        }
    }

    fn model(err: vlcsim_core::Error) -> Self {
        let kind = match &err {
            vlcsim_core::Error::Config(_) => "schema",
            vlcsim_core::Error::Capacity(_) => "capacity",
            _ => "physics",
        };
        Self {
            exit: if kind == "schema" { 2 } else { 3 },
            kind,
            message: err.to_string(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            exit: 2,
            kind: "io",
            message: message.into(),
        }
    }
}

impl From<vlcsim_core::Error> for Failure {
    fn from(err: vlcsim_core::Error) -> Self {
        Failure::model(err)
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::io(err.to_string())
    }
}

type RunResult<T> = std::result::Result<T, Failure>;

/// Parses and executes a command line; returns the process exit code.
pub fn run_cli<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "kind": f.kind, "message": f.message } })
            );
            f.exit
        }
    }
}

fn dispatch(cli: Cli) -> RunResult<()> {
    match cli.command {
        Command::EmitScenarios { out } => commands::emit_scenarios(&out),
        Command::Illumination(a) => run_analysis(a, "illumination", commands::illumination),
        Command::Impulse(a) => run_analysis(a, "impulse", commands::impulse),
        Command::Sweep(a) => run_analysis(a, "sweep", commands::sweep),
        Command::ScmCalibrate(a) => run_analysis(a, "scm-calibrate", commands::scm_calibrate),
        Command::Multiuser(a) => run_analysis(a, "multiuser", commands::multiuser),
        Command::Mobility(a) => run_analysis(a, "mobility", commands::mobility),
    }
}

/// Shared state handed to every analysis command.
pub(crate) struct Runtime {
    pub scenario: vlcsim_core::scenario::Scenario,
    pub built: vlcsim_core::scenario::BuiltScenario,
    pub seed: u64,
    pub out: PathBuf,
    pub scenario_sha256: String,
}

fn resolve_out(arg: &Option<PathBuf>) -> RunResult<PathBuf> {
    if let Ok(env) = std::env::var(OUT_ENV) {
        if !env.is_empty() {
            return Ok(PathBuf::from(env));
        }
    }
    arg.clone()
        .ok_or_else(|| Failure::schema(format!("no output directory: pass --out or set {OUT_ENV}")))
}

fn load_scenario(path: &Path, coarse: bool) -> RunResult<vlcsim_core::scenario::Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(Failure::schema(format!("{} is empty", path.display())));
    }
    let scenario: vlcsim_core::scenario::Scenario =
        toml::from_str(&text).map_err(|e| Failure::schema(format!("{}: {e}", path.display())))?;
    let scenario = if coarse { scenario.coarsened(4.0) } else { scenario };
    scenario.validate().map_err(Failure::model)?;
    Ok(scenario)
}

fn sha256_hex(path: &Path) -> RunResult<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn run_analysis(
    args: RunArgs,
    name: &'static str,
    body: fn(&Runtime, &mut Manifest) -> RunResult<()>,
) -> RunResult<()> {
    let out = resolve_out(&args.out)?;
    std::fs::create_dir_all(&out)?;
    let scenario = load_scenario(&args.scenario, args.coarse)?;
    let scenario_sha256 = sha256_hex(&args.scenario)?;
    let seed = args.seed.unwrap_or(scenario.analysis.seed);
    let built = scenario.build().map_err(Failure::model)?;
    let runtime = Runtime {
        scenario,
        built,
        seed,
        out,
        scenario_sha256,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::io(e.to_string()))?;

    let mut manifest = Manifest::new(name, &runtime);
    pool.install(|| body(&runtime, &mut manifest))?;
    manifest.attach_deltas(&runtime.scenario.analysis.expectations);
    manifest.write(&runtime.out)?;
    Ok(())
}
