//! `toric-learn`: dataset generation, training, correction runs and scans,
//! each writing tidy CSV/JSON plus a hashed manifest.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<toric_learn::Error> for CliError {
    fn from(e: toric_learn::Error) -> Self {
        use toric_learn::Error as E;
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e {
            E::Io(_) | E::Json(_) | E::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "toric-learn", version, about = "Learn and correct the fields of a disordered toric code")]
struct Cli {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $TORIC_LEARN_OUTPUT/<command> or runs/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 makes every run bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice size.
    #[arg(short, long, global = true)]
    k: Option<usize>,
    /// Override any config field, e.g. `--set train.steps=2000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_kv)]
    set: Vec<(String, String)>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training dataset (CSV plus JSON sidecar).
    GenData {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        b_max: Option<f64>,
        /// monte_carlo or enumeration
        #[arg(long)]
        source: Option<String>,
    },
    /// Train the regressor; writes the model and the loss trace.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the iterative correction protocol on random targets.
    Correct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n_seeds: Option<usize>,
        /// Gaussian measurement noise.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Final errors over a grid of measurement-noise levels.
    NoiseSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n_seeds: Option<usize>,
    },
    /// Train and evaluate at several lattice sizes.
    Scaling {
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
    },
    /// Sample p(e_r) and fit the inverse polynomial.
    FitEr,
    /// Heat-capacity scans at two lattice sizes and a transition verdict.
    PhaseScan,
    /// Print the resolved configuration as JSON.
    ShowConfig,
    /// Recompute the hashes recorded in a manifest.
    Verify { manifest: PathBuf },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

fn json<T: serde::Serialize>(v: Option<T>) -> Option<String> {
    v.map(|v| serde_json::to_string(&v).expect("flag value serializes"))
}

/// Dedicated flags, applied after `--set` so they win.
fn overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut o = cli.set.clone();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            o.push((k.to_string(), v));
        }
    };
    put("output", json(cli.out.as_ref()));
    put("threads", json(cli.threads));
    put("seed", json(cli.seed));
    put("k", json(cli.k));
    match &cli.command {
        Command::GenData { n, b_max, source } => {
            put("dataset.n", json(*n));
            put("dataset.b_max", json(*b_max));
            put("dataset.source", json(source.as_ref()));
        }
        Command::Train { steps, .. } => put("train.steps", json(*steps)),
        Command::Correct { n_seeds, sigma, .. } => {
            put("correction.n_seeds", json(*n_seeds));
            put("correction.noise_sigma", json(*sigma));
        }
        Command::NoiseSweep { n_seeds, .. } => put("noise.n_seeds", json(*n_seeds)),
        Command::Scaling { ks } if !ks.is_empty() => put("scaling.ks", json(Some(ks))),
        _ => {}
    }
    o
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Verify { manifest } = &cli.command {
        let drift = output::verify(manifest)?;
        if drift.is_empty() {
            println!("ok");
            return Ok(());
        }
        return Err(CliError::Io(format!("manifest drift:\n{}", drift.join("\n"))));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides(cli))?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let manifest = match &cli.command {
        Command::GenData { .. } => commands::gen_data(&cfg)?,
        Command::Train { data, .. } => commands::train_cmd(&cfg, data)?,
        Command::Correct { model, .. } => commands::correct(&cfg, model)?,
        Command::NoiseSweep { model, .. } => commands::noise_sweep(&cfg, model)?,
        Command::Scaling { .. } => commands::scaling(&cfg)?,
        Command::FitEr => commands::fit_er(&cfg)?,
        Command::PhaseScan => commands::phase_scan(&cfg)?,
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            return Ok(());
        }
        Command::Verify { .. } => unreachable!("handled above"),
    };
    println!("{}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
