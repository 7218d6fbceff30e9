use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use franson_sec::mcsim::{self, ProtocolConfig};
use franson_sec::metrics::ClosedForm;
use franson_sec::mubnet;
use franson_sec_cli::output::{versioned_json, write_atomic, RunManifest};
use franson_sec_cli::sweep::{self, SweepSpec};
use franson_sec_cli::verify;
use serde::Serialize;

/// Largest |z| accepted by `simulate --gate`.
const GATE_SIGMA: f64 = 3.0;
/// Largest certification deviation accepted by `mub`.
const MUB_TOLERANCE: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "franson-sec", version, about = "Time-bin QKD security sweeps, simulations and checks")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Information-disturbance sweep to CSV.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo run of the protocol.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "FRANSON_SEC_SEED")]
        seed: Option<u64>,
        /// Frame count for presets, or an override for configs.
        #[arg(long)]
        n_frames: Option<u64>,
        /// Exit with status 2 when any |z| exceeds 3.
        #[arg(long)]
        gate: bool,
    },
    /// Check closed-form disturbances against exact enumeration.
    Verify {
        /// One of window, multipeak, multi_setting, product.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long = "L")]
        peaks: Option<usize>,
        #[arg(long)]
        dtau: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        w: Option<usize>,
    },
    /// Synthesize and certify a Fourier-basis network.
    Mub {
        /// Network depth; measures N bits per photon.
        #[arg(long = "N")]
        depth: usize,
        /// Netlist JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Sweep { source, out } => cmd_sweep(&source, &out),
        Command::Simulate {
            source,
            out,
            seed,
            n_frames,
            gate,
        } => cmd_simulate(&source, out.as_deref(), seed, n_frames, gate),
        Command::Verify {
            formula,
            peaks,
            dtau,
            d,
            w,
        } => cmd_verify(formula.as_deref(), peaks, dtau, d, w),
        Command::Mub { depth, out } => cmd_mub(depth, out.as_deref()),
    }
}

fn load<T: serde::de::DeserializeOwned>(source: &Source, preset: impl Fn(&str) -> Option<T>, names: &[&str]) -> Result<T> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        }
        (None, Some(name)) => {
            preset(name).with_context(|| format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
        }
        (None, None) => bail!("one of --config or --preset is required"),
    }
}

fn cmd_sweep(source: &Source, out: &Path) -> Result<Outcome> {
    let start = Instant::now();
    let spec: SweepSpec = load(source, sweep::preset, &sweep::PRESET_NAMES)?;
    let table = sweep::run_sweep(&spec)?;
    write_atomic(out, table.to_csv().as_bytes())?;
    RunManifest::new("sweep", &spec, None, &[out], start.elapsed()).write_beside(out)?;
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    config: &'a ProtocolConfig,
    stats: &'a mcsim::SiftedStats,
    exact: &'a franson_sec::metrics::DisturbanceReport,
    z_scores: Option<mcsim::ZScores>,
    z_score_error: Option<String>,
}

fn cmd_simulate(
    source: &Source,
    out: Option<&Path>,
    seed: Option<u64>,
    n_frames: Option<u64>,
    gate: bool,
) -> Result<Outcome> {
    let start = Instant::now();
    let frames = n_frames.unwrap_or(1_000_000);
    let mut config: ProtocolConfig =
        load(source, |name| mcsim::preset(name, frames, 0), &mcsim::PRESET_NAMES)?;
    if let Some(n) = n_frames {
        config.n_frames = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let stats = mcsim::run_protocol(&config)?;
    let exact = mcsim::exact_report(&config)?;
    let (z_scores, z_score_error) = match mcsim::compare_to_exact(&stats, &exact, &config) {
        Ok(z) => (Some(z), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = z_scores.as_ref().is_some_and(|z| z.max_abs() <= GATE_SIGMA);
    let bytes = versioned_json(&SimulationReport {
        config: &config,
        stats: &stats,
        exact: &exact,
        z_scores,
        z_score_error,
    })?;
    match out {
        Some(path) => {
            write_atomic(path, &bytes)?;
            RunManifest::new("simulate", &config, Some(config.seed), &[path], start.elapsed()).write_beside(path)?;
        }
        None => print!("{}", String::from_utf8(bytes)?),
    }
    Ok(if gate && !passed { Outcome::Failed } else { Outcome::Ok })
}

fn cmd_verify(
    formula: Option<&str>,
    peaks: Option<usize>,
    dtau: Option<usize>,
    d: Option<usize>,
    w: Option<usize>,
) -> Result<Outcome> {
    let checks = match formula {
        Some(name) => {
            let get = |key: &str| match key {
                "L" => peaks,
                "dtau" => dtau,
                "d" => d,
                "w" => w,
                _ => None,
            };
            vec![verify::check(ClosedForm::from_name(name, get)?)?]
        }
        None => verify::run_grid(&verify::default_grid())?,
    };
    let mut failed = 0;
    for c in &checks {
        println!("{}", c.line());
        failed += usize::from(!c.passed());
    }
    println!("{} checks, {} failed", checks.len(), failed);
    Ok(if failed == 0 { Outcome::Ok } else { Outcome::Failed })
}

#[derive(Serialize)]
struct MubReport {
    depth: usize,
    num_blocks: usize,
    certification: Option<mubnet::Certification>,
}

fn cmd_mub(depth: usize, out: Option<&Path>) -> Result<Outcome> {
    let start = Instant::now();
    let net = mubnet::synthesize_network(depth)?;
    let certification = if depth <= mubnet::MAX_CERTIFY_DEPTH {
        Some(mubnet::certify(&net)?)
    } else {
        None
    };
    let ok = certification
        .as_ref()
        .is_none_or(|c| c.max_deviation() <= MUB_TOLERANCE && c.search_agrees != Some(false));
    let report = MubReport {
        depth,
        num_blocks: net.nodes().len(),
        certification,
    };
    print!("{}", String::from_utf8(versioned_json(&report)?)?);
    if let Some(path) = out {
        let mut bytes = serde_json::to_vec_pretty(&mubnet::netlist(&net))?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
        RunManifest::new("mub", &serde_json::json!({ "N": depth }), None, &[path], start.elapsed()).write_beside(path)?;
    }
    Ok(if ok { Outcome::Ok } else { Outcome::Failed })
}
