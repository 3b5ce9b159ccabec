//! Command-line front end; argument parsing only, all work in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use delaynet::ddesim::HistorySegment;
use delaynet::invariants::{equilibrium_in_set, invariant_set};
use delaynet::net::{parse_network, parse_witness, ConjugacyWitness, DelayedNetwork};
use delaynet::pipeline::{self, AnalyzeOptions, Outcome};

#[derive(Parser)]
#[command(name = "delaynet", about = "Analysis of delayed mass-action reaction networks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonIo {
    /// Network file in the line-oriented format.
    #[arg(long)]
    network: PathBuf,
    /// Witness file (`L` line plus `target:` block).
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Residual tolerance for equivalence / conjugacy checks.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit timestamps so identical inputs give byte-identical reports.
    #[arg(long)]
    no_meta: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: structure, conjugacy, classification, optional
    /// certified run from a history.
    Analyze {
        #[command(flatten)]
        io: CommonIo,
        /// Initial history: inline vector "x1,x2,..." or a CSV file.
        #[arg(long)]
        history: Option<String>,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
    /// Structural report: complexes, linkage classes, subspaces, deficiency.
    Structure {
        #[command(flatten)]
        io: CommonIo,
    },
    /// Dynamic equivalence / linear conjugacy check against the witness.
    Conjugacy {
        #[command(flatten)]
        io: CommonIo,
    },
    /// Stability classification and RHS decomposition.
    Classify {
        #[command(flatten)]
        io: CommonIo,
    },
    /// Integrate the delay equations and write the trajectory.
    Simulate {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        history: String,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Output format for the trajectory.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Certified descent run: classification plus Lyapunov monitoring.
    Certify {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        history: String,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
    /// Equilibrium inside the invariant set of the given history.
    Equilibrium {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        history: String,
    },
    /// Reproduce the four-trajectory level-set experiment on the bundled
    /// degenerate kinase network.
    ReproFig6 {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 150.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.005)]
        step: f64,
    },
}

fn load_network(path: &PathBuf) -> Result<DelayedNetwork> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let net = parse_network(&text).with_context(|| format!("parsing {}", path.display()))?;
    let diags = delaynet::net::validate_network(&net);
    if !diags.is_empty() {
        anyhow::bail!("{} failed validation: {}", path.display(), diags[0]);
    }
    Ok(net)
}

fn load_witness(path: &Option<PathBuf>, net: &DelayedNetwork) -> Result<Option<ConjugacyWitness>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(Some(parse_witness(&text, net).with_context(|| format!("parsing {}", p.display()))?))
        }
    }
}

fn emit(io: &CommonIo, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match &io.out {
        Some(p) => std::fs::write(p, text.as_bytes())?,
        None => println!("{text}"),
    }
    Ok(())
}

fn history_segment(io_net: &DelayedNetwork, history: &str) -> Result<HistorySegment> {
    Ok(pipeline::parse_history(history, io_net, 0.0)?)
}

/// Exit codes: 0 certified / success, 2 classification or numeric-check
/// failure, 1 I/O and validation errors.
fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze { io, history, t_end, step } => {
            let net = load_network(&io.network)?;
            let witness = load_witness(&io.witness, &net)?;
            let psi = history.as_deref().map(|h| history_segment(&net, h)).transpose()?;
            let opts = AnalyzeOptions {
                tol: io.tol,
                t_end,
                step,
                history: psi,
                no_meta: io.no_meta,
                out: io.out.clone(),
            };
            let (report, outcome) = pipeline::analyze(&net, witness.as_ref(), &opts)?;
            if io.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Ok(if outcome == Outcome::Certified { 0 } else { 2 })
        }
        Command::Structure { io } => {
            let net = load_network(&io.network)?;
            emit(&io, &pipeline::finalize(pipeline::structure_json(&net), io.no_meta))?;
            Ok(0)
        }
        Command::Conjugacy { io } => {
            let net = load_network(&io.network)?;
            let witness = load_witness(&io.witness, &net)?
                .ok_or_else(|| anyhow::anyhow!("--witness required for the conjugacy check"))?;
            let report = pipeline::finalize(pipeline::conjugacy_json(&net, &witness, io.tol)?, io.no_meta);
            let ok = report["kind"] != "neither";
            emit(&io, &report)?;
            Ok(if ok { 0 } else { 2 })
        }
        Command::Classify { io } => {
            let net = load_network(&io.network)?;
            let witness = load_witness(&io.witness, &net)?;
            let (cert, report) = pipeline::classify_stage(&net, witness.as_ref(), io.tol);
            emit(&io, &pipeline::finalize(report, io.no_meta))?;
            Ok(if cert.accepted() { 0 } else { 2 })
        }
        Command::Simulate { io, history, t_end, step, format } => {
            let net = load_network(&io.network)?;
            let psi = history_segment(&net, &history)?;
            let traj = delaynet::ddesim::simulate(&net, &psi, t_end, step)?;
            let body = match format.as_str() {
                "json" => serde_json::to_string_pretty(&pipeline::trajectory_json(&net, &traj))?,
                _ => pipeline::trajectory_csv(&net, &traj),
            };
            match &io.out {
                Some(p) => std::fs::write(p, body.as_bytes())?,
                None => print!("{body}"),
            }
            Ok(0)
        }
        Command::Certify { io, history, t_end, step } => {
            let net = load_network(&io.network)?;
            let witness = load_witness(&io.witness, &net)?;
            let psi = history_segment(&net, &history)?;
            let opts = AnalyzeOptions {
                tol: io.tol,
                t_end,
                step,
                history: Some(psi),
                no_meta: io.no_meta,
                out: io.out.clone(),
            };
            let (report, outcome) = pipeline::analyze(&net, witness.as_ref(), &opts)?;
            if io.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Ok(if outcome == Outcome::Certified { 0 } else { 2 })
        }
        Command::Equilibrium { io, history } => {
            let net = load_network(&io.network)?;
            let witness = load_witness(&io.witness, &net)?
                .ok_or_else(|| anyhow::anyhow!("--witness required for the equilibrium solve"))?;
            let psi = history_segment(&net, &history)?;
            let (cert, _) = pipeline::classify_stage(&net, Some(&witness), io.tol);
            let kind = pipeline::kind_for_certificate(&cert);
            let spec = invariant_set(&net, Some(&witness), &psi, kind)?;
            let x = equilibrium_in_set(&net, &witness, &spec, None)?;
            let report = serde_json::json!({
                "schema": pipeline::SCHEMA,
                "invariant_set": spec.to_json(),
                "equilibrium": x,
            });
            emit(&io, &report)?;
            Ok(0)
        }
        Command::ReproFig6 { out_dir, t_end, step } => {
            let out = pipeline::repro_fig6(&out_dir, t_end, step)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
            Ok(if out.all_converged { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
