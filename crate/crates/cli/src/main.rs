//! `mixalign` — exact experiments on two-component mixture sentence models.
//!
//! One scenario per invocation; composition happens in the shell. Every
//! scenario prints a one-line summary on stdout and exits 0, or prints a
//! single-line machine-readable error JSON on stderr and exits 1. Artifacts
//! (CSV/JSON) embed a `config-hash` derived from the scenario name, every
//! knob, and the content digest of any input file, so identical
//! configurations produce byte-identical files. No environment variables
//! are read; all randomness flows from `--seed`.

mod fmt;
mod provenance;
mod scenarios;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use scenarios::{CliAttackMode, CurveMetric, EstimateWhat};

#[derive(Parser)]
#[command(
    name = "mixalign",
    version,
    about = "Exact attack, divergence, and bound experiments on mixture sentence models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model file, reporting its shape.
    Validate {
        /// Model JSON file.
        model: PathBuf,
    },
    /// Monte Carlo estimate of a divergence or variance rate.
    Estimate {
        /// Which rate to estimate.
        #[arg(long, value_enum)]
        what: EstimateWhat,
        /// Model JSON file (must be a mixture).
        #[arg(long)]
        model: PathBuf,
        /// Largest prefix (or continuation) length measured.
        #[arg(long)]
        max_len: usize,
        /// Monte Carlo trials per length.
        #[arg(long)]
        trials: usize,
        /// Master seed for all sampling streams.
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Construct a misaligning prompt and report its exact effect.
    Attack {
        /// Model JSON file (must be a mixture).
        #[arg(long)]
        model: PathBuf,
        /// Prompt construction mode.
        #[arg(long, value_enum)]
        mode: CliAttackMode,
        /// Length budget for the constructed prompt.
        #[arg(long)]
        max_len: usize,
        /// Master seed (sampling mode and aligned-prefix draws).
        #[arg(long)]
        seed: u64,
        /// Sample an aligned prefix of this many sentences from the
        /// well-behaved component and re-misalign after it (greedy only).
        #[arg(long)]
        prefix_len: Option<usize>,
        /// Behavior slack the re-misalignment threshold targets.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Failure-probability budget for the re-misalignment threshold.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Measure a decay curve against its closed-form envelope.
    Curve {
        /// Model JSON file (must be a mixture).
        #[arg(long)]
        model: PathBuf,
        /// Which curve to measure.
        #[arg(long, value_enum)]
        metric: CurveMetric,
        /// Largest prompt length measured.
        #[arg(long)]
        max_len: usize,
        /// Monte Carlo prompts per length.
        #[arg(long)]
        trials: usize,
        /// Master seed for prompt sampling.
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a budgeted multi-turn conversation attack.
    Converse {
        /// Model JSON file (must be a mixture).
        #[arg(long)]
        model: PathBuf,
        /// Number of attacker turns.
        #[arg(long)]
        turns: usize,
        /// Failure-probability budget δ.
        #[arg(long)]
        delta: f64,
        /// Behavior slack ε.
        #[arg(long)]
        epsilon: f64,
        /// Master seed for answer sampling.
        #[arg(long)]
        seed: u64,
        /// Output JSON transcript path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate every closed-form bound for a parameter file.
    Bounds {
        /// BoundParams JSON file.
        #[arg(long)]
        params: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the exact inequality suite on seeded random mixtures.
    Verify {
        /// Number of random mixtures checked.
        #[arg(long)]
        trials: usize,
        /// Master seed deriving every mixture.
        #[arg(long)]
        seed: u64,
    },
    /// Synthesize a certified desk-scale mixture model.
    #[command(allow_negative_numbers = true)]
    Synth {
        /// Vocabulary size (>= 4).
        #[arg(long)]
        vocab: usize,
        /// Mixture prior of the ill-behaved component.
        #[arg(long)]
        alpha: f64,
        /// Behavior ceiling the ill-behaved component must certify.
        #[arg(long)]
        gamma: f64,
        /// Target per-sentence divergence rate ("inf" for disjoint supports).
        #[arg(long)]
        beta: f64,
        /// Master seed for the rejection-sampling generator.
        #[arg(long)]
        seed: u64,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn scenario_name(&self) -> &'static str {
        match self {
            Self::Validate { .. } => "validate",
            Self::Estimate { .. } => "estimate",
            Self::Attack { .. } => "attack",
            Self::Curve { .. } => "curve",
            Self::Converse { .. } => "converse",
            Self::Bounds { .. } => "bounds",
            Self::Verify { .. } => "verify",
            Self::Synth { .. } => "synth",
        }
    }
}

fn dispatch(command: &Command) -> anyhow::Result<String> {
    match command {
        Command::Validate { model } => scenarios::run_validate(model),
        Command::Estimate {
            what,
            model,
            max_len,
            trials,
            seed,
            out,
        } => scenarios::run_estimate(*what, model, *max_len, *trials, *seed, out),
        Command::Attack {
            model,
            mode,
            max_len,
            seed,
            prefix_len,
            epsilon,
            delta,
        } => scenarios::run_attack(model, *mode, *max_len, *seed, *prefix_len, *epsilon, *delta),
        Command::Curve {
            model,
            metric,
            max_len,
            trials,
            seed,
            out,
        } => scenarios::run_curve(model, *metric, *max_len, *trials, *seed, out),
        Command::Converse {
            model,
            turns,
            delta,
            epsilon,
            seed,
            out,
        } => scenarios::run_converse(model, *turns, *delta, *epsilon, *seed, out),
        Command::Bounds { params, out } => scenarios::run_bounds(params, out),
        Command::Verify { trials, seed } => scenarios::run_verify(*trials, *seed),
        Command::Synth {
            vocab,
            alpha,
            gamma,
            beta,
            seed,
            out,
        } => scenarios::run_synth(*vocab, *alpha, *gamma, *beta, *seed, out),
    }
}

fn main() {
    let cli = Cli::parse();
    let scenario = cli.command.scenario_name();
    match dispatch(&cli.command) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            let payload = serde_json::json!({
                "scenario": scenario,
                "error": format!("{err:#}"),
            });
            eprintln!("{payload}");
            std::process::exit(1);
        }
    }
}
