// SPDX-License-Identifier: Apache-2.0

//! `casceq`: agreement statistics, noise mixing, probes, logit lens, LEACE
//! erasure and report rendering over prediction logs and hidden-state dumps.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use casceq::erasure::ConceptKind;
use casceq::probes::ProbeKind;
use casceq::report::Format;

#[derive(Parser, Debug)]
#[command(name = "casceq", version, about = "Test whether a speech LLM behaves like an ASR -> LLM cascade")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random draw (bootstrap, splits, noise offsets, probes).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap resamples.
    #[arg(long, global = true, default_value_t = 1000)]
    pub resamples: usize,
    /// Significance level for McNemar and FDR decisions.
    #[arg(long, global = true, default_value_t = 0.05)]
    pub alpha: f64,
    /// Directory for outputs that have no explicit `--out`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Report format (csv, json, markdown); `report` writes all three when unset.
    #[arg(long, global = true)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    /// Prediction log of system A (JSONL).
    #[arg(long)]
    pub a: PathBuf,
    /// Prediction log of system B (JSONL).
    #[arg(long)]
    pub b: PathBuf,
    /// Comma-separated label space.
    #[arg(long, value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
    #[arg(long, default_value = "task")]
    pub task: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cohen's kappa with a bootstrap interval.
    Agree(PairArgs),
    /// Conditional error overlap with its chance level.
    Overlap(PairArgs),
    /// McNemar's test on discordant correctness.
    Mcnemar(PairArgs),
    /// Benjamini-Hochberg adjustment.
    Fdr {
        /// Comma-separated p-values.
        #[arg(long, value_delimiter = ',', conflicts_with = "input")]
        p: Vec<f64>,
        /// File with one p-value per line, or a JSON array.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Mix babble noise into speech at a target SNR.
    MixNoise(MixArgs),
    /// Linear and CTC probes over hidden-state dumps.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Logit lens over a hidden-state dump.
    Lens(LensArgs),
    /// LEACE erasers.
    #[command(subcommand)]
    Leace(LeaceCommand),
    /// Run a manifest and render the report.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Conditions forming the FDR family (overrides the manifest).
        #[arg(long, value_delimiter = ',')]
        fdr_conditions: Vec<String>,
    },
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub signal: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub noise: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest", allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Batch file: a JSON array of {signal, noise, snr_db, out[, seed]}.
    #[arg(long, conflicts_with_all = ["signal", "noise", "snr_db", "out"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ProbeCommand {
    /// Fit one probe at one layer.
    Fit {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        layer: u32,
        /// energy, pitch, boc or ctc.
        #[arg(long)]
        target: ProbeKind,
        /// Fraction of utterances used for training.
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        /// Ridge penalty; automatic when unset.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved probe on a dump.
    Eval {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        dump: PathBuf,
    },
    /// Fit one probe per layer and emit the layer curve.
    Curve {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        target: ProbeKind,
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
pub struct LensArgs {
    #[command(subcommand)]
    pub decode: Option<LensCommand>,
    #[command(flatten)]
    pub common: LensCommon,
    /// Layers to read; every layer in the dump when unset.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<u32>,
    /// Write the per-layer precision curve here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LensCommon {
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// audio or all.
    #[arg(long, default_value = "audio")]
    pub positions: String,
    /// Count repeated tokens in bag precision.
    #[arg(long)]
    pub multiset: bool,
}

#[derive(Subcommand, Debug)]
pub enum LensCommand {
    /// Decode lens tokens at one layer into text, one JSON object per line.
    Decode {
        #[command(flatten)]
        common: LensCommon,
        #[arg(long)]
        layer: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum LeaceCommand {
    /// Fit one eraser per layer of a dump.
    Fit {
        #[arg(long)]
        dump: PathBuf,
        /// boc, proxy, ctc or acoustic.
        #[arg(long)]
        concept: ConceptKind,
        /// `auto` or a nonnegative ridge added to the covariance.
        #[arg(long, default_value = "auto")]
        shrinkage: String,
        /// Saved CTC probes (one per layer) for the ctc concept.
        #[arg(long = "probe")]
        probes: Vec<PathBuf>,
        /// Use softmax posteriors instead of one-hot CTC labels.
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random orthogonal erasers of matched rank.
    Random {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_values_t = casceq::data::DEFAULT_LAYERS)]
        layers: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an eraser stack to a dump.
    Apply {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check linear guardedness of a stack on held-out dumps.
    Verify {
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        dump: PathBuf,
        /// Saved CTC probes for stacks built from the ctc concept.
        #[arg(long = "probe")]
        probes: Vec<PathBuf>,
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                casceq::ErrorKind::Input => ExitCode::from(2),
                casceq::ErrorKind::Numerical => ExitCode::from(3),
            }
        }
    }
}
