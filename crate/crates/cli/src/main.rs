//! `matldc`: train, evaluate, run leave-one-subject-out protocols and sweeps,
//! and generate synthetic data, all driven by a TOML run file.

mod artifacts;
mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use matldc::trainer::{Provenance, CONFIG_KEYS};

use config::Override;

#[derive(Debug, Parser)]
#[command(name = "matldc", version, about = "Cross-subject transfer learning with domain aggregation and prototypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on one fold's source subjects and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Held-out subject id (overrides `fold.target_subject`).
        #[arg(long)]
        target: Option<i64>,
    },
    /// Evaluate a checkpoint on its held-out subject and write predictions.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file; defaults to `<output>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Leave-one-subject-out run over every subject.
    Protocol {
        #[command(flatten)]
        common: Common,
    },
    /// Pointwise vs pairwise accuracy under source label noise.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Protocol accuracy for each superdomain count.
    KSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run file.
    config: Option<PathBuf>,
    /// Override any run-file key, e.g. `--set train.K=3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = Override::parse)]
    set: Vec<Override>,
    /// Master seed (`train.seed`; `data.synth.seed` for `synth`).
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs (`train.max_epoch`).
    #[arg(long)]
    epochs: Option<u64>,
    /// Number of superdomains (`train.K`).
    #[arg(short = 'K', long = "superdomains", value_name = "K")]
    k: Option<u64>,
    /// Disable a component (repeatable; appended to `train.disable`).
    #[arg(long, value_name = "ABLATION")]
    disable: Vec<String>,
    /// Stratify minibatches by subject (`train.balanced_domains`).
    #[arg(long)]
    balanced_domains: bool,
    /// Artifact directory (`output`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads for folds; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Include MMD matrices and prototype norms in the per-epoch logs.
    #[arg(long)]
    dump_diagnostics: bool,
}

impl Common {
    fn overrides(&self, synth: bool) -> Vec<Override> {
        use toml::Value;
        let mut out = Vec::new();
        if let Some(s) = self.seed {
            let key = if synth { "data.synth.seed" } else { "train.seed" };
            out.push(Override::new(key, Value::Integer(s as i64)));
        }
        if let Some(e) = self.epochs {
            out.push(Override::new("train.max_epoch", Value::Integer(e as i64)));
        }
        if let Some(k) = self.k {
            out.push(Override::new("train.K", Value::Integer(k as i64)));
        }
        if self.balanced_domains {
            out.push(Override::new("train.balanced_domains", Value::Boolean(true)));
        }
        if let Some(o) = &self.output {
            out.push(Override::new("output", Value::String(o.display().to_string())));
        }
        out.extend(self.set.iter().cloned());
        out
    }
}

fn config_key_help() -> String {
    let mut s = String::from("Run-file keys under [train] (P = published setting, C = chosen here):\n");
    let width = CONFIG_KEYS.iter().map(|(k, _, _)| k.len()).max().unwrap_or(0);
    for (key, prov, desc) in CONFIG_KEYS {
        let tag = match prov {
            Provenance::Published => "P",
            Provenance::Chosen => "C",
        };
        s.push_str(&format!("  {key:<width$}  [{tag}]  {desc}\n"));
    }
    s.push_str(
        "\nOther sections: output, protocol (single-session | cross-session), \
         [data] (csv, label_column, subject_column, session_column, [data.synth]), \
         [fold] target_subject, [noise_sweep] etas, [k_sweep] ks.\n\
         Exit codes: 0 success, 1 runtime failure, 2 invalid config, 66 missing input file.",
    );
    s
}

fn main() -> ExitCode {
    let help = config_key_help();
    let mut cmd = Cli::command().after_help(help.clone());
    for name in ["train", "eval", "protocol", "noise-sweep", "k-sweep", "synth"] {
        let h = help.clone();
        cmd = cmd.mut_subcommand(name, |c| c.after_help(h));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            e.code()
        }
    }
}
