//! Command-line front end: key generation, training runs in every mode,
//! forest comparison, benchmarks and prediction.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure (bad config or
//! data, or a `compare` that found differences), 3 runtime failure.

mod commands;
pub mod config;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::he::ALLOWED_MODULUS_BITS;

pub use commands::{
    bench, cmd_bench, cmd_compare, cmd_keygen, cmd_predict, cmd_train, train, BenchReport, BenchRow, KeygenOutput,
    LawCheck, TrainOutcome,
};
pub use config::{ExperimentConfig, LoadedConfig, ModeKind, PluginKind, KEY_DIR_ENV};
pub use report::{diff_forests, load_forest_artifact, ForestDiff, Metrics, RunReport, Timings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fedxgb", version, about = "Secure federated gradient-boosted trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_bits(s: &str) -> Result<u64, String> {
    let bits: u64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if ALLOWED_MODULUS_BITS.contains(&bits) {
        Ok(bits)
    } else {
        Err(format!("allowed sizes are {ALLOWED_MODULUS_BITS:?}"))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Paillier keypair.
    Keygen {
        #[arg(long, default_value = "2048", value_parser = parse_bits)]
        bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory. Defaults to the key directory variable, then `keys`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the experiment described by a config file.
    Train {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Spread each party's local work over threads.
        #[arg(long)]
        threads: bool,
    },
    /// Structurally compare two forests (run reports or forest files).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Allowed absolute difference between leaf weights.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Time plain and encrypted runs of a config.
    Bench {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Where to write the structured report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: bool,
    },
    /// Predict probabilities with a forest or with partial models.
    Predict {
        /// One forest or run report, or one partial model per party.
        #[arg(long = "model", required = true, num_args = 1..)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        /// Output CSV. Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::InvalidParam(_)
        | Error::InvalidPartition(_)
        | Error::InvalidData(_)
        | Error::InvalidLabel { .. }
        | Error::NonNumeric { .. }
        | Error::NonFinite { .. }
        | Error::UnknownColumn(_)
        | Error::MissingFeature(_)
        | Error::LengthMismatch { .. }
        | Error::ModelFormat { .. }
        | Error::Csv(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> crate::Result<i32> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match command {
        Command::Keygen { bits, seed, out: dir } => {
            let dir = dir
                .or_else(|| std::env::var_os(KEY_DIR_ENV).filter(|d| !d.is_empty()).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("keys"));
            let k = cmd_keygen(bits, seed, &dir)?;
            writeln!(out, "private key: {}", k.private_path.display()).map_err(io)?;
            writeln!(out, "public key:  {}", k.public_path.display()).map_err(io)?;
            writeln!(out, "key id:      {:016x}", k.key_id).map_err(io)?;
            writeln!(out, "fingerprint: {}", k.fingerprint).map_err(io)?;
        }
        Command::Train { config, out: dir, threads } => {
            let t = cmd_train(&config, &dir, threads)?;
            let r = &t.report;
            writeln!(out, "mode={} plugin={:?} parties={} rows={} trees={}", r.mode, r.plugin, r.parties, r.rows, t.forest.trees.len())
                .map_err(io)?;
            writeln!(out, "fingerprint={}", r.fingerprint).map_err(io)?;
            writeln!(
                out,
                "train log_loss={:.6} accuracy={:.4}",
                r.metrics.train_log_loss, r.metrics.train_accuracy
            )
            .map_err(io)?;
            if let (Some(l), Some(a)) = (r.metrics.validation_log_loss, r.metrics.validation_accuracy) {
                writeln!(out, "validation log_loss={l:.6} accuracy={a:.4}").map_err(io)?;
            }
            writeln!(out, "wrote {}", dir.display()).map_err(io)?;
        }
        Command::Compare { a, b, tolerance } => {
            let diffs = cmd_compare(&a, &b, tolerance)?;
            if diffs.is_empty() {
                writeln!(out, "equal").map_err(io)?;
            } else {
                for d in &diffs {
                    writeln!(out, "{d}").map_err(io)?;
                }
                writeln!(out, "{} difference(s)", diffs.len()).map_err(io)?;
                return Ok(EXIT_VALIDATION);
            }
        }
        Command::Bench {
            config,
            repeats,
            out: path,
            threads,
        } => {
            let r = cmd_bench(&config, repeats, path.as_deref(), threads)?;
            out.write_all(r.to_table().as_bytes()).map_err(io)?;
            if let Some(ratio) = r.overhead_ratio {
                writeln!(out, "overhead_ratio={ratio:.3}").map_err(io)?;
            }
            let broken: Vec<&LawCheck> = r.laws.iter().filter(|l| !l.holds()).collect();
            for l in &broken {
                writeln!(out, "counter law violated: {} (expected {}, got {})", l.name, l.expected, l.actual)
                    .map_err(io)?;
            }
            if !broken.is_empty() {
                return Ok(EXIT_RUNTIME);
            }
        }
        Command::Predict {
            models,
            data,
            label,
            output,
        } => {
            let (matrix, probs) = cmd_predict(&models, &data, &label)?;
            let mut text = String::from("row_id,probability\n");
            for (id, p) in matrix.row_ids().iter().zip(&probs) {
                text.push_str(&format!("{id},{p:?}\n"));
            }
            match output {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                    writeln!(out, "wrote {} predictions to {}", probs.len(), path.display()).map_err(io)?;
                    // Stdout is free for a summary only when the CSV went elsewhere.
                    if let Some(labels) = matrix.label() {
                        let (l, a) = Metrics::score(labels, &probs);
                        writeln!(out, "log_loss={l:.6} accuracy={a:.4}").map_err(io)?;
                    }
                }
                None => out.write_all(text.as_bytes()).map_err(io)?,
            }
        }
    }
    Ok(EXIT_OK)
}
