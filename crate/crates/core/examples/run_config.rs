//! Runs a TOML experiment config the same way `fedxgb train` does, without
//! writing anything. Defaults to the bundled vertical config.

use std::path::PathBuf;

use fedxgb::cli::{train, ExperimentConfig};

fn main() -> fedxgb::Result<()> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/vertical.toml"));
    let loaded = ExperimentConfig::load(&path)?;
    let out = train(&loaded, false)?;
    let r = &out.report;
    println!("{} / {:?}: {} parties, {} rows, {} trees", r.mode, r.plugin, r.parties, r.rows, out.forest.trees.len());
    println!("train accuracy {:.3}", r.metrics.train_accuracy);
    if let Some(a) = r.metrics.validation_accuracy {
        println!("validation accuracy {a:.3}");
    }
    println!("{} messages, {} bytes", out.transcript.entries.len(), r.transcript_bytes);
    println!("fingerprint {}", r.fingerprint);
    Ok(())
}
