//! Three parties split the rows and sum encrypted histograms through an
//! aggregation server that never sees a plaintext.

use fedxgb::cli::diff_forests;
use fedxgb::dataset::split_horizontal;
use fedxgb::federation::{run_horizontal_histogram, RunOptions};
use fedxgb::gbdt::{train_centralized, TrainParams};
use fedxgb::he::keygen;
use fedxgb::synthetic::SyntheticSpec;

fn main() -> fedxgb::Result<()> {
    let data = SyntheticSpec::new(600, 5, 8).generate()?;
    let shards = split_horizontal(&data, 3)?;
    let params = TrainParams {
        num_trees: 3,
        max_depth: 3,
        max_bin: 16,
        ..TrainParams::default()
    };
    let plain = run_horizontal_histogram(&shards, &params, &RunOptions::plain())?;
    let secure = run_horizontal_histogram(&shards, &params, &RunOptions::secure(keygen(512, 4)?, 6))?;
    println!(
        "plain and secure fingerprints match: {}",
        plain.model.forest.fingerprint() == secure.model.forest.fingerprint()
    );
    println!(
        "vector encryptions {}  vector additions {}",
        secure.counters.vector_encryptions, secure.counters.vector_additions
    );
    // Cuts come from merged local quantiles, so the trees may differ from a
    // centralized run.
    let diffs = diff_forests(&train_centralized(&data, &params)?, &secure.model.forest, 0.0);
    println!("differences from centralized: {}", diffs.len());
    for d in diffs.iter().take(3) {
        println!("  {d}");
    }
    Ok(())
}
