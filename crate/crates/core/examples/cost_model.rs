//! Operation counts predicted by the cost model against a measured run.

use std::collections::BTreeMap;

use fedxgb::counters::laws;
use fedxgb::dataset::split_vertical;
use fedxgb::federation::{run_vertical_histogram, RunOptions};
use fedxgb::gbdt::TrainParams;
use fedxgb::he::keygen;
use fedxgb::synthetic::SyntheticSpec;

fn main() -> fedxgb::Result<()> {
    let (m, j, k) = (1000u64, 6, 32);
    let data = SyntheticSpec::new(m as usize, j, 2).generate()?;
    let names = data.feature_names();
    let owners = BTreeMap::from([(0, names[..3].to_vec()), (1, names[3..].to_vec())]);
    let shards = split_vertical(&data, &owners, 0)?;
    let params = TrainParams {
        num_trees: 2,
        max_depth: 2,
        max_bin: k,
        ..TrainParams::default()
    };
    let run = run_vertical_histogram(&shards, &params, &RunOptions::secure(keygen(512, 7)?, 3))?;
    for (r, c) in run.round_counters.iter().enumerate() {
        println!(
            "round {r}: encryptions {} (law {}), ciphertext additions {}",
            c.encryptions,
            laws::vertical_encryptions(m),
            c.ciphertext_additions
        );
    }
    println!();
    println!("at full scale (M=200000, J=30, K=256):");
    println!("  encryptions per round  {}", laws::vertical_encryptions(200_000));
    println!("  additions per round    {}", laws::vertical_additions_estimate(200_000, 30, 256));
    println!("  horizontal vector additions per node, N=5: {}", laws::horizontal_vector_additions(5));
    Ok(())
}
