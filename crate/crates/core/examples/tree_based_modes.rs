//! Collaboration by exchanging whole trees rather than histograms.

use fedxgb::dataset::split_horizontal;
use fedxgb::federation::{run_bagging, run_cyclic, RunOptions};
use fedxgb::gbdt::{accuracy, TrainParams};
use fedxgb::synthetic::SyntheticSpec;

fn main() -> fedxgb::Result<()> {
    let data = SyntheticSpec::new(900, 6, 13).generate()?;
    let shards = split_horizontal(&data, 3)?;
    let params = TrainParams {
        num_trees: 6,
        max_depth: 3,
        max_bin: 16,
        ..TrainParams::default()
    };
    let y = data.label().unwrap();
    let cyclic = run_cyclic(&shards, &params, 1, &RunOptions::plain())?;
    let bagging = run_bagging(&shards, &params, 1, &RunOptions::plain())?;
    for (name, run) in [("cyclic", &cyclic), ("bagging", &bagging)] {
        let acc = accuracy(y, &run.model.forest.predict(&data)?);
        println!(
            "{name:>8}: {} trees from parties {:?}, accuracy {acc:.3}",
            run.model.forest.trees.len(),
            run.model.tree_origin
        );
    }
    Ok(())
}
