//! A curious passive party tries to read labels off the gradients it
//! receives. Plain gradients give them away; ciphertexts do not.

use std::collections::BTreeMap;

use fedxgb::dataset::split_vertical;
use fedxgb::federation::probe::label_probe_accuracy;
use fedxgb::federation::{run_vertical_histogram, RunOptions};
use fedxgb::gbdt::TrainParams;
use fedxgb::he::keygen;
use fedxgb::synthetic::SyntheticSpec;

fn main() -> fedxgb::Result<()> {
    let mut spec = SyntheticSpec::new(300, 4, 17);
    spec.positive_rate = 0.5;
    let data = spec.generate()?;
    let names = data.feature_names();
    let owners = BTreeMap::from([(0, names[..2].to_vec()), (1, names[2..].to_vec())]);
    let shards = split_vertical(&data, &owners, 1)?;
    let params = TrainParams {
        num_trees: 2,
        max_depth: 2,
        max_bin: 8,
        ..TrainParams::default()
    };
    let labels = data.label().unwrap();
    for (name, opts) in [
        ("plain", RunOptions::plain()),
        ("paillier", RunOptions::secure(keygen(512, 5)?, 1)),
    ] {
        let run = run_vertical_histogram(&shards, &params, &opts)?;
        let acc = label_probe_accuracy(&run.transcript, 0, labels)?.unwrap_or(f64::NAN);
        println!("{name:>8}: passive party guesses labels with accuracy {acc:.3}");
    }
    Ok(())
}
