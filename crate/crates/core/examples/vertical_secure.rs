//! Two parties split the columns; party 1 holds the label and encrypts the
//! gradients. The result is the centralized forest, stored as two partial
//! models that can only predict together.

use std::collections::BTreeMap;

use fedxgb::dataset::split_vertical;
use fedxgb::federation::{run_vertical_histogram, RunOptions};
use fedxgb::gbdt::{train_centralized, TrainParams};
use fedxgb::he::keygen;
use fedxgb::inference::federated_predict;
use fedxgb::synthetic::SyntheticSpec;

fn main() -> fedxgb::Result<()> {
    let data = SyntheticSpec::new(400, 6, 5).generate()?;
    let names = data.feature_names();
    let owners = BTreeMap::from([(0, names[..2].to_vec()), (1, names[2..].to_vec())]);
    let shards = split_vertical(&data, &owners, 1)?;
    let params = TrainParams {
        num_trees: 3,
        max_depth: 3,
        max_bin: 16,
        ..TrainParams::default()
    };

    let run = run_vertical_histogram(&shards, &params, &RunOptions::secure(keygen(512, 1)?, 2))?;
    let central = train_centralized(&data, &params)?;
    println!("same forest as centralized: {}", run.model.forest == central);
    println!(
        "encryptions {}  ciphertext additions {}  decryptions {}  bytes {}",
        run.counters.encryptions, run.counters.ciphertext_additions, run.counters.decryptions, run.counters.bytes_transferred
    );
    for p in &run.model.partials {
        println!("party {} ({}) holds {} split thresholds", p.party_id, p.role, p.materialized_nodes().len());
    }
    let fed = federated_predict(&run.model.partials, &shards)?;
    let cen = central.predict(&data)?;
    println!("federated predictions equal centralized: {}", fed == cen);
    Ok(())
}
