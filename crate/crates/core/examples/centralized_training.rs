//! Histogram-based boosting on one machine, with held-out metrics.

use fedxgb::gbdt::{accuracy, log_loss, train_centralized, TrainParams};
use fedxgb::synthetic::SyntheticSpec;

fn main() -> fedxgb::Result<()> {
    let data = SyntheticSpec::new(1000, 8, 11).generate()?;
    let (train, valid) = (data.slice_rows(0, 800), data.slice_rows(800, 1000));
    let params = TrainParams {
        num_trees: 20,
        max_depth: 3,
        max_bin: 32,
        ..TrainParams::default()
    };
    let forest = train_centralized(&train, &params)?;
    for (name, part) in [("train", &train), ("validation", &valid)] {
        let p = forest.predict(part)?;
        let y = part.label().unwrap();
        println!("{name:>10}: log_loss {:.4}  accuracy {:.3}", log_loss(y, &p), accuracy(y, &p));
    }
    println!("fingerprint {}", forest.fingerprint());
    println!("{}", forest.to_text().lines().take(6).collect::<Vec<_>>().join("\n"));
    Ok(())
}
