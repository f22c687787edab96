use std::path::PathBuf;

use fedxgb::dataset::DataMatrix;
use fedxgb::gbdt::{accuracy, train_centralized, Forest, TrainParams};

/// 20 rows on a 5x4 grid, labelled by the XOR of two thresholds. The grid is
/// lopsided so the first split already has positive gain.
fn xor_data() -> DataMatrix {
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut y = Vec::new();
    for i in 0..5 {
        for j in 0..4 {
            let a = i as f64 - 1.5;
            let b = j as f64 - 1.5;
            x1.push(a);
            x2.push(b);
            y.push(f64::from((a > 0.0) != (b > 0.0)));
        }
    }
    DataMatrix::new(vec!["x1".into(), "x2".into()], vec![x1, x2], Some(y), (0..20).collect()).unwrap()
}

fn params(max_depth: usize) -> TrainParams {
    TrainParams {
        num_trees: 2,
        max_depth,
        max_bin: 8,
        learning_rate: 1.0,
        ..TrainParams::default()
    }
}

#[test]
fn xor_forest_matches_golden_and_beats_stumps() {
    let data = xor_data();
    let forest = train_centralized(&data, &params(2)).unwrap();
    let labels = data.label().unwrap();
    let acc = accuracy(labels, &forest.predict(&data).unwrap());
    let stumps = train_centralized(&data, &params(1)).unwrap();
    let stump_acc = accuracy(labels, &stumps.predict(&data).unwrap());
    assert!(acc >= stump_acc, "depth-2 accuracy {acc} below stump accuracy {stump_acc}");

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/xor_forest.txt");
    let text = forest.to_text();
    if std::env::var_os("FEDXGB_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden);
    assert_eq!(Forest::from_text(&golden).unwrap(), forest);
}
