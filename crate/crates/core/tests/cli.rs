//! End-to-end runs of the command-line front end.

use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use fedxgb::cli::{self, ExperimentConfig, RunReport, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, KEY_DIR_ENV};
use fedxgb::federation::probe::byte_occurrences;
use fedxgb::federation::Endpoint;
use fedxgb::inference::PartialModel;
use fedxgb::processor::Payload;

/// The key directory variable is process-wide, so tests that read it run one
/// at a time.
fn env_lock() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fedxgb").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, mode: &str, split: &str, plugin: &str) -> PathBuf {
    let text = format!(
        r#"
[dataset]
synthetic = {{ n_rows = 160, n_features = 5, seed = 3 }}
validation_fraction = 0.25

[split]
{split}

[train]
num_trees = 3
max_depth = 3
max_bin = 8

[mode]
kind = "{mode}"

[security]
plugin = "{plugin}"
key_bits = 512
key_seed = 4
seed = 5
"#
    );
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const VERTICAL_SPLIT: &str = "parties = 2\nfeature_counts = [2, 3]\nactive_party = 1";

fn fingerprint(stdout: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("fingerprint="))
        .expect("fingerprint line")
        .to_string()
}

#[test]
fn keygen_is_deterministic_and_private() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let (code, out, _) = run(&["keygen", "--bits", "512", "--seed", "9", "--out", path(d)]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("fingerprint:"));
    }
    for file in ["private.key", "public.key"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(a.join("private.key")).unwrap().permissions().mode();
        assert_eq!(mode & 0o777, 0o600);
    }
    let (code, _, err) = run(&["keygen", "--bits", "100", "--out", path(&a)]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("allowed sizes"), "{err}");
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
}

#[test]
fn key_directory_variable_overrides_config() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("env_keys");
    std::env::set_var(KEY_DIR_ENV, &keys);
    // keygen with no --out lands in the variable's directory.
    let (code, _, _) = run(&["keygen", "--bits", "1024", "--seed", "1"]);
    let cfg = write_config(dir.path(), "v.toml", "vertical", VERTICAL_SPLIT, "paillier");
    // The config asks for 512 bits but the override directory holds 1024.
    let (train_code, _, err) = run(&["train", path(&cfg), "--out", path(&dir.path().join("o"))]);
    std::env::remove_var(KEY_DIR_ENV);
    assert_eq!(code, EXIT_OK);
    assert!(keys.join("private.key").exists());
    assert_eq!(train_code, EXIT_VALIDATION);
    assert!(err.contains("security.key_bits"), "{err}");
}

#[test]
fn secure_vertical_matches_plain_and_centralized() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let mut prints = Vec::new();
    for (name, mode, split, plugin) in [
        ("c.toml", "centralized", "", "plain"),
        ("vp.toml", "vertical", VERTICAL_SPLIT, "plain"),
        ("vs.toml", "vertical", VERTICAL_SPLIT, "paillier"),
    ] {
        let cfg = write_config(dir.path(), name, mode, split, plugin);
        let out_dir = dir.path().join(name.trim_end_matches(".toml"));
        let (code, out, err) = run(&["train", path(&cfg), "--out", path(&out_dir)]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.contains("trees=3"), "{out}");
        prints.push(fingerprint(&out));
    }
    assert_eq!(prints[0], prints[1]);
    assert_eq!(prints[1], prints[2]);

    let c = dir.path().join("c/report.json");
    let vs = dir.path().join("vs/report.json");
    let (code, out, _) = run(&["compare", path(&c), path(&vs)]);
    assert_eq!((code, out.trim()), (EXIT_OK, "equal"));
    assert!(RunReport::load(&vs).unwrap().counters.encryptions > 0);

    // Passive party files keep only their own thresholds.
    let p0 = PartialModel::load(dir.path().join("vs/party0.partial")).unwrap();
    let p1 = PartialModel::load(dir.path().join("vs/party1.partial")).unwrap();
    let text0 = std::fs::read_to_string(dir.path().join("vs/party0.partial")).unwrap();
    for f in &p1.owned_features {
        assert!(!text0.contains(&format!("feature={f} ")), "party 0 file names {f}");
    }
    assert!(text0.lines().filter(|l| l.contains("kind=leaf")).all(|l| l.ends_with("value=nan")));
    assert!(p0.materialized_nodes().is_disjoint(&p1.materialized_nodes()));

    // Federated prediction from the partials equals prediction from the forest.
    let csv = dir.path().join("data.csv");
    let data = ExperimentConfig::load(dir.path().join("c.toml")).unwrap().load_matrix().unwrap();
    data.write_csv(&csv, "label").unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let p0s = dir.path().join("vs/party0.partial");
    let p1s = dir.path().join("vs/party1.partial");
    let (code, out, err) = run(&["predict", "--model", path(&p0s), path(&p1s), "--data", path(&csv), "--output", path(&a)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("accuracy="));
    assert_eq!(run(&["predict", "--model", path(&c), "--data", path(&csv), "--output", path(&b)]).0, EXIT_OK);
    assert_eq!(std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
}

#[test]
fn invalid_configs_exit_with_validation_code() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let roles = "parties = 2\nfeature_counts = [2, 3]\nroles = [\"active\", \"active\"]";
    let cfg = write_config(dir.path(), "bad.toml", "vertical", roles, "plain");
    let (code, _, err) = run(&["train", path(&cfg), "--out", path(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(err.contains("split.roles"), "{err}");

    let cfg = write_config(dir.path(), "cyc.toml", "cyclic", "parties = 2", "paillier");
    assert_eq!(run(&["train", path(&cfg)]).0, EXIT_VALIDATION);

    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["train", path(&missing)]).0, EXIT_RUNTIME);

    let cfg = write_config(dir.path(), "c.toml", "centralized", "", "plain");
    assert_eq!(run(&["bench", path(&cfg), "--repeats", "0"]).0, EXIT_VALIDATION);
}

#[test]
fn horizontal_compare_reports_differences_and_server_stays_blind() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "c.toml", "centralized", "", "plain");
    let hp = write_config(dir.path(), "hp.toml", "horizontal", "parties = 3", "plain");
    let hs = write_config(dir.path(), "hs.toml", "horizontal", "parties = 3", "paillier");
    for (cfg, out) in [(&c, "c"), (&hp, "hp"), (&hs, "hs")] {
        let (code, _, err) = run(&["train", path(cfg), "--out", path(&dir.path().join(out))]);
        assert_eq!(code, EXIT_OK, "{err}");
    }
    let report = |d: &str| dir.path().join(d).join("report.json");
    // Per-party cuts change the forest, and compare says where.
    let (code, out, _) = run(&["compare", path(&report("c")), path(&report("hp"))]);
    assert_eq!(code, EXIT_VALIDATION);
    assert!(out.contains("difference(s)"), "{out}");
    let (code, out, _) = run(&["compare", path(&report("hp")), path(&report("hs"))]);
    assert_eq!((code, out.trim()), (EXIT_OK, "equal"));

    // The plain run's histogram sums must not appear in anything the server
    // received during the secure run.
    let plain = cli::train(&ExperimentConfig::load(&hp).unwrap(), false).unwrap();
    let secure = cli::train(&ExperimentConfig::load(&hs).unwrap(), false).unwrap();
    let mut needles = Vec::new();
    for e in plain.transcript.received_by(Endpoint::Server) {
        if let Payload::HistPlain(hists) = Payload::from_bytes(&e.bytes).unwrap() {
            for h in hists {
                for &v in h.raw_g().iter().chain(h.raw_h()) {
                    if v.unsigned_abs() > 1 << 20 {
                        needles.push(v.to_le_bytes().to_vec());
                    }
                }
            }
        }
    }
    assert!(needles.len() > 100);
    assert!(byte_occurrences(&plain.transcript, Endpoint::Server, &needles) > 0);
    assert_eq!(byte_occurrences(&secure.transcript, Endpoint::Server, &needles), 0);
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.toml", "vertical", VERTICAL_SPLIT, "paillier");
    let loaded = ExperimentConfig::load(&cfg).unwrap();
    let a = cli::train(&loaded, false).unwrap();
    let b = cli::train(&loaded, true).unwrap();
    assert_eq!(a.report.without_timings(), b.report.without_timings());
    assert_eq!(a.transcript.total_bytes(), b.transcript.total_bytes());
}

#[test]
fn bench_once_checks_counter_laws() {
    let _g = env_lock();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.toml", "vertical", VERTICAL_SPLIT, "paillier");
    let json = dir.path().join("bench.json");
    let (code, out, err) = run(&["bench", path(&cfg), "--repeats", "1", "--out", path(&json)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("overhead_ratio="), "{out}");
    assert!(json.exists());
}
