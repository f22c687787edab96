use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cli::config::{
    ExperimentConfig, LoadedConfig, ModeKind, PluginKind, PreparedData, PRIVATE_KEY_FILE, PUBLIC_KEY_FILE,
};
use crate::cli::report::{diff_forests, load_forest_artifact, ForestDiff, Metrics, RunReport, Timings, REPORT_FORMAT, REPORT_VERSION};
use crate::counters::{laws, CounterSnapshot};
use crate::dataset::{load_csv, DataMatrix, PartyShard, Role};
use crate::error::{Error, Result};
use crate::federation::{
    run_bagging, run_cyclic, run_horizontal_histogram, run_vertical_histogram, PhaseTimings, RunOptions, Security,
    Transcript,
};
use crate::gbdt::{train_centralized, Forest};
use crate::he::{encode_keypair, encode_public_key, keygen, Keypair};
use crate::inference::{federated_predict, PartialModel};

/// What one training run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub forest: Forest,
    /// Vertical runs only.
    pub partials: Vec<PartialModel>,
    pub transcript: Transcript,
}

fn write_private(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    // An existing file keeps its old mode through open(), so set it again.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeygenOutput {
    pub private_path: PathBuf,
    pub public_path: PathBuf,
    pub key_id: u64,
    /// Hex SHA-256 of the private key file.
    pub fingerprint: String,
}

/// Generates a keypair and writes `private.key` and `public.key` into
/// `out_dir`, both readable by the owner only.
pub fn cmd_keygen(bits: u64, seed: u64, out_dir: &Path) -> Result<KeygenOutput> {
    let kp = keygen(bits, seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let private = encode_keypair(&kp);
    let private_path = out_dir.join(PRIVATE_KEY_FILE);
    let public_path = out_dir.join(PUBLIC_KEY_FILE);
    write_private(&private_path, &private)?;
    write_private(&public_path, &encode_public_key(kp.public()))?;
    Ok(KeygenOutput {
        private_path,
        public_path,
        key_id: kp.public().key_id(),
        fingerprint: hex::encode(Sha256::digest(&private)),
    })
}

fn security_for(cfg: &ExperimentConfig, plugin: PluginKind, keypair: Option<&Keypair>) -> Result<Security> {
    Ok(match plugin {
        PluginKind::Plain => Security::Plain,
        PluginKind::Paillier => {
            let kp = match keypair {
                Some(kp) => kp.clone(),
                None => cfg.security.keypair()?,
            };
            Security::Paillier {
                keypair: kp,
                packing: cfg.security.packing,
                seed: cfg.security.seed,
            }
        }
    })
}

struct Executed {
    forest: Forest,
    partials: Vec<PartialModel>,
    transcript: Transcript,
    counters: CounterSnapshot,
    round_counters: Vec<CounterSnapshot>,
    timings: PhaseTimings,
}

fn execute(cfg: &ExperimentConfig, prep: &PreparedData, opts: &RunOptions) -> Result<Executed> {
    let params = &cfg.train;
    let tpr = cfg.mode.trees_per_round;
    macro_rules! done {
        ($out:expr, $forest:expr, $partials:expr) => {{
            let out = $out;
            Executed {
                forest: $forest(&out.model),
                partials: $partials(&out.model),
                transcript: out.transcript,
                counters: out.counters,
                round_counters: out.round_counters,
                timings: out.timings,
            }
        }};
    }
    Ok(match cfg.mode.kind {
        ModeKind::Centralized => {
            let start = Instant::now();
            let forest = train_centralized(&prep.train, params)?;
            let timings = PhaseTimings {
                split: start.elapsed(),
                ..PhaseTimings::default()
            };
            Executed {
                forest,
                partials: Vec::new(),
                transcript: Transcript::default(),
                counters: CounterSnapshot::default(),
                round_counters: Vec::new(),
                timings,
            }
        }
        ModeKind::Horizontal => done!(
            run_horizontal_histogram(&prep.shards, params, opts)?,
            |m: &crate::federation::HorizontalModel| m.forest.clone(),
            |_| Vec::new()
        ),
        ModeKind::Vertical => done!(
            run_vertical_histogram(&prep.shards, params, opts)?,
            |m: &crate::federation::VerticalModel| m.forest.clone(),
            |m: &crate::federation::VerticalModel| m.partials.clone()
        ),
        ModeKind::Cyclic => done!(
            run_cyclic(&prep.shards, params, tpr, opts)?,
            |m: &crate::federation::TreeBasedModel| m.forest.clone(),
            |_| Vec::new()
        ),
        ModeKind::Bagging => done!(
            run_bagging(&prep.shards, params, tpr, opts)?,
            |m: &crate::federation::TreeBasedModel| m.forest.clone(),
            |_| Vec::new()
        ),
    })
}

fn predict_with(
    loaded: &LoadedConfig,
    forest: &Forest,
    partials: &[PartialModel],
    shards: Option<&[PartyShard]>,
    data: &DataMatrix,
) -> Result<Vec<f64>> {
    if partials.is_empty() {
        return forest.predict(data);
    }
    match shards {
        Some(s) => federated_predict(partials, s),
        None => federated_predict(partials, &loaded.split(data)?),
    }
}

fn metrics(loaded: &LoadedConfig, prep: &PreparedData, run: &Executed) -> Result<Metrics> {
    let labels = prep
        .train
        .label()
        .ok_or_else(|| Error::InvalidData("training data has no label".into()))?;
    let probs = predict_with(loaded, &run.forest, &run.partials, Some(&prep.shards), &prep.train)?;
    let (train_log_loss, train_accuracy) = Metrics::score(labels, &probs);
    let mut m = Metrics {
        train_log_loss,
        train_accuracy,
        ..Metrics::default()
    };
    if let Some(valid) = &prep.validation {
        let probs = predict_with(loaded, &run.forest, &run.partials, None, valid)?;
        let labels = valid.label().expect("validation rows carry the training label");
        let (l, a) = Metrics::score(labels, &probs);
        m.validation_log_loss = Some(l);
        m.validation_accuracy = Some(a);
    }
    Ok(m)
}

fn run_once(
    loaded: &LoadedConfig,
    prep: &PreparedData,
    plugin: PluginKind,
    keypair: Option<&Keypair>,
    threads: bool,
) -> Result<(TrainOutcome, Executed)> {
    let cfg = &loaded.config;
    let security = security_for(cfg, plugin, keypair)?;
    let key_bits = match &security {
        Security::Paillier { keypair, .. } => Some(keypair.public().bits()),
        Security::Plain => None,
    };
    let opts = RunOptions {
        security,
        threads: threads || cfg.mode.threads,
    };
    let run = execute(cfg, prep, &opts)?;
    let metrics = metrics(loaded, prep, &run)?;
    let report = RunReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        mode: cfg.mode.kind,
        plugin,
        key_bits,
        parties: prep.shards.len(),
        rows: prep.train.n_rows(),
        features: prep.train.n_features(),
        params: cfg.train.clone(),
        timings: Timings::from(&run.timings),
        counters: run.counters,
        round_counters: run.round_counters.clone(),
        transcript_bytes: run.transcript.total_bytes(),
        fingerprint: run.forest.fingerprint(),
        metrics,
        forest: run.forest.to_text(),
    };
    let outcome = TrainOutcome {
        report,
        forest: run.forest.clone(),
        partials: run.partials.clone(),
        transcript: run.transcript.clone(),
    };
    Ok((outcome, run))
}

/// Runs the configured experiment without touching the filesystem beyond
/// reading the dataset and keys.
pub fn train(loaded: &LoadedConfig, threads: bool) -> Result<TrainOutcome> {
    let prep = loaded.prepare()?;
    Ok(run_once(loaded, &prep, loaded.config.security.plugin, None, threads)?.0)
}

/// Trains and writes `report.json`, `forest.txt`, `transcript.jsonl` and, for
/// vertical runs, one `party<id>.partial` per party into `out_dir`.
pub fn cmd_train(config_path: &Path, out_dir: &Path, threads: bool) -> Result<TrainOutcome> {
    let loaded = ExperimentConfig::load(config_path)?;
    let outcome = train(&loaded, threads)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    outcome.report.save(out_dir.join("report.json"))?;
    let forest_path = out_dir.join("forest.txt");
    std::fs::write(&forest_path, outcome.forest.to_text()).map_err(|e| Error::io(&forest_path, e))?;
    for p in &outcome.partials {
        p.save(out_dir.join(format!("party{}.partial", p.party_id)))?;
    }
    let transcript_path = out_dir.join("transcript.jsonl");
    let file = std::fs::File::create(&transcript_path).map_err(|e| Error::io(&transcript_path, e))?;
    outcome
        .transcript
        .write_jsonl(std::io::BufWriter::new(file))
        .map_err(|e| Error::io(&transcript_path, e))?;
    Ok(outcome)
}

/// Structural diff of two forests, each given as a run report or forest file.
pub fn cmd_compare(a: &Path, b: &Path, leaf_tolerance: f64) -> Result<Vec<ForestDiff>> {
    let fa = load_forest_artifact(a)?;
    let fb = load_forest_artifact(b)?;
    Ok(diff_forests(&fa, &fb, leaf_tolerance))
}

/// Median phase times and counters for one plugin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub plugin: PluginKind,
    pub samples: usize,
    pub median: Timings,
    pub counters: CounterSnapshot,
    pub fingerprint: String,
}

/// One counter law checked against a measured run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LawCheck {
    pub name: String,
    pub expected: u64,
    pub actual: u64,
}

impl LawCheck {
    pub fn holds(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub mode: ModeKind,
    pub repeats: usize,
    pub rows: usize,
    pub features: usize,
    pub parties: usize,
    pub max_bin: usize,
    pub rows_by_plugin: Vec<BenchRow>,
    /// Secure median total over plain median total, when both ran.
    pub overhead_ratio: Option<f64>,
    /// Same ratio per phase.
    pub phase_ratios: Vec<(String, Option<f64>)>,
    pub laws: Vec<LawCheck>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn median_timings(samples: &[Timings]) -> Timings {
    let m = |f: fn(&Timings) -> f64| median(samples.iter().map(f).collect());
    Timings {
        cuts: m(|t| t.cuts),
        gradient: m(|t| t.gradient),
        encrypt: m(|t| t.encrypt),
        aggregate: m(|t| t.aggregate),
        decrypt: m(|t| t.decrypt),
        split: m(|t| t.split),
        total: m(|t| t.total),
    }
}

fn phase_values(t: &Timings) -> [(&'static str, f64); 7] {
    [
        ("cuts", t.cuts),
        ("gradient", t.gradient),
        ("encrypt", t.encrypt),
        ("aggregate", t.aggregate),
        ("decrypt", t.decrypt),
        ("split", t.split),
        ("total", t.total),
    ]
}

fn check_laws(cfg: &ExperimentConfig, prep: &PreparedData, rounds: &[CounterSnapshot]) -> Vec<LawCheck> {
    let mut out = Vec::new();
    match cfg.mode.kind {
        ModeKind::Vertical => {
            let m = prep.train.n_rows() as u64;
            for (r, c) in rounds.iter().enumerate() {
                out.push(LawCheck {
                    name: format!("round {r} encryptions = 2M"),
                    expected: laws::vertical_encryptions(m),
                    actual: c.encryptions,
                });
            }
        }
        ModeKind::Horizontal => {
            let n = prep.shards.len() as u64;
            for (r, c) in rounds.iter().enumerate() {
                let nodes = c.vector_encryptions / laws::horizontal_vector_encryptions(n);
                out.push(LawCheck {
                    name: format!("round {r} vector encryptions = 2N per node"),
                    expected: nodes * laws::horizontal_vector_encryptions(n),
                    actual: c.vector_encryptions,
                });
                out.push(LawCheck {
                    name: format!("round {r} vector additions = 2(N-1) per node"),
                    expected: nodes * laws::horizontal_vector_additions(n),
                    actual: c.vector_additions,
                });
            }
        }
        _ => {}
    }
    out
}

/// Runs the configured mode `repeats` times with the passthrough plugin and,
/// for histogram modes, `repeats` times with Paillier.
pub fn bench(loaded: &LoadedConfig, repeats: usize, threads: bool) -> Result<BenchReport> {
    if repeats < 1 {
        return Err(Error::InvalidParam("repeats must be at least 1".into()));
    }
    let cfg = &loaded.config;
    let prep = loaded.prepare()?;
    let plugins: &[PluginKind] = match cfg.mode.kind {
        ModeKind::Horizontal | ModeKind::Vertical => &[PluginKind::Plain, PluginKind::Paillier],
        _ => &[PluginKind::Plain],
    };
    let keypair = if plugins.contains(&PluginKind::Paillier) {
        Some(cfg.security.keypair()?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut laws = Vec::new();
    for &plugin in plugins {
        let mut samples = Vec::with_capacity(repeats);
        let mut last = None;
        for _ in 0..repeats {
            let (outcome, run) = run_once(loaded, &prep, plugin, keypair.as_ref(), threads)?;
            samples.push(outcome.report.timings.clone());
            if plugin == PluginKind::Paillier {
                laws = check_laws(cfg, &prep, &run.round_counters);
            }
            last = Some(outcome.report);
        }
        let last = last.expect("repeats >= 1");
        rows.push(BenchRow {
            plugin,
            samples: repeats,
            median: median_timings(&samples),
            counters: last.counters,
            fingerprint: last.fingerprint,
        });
    }
    let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
    let (overhead_ratio, phase_ratios) = match rows.as_slice() {
        [plain, secure] => (
            ratio(secure.median.total, plain.median.total),
            phase_values(&secure.median)
                .iter()
                .zip(phase_values(&plain.median))
                .map(|((name, s), (_, p))| (name.to_string(), ratio(*s, p)))
                .collect(),
        ),
        _ => (None, Vec::new()),
    };
    Ok(BenchReport {
        mode: cfg.mode.kind,
        repeats,
        rows: prep.train.n_rows(),
        features: prep.train.n_features(),
        parties: prep.shards.len(),
        max_bin: cfg.train.max_bin,
        rows_by_plugin: rows,
        overhead_ratio,
        phase_ratios,
        laws,
    })
}

impl BenchReport {
    /// Tab-separated table: one line per plugin, then a ratio line.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("plugin\tcuts\tgradient\tencrypt\taggregate\tdecrypt\tsplit\ttotal\tencryptions\tvector_encryptions\tciphertext_additions\tvector_additions\tdecryptions\tbytes\n");
        for row in &self.rows_by_plugin {
            let name = match row.plugin {
                PluginKind::Plain => "plain",
                PluginKind::Paillier => "paillier",
            };
            out.push_str(name);
            for (_, v) in phase_values(&row.median) {
                write!(out, "\t{v:.6}").unwrap();
            }
            let c = &row.counters;
            writeln!(
                out,
                "\t{}\t{}\t{}\t{}\t{}\t{}",
                c.encryptions, c.vector_encryptions, c.ciphertext_additions, c.vector_additions, c.decryptions, c.bytes_transferred
            )
            .unwrap();
        }
        if !self.phase_ratios.is_empty() {
            out.push_str("ratio");
            for (_, r) in &self.phase_ratios {
                match r {
                    Some(r) => write!(out, "\t{r:.2}").unwrap(),
                    None => out.push_str("\t-"),
                }
            }
            out.push_str("\t-\t-\t-\t-\t-\t-\n");
        }
        out
    }
}

pub fn cmd_bench(config_path: &Path, repeats: usize, out: Option<&Path>, threads: bool) -> Result<BenchReport> {
    let loaded = ExperimentConfig::load(config_path)?;
    let report = bench(&loaded, repeats, threads)?;
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report).expect("bench report serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(report)
}

fn load_unlabelled_or_labelled(path: &Path, label: &str) -> Result<DataMatrix> {
    match load_csv(path, Some(label)) {
        Err(Error::UnknownColumn(c)) if c == label => load_csv(path, None),
        other => other,
    }
}

/// Predicts with either one forest (file or run report) or a set of partial
/// models. Partial models each read their own columns from `data`.
pub fn cmd_predict(models: &[PathBuf], data: &Path, label: &str) -> Result<(DataMatrix, Vec<f64>)> {
    let matrix = load_unlabelled_or_labelled(data, label)?;
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidParam("no model given".into()))?;
    let first_text = std::fs::read_to_string(first).map_err(|e| Error::io(first, e))?;
    if !first_text.starts_with(crate::inference::PARTIAL_MAGIC) {
        if models.len() != 1 {
            return Err(Error::InvalidParam("give one forest or several partial models".into()));
        }
        let forest = load_forest_artifact(first)?;
        let probs = forest.predict(&matrix)?;
        return Ok((matrix, probs));
    }
    let partials = models.iter().map(PartialModel::load).collect::<Result<Vec<_>>>()?;
    let shards = partials
        .iter()
        .map(|p| {
            Ok(PartyShard {
                party_id: p.party_id,
                role: p.role,
                data: matrix.select_features(&p.owned_features, p.role == Role::Active)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let probs = federated_predict(&partials, &shards)?;
    Ok((matrix, probs))
}
