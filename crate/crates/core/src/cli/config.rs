//! Experiment configuration files.
//!
//! ```toml
//! [dataset]
//! synthetic = { n_rows = 600, n_features = 8, seed = 7 }
//! label_column = "label"
//! validation_fraction = 0.2
//!
//! [split]
//! parties = 2
//! feature_counts = [3, 5]
//! active_party = 1
//!
//! [train]
//! num_trees = 10
//! max_depth = 5
//! max_bin = 256
//!
//! [mode]
//! kind = "vertical"
//!
//! [security]
//! plugin = "paillier"
//! key_bits = 512
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, split_horizontal, split_vertical, DataMatrix, PartyShard, Role};
use crate::error::{Error, Result};
use crate::gbdt::TrainParams;
use crate::he::{decode_keypair, keygen, Keypair, PackingParams, ALLOWED_MODULUS_BITS};
use crate::synthetic::SyntheticSpec;

/// Overrides `[security] key_dir`.
pub const KEY_DIR_ENV: &str = "FEDXGB_KEY_DIR";

pub const PRIVATE_KEY_FILE: &str = "private.key";
pub const PUBLIC_KEY_FILE: &str = "public.key";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub train: TrainParams,
    pub mode: ModeConfig,
    #[serde(default)]
    pub security: SecurityConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV file, relative to the config file.
    pub csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_label")]
    pub label_column: String,
    /// Trailing fraction of rows held out for validation metrics.
    #[serde(default)]
    pub validation_fraction: f64,
}

fn default_label() -> String {
    "label".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Party count for federated modes. Defaults to 2.
    pub parties: Option<usize>,
    /// Vertical: how many consecutive columns each party owns.
    pub feature_counts: Option<Vec<usize>>,
    /// Vertical: column names per party. Takes precedence over counts.
    pub features: Option<Vec<Vec<String>>>,
    /// Vertical: the label holder. Defaults to party 0.
    pub active_party: Option<usize>,
    /// Vertical: explicit role per party, as an alternative to `active_party`.
    pub roles: Option<Vec<Role>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Centralized,
    Horizontal,
    Vertical,
    Cyclic,
    Bagging,
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModeKind::Centralized => "centralized",
            ModeKind::Horizontal => "horizontal",
            ModeKind::Vertical => "vertical",
            ModeKind::Cyclic => "cyclic",
            ModeKind::Bagging => "bagging",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub kind: ModeKind,
    #[serde(default = "one")]
    pub trees_per_round: usize,
    #[serde(default)]
    pub threads: bool,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluginKind {
    #[default]
    Plain,
    Paillier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityConfig {
    pub plugin: PluginKind,
    pub key_bits: u64,
    /// Seeds key generation when no key directory is configured.
    pub key_seed: u64,
    /// Seeds encryption randomness.
    pub seed: u64,
    /// Directory holding `private.key`, written by `keygen`.
    pub key_dir: Option<PathBuf>,
    pub packing: PackingParams,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        SecurityConfig {
            plugin: PluginKind::Plain,
            key_bits: 512,
            key_seed: 0,
            seed: 0,
            key_dir: None,
            packing: PackingParams::default(),
        }
    }
}

impl SecurityConfig {
    /// The key directory after applying the environment override.
    pub fn effective_key_dir(&self) -> Option<PathBuf> {
        match std::env::var_os(KEY_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Some(PathBuf::from(dir)),
            _ => self.key_dir.clone(),
        }
    }

    /// Loads the keypair from the key directory, or derives one from
    /// `key_seed` when there is none.
    pub fn keypair(&self) -> Result<Keypair> {
        match self.effective_key_dir() {
            Some(dir) => {
                let path = dir.join(PRIVATE_KEY_FILE);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let kp = decode_keypair(&bytes)?;
                if kp.public().bits() != self.key_bits {
                    return Err(Error::config(
                        "security.key_bits",
                        format!(
                            "key in {} has {} bits, config says {}",
                            dir.display(),
                            kp.public().bits(),
                            self.key_bits
                        ),
                    ));
                }
                Ok(kp)
            }
            None => keygen(self.key_bits, self.key_seed),
        }
    }
}

/// A config plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

/// Data ready for a run: the training portion split per mode, plus the whole
/// training matrix and an optional validation matrix.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: DataMatrix,
    pub validation: Option<DataMatrix>,
    pub shards: Vec<PartyShard>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Self::from_toml(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn parties(&self) -> usize {
        match self.mode.kind {
            ModeKind::Centralized => 1,
            _ => self.split.parties.unwrap_or(2),
        }
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match (&d.csv, &d.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::config("dataset", "set only one of csv and synthetic"))
            }
            (None, None) => return Err(Error::config("dataset", "set csv or synthetic")),
            _ => {}
        }
        if !(0.0..1.0).contains(&d.validation_fraction) {
            return Err(Error::config(
                "dataset.validation_fraction",
                format!("must be in [0, 1), got {}", d.validation_fraction),
            ));
        }
        self.train
            .validate()
            .map_err(|e| Error::config("train", e.to_string()))?;
        if self.mode.trees_per_round == 0 {
            return Err(Error::config("mode.trees_per_round", "must be at least 1"));
        }
        let n = self.parties();
        if n == 0 {
            return Err(Error::config("split.parties", "must be at least 1"));
        }
        if self.mode.kind == ModeKind::Vertical {
            self.validate_vertical(n)?;
        }
        let s = &self.security;
        if s.plugin == PluginKind::Paillier {
            if !ALLOWED_MODULUS_BITS.contains(&s.key_bits) {
                return Err(Error::config(
                    "security.key_bits",
                    format!("must be one of {ALLOWED_MODULUS_BITS:?}, got {}", s.key_bits),
                ));
            }
            s.packing
                .validate()
                .map_err(|e| Error::config("security.packing", e.to_string()))?;
            if matches!(self.mode.kind, ModeKind::Cyclic | ModeKind::Bagging) {
                return Err(Error::config(
                    "security.plugin",
                    format!("{} mode exchanges whole trees and takes no encryption plugin", self.mode.kind),
                ));
            }
        }
        Ok(())
    }

    fn validate_vertical(&self, n: usize) -> Result<()> {
        let s = &self.split;
        if let Some(roles) = &s.roles {
            if roles.len() != n {
                return Err(Error::config(
                    "split.roles",
                    format!("{} roles for {n} parties", roles.len()),
                ));
            }
            let active = roles.iter().filter(|r| **r == Role::Active).count();
            if active != 1 {
                return Err(Error::config(
                    "split.roles",
                    format!("vertical mode needs exactly one active party, found {active}"),
                ));
            }
            if roles.iter().any(|r| !matches!(r, Role::Active | Role::Passive)) {
                return Err(Error::config("split.roles", "vertical roles are active or passive"));
            }
            if s.active_party.is_some() {
                return Err(Error::config("split.active_party", "set roles or active_party, not both"));
            }
        }
        if let Some(a) = s.active_party {
            if a >= n {
                return Err(Error::config(
                    "split.active_party",
                    format!("party {a} does not exist among {n}"),
                ));
            }
        }
        if let Some(counts) = &s.feature_counts {
            if counts.len() != n {
                return Err(Error::config(
                    "split.feature_counts",
                    format!("{} entries for {n} parties", counts.len()),
                ));
            }
        }
        if let Some(features) = &s.features {
            if features.len() != n {
                return Err(Error::config(
                    "split.features",
                    format!("{} lists for {n} parties", features.len()),
                ));
            }
        }
        Ok(())
    }

    fn active_party(&self) -> usize {
        match &self.split.roles {
            Some(roles) => roles.iter().position(|r| *r == Role::Active).unwrap_or(0),
            None => self.split.active_party.unwrap_or(0),
        }
    }

    fn vertical_assignment(&self, names: &[String]) -> Result<BTreeMap<usize, Vec<String>>> {
        let n = self.parties();
        if let Some(features) = &self.split.features {
            return Ok(features.iter().cloned().enumerate().collect());
        }
        let counts = match &self.split.feature_counts {
            Some(c) => {
                if c.iter().sum::<usize>() != names.len() {
                    return Err(Error::config(
                        "split.feature_counts",
                        format!("counts sum to {} but the data has {} features", c.iter().sum::<usize>(), names.len()),
                    ));
                }
                c.clone()
            }
            None => {
                if names.len() < n {
                    return Err(Error::config(
                        "split.parties",
                        format!("{n} parties but only {} features", names.len()),
                    ));
                }
                let base = names.len() / n;
                let mut c = vec![base; n];
                c[n - 1] += names.len() - base * n;
                c
            }
        };
        let mut start = 0;
        Ok(counts
            .iter()
            .enumerate()
            .map(|(p, &k)| {
                let owned = names[start..start + k].to_vec();
                start += k;
                (p, owned)
            })
            .collect())
    }
}

impl LoadedConfig {
    pub fn load_matrix(&self) -> Result<DataMatrix> {
        let d = &self.config.dataset;
        match (&d.csv, &d.synthetic) {
            (Some(csv), _) => load_csv(self.base_dir.join(csv), Some(&d.label_column)),
            (None, Some(spec)) => spec.generate(),
            (None, None) => Err(Error::config("dataset", "set csv or synthetic")),
        }
    }

    pub fn prepare(&self) -> Result<PreparedData> {
        let cfg = &self.config;
        let full = self.load_matrix()?;
        let n_valid = (full.n_rows() as f64 * cfg.dataset.validation_fraction).floor() as usize;
        let n_train = full.n_rows() - n_valid;
        if n_train == 0 {
            return Err(Error::config("dataset.validation_fraction", "leaves no training rows"));
        }
        let train = full.slice_rows(0, n_train);
        let validation = (n_valid > 0).then(|| full.slice_rows(n_train, full.n_rows()));
        let shards = self.split(&train)?;
        Ok(PreparedData {
            train,
            validation,
            shards,
        })
    }

    /// Splits `data` the way the configured mode expects.
    pub fn split(&self, data: &DataMatrix) -> Result<Vec<PartyShard>> {
        let cfg = &self.config;
        let n = cfg.parties();
        let shards = match cfg.mode.kind {
            ModeKind::Centralized => vec![PartyShard::peer(0, data.clone())],
            ModeKind::Horizontal | ModeKind::Cyclic | ModeKind::Bagging => split_horizontal(data, n)?,
            ModeKind::Vertical => {
                let assignment = cfg.vertical_assignment(data.feature_names())?;
                split_vertical(data, &assignment, cfg.active_party())?
            }
        };
        Ok(shards)
    }
}
