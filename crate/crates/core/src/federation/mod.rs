//! In-process simulation of the four collaboration modes.
//!
//! Parties and the server exchange nothing but [`ProcessorBuffer`] bytes over
//! a recording [`Transport`]. Runs are deterministic; the optional threaded
//! mode only spreads each party's local work over threads and produces the
//! same artifacts.
//!
//! [`ProcessorBuffer`]: crate::processor::ProcessorBuffer

mod horizontal;
pub mod probe;
mod transport;
mod tree_based;
mod vertical;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Serialize, Serializer};

use crate::counters::{CounterSnapshot, OpCounters};
use crate::error::Result;
use crate::he::{Keypair, PackingParams};
use crate::processor::{EncryptionPlugin, PaillierPlugin, PassthroughPlugin};

pub use horizontal::{run_horizontal_histogram, HorizontalModel};
pub use transport::{Endpoint, MessageId, Stage, Transcript, TranscriptEntry, Transport};
pub use tree_based::{run_bagging, run_cyclic, TreeBasedModel};
pub use vertical::{run_vertical_histogram, VerticalModel};

/// Which plugin protects the exchanged values.
#[derive(Clone, Debug, Default)]
#[allow(clippy::large_enum_variant)]
pub enum Security {
    #[default]
    Plain,
    Paillier {
        keypair: Keypair,
        packing: PackingParams,
        /// Seeds each party's encryption randomness.
        seed: u64,
    },
}

impl Security {
    pub fn paillier(keypair: Keypair, seed: u64) -> Self {
        Security::Paillier {
            keypair,
            packing: PackingParams::default(),
            seed,
        }
    }

    pub fn is_secure(&self) -> bool {
        matches!(self, Security::Paillier { .. })
    }

    /// The plugin a participant gets. Only key holders receive the private key.
    pub(crate) fn plugin_for(
        &self,
        endpoint: Endpoint,
        key_holder: bool,
        counters: &Arc<OpCounters>,
    ) -> Result<Arc<dyn EncryptionPlugin>> {
        Ok(match self {
            Security::Plain => Arc::new(PassthroughPlugin::new(counters.clone())),
            Security::Paillier {
                keypair,
                packing,
                seed,
            } => {
                let stream = match endpoint {
                    Endpoint::Party(id) => id as u64 + 1,
                    Endpoint::Server => 0,
                };
                let seed = seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(stream);
                if key_holder {
                    Arc::new(PaillierPlugin::with_keypair(
                        keypair.clone(),
                        *packing,
                        seed,
                        counters.clone(),
                    )?)
                } else {
                    Arc::new(PaillierPlugin::public_only(
                        keypair.public().clone(),
                        *packing,
                        seed,
                        counters.clone(),
                    )?)
                }
            }
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub security: Security,
    /// Run each party's local work on its own thread.
    pub threads: bool,
}

impl RunOptions {
    pub fn plain() -> Self {
        RunOptions::default()
    }

    pub fn secure(keypair: Keypair, seed: u64) -> Self {
        RunOptions {
            security: Security::paillier(keypair, seed),
            threads: false,
        }
    }

    pub fn with_threads(mut self, threads: bool) -> Self {
        self.threads = threads;
        self
    }
}

/// Wall-clock time spent per labelled phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    #[serde(serialize_with = "ser_secs")]
    pub cuts: Duration,
    #[serde(serialize_with = "ser_secs")]
    pub gradient: Duration,
    #[serde(serialize_with = "ser_secs")]
    pub encrypt: Duration,
    #[serde(serialize_with = "ser_secs")]
    pub aggregate: Duration,
    #[serde(serialize_with = "ser_secs")]
    pub decrypt: Duration,
    #[serde(serialize_with = "ser_secs")]
    pub split: Duration,
}

fn ser_secs<S: Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl PhaseTimings {
    pub const PHASES: [&'static str; 6] = [
        "cuts",
        "gradient",
        "encrypt",
        "aggregate",
        "decrypt",
        "split",
    ];

    pub fn get(&self, phase: &str) -> Option<Duration> {
        Some(match phase {
            "cuts" => self.cuts,
            "gradient" => self.gradient,
            "encrypt" => self.encrypt,
            "aggregate" => self.aggregate,
            "decrypt" => self.decrypt,
            "split" => self.split,
            _ => return None,
        })
    }

    pub fn total(&self) -> Duration {
        Self::PHASES.iter().filter_map(|p| self.get(p)).sum()
    }
}

pub(crate) fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let v = f();
    *slot += start.elapsed();
    v
}

/// Everything a run leaves behind.
#[derive(Clone, Debug)]
pub struct RunOutput<M> {
    pub model: M,
    pub transcript: Transcript,
    /// Totals over the whole run.
    pub counters: CounterSnapshot,
    /// Counter increments per boosting round.
    pub round_counters: Vec<CounterSnapshot>,
    pub timings: PhaseTimings,
}

/// Maps `f` over `items`, on scoped threads when `threads` is set. Results
/// keep input order either way.
pub(crate) fn par_map<T, R, F>(threads: bool, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    if !threads || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|item| s.spawn(|| f(item))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    })
}

/// Tracks per-round counter increments.
pub(crate) struct RoundMeter {
    counters: Arc<OpCounters>,
    start: CounterSnapshot,
    pub rounds: Vec<CounterSnapshot>,
}

impl RoundMeter {
    pub fn new(counters: Arc<OpCounters>) -> Self {
        let start = counters.snapshot();
        RoundMeter {
            counters,
            start,
            rounds: Vec::new(),
        }
    }

    pub fn close_round(&mut self) {
        let now = self.counters.snapshot();
        self.rounds.push(now - self.start);
        self.start = now;
    }
}
