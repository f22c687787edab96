use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Operation counters shared by every plugin and transport in one run.
#[derive(Debug, Default)]
pub struct OpCounters {
    encryptions: AtomicU64,
    padding_encryptions: AtomicU64,
    vector_encryptions: AtomicU64,
    ciphertext_additions: AtomicU64,
    vector_additions: AtomicU64,
    decryptions: AtomicU64,
    bytes_transferred: AtomicU64,
}

/// Plain copy of [`OpCounters`] at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    /// Scalar encryptions of payload values (g/h entries, packed blocks).
    pub encryptions: u64,
    /// Fresh encryptions of zero filling empty histogram slots.
    pub padding_encryptions: u64,
    /// Whole-vector encryptions (one per packed G or H vector).
    pub vector_encryptions: u64,
    pub ciphertext_additions: u64,
    /// Whole-vector homomorphic additions.
    pub vector_additions: u64,
    pub decryptions: u64,
    pub bytes_transferred: u64,
}

macro_rules! bump {
    ($($name:ident => $field:ident),* $(,)?) => {
        $(
            pub fn $name(&self, n: u64) {
                self.$field.fetch_add(n, Ordering::Relaxed);
            }
        )*
    };
}

impl OpCounters {
    pub fn new() -> Self {
        Self::default()
    }

    bump! {
        add_encryptions => encryptions,
        add_padding_encryptions => padding_encryptions,
        add_vector_encryptions => vector_encryptions,
        add_ciphertext_additions => ciphertext_additions,
        add_vector_additions => vector_additions,
        add_decryptions => decryptions,
        add_bytes => bytes_transferred,
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            encryptions: self.encryptions.load(Ordering::Relaxed),
            padding_encryptions: self.padding_encryptions.load(Ordering::Relaxed),
            vector_encryptions: self.vector_encryptions.load(Ordering::Relaxed),
            ciphertext_additions: self.ciphertext_additions.load(Ordering::Relaxed),
            vector_additions: self.vector_additions.load(Ordering::Relaxed),
            decryptions: self.decryptions.load(Ordering::Relaxed),
            bytes_transferred: self.bytes_transferred.load(Ordering::Relaxed),
        }
    }
}

impl Sub for CounterSnapshot {
    type Output = CounterSnapshot;

    fn sub(self, rhs: CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            encryptions: self.encryptions - rhs.encryptions,
            padding_encryptions: self.padding_encryptions - rhs.padding_encryptions,
            vector_encryptions: self.vector_encryptions - rhs.vector_encryptions,
            ciphertext_additions: self.ciphertext_additions - rhs.ciphertext_additions,
            vector_additions: self.vector_additions - rhs.vector_additions,
            decryptions: self.decryptions - rhs.decryptions,
            bytes_transferred: self.bytes_transferred - rhs.bytes_transferred,
        }
    }
}

/// Closed-form operation counts for the secure histogram protocols.
pub mod laws {
    /// Scalar encryptions per vertical round: one `g` and one `h` per row.
    pub fn vertical_encryptions(rows: u64) -> u64 {
        2 * rows
    }

    /// Ciphertext additions for one vertical node: every row beyond the
    /// first in each occupied bin costs one addition for `g` and one for `h`.
    pub fn vertical_node_additions(rows: u64, occupied_bins_per_feature: &[u64]) -> u64 {
        occupied_bins_per_feature.iter().map(|&k| 2 * (rows - k)).sum()
    }

    /// The single-node estimate with every feature filling all `bins`.
    pub fn vertical_additions_estimate(rows: u64, features: u64, bins: u64) -> u64 {
        (rows - bins) * 2 * features
    }

    /// Packed-vector encryptions per horizontal node: a G and an H vector
    /// from each party.
    pub fn horizontal_vector_encryptions(parties: u64) -> u64 {
        2 * parties
    }

    /// Packed-vector additions per horizontal node at the server.
    pub fn horizontal_vector_additions(parties: u64) -> u64 {
        2 * parties.saturating_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use super::laws::*;

    #[test]
    fn full_scale_figures() {
        assert_eq!(vertical_encryptions(200_000), 400_000);
        let adds = vertical_additions_estimate(200_000, 30, 256);
        assert_eq!(adds, 11_984_640);
        assert!((adds as f64 - 12e6).abs() / 12e6 < 0.01);
        assert_eq!(horizontal_vector_additions(10), 18);
        assert_eq!(horizontal_vector_additions(5), 8);
        assert_eq!(vertical_node_additions(10, &[3, 10]), 14);
    }
}
