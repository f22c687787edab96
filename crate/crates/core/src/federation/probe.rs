//! What an honest-but-curious passive party can get out of its transcript.

use crate::error::Result;
use crate::federation::{Endpoint, Transcript};
use crate::gbdt::{quantize, GHPair};
use crate::processor::Payload;

/// Guesses each row's label from the gradient messages `party` received and
/// returns the fraction guessed right.
///
/// With plaintext gradients the sign of `g` gives the label away. With
/// ciphertexts the best this probe can do is read a bit of the ciphertext,
/// which should land near one half on a balanced set.
pub fn label_probe_accuracy(
    transcript: &Transcript,
    party: usize,
    labels: &[f64],
) -> Result<Option<f64>> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for e in transcript.received_by(Endpoint::Party(party)) {
        let guesses: Vec<bool> = match Payload::from_bytes(&e.bytes)? {
            Payload::GhPlain(gh) => gh.iter().map(|p| p.g < 0.0).collect(),
            Payload::GhEnc(enc) => enc.pairs.iter().map(|(g, _)| g.value.bit(0)).collect(),
            _ => continue,
        };
        for (guess, &y) in guesses.iter().zip(labels) {
            total += 1;
            correct += usize::from(*guess == (y == 1.0));
        }
    }
    Ok((total > 0).then(|| correct as f64 / total as f64))
}

/// Byte encodings a plaintext `(g, h)` could travel as: the raw double and
/// the fixed-point integer, both little-endian.
fn encodings(p: &GHPair) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for v in [p.g, p.h] {
        if v != 0.0 {
            out.push(v.to_le_bytes().to_vec());
            out.push(quantize(v).to_le_bytes().to_vec());
        }
    }
    out
}

/// Counts gradient values whose plaintext encodings appear anywhere in the
/// bytes `party` received.
pub fn plaintext_gh_occurrences(transcript: &Transcript, party: usize, gh: &[GHPair]) -> usize {
    let needles: Vec<Vec<u8>> = gh.iter().flat_map(encodings).collect();
    byte_occurrences(transcript, Endpoint::Party(party), &needles)
}

/// Counts needles found in any message delivered to `endpoint`.
pub fn byte_occurrences(transcript: &Transcript, endpoint: Endpoint, needles: &[Vec<u8>]) -> usize {
    transcript
        .received_by(endpoint)
        .map(|e| {
            needles
                .iter()
                .filter(|n| !n.is_empty() && e.bytes.windows(n.len()).any(|w| w == n.as_slice()))
                .count()
        })
        .sum()
}
