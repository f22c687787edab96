//! In-process message passing with a full transcript.
//!
//! Every message goes through three recorded stages: the sender's processor
//! hands over a buffer, the transport carries it, and the receiver's
//! processor takes it in. Each stage gets a tick from one run-wide clock, so
//! the order of events is checkable after the fact.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::counters::{CounterSnapshot, OpCounters};
use crate::error::{Error, Result};
use crate::processor::{BufferKind, CallKind, ProcessorBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Party(usize),
    Server,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Party(id) => write!(f, "party:{id}"),
            Endpoint::Server => f.write_str("server"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Sender-side processing done (serialize, encrypt).
    Outbound,
    /// Carried by the transport.
    Transport,
    /// Receiver-side processing done (parse, decrypt).
    Inbound,
}

#[derive(Clone, Debug, Serialize)]
pub struct TranscriptEntry {
    pub id: usize,
    pub round: usize,
    pub step: &'static str,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    #[serde(serialize_with = "ser_call")]
    pub call: CallKind,
    #[serde(serialize_with = "ser_kind")]
    pub kind: BufferKind,
    pub byte_len: usize,
    /// Counters when the message left the sender.
    pub counters: CounterSnapshot,
    /// `(stage, tick)` in the order they happened.
    pub stages: Vec<(Stage, u64)>,
    #[serde(serialize_with = "ser_hex")]
    pub bytes: Vec<u8>,
}

fn ser_call<S: Serializer>(c: &CallKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(c)
}

fn ser_kind<S: Serializer>(k: &BufferKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(k.name())
}

fn ser_hex<S: Serializer>(b: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(b))
}

/// Append-only log of every message in a run.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    /// Messages delivered to `endpoint`: everything it learned from others.
    pub fn received_by(&self, endpoint: Endpoint) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.iter().filter(move |e| e.receiver == endpoint)
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.byte_len).sum()
    }

    /// Checks that every message went outbound, then transport, then inbound,
    /// with strictly increasing ticks.
    pub fn check_six_steps(&self) -> Result<()> {
        for e in &self.entries {
            let stages: Vec<Stage> = e.stages.iter().map(|s| s.0).collect();
            if stages != [Stage::Outbound, Stage::Transport, Stage::Inbound] {
                return Err(Error::Protocol(format!(
                    "message {} went through {stages:?}",
                    e.id
                )));
            }
            if !e.stages.windows(2).all(|w| w[0].1 < w[1].1) {
                return Err(Error::Protocol(format!(
                    "message {} has out-of-order stages",
                    e.id
                )));
            }
        }
        Ok(())
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Handle for a message in flight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MessageId(usize);

pub struct Transport {
    transcript: Transcript,
    counters: Arc<OpCounters>,
    clock: u64,
    round: usize,
}

impl Transport {
    pub fn new(counters: Arc<OpCounters>) -> Self {
        Transport {
            transcript: Transcript::default(),
            counters,
            clock: 0,
            round: 0,
        }
    }

    pub fn set_round(&mut self, round: usize) {
        self.round = round;
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Records a processed buffer handed over by `sender` and carries it to
    /// `receiver`.
    pub fn send(
        &mut self,
        step: &'static str,
        call: CallKind,
        sender: Endpoint,
        receiver: Endpoint,
        buffer: &ProcessorBuffer,
    ) -> MessageId {
        let bytes = buffer.to_bytes();
        self.counters.add_bytes(bytes.len() as u64);
        let counters = self.counters.snapshot();
        let out = self.tick();
        let carried = self.tick();
        let id = self.transcript.entries.len();
        self.transcript.entries.push(TranscriptEntry {
            id,
            round: self.round,
            step,
            sender,
            receiver,
            call,
            kind: buffer.kind,
            byte_len: bytes.len(),
            counters,
            stages: vec![(Stage::Outbound, out), (Stage::Transport, carried)],
            bytes,
        });
        MessageId(id)
    }

    /// Sends the same buffer to each receiver in turn.
    pub fn send_all(
        &mut self,
        step: &'static str,
        call: CallKind,
        sender: Endpoint,
        receivers: &[Endpoint],
        buffer: &ProcessorBuffer,
    ) -> Vec<MessageId> {
        receivers
            .iter()
            .map(|&r| self.send(step, call, sender, r, buffer))
            .collect()
    }

    pub fn bytes(&self, id: MessageId) -> &[u8] {
        &self.transcript.entries[id.0].bytes
    }

    /// Marks receiver-side processing of `id` as complete.
    pub fn mark_inbound(&mut self, id: MessageId) {
        let t = self.tick();
        self.transcript.entries[id.0]
            .stages
            .push((Stage::Inbound, t));
    }

    /// Runs receiver-side processing on `id` and records it.
    pub fn receive<T>(&mut self, id: MessageId, f: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
        let v = f(&self.transcript.entries[id.0].bytes)?;
        self.mark_inbound(id);
        Ok(v)
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}
