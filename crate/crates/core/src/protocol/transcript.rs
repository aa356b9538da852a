use std::io::Write;
use std::time::Duration;

use serde::Serialize;

use crate::error::Result;
use crate::wire::{Message, MessageKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn peer(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Phase {
    /// Filter stream from A over its whole set.
    Identify,
    /// Filter stream from B over its suspected-common set.
    Partition,
    /// Coded cells and final element exchange.
    Reconcile,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Identify, Phase::Partition, Phase::Reconcile];

    pub fn of(kind: MessageKind) -> Phase {
        use MessageKind::*;
        match kind {
            RBFStream | Stop1 | StaticFilter1 => Phase::Identify,
            RBFStream2 | Stop2 | StaticFilter2 => Phase::Partition,
            IBLTStream | StopIBLT | FinalUpdateB | FinalUpdateA | FullState | FullStateReply => Phase::Reconcile,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ByteTotals {
    pub metadata_bytes: u64,
    pub state_bytes: u64,
}

impl ByteTotals {
    pub fn total(&self) -> u64 {
        self.metadata_bytes + self.state_bytes
    }

    fn add(&mut self, metadata: usize, state: usize) {
        self.metadata_bytes += metadata as u64;
        self.state_bytes += state as u64;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MessageRecord {
    pub seq: u64,
    pub tick: u64,
    pub from: Side,
    pub kind: MessageKind,
    pub bytes: usize,
    pub metadata_bytes: usize,
    pub state_bytes: usize,
}

/// Encode/decode time per replica, indexed by [`Side`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Timings {
    pub encode: [Duration; 2],
    pub decode: [Duration; 2],
}

impl Timings {
    pub fn encode_total(&self) -> Duration {
        self.encode[0] + self.encode[1]
    }

    pub fn decode_total(&self) -> Duration {
        self.decode[0] + self.decode[1]
    }
}

/// Metered log of every frame sent between the replicas.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    messages: Vec<MessageRecord>,
    totals: ByteTotals,
    per_phase: [ByteTotals; 3],
    pub timings: Timings,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one frame; `frame_len` is the length of `msg.encode()`.
    pub fn record(&mut self, from: Side, tick: u64, msg: &Message, frame_len: usize) -> &MessageRecord {
        let state = msg.state_bytes();
        debug_assert!(state <= frame_len);
        let metadata = frame_len - state;
        let kind = msg.kind();
        self.totals.add(metadata, state);
        self.per_phase[Phase::of(kind) as usize].add(metadata, state);
        self.messages.push(MessageRecord {
            seq: self.messages.len() as u64,
            tick,
            from,
            kind,
            bytes: frame_len,
            metadata_bytes: metadata,
            state_bytes: state,
        });
        self.messages.last().unwrap()
    }

    pub fn messages(&self) -> &[MessageRecord] {
        &self.messages
    }

    pub fn totals(&self) -> ByteTotals {
        self.totals
    }

    pub fn phase_totals(&self, phase: Phase) -> ByteTotals {
        self.per_phase[phase as usize]
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).count()
    }

    /// One JSON object per message, in send order.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
