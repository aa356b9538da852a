//! Hybrid rateless set reconciliation over a simulated duplex channel.
//!
//! 1. A streams rateless Bloom slices over its whole set; B partitions its set
//!    into suspected-common elements and true negatives and stops the stream
//!    with the cost rule.
//! 2. B streams slices over its suspected-common set; A partitions likewise.
//! 3. A streams coded cells over the digests of its suspected-common set. B
//!    combines them with its own cells and peels. B then sends its true
//!    negatives, its false positives and the digests A must resolve; A
//!    answers with its own true negatives and false positives.
//!
//! Every message is serialized before it enters the channel, and the
//! [`Transcript`] meters the frames. The same engine runs the static-filter
//! and pure-IBLT variants by swapping the [`FilterStage`].

mod replica;
mod transcript;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

pub use transcript::{ByteTotals, MessageRecord, Phase, Side, Timings, Transcript};

use crate::error::{Error, Result};
use crate::hashing::{digest, Digest64, DigestMap, DigestSet};
use crate::riblt::C_ELEM_BITS;
use crate::wire::{Element, Message, StreamId};
use replica::{Endpoint, Initiator, Responder};

/// How phases 1 and 2 identify true negatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterStage {
    /// Rateless Bloom slice streams with the cost-based stop rule.
    Rateless,
    /// One static Bloom filter per direction at the given false positive rate.
    Static { epsilon: f64 },
    /// No filter stage: the coded-cell stream covers the full sets.
    Skip,
}

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    /// Modeled cost of reconciling one residual element, in bits.
    pub c_elem_bits: f64,
    /// Slices the sender emits after the receiver decides to stop, modeling
    /// the stop signal's delivery latency.
    pub overshoot_slices: u32,
    /// Guard on the length of each slice stream.
    pub max_slices: u32,
    /// Guard on the cell stream; `None` means `64 * (|S_A| + |S_B|)`.
    pub max_cells: Option<u64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig { c_elem_bits: C_ELEM_BITS, overshoot_slices: 0, max_slices: 1_000_000, max_cells: None }
    }
}

/// A replica's elements with their digests precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSet<'a> {
    elements: &'a [Element],
    digests: Vec<Digest64>,
    index: DigestMap<u32>,
}

impl<'a> PreparedSet<'a> {
    /// Fails if two elements share a digest (duplicates or a collision).
    pub fn new(elements: &'a [Element]) -> Result<Self> {
        let digests: Vec<Digest64> = elements.iter().map(|e| digest(e)).collect();
        let mut index = DigestMap::with_capacity_and_hasher(digests.len(), Default::default());
        for (i, d) in digests.iter().enumerate() {
            if index.insert(*d, i as u32).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate element digest {d:?}")));
            }
        }
        Ok(PreparedSet { elements, digests, index })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &'a [Element] {
        self.elements
    }

    pub fn digests(&self) -> &[Digest64] {
        &self.digests
    }

    pub fn get(&self, d: Digest64) -> Option<&'a [u8]> {
        self.index.get(&d).map(|&i| self.elements[i as usize].as_slice())
    }

    pub fn contains(&self, d: Digest64) -> bool {
        self.index.contains_key(&d)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Slices A sent on the first stream, including overshoot.
    pub phase1_slices: u32,
    /// Slices B sent on the second stream, including overshoot.
    pub phase2_slices: u32,
    /// Slices that arrived after the receiver had already stopped the stream.
    pub wasted_slices: u32,
    pub cells: u64,
    pub a_true_negatives: usize,
    pub a_false_positives: usize,
    pub b_true_negatives: usize,
    pub b_false_positives: usize,
    /// Static filter `(m, k)` per direction, when a static stage ran.
    pub filter_a: Option<(u64, u32)>,
    pub filter_b: Option<(u64, u32)>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub transcript: Transcript,
    /// Elements A added to its set, in arrival order.
    pub received_by_a: Vec<Element>,
    /// Elements B added to its set, in arrival order.
    pub received_by_b: Vec<Element>,
    pub stats: RunStats,
}

impl RunOutcome {
    /// A's final set: its own elements followed by the received ones.
    pub fn final_a(&self, a: &PreparedSet<'_>) -> Vec<Element> {
        a.elements().iter().chain(&self.received_by_a).cloned().collect()
    }

    pub fn final_b(&self, b: &PreparedSet<'_>) -> Vec<Element> {
        b.elements().iter().chain(&self.received_by_b).cloned().collect()
    }

    /// Checks that both replicas now hold exactly `S_A ∪ S_B`, with every
    /// missing element delivered once and byte-for-byte.
    pub fn verify(&self, a: &PreparedSet<'_>, b: &PreparedSet<'_>) -> Result<()> {
        verify_received("A", a, b, &self.received_by_a)?;
        verify_received("B", b, a, &self.received_by_b)
    }
}

/// `received` must be exactly `peer \ own`.
pub fn verify_received(name: &str, own: &PreparedSet<'_>, peer: &PreparedSet<'_>, received: &[Element]) -> Result<()> {
    let mut seen = DigestSet::default();
    for e in received {
        let d = digest(e);
        if own.contains(d) {
            return Err(Error::Verification(format!("replica {name} received an element it already had")));
        }
        if peer.get(d) != Some(e.as_slice()) {
            return Err(Error::Verification(format!("replica {name} received an element its peer does not hold")));
        }
        if !seen.insert(d) {
            return Err(Error::Verification(format!("replica {name} received an element twice")));
        }
    }
    let missing = peer.digests().iter().filter(|d| !own.contains(**d)).count();
    if missing != seen.len() {
        return Err(Error::Verification(format!(
            "replica {name} is missing {} of {missing} elements",
            missing - seen.len()
        )));
    }
    Ok(())
}

/// Simulated duplex link. Streams emit one item per tick; every message is
/// delivered in the tick it was sent except filter stop signals, which are
/// delayed by `overshoot_slices` ticks.
struct Channel<'t> {
    queue: BinaryHeap<Reverse<(u64, u64, Side, Vec<u8>)>>,
    seq: u64,
    transcript: &'t mut Transcript,
    stop_latency: u64,
}

impl Channel<'_> {
    fn send(&mut self, from: Side, tick: u64, msgs: &mut Vec<Message>) {
        for msg in msgs.drain(..) {
            let frame = msg.encode();
            self.transcript.record(from, tick, &msg, frame.len());
            let latency = match msg {
                Message::Stop { stream: StreamId::Filter1 | StreamId::Filter2 } => self.stop_latency,
                _ => 0,
            };
            self.queue.push(Reverse((tick + latency, self.seq, from.peer(), frame)));
            self.seq += 1;
        }
    }

    fn pop_due(&mut self, tick: u64) -> Option<(Side, Vec<u8>)> {
        match self.queue.peek() {
            Some(Reverse((due, ..))) if *due <= tick => self.queue.pop().map(|Reverse((_, _, to, f))| (to, f)),
            _ => None,
        }
    }
}

fn exchange(a: &mut Initiator<'_, '_>, b: &mut Responder<'_, '_>, cfg: &ProtocolConfig, transcript: &mut Transcript) -> Result<()> {
    let mut ch = Channel { queue: BinaryHeap::new(), seq: 0, transcript, stop_latency: cfg.overshoot_slices as u64 };
    let mut out = Vec::new();
    a.start(&mut out)?;
    ch.send(Side::A, 0, &mut out);
    b.start(&mut out)?;
    ch.send(Side::B, 0, &mut out);
    let mut tick = 0u64;
    loop {
        a.poll(&mut out)?;
        ch.send(Side::A, tick, &mut out);
        b.poll(&mut out)?;
        ch.send(Side::B, tick, &mut out);
        while let Some((to, frame)) = ch.pop_due(tick) {
            let msg = Message::decode(&frame)?;
            match to {
                Side::A => a.on_message(msg, &mut out)?,
                Side::B => b.on_message(msg, &mut out)?,
            }
            ch.send(to, tick, &mut out);
        }
        if ch.queue.is_empty() && !a.is_streaming() && !b.is_streaming() {
            break;
        }
        tick += 1;
    }
    if !(a.done && b.done) {
        return Err(Error::Verification("exchange ended before both final updates were applied".into()));
    }
    Ok(())
}

/// Runs the three-phase exchange with the given filter stage.
pub fn run_with_stage(a: &PreparedSet<'_>, b: &PreparedSet<'_>, stage: FilterStage, cfg: &ProtocolConfig) -> Result<RunOutcome> {
    if let FilterStage::Static { epsilon } = stage {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("false positive rate {epsilon} not in (0, 1)")));
        }
    }
    let max_cells = cfg.max_cells.unwrap_or(64 * (a.len() + b.len()) as u64).max(64);
    let mut ia = Initiator::new(a, stage, cfg, max_cells);
    let mut rb = Responder::new(b, stage, cfg);
    let mut transcript = Transcript::new();
    exchange(&mut ia, &mut rb, cfg, &mut transcript)?;
    transcript.timings.encode = [ia.encode, rb.encode];
    transcript.timings.decode = [ia.decode, rb.decode];
    let stats = RunStats {
        phase1_slices: ia.slices_sent,
        phase2_slices: rb.slices_sent,
        wasted_slices: ia.wasted_slices + rb.wasted_slices,
        cells: ia.cells_sent,
        a_true_negatives: ia.partition.true_negatives().len(),
        a_false_positives: ia.false_positives,
        b_true_negatives: rb.partition.true_negatives().len(),
        b_false_positives: rb.false_positives,
        filter_a: ia.filter_params,
        filter_b: rb.filter_params,
    };
    Ok(RunOutcome { transcript, received_by_a: ia.received, received_by_b: rb.received, stats })
}

/// Hybrid rateless reconciliation: rateless Bloom filters then rateless IBLT.
pub fn run_hybrid(a: &PreparedSet<'_>, b: &PreparedSet<'_>, cfg: &ProtocolConfig) -> Result<RunOutcome> {
    run_with_stage(a, b, FilterStage::Rateless, cfg)
}

/// Convenience wrapper over raw element slices.
pub fn reconcile(sa: &[Element], sb: &[Element], stage: FilterStage, cfg: &ProtocolConfig) -> Result<RunOutcome> {
    let a = PreparedSet::new(sa)?;
    let b = PreparedSet::new(sb)?;
    let outcome = run_with_stage(&a, &b, stage, cfg)?;
    outcome.verify(&a, &b)?;
    Ok(outcome)
}
