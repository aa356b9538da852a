//! Replica state machines. `Initiator` is replica A, which opens the first
//! filter stream and later streams coded cells; `Responder` is replica B,
//! which decodes the cell stream and sends the first final update.

use std::time::{Duration, Instant};

use super::{FilterStage, PreparedSet, ProtocolConfig};
use crate::bloom::BloomFilter;
use crate::error::{Error, Result};
use crate::hashing::{Digest64, DigestSet};
use crate::rbf::{should_stop, BloomSlice, PartitionState, SliceStream};
use crate::riblt::{combine, CellEncoder, CodedCell, DecodeStatus, Decoder};
use crate::wire::{Element, Message, StreamId};

pub(crate) trait Endpoint {
    fn start(&mut self, out: &mut Vec<Message>) -> Result<()>;
    /// Emits the next item of every active stream.
    fn poll(&mut self, out: &mut Vec<Message>) -> Result<()>;
    fn on_message(&mut self, msg: Message, out: &mut Vec<Message>) -> Result<()>;
    fn is_streaming(&self) -> bool;
}

#[inline]
fn timed<T>(acc: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let r = f();
    *acc += t.elapsed();
    r
}

/// Receiver-side handling shared by both filter stages: returns whether the
/// sender should be told to stop.
fn consume_slice(partition: &mut PartitionState, slice: &BloomSlice, c_elem: f64) -> Result<bool> {
    let new_tn = partition.partition(slice)?.len();
    // An all-zero slice means the sender's set is empty; nothing more to learn.
    Ok(should_stop(new_tn, slice.m(), c_elem) || slice.bits.count_ones() == 0)
}

fn lookup_all(set: &PreparedSet<'_>, digests: &[Digest64]) -> Result<Vec<Element>> {
    digests.iter().map(|d| set.get(*d).map(<[u8]>::to_vec).ok_or(Error::UnknownDigest(*d))).collect()
}

/// Resolves decoded digests to local elements, rejecting digests that are not
/// suspected-common at this replica.
fn resolve_false_positives(set: &PreparedSet<'_>, partition: &PartitionState, digests: &[Digest64]) -> Result<Vec<Element>> {
    let tn: DigestSet = partition.true_negatives().iter().copied().collect();
    if let Some(d) = digests.iter().find(|d| tn.contains(d)) {
        return Err(Error::UnknownDigest(*d));
    }
    lookup_all(set, digests)
}

pub(crate) struct Initiator<'s, 'a> {
    set: &'s PreparedSet<'a>,
    stage: FilterStage,
    cfg: &'s ProtocolConfig,
    max_cells: u64,
    slices: Option<SliceStream>,
    pub(crate) slices_sent: u32,
    pub(crate) partition: PartitionState,
    pub(crate) stopped_partition_stream: bool,
    pub(crate) wasted_slices: u32,
    cells: Option<CellEncoder>,
    pub(crate) cells_sent: u64,
    pub(crate) filter_params: Option<(u64, u32)>,
    pub(crate) received: Vec<Element>,
    pub(crate) false_positives: usize,
    pub(crate) encode: Duration,
    pub(crate) decode: Duration,
    pub(crate) done: bool,
}

impl<'s, 'a> Initiator<'s, 'a> {
    pub(crate) fn new(set: &'s PreparedSet<'a>, stage: FilterStage, cfg: &'s ProtocolConfig, max_cells: u64) -> Self {
        Initiator {
            set,
            stage,
            cfg,
            max_cells,
            slices: None,
            slices_sent: 0,
            partition: PartitionState::new(set.digests().to_vec()),
            stopped_partition_stream: false,
            wasted_slices: 0,
            cells: None,
            cells_sent: 0,
            filter_params: None,
            received: Vec::new(),
            false_positives: 0,
            encode: Duration::ZERO,
            decode: Duration::ZERO,
            done: false,
        }
    }

    fn start_cells(&mut self) {
        let com = self.partition.suspected_common();
        self.cells = Some(timed(&mut self.encode, || CellEncoder::new(com)));
    }
}

impl Endpoint for Initiator<'_, '_> {
    fn start(&mut self, out: &mut Vec<Message>) -> Result<()> {
        match self.stage {
            FilterStage::Rateless => {
                self.slices = Some(timed(&mut self.encode, || SliceStream::new(self.set.digests().to_vec())));
            }
            FilterStage::Static { epsilon } => {
                let n = self.set.len().max(1) as u64;
                let filter = timed(&mut self.encode, || BloomFilter::from_digests(n, epsilon, self.set.digests()))?;
                self.filter_params = Some((filter.m(), filter.k()));
                out.push(Message::StaticFilter { stream: StreamId::Filter1, filter });
            }
            FilterStage::Skip => self.start_cells(),
        }
        Ok(())
    }

    fn poll(&mut self, out: &mut Vec<Message>) -> Result<()> {
        if let Some(stream) = self.slices.as_mut() {
            if stream.slices_sent() >= self.cfg.max_slices {
                return Err(Error::StreamCapExceeded { stream: "RBFStream", cap: self.cfg.max_slices as u64 });
            }
            let slice = timed(&mut self.encode, || stream.next_slice());
            self.slices_sent += 1;
            out.push(Message::Slice { stream: StreamId::Filter1, slice });
        }
        if let Some(enc) = self.cells.as_mut() {
            if self.cells_sent >= self.max_cells {
                return Err(Error::StreamCapExceeded { stream: "IBLTStream", cap: self.max_cells });
            }
            let cell = timed(&mut self.encode, || enc.next_cell());
            out.push(Message::Cell { index: self.cells_sent as u32, cell });
            self.cells_sent += 1;
        }
        Ok(())
    }

    fn on_message(&mut self, msg: Message, out: &mut Vec<Message>) -> Result<()> {
        match msg {
            Message::Stop { stream: StreamId::Filter1 } => self.slices = None,
            Message::Slice { stream: StreamId::Filter2, slice } => {
                if self.stopped_partition_stream {
                    self.wasted_slices += 1;
                    return Ok(());
                }
                let c_elem = self.cfg.c_elem_bits;
                let stop = timed(&mut self.decode, || consume_slice(&mut self.partition, &slice, c_elem))?;
                if stop {
                    self.stopped_partition_stream = true;
                    out.push(Message::Stop { stream: StreamId::Filter2 });
                    self.start_cells();
                }
            }
            Message::StaticFilter { stream: StreamId::Filter2, filter } => {
                timed(&mut self.decode, || {
                    self.partition.retain_members(|d| filter.query(d));
                });
                self.start_cells();
            }
            Message::Stop { stream: StreamId::Iblt } => self.cells = None,
            Message::FinalUpdateB { true_negatives, false_positives, missing } => {
                let set = self.set;
                let partition = &self.partition;
                let reply = timed(&mut self.encode, || -> Result<Message> {
                    Ok(Message::FinalUpdateA {
                        true_negatives: lookup_all(set, partition.true_negatives())?,
                        false_positives: resolve_false_positives(set, partition, &missing)?,
                    })
                })?;
                self.false_positives = missing.len();
                self.received.extend(true_negatives);
                self.received.extend(false_positives);
                out.push(reply);
                self.done = true;
            }
            other => return Err(Error::Malformed(format!("replica A cannot handle {:?}", other.kind()))),
        }
        Ok(())
    }

    fn is_streaming(&self) -> bool {
        self.slices.is_some() || self.cells.is_some()
    }
}

pub(crate) struct Responder<'s, 'a> {
    set: &'s PreparedSet<'a>,
    stage: FilterStage,
    cfg: &'s ProtocolConfig,
    pub(crate) partition: PartitionState,
    pub(crate) stopped_identify_stream: bool,
    pub(crate) wasted_slices: u32,
    slices: Option<SliceStream>,
    pub(crate) slices_sent: u32,
    pub(crate) filter_params: Option<(u64, u32)>,
    local_cells: Option<CellEncoder>,
    decoder: Decoder,
    pub(crate) decoded: bool,
    pub(crate) false_positives: usize,
    pub(crate) received: Vec<Element>,
    pub(crate) encode: Duration,
    pub(crate) decode: Duration,
    pub(crate) done: bool,
}

impl<'s, 'a> Responder<'s, 'a> {
    pub(crate) fn new(set: &'s PreparedSet<'a>, stage: FilterStage, cfg: &'s ProtocolConfig) -> Self {
        Responder {
            set,
            stage,
            cfg,
            partition: PartitionState::new(set.digests().to_vec()),
            stopped_identify_stream: false,
            wasted_slices: 0,
            slices: None,
            slices_sent: 0,
            filter_params: None,
            local_cells: None,
            decoder: Decoder::new(),
            decoded: false,
            false_positives: 0,
            received: Vec::new(),
            encode: Duration::ZERO,
            decode: Duration::ZERO,
            done: false,
        }
    }

    fn on_cell(&mut self, index: u32, remote: CodedCell, out: &mut Vec<Message>) -> Result<()> {
        if self.decoded {
            return Ok(());
        }
        let expected = self.decoder.cells_received() as u64;
        if index as u64 != expected {
            return Err(Error::CellOutOfOrder { expected, got: index as u64 });
        }
        let partition = &self.partition;
        let enc = self
            .local_cells
            .get_or_insert_with(|| timed(&mut self.encode, || CellEncoder::new(partition.suspected_common())));
        let local = timed(&mut self.encode, || enc.next_cell());
        let decoder = &mut self.decoder;
        let status = timed(&mut self.decode, || decoder.add_cell(combine(&local, &remote)))?;
        if status == DecodeStatus::Decoded {
            self.decoded = true;
            out.push(Message::Stop { stream: StreamId::Iblt });
            let (set, partition, decoder) = (self.set, &self.partition, &self.decoder);
            let update = timed(&mut self.encode, || -> Result<Message> {
                Ok(Message::FinalUpdateB {
                    true_negatives: lookup_all(set, partition.true_negatives())?,
                    false_positives: resolve_false_positives(set, partition, decoder.local_only())?,
                    missing: decoder.remote_only().to_vec(),
                })
            })?;
            self.false_positives = self.decoder.local_only().len();
            out.push(update);
        }
        Ok(())
    }
}

impl Endpoint for Responder<'_, '_> {
    fn start(&mut self, _out: &mut Vec<Message>) -> Result<()> {
        Ok(())
    }

    fn poll(&mut self, out: &mut Vec<Message>) -> Result<()> {
        if let Some(stream) = self.slices.as_mut() {
            if stream.slices_sent() >= self.cfg.max_slices {
                return Err(Error::StreamCapExceeded { stream: "RBFStream2", cap: self.cfg.max_slices as u64 });
            }
            let slice = timed(&mut self.encode, || stream.next_slice());
            self.slices_sent += 1;
            out.push(Message::Slice { stream: StreamId::Filter2, slice });
        }
        Ok(())
    }

    fn on_message(&mut self, msg: Message, out: &mut Vec<Message>) -> Result<()> {
        match msg {
            Message::Slice { stream: StreamId::Filter1, slice } => {
                if self.stopped_identify_stream {
                    self.wasted_slices += 1;
                    return Ok(());
                }
                let c_elem = self.cfg.c_elem_bits;
                let stop = timed(&mut self.decode, || consume_slice(&mut self.partition, &slice, c_elem))?;
                if stop {
                    self.stopped_identify_stream = true;
                    out.push(Message::Stop { stream: StreamId::Filter1 });
                    let com = self.partition.suspected_common();
                    self.slices = Some(timed(&mut self.encode, || SliceStream::new(com.to_vec())));
                }
            }
            Message::StaticFilter { stream: StreamId::Filter1, filter } => {
                timed(&mut self.decode, || {
                    self.partition.retain_members(|d| filter.query(d));
                });
                let FilterStage::Static { epsilon } = self.stage else {
                    return Err(Error::Malformed("static filter received outside the static-filter protocol".into()));
                };
                let com = self.partition.suspected_common();
                let n = com.len().max(1) as u64;
                let own = timed(&mut self.encode, || BloomFilter::from_digests(n, epsilon, com))?;
                self.filter_params = Some((own.m(), own.k()));
                out.push(Message::StaticFilter { stream: StreamId::Filter2, filter: own });
            }
            Message::Stop { stream: StreamId::Filter2 } => self.slices = None,
            Message::Cell { index, cell } => self.on_cell(index, cell, out)?,
            Message::FinalUpdateA { true_negatives, false_positives } => {
                self.received.extend(true_negatives);
                self.received.extend(false_positives);
                self.done = true;
            }
            other => return Err(Error::Malformed(format!("replica B cannot handle {:?}", other.kind()))),
        }
        Ok(())
    }

    fn is_streaming(&self) -> bool {
        self.slices.is_some()
    }
}
