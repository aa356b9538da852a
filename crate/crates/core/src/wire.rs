//! Message framing.
//!
//! Every inter-replica message is serialized to bytes before it enters the
//! simulated channel; the byte counts reported in transcripts are the lengths
//! of these frames. Element lists are a u32 count followed by
//! `u32 length + content` per element. The per-element length prefix and the
//! content are serialized state; everything else is metadata.

use serde::Serialize;

use crate::bits::BitArray;
use crate::bloom::BloomFilter;
use crate::error::{Error, Result};
use crate::hashing::Digest64;
use crate::rbf::BloomSlice;
use crate::riblt::CodedCell;

pub type Element = Vec<u8>;

pub const TAG_SLICE: u8 = 0x01;
pub const TAG_CELL: u8 = 0x02;
pub const TAG_STOP: u8 = 0x03;
pub const TAG_FINAL_B: u8 = 0x04;
pub const TAG_FINAL_A: u8 = 0x05;
pub const TAG_STATIC_FILTER: u8 = 0x06;
pub const TAG_FULL_STATE: u8 = 0x07;
pub const TAG_FULL_STATE_REPLY: u8 = 0x08;

/// Serialized size of one coded cell frame: tag, u32 index, three u64 fields.
pub const CELL_FRAME_BYTES: usize = 1 + 4 + 8 + 8 + 8;
/// Per-element length prefix.
pub const ELEMENT_PREFIX_BYTES: usize = 4;

/// Identifies which stream a slice, filter or stop signal belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum StreamId {
    /// A to B, over all of A's elements.
    Filter1 = 1,
    /// B to A, over B's suspected-common elements.
    Filter2 = 2,
    /// A to B coded cells.
    Iblt = 3,
}

impl StreamId {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            1 => Ok(StreamId::Filter1),
            2 => Ok(StreamId::Filter2),
            3 => Ok(StreamId::Iblt),
            _ => Err(Error::Malformed(format!("unknown stream id {b}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum MessageKind {
    RBFStream,
    RBFStream2,
    IBLTStream,
    Stop1,
    Stop2,
    StopIBLT,
    FinalUpdateB,
    FinalUpdateA,
    StaticFilter1,
    StaticFilter2,
    FullState,
    FullStateReply,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Slice { stream: StreamId, slice: BloomSlice },
    Cell { index: u32, cell: CodedCell },
    Stop { stream: StreamId },
    FinalUpdateB { true_negatives: Vec<Element>, false_positives: Vec<Element>, missing: Vec<Digest64> },
    FinalUpdateA { true_negatives: Vec<Element>, false_positives: Vec<Element> },
    StaticFilter { stream: StreamId, filter: BloomFilter },
    FullState { elements: Vec<Element> },
    FullStateReply { elements: Vec<Element> },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Slice { stream: StreamId::Filter2, .. } => MessageKind::RBFStream2,
            Message::Slice { .. } => MessageKind::RBFStream,
            Message::Cell { .. } => MessageKind::IBLTStream,
            Message::Stop { stream: StreamId::Filter1 } => MessageKind::Stop1,
            Message::Stop { stream: StreamId::Filter2 } => MessageKind::Stop2,
            Message::Stop { stream: StreamId::Iblt } => MessageKind::StopIBLT,
            Message::FinalUpdateB { .. } => MessageKind::FinalUpdateB,
            Message::FinalUpdateA { .. } => MessageKind::FinalUpdateA,
            Message::StaticFilter { stream: StreamId::Filter2, .. } => MessageKind::StaticFilter2,
            Message::StaticFilter { .. } => MessageKind::StaticFilter1,
            Message::FullState { .. } => MessageKind::FullState,
            Message::FullStateReply { .. } => MessageKind::FullStateReply,
        }
    }

    /// Bytes of serialized element state carried by this message.
    pub fn state_bytes(&self) -> usize {
        let lists: &[&Vec<Element>] = match self {
            Message::FinalUpdateB { true_negatives, false_positives, .. }
            | Message::FinalUpdateA { true_negatives, false_positives } => &[true_negatives, false_positives],
            Message::FullState { elements } | Message::FullStateReply { elements } => &[elements],
            _ => &[],
        };
        lists.iter().flat_map(|l| l.iter()).map(|e| element_wire_len(e)).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Slice { stream, slice } => {
                out.reserve(14 + slice.bits.byte_len());
                out.push(TAG_SLICE);
                out.push(*stream as u8);
                out.extend_from_slice(&slice.index.to_le_bytes());
                out.extend_from_slice(&slice.m().to_le_bytes());
                slice.bits.write_bytes(&mut out);
            }
            Message::Cell { index, cell } => {
                out.push(TAG_CELL);
                out.extend_from_slice(&index.to_le_bytes());
                out.extend_from_slice(&cell.id_sum.to_le_bytes());
                out.extend_from_slice(&cell.hash_sum.to_le_bytes());
                out.extend_from_slice(&cell.count.to_le_bytes());
            }
            Message::Stop { stream } => {
                out.push(TAG_STOP);
                out.push(*stream as u8);
            }
            Message::FinalUpdateB { true_negatives, false_positives, missing } => {
                out.push(TAG_FINAL_B);
                write_elements(&mut out, true_negatives);
                write_elements(&mut out, false_positives);
                write_digests(&mut out, missing);
            }
            Message::FinalUpdateA { true_negatives, false_positives } => {
                out.push(TAG_FINAL_A);
                write_elements(&mut out, true_negatives);
                write_elements(&mut out, false_positives);
            }
            Message::StaticFilter { stream, filter } => {
                out.push(TAG_STATIC_FILTER);
                out.push(*stream as u8);
                filter.write_bytes(&mut out);
            }
            Message::FullState { elements } => {
                out.push(TAG_FULL_STATE);
                write_elements(&mut out, elements);
            }
            Message::FullStateReply { elements } => {
                out.push(TAG_FULL_STATE_REPLY);
                write_elements(&mut out, elements);
            }
        }
        out
    }

    /// Frame length of a static filter message with `m` bits.
    pub fn static_filter_frame_len(m: u64) -> usize {
        2 + crate::bloom::HEADER_BYTES + m.div_ceil(8) as usize
    }

    pub fn decode(frame: &[u8]) -> Result<Message> {
        let mut r = Reader { buf: frame, pos: 0 };
        let msg = match r.u8()? {
            TAG_SLICE => {
                let stream = StreamId::from_u8(r.u8()?)?;
                let index = r.u32()?;
                let m = r.u64()?;
                if m == 0 {
                    return Err(Error::Malformed("zero-bit slice".into()));
                }
                let body = r.take(m.div_ceil(8) as usize)?;
                let bits = BitArray::from_bytes(m, body).ok_or_else(|| Error::Malformed("slice padding bits set".into()))?;
                Message::Slice { stream, slice: BloomSlice { index, bits } }
            }
            TAG_CELL => {
                let index = r.u32()?;
                let cell = CodedCell { id_sum: r.u64()?, hash_sum: r.u64()?, count: r.u64()? as i64 };
                Message::Cell { index, cell }
            }
            TAG_STOP => Message::Stop { stream: StreamId::from_u8(r.u8()?)? },
            TAG_FINAL_B => Message::FinalUpdateB {
                true_negatives: r.elements()?,
                false_positives: r.elements()?,
                missing: r.digests()?,
            },
            TAG_FINAL_A => Message::FinalUpdateA { true_negatives: r.elements()?, false_positives: r.elements()? },
            TAG_STATIC_FILTER => {
                let stream = StreamId::from_u8(r.u8()?)?;
                let (filter, used) = BloomFilter::read_bytes(&r.buf[r.pos..])?;
                r.pos += used;
                Message::StaticFilter { stream, filter }
            }
            TAG_FULL_STATE => Message::FullState { elements: r.elements()? },
            TAG_FULL_STATE_REPLY => Message::FullStateReply { elements: r.elements()? },
            t => return Err(Error::Malformed(format!("unknown tag {t:#04x}"))),
        };
        if r.pos != frame.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", frame.len() - r.pos)));
        }
        Ok(msg)
    }
}

pub fn element_wire_len(e: &[u8]) -> usize {
    ELEMENT_PREFIX_BYTES + e.len()
}

fn write_elements(out: &mut Vec<u8>, elements: &[Element]) {
    out.extend_from_slice(&(elements.len() as u32).to_le_bytes());
    for e in elements {
        out.extend_from_slice(&(e.len() as u32).to_le_bytes());
        out.extend_from_slice(e);
    }
}

fn write_digests(out: &mut Vec<u8>, digests: &[Digest64]) {
    out.extend_from_slice(&(digests.len() as u32).to_le_bytes());
    for d in digests {
        out.extend_from_slice(&d.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Malformed(format!("truncated frame at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn elements(&mut self) -> Result<Vec<Element>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(self.buf.len()));
        for _ in 0..n {
            let len = self.u32()? as usize;
            out.push(self.take(len)?.to_vec());
        }
        Ok(out)
    }

    fn digests(&mut self) -> Result<Vec<Digest64>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.u64().map(Digest64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbf::generate_slice;
    use proptest::prelude::*;

    #[test]
    fn fixed_frame_sizes() {
        let cell = Message::Cell { index: 3, cell: CodedCell { id_sum: 1, hash_sum: 2, count: -1 } };
        assert_eq!(cell.encode().len(), CELL_FRAME_BYTES);
        assert_eq!(Message::Stop { stream: StreamId::Filter1 }.encode(), vec![TAG_STOP, 1]);
        let slice = generate_slice(&[Digest64(1), Digest64(2)], 4, 144_270);
        let frame = Message::Slice { stream: StreamId::Filter1, slice }.encode();
        assert_eq!(frame.len(), 1 + 1 + 4 + 8 + 18_034);
        assert_eq!(&frame[2..6], &4u32.to_le_bytes());
        assert_eq!(&frame[6..14], &144_270u64.to_le_bytes());
        for m in [1u64, 8, 9, 958_506] {
            let filter = crate::bloom::BloomFilter::new(m, 3).unwrap();
            let frame = Message::StaticFilter { stream: StreamId::Filter2, filter }.encode();
            assert_eq!(frame.len(), Message::static_filter_frame_len(m));
        }
    }

    #[test]
    fn final_update_accounting() {
        let msg = Message::FinalUpdateB {
            true_negatives: vec![b"abc".to_vec()],
            false_positives: vec![b"hello".to_vec(), vec![]],
            missing: vec![Digest64(9)],
        };
        let frame = msg.encode();
        // tag + 3 list counts + one digest; element prefixes and content are state.
        assert_eq!(msg.state_bytes(), (4 + 3) + (4 + 5) + 4);
        assert_eq!(frame.len() - msg.state_bytes(), 1 + 4 + 4 + 4 + 8);
        assert_eq!(Message::decode(&frame).unwrap(), msg);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Message::decode(&[]).is_err());
        assert!(Message::decode(&[0x7f]).is_err());
        assert!(Message::decode(&[TAG_STOP, 9]).is_err());
        assert!(Message::decode(&[TAG_STOP, 1, 0]).is_err());
        assert!(Message::decode(&[TAG_CELL, 0, 0]).is_err());
    }

    fn arb_elements() -> impl Strategy<Value = Vec<Element>> {
        proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..20), 0..6)
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<u32>(), proptest::collection::vec(any::<u64>(), 0..20), 1u64..200).prop_map(|(i, ds, m)| {
                let ds: Vec<Digest64> = ds.into_iter().map(Digest64).collect();
                Message::Slice { stream: StreamId::Filter2, slice: generate_slice(&ds, i, m) }
            }),
            (any::<u32>(), any::<u64>(), any::<u64>(), any::<i64>()).prop_map(|(index, a, b, c)| Message::Cell {
                index,
                cell: CodedCell { id_sum: a, hash_sum: b, count: c }
            }),
            (arb_elements(), arb_elements(), proptest::collection::vec(any::<u64>(), 0..5)).prop_map(|(t, f, m)| {
                Message::FinalUpdateB { true_negatives: t, false_positives: f, missing: m.into_iter().map(Digest64).collect() }
            }),
            (arb_elements(), arb_elements()).prop_map(|(t, f)| Message::FinalUpdateA { true_negatives: t, false_positives: f }),
            arb_elements().prop_map(|elements| Message::FullState { elements }),
        ]
    }

    proptest! {
        #[test]
        fn frames_round_trip(msg in arb_message()) {
            let frame = msg.encode();
            prop_assert!(msg.state_bytes() <= frame.len());
            prop_assert_eq!(Message::decode(&frame).unwrap(), msg);
        }
    }
}
