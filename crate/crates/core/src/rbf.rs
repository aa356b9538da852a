//! Rateless Bloom filter.
//!
//! A sender encodes its digest set as an unbounded sequence of single-hash
//! slices. Slice `i` sets bit `H(d || i) mod m` for every member `d`, so any
//! prefix of `k` slices is a partitioned Bloom filter with `k` partitions.
//! The receiver narrows its candidate set slice by slice and stops the stream
//! once a slice reveals fewer new true negatives than the final stage could
//! reconcile with the same number of bits.

use std::f64::consts::LN_2;

use crate::bits::BitArray;
use crate::error::{Error, Result};
use crate::hashing::{indexed_hash, Digest64};

/// Smallest slice ever produced, used for empty or tiny sets.
pub const MIN_SLICE_BITS: u64 = 8;

/// Slice size for a set of `n` elements: `max(8, ceil(n / ln 2))`.
pub fn slice_bits(n: usize) -> u64 {
    ((n as f64 / LN_2).ceil() as u64).max(MIN_SLICE_BITS)
}

/// One single-hash Bloom filter partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomSlice {
    pub index: u32,
    pub bits: BitArray,
}

impl BloomSlice {
    pub fn m(&self) -> u64 {
        self.bits.len()
    }

    #[inline]
    pub fn contains(&self, d: Digest64) -> bool {
        self.bits.get(indexed_hash(d, self.index as u64) % self.m())
    }
}

pub fn generate_slice<'a>(set: impl IntoIterator<Item = &'a Digest64>, index: u32, m: u64) -> BloomSlice {
    assert!(m >= 1, "slice needs at least one bit");
    let mut bits = BitArray::zeros(m);
    for d in set {
        bits.set(indexed_hash(*d, index as u64) % m);
    }
    BloomSlice { index, bits }
}

/// Sender side of one slice stream. `m` is frozen from the set size when the
/// stream starts.
#[derive(Clone, Debug)]
pub struct SliceStream {
    set: Vec<Digest64>,
    m: u64,
    next_index: u32,
}

impl SliceStream {
    pub fn new(set: Vec<Digest64>) -> Self {
        let m = slice_bits(set.len());
        SliceStream { set, m, next_index: 0 }
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn slices_sent(&self) -> u32 {
        self.next_index
    }

    pub fn next_slice(&mut self) -> BloomSlice {
        let s = generate_slice(&self.set, self.next_index, self.m);
        self.next_index += 1;
        s
    }
}

/// `true` iff `new_tn < m / c_elem`, compared as reals.
#[inline]
pub fn should_stop(new_tn: usize, m: u64, c_elem: f64) -> bool {
    (new_tn as f64) < m as f64 / c_elem
}

/// Receiver-side split of a candidate set into suspected-common elements and
/// proven true negatives.
#[derive(Clone, Debug, Default)]
pub struct PartitionState {
    suspected_common: Vec<Digest64>,
    true_negatives: Vec<Digest64>,
    slices_consumed: u32,
    stream_m: Option<u64>,
}

impl PartitionState {
    pub fn new(candidates: Vec<Digest64>) -> Self {
        PartitionState { suspected_common: candidates, ..Default::default() }
    }

    pub fn suspected_common(&self) -> &[Digest64] {
        &self.suspected_common
    }

    pub fn true_negatives(&self) -> &[Digest64] {
        &self.true_negatives
    }

    pub fn slices_consumed(&self) -> u32 {
        self.slices_consumed
    }

    /// Tests every suspected-common digest against `slice`, moving failures to
    /// the true negatives. Returns the newly moved digests.
    pub fn partition(&mut self, slice: &BloomSlice) -> Result<&[Digest64]> {
        if slice.index != self.slices_consumed {
            return Err(Error::SliceOutOfOrder { expected: self.slices_consumed, got: slice.index });
        }
        match self.stream_m {
            Some(m) if m != slice.m() => return Err(Error::SliceSizeMismatch { expected: m, got: slice.m() }),
            _ => self.stream_m = Some(slice.m()),
        }
        self.slices_consumed += 1;
        Ok(self.retain_members(|d| slice.contains(d)))
    }

    /// Moves every suspected-common digest failing `is_member` to the true
    /// negatives and returns the moved digests. Used directly for static
    /// filters, which are not part of a slice stream.
    pub fn retain_members(&mut self, is_member: impl Fn(Digest64) -> bool) -> &[Digest64] {
        let start = self.true_negatives.len();
        let tn = &mut self.true_negatives;
        self.suspected_common.retain(|d| {
            let keep = is_member(*d);
            if !keep {
                tn.push(*d);
            }
            keep
        });
        &self.true_negatives[start..]
    }

    pub fn into_parts(self) -> (Vec<Digest64>, Vec<Digest64>) {
        (self.suspected_common, self.true_negatives)
    }
}
