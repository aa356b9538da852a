//! Rateless invertible Bloom lookup table.
//!
//! A digest set is encoded as an infinite sequence of coded cells; each
//! element lands in cell 0 and in a sparse, digest-determined subset of later
//! cells. Combining the sender's cells with the receiver's own cells cancels
//! shared elements, and the peeling [`Decoder`] recovers the symmetric
//! difference from a prefix whose length is roughly proportional to it.

mod decoder;
mod encoder;
mod mapping;

pub use decoder::{DecodeStatus, Decoder};
pub use encoder::{encode_cell, CellEncoder};
pub use mapping::{inclusion_probability, MappingGenerator};

use crate::hashing::{check_hash, Digest64};

/// Bits per serialized cell: idSum, hashSum and count at 64 bits each.
pub const CELL_BITS: u32 = 192;

/// Expected cells needed per difference for large differences.
pub const CELLS_PER_DIFFERENCE: f64 = 1.35;

/// Modeled cost in bits of reconciling one residual difference in the final
/// stage. Drives the Bloom slice stopping rule.
pub const C_ELEM_BITS: f64 = CELLS_PER_DIFFERENCE * CELL_BITS as f64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CodedCell {
    pub id_sum: u64,
    pub hash_sum: u64,
    pub count: i64,
}

impl CodedCell {
    pub fn is_empty(&self) -> bool {
        self.id_sum == 0 && self.hash_sum == 0 && self.count == 0
    }

    /// Adds (`sign = 1`) or removes (`sign = -1`) one element.
    #[inline]
    pub fn apply(&mut self, d: Digest64, sign: i64) {
        self.apply_hashed(d, check_hash(d), sign);
    }

    #[inline]
    pub(crate) fn apply_hashed(&mut self, d: Digest64, check: u64, sign: i64) {
        self.id_sum ^= d.0;
        self.hash_sum ^= check;
        self.count += sign;
    }

    /// The single element held by this cell and its sign, if the cell is pure.
    pub fn pure(&self) -> Option<(Digest64, i64)> {
        if (self.count == 1 || self.count == -1) && check_hash(Digest64(self.id_sum)) == self.hash_sum {
            Some((Digest64(self.id_sum), self.count))
        } else {
            None
        }
    }
}

/// Cell-wise difference `local - remote`: sums XORed, counts subtracted.
/// Elements only in `local` end up with count +1.
pub fn combine(local: &CodedCell, remote: &CodedCell) -> CodedCell {
    CodedCell {
        id_sum: local.id_sum ^ remote.id_sum,
        hash_sum: local.hash_sum ^ remote.hash_sum,
        count: local.count.wrapping_sub(remote.count),
    }
}
