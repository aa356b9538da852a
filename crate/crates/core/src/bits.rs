//! Fixed-length bit array packed LSB-first, the layout used on the wire.

#[derive(Clone, PartialEq, Eq)]
pub struct BitArray {
    words: Vec<u64>,
    len: u64,
}

impl BitArray {
    pub fn zeros(len: u64) -> Self {
        BitArray { words: vec![0; len.div_ceil(64) as usize], len }
    }

    #[inline]
    pub fn len(&self) -> u64 {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn set(&mut self, pos: u64) {
        debug_assert!(pos < self.len);
        self.words[(pos / 64) as usize] |= 1 << (pos % 64);
    }

    #[inline]
    pub fn get(&self, pos: u64) -> bool {
        debug_assert!(pos < self.len);
        self.words[(pos / 64) as usize] >> (pos % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Number of bytes in the packed representation.
    pub fn byte_len(&self) -> usize {
        self.len.div_ceil(8) as usize
    }

    /// Appends the packed bits: bit `j` lives at byte `j / 8`, bit `j % 8`.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let n = self.byte_len();
        out.extend(self.words.iter().flat_map(|w| w.to_le_bytes()).take(n));
    }

    /// Inverse of [`write_bytes`](Self::write_bytes). Returns `None` when the
    /// byte count does not match or padding bits past `len` are set.
    pub fn from_bytes(len: u64, bytes: &[u8]) -> Option<Self> {
        if bytes.len() as u64 != len.div_ceil(8) {
            return None;
        }
        let mut words = vec![0u64; len.div_ceil(64) as usize];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let out = BitArray { words, len };
        if len % 64 != 0 {
            let last = out.words.last().copied().unwrap_or(0);
            if last >> (len % 64) != 0 {
                return None;
            }
        }
        Some(out)
    }
}

impl std::fmt::Debug for BitArray {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitArray(len={}, ones={})", self.len, self.count_ones())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lsb_first_packing() {
        let mut b = BitArray::zeros(10);
        b.set(0);
        b.set(9);
        let mut out = Vec::new();
        b.write_bytes(&mut out);
        assert_eq!(out, vec![0b0000_0001, 0b0000_0010]);
    }

    #[test]
    fn rejects_padding_bits() {
        assert!(BitArray::from_bytes(10, &[0, 0b0000_0100]).is_none());
        assert!(BitArray::from_bytes(10, &[0]).is_none());
    }

    proptest! {
        #[test]
        fn pack_roundtrip(len in 1u64..300, positions in proptest::collection::vec(any::<u64>(), 0..40)) {
            let mut b = BitArray::zeros(len);
            for p in positions {
                b.set(p % len);
            }
            let mut out = Vec::new();
            b.write_bytes(&mut out);
            prop_assert_eq!(out.len(), b.byte_len());
            prop_assert_eq!(BitArray::from_bytes(len, &out).unwrap(), b);
        }
    }
}
