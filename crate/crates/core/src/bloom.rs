//! Classic static Bloom filter over digests.
//!
//! Used by the static-filter baselines. Probe `j` of a digest lands at
//! `indexed_hash(d, j) mod m` for `j in 0..k`; all `k` probes share one bit
//! array (non-partitioned layout).

use std::f64::consts::LN_2;

use crate::bits::BitArray;
use crate::error::{Error, Result};
use crate::hashing::{indexed_hash, Digest64};

/// Header bytes preceding the packed bit array: `m` as u64 LE, `k` as u32 LE.
pub const HEADER_BYTES: usize = 12;

/// Optimal `(m, k)` for `n` elements at false positive rate `epsilon`:
/// `m = ceil(-n ln(eps) / ln(2)^2)`, `k = max(1, round(m/n * ln 2))`.
pub fn sbf_params(n: u64, epsilon: f64) -> Result<(u64, u32)> {
    if n == 0 {
        return Err(Error::InvalidParameter("bloom filter cardinality must be >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("false positive rate {epsilon} not in (0, 1)")));
    }
    let m = (-(n as f64) * epsilon.ln() / (LN_2 * LN_2)).ceil() as u64;
    let k = ((m as f64 / n as f64) * LN_2).round().max(1.0) as u32;
    Ok((m.max(k as u64), k))
}

/// Analytic false positive rate `(1 - e^{-kn/m})^k`.
pub fn analytic_fpr(m: u64, k: u32, n: u64) -> f64 {
    (1.0 - (-(k as f64) * n as f64 / m as f64).exp()).powi(k as i32)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: BitArray,
    k: u32,
    n_inserted: u64,
}

impl BloomFilter {
    pub fn new(m: u64, k: u32) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::InvalidParameter(format!("bloom filter needs m >= 1 and k >= 1 (m={m}, k={k})")));
        }
        Ok(BloomFilter { bits: BitArray::zeros(m), k, n_inserted: 0 })
    }

    /// Filter sized by [`sbf_params`].
    pub fn with_rate(n: u64, epsilon: f64) -> Result<Self> {
        let (m, k) = sbf_params(n, epsilon)?;
        Self::new(m, k)
    }

    pub fn from_digests<'a>(n: u64, epsilon: f64, digests: impl IntoIterator<Item = &'a Digest64>) -> Result<Self> {
        let mut f = Self::with_rate(n, epsilon)?;
        for d in digests {
            f.insert(*d);
        }
        Ok(f)
    }

    pub fn m(&self) -> u64 {
        self.bits.len()
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_inserted(&self) -> u64 {
        self.n_inserted
    }

    pub fn bits(&self) -> &BitArray {
        &self.bits
    }

    pub fn insert(&mut self, d: Digest64) {
        let m = self.m();
        for j in 0..self.k {
            self.bits.set(indexed_hash(d, j as u64) % m);
        }
        self.n_inserted += 1;
    }

    pub fn query(&self, d: Digest64) -> bool {
        let m = self.m();
        (0..self.k).all(|j| self.bits.get(indexed_hash(d, j as u64) % m))
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_BYTES + self.bits.byte_len()
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.m().to_le_bytes());
        out.extend_from_slice(&self.k.to_le_bytes());
        self.bits.write_bytes(out);
    }

    /// Parses a serialized filter, returning it with the number of bytes consumed.
    /// The insertion count is not part of the wire format and reads back as 0.
    pub fn read_bytes(buf: &[u8]) -> Result<(Self, usize)> {
        if buf.len() < HEADER_BYTES {
            return Err(Error::Malformed("bloom filter header truncated".into()));
        }
        let m = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let k = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if m == 0 || k == 0 {
            return Err(Error::Malformed(format!("bloom filter with m={m}, k={k}")));
        }
        let body_len = m.div_ceil(8) as usize;
        let body = buf
            .get(HEADER_BYTES..HEADER_BYTES + body_len)
            .ok_or_else(|| Error::Malformed("bloom filter body truncated".into()))?;
        let bits = BitArray::from_bytes(m, body).ok_or_else(|| Error::Malformed("bloom filter padding bits set".into()))?;
        Ok((BloomFilter { bits, k, n_inserted: 0 }, HEADER_BYTES + body_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent evaluation of the closed form with explicit logs.
    fn params_oracle(n: f64, eps: f64) -> (u64, u32) {
        let ln2 = 2f64.ln();
        let m = (n * (1.0 / eps).ln() / ln2.powi(2)).ceil();
        let k = (m / n * ln2).round().max(1.0);
        (m as u64, k as u32)
    }

    #[test]
    fn params_examples() {
        assert_eq!(params_oracle(100_000.0, 0.01), (958_506, 7));
        assert_eq!(params_oracle(100_000.0, 0.25), (288_540, 2));
        assert_eq!(sbf_params(100_000, 0.01).unwrap(), (958_506, 7));
        assert_eq!(sbf_params(100_000, 0.25).unwrap(), (288_540, 2));
        assert_eq!(sbf_params(1, 0.5).unwrap(), (2, 1));
        for n in [1u64, 7, 1000, 12_345] {
            for eps in [0.005, 0.05, 0.3, 0.5] {
                let (m, k) = sbf_params(n, eps).unwrap();
                assert_eq!((m, k), params_oracle(n as f64, eps));
                assert!(m >= k as u64 && k >= 1);
            }
        }
    }

    #[test]
    fn params_reject_bad_input() {
        assert!(sbf_params(0, 0.1).is_err());
        assert!(sbf_params(10, 0.0).is_err());
        assert!(sbf_params(10, 1.0).is_err());
        assert!(sbf_params(10, f64::NAN).is_err());
    }

    #[test]
    fn empty_filter_rejects_everything() {
        let f = BloomFilter::with_rate(100, 0.01).unwrap();
        assert!(!f.query(Digest64(42)));
    }

    #[test]
    fn insert_is_idempotent() {
        let mut f = BloomFilter::with_rate(100, 0.01).unwrap();
        f.insert(Digest64(7));
        let before = f.bits().clone();
        f.insert(Digest64(7));
        assert_eq!(&before, f.bits());
        assert!(f.query(Digest64(7)));
    }

    fn measured_fpr(n: u64, eps: f64, probes: usize, seed: u64) -> (f64, BloomFilter) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members: Vec<Digest64> = (0..n).map(|_| Digest64(rng.gen())).collect();
        let f = BloomFilter::from_digests(n, eps, &members).unwrap();
        assert!(members.iter().all(|d| f.query(*d)), "false negative");
        assert!(f.bits().count_ones() <= f.k() as u64 * f.n_inserted());
        let fp = (0..probes).filter(|_| f.query(Digest64(rng.gen()))).count();
        (fp as f64 / probes as f64, f)
    }

    #[test]
    fn fpr_at_100k_one_percent() {
        let (fpr, _) = measured_fpr(100_000, 0.01, 100_000, 3);
        assert!((0.005..=0.02).contains(&fpr), "fpr {fpr}");
    }

    #[test]
    fn fpr_tracks_analytic_value() {
        for eps in [0.01, 0.1, 0.25] {
            let (fpr, f) = measured_fpr(10_000, eps, 100_000, 4);
            let analytic = analytic_fpr(f.m(), f.k(), 10_000);
            assert!(fpr >= 0.5 * analytic && fpr <= 2.0 * analytic, "eps={eps}: {fpr} vs {analytic}");
        }
    }

    #[test]
    fn serialization_layout() {
        let mut f = BloomFilter::new(20, 2).unwrap();
        f.insert(Digest64(1));
        let mut out = Vec::new();
        f.write_bytes(&mut out);
        assert_eq!(out.len(), f.serialized_len());
        assert_eq!(out.len(), 12 + 3);
        assert_eq!(&out[..8], &20u64.to_le_bytes());
        assert_eq!(&out[8..12], &2u32.to_le_bytes());
        let (back, used) = BloomFilter::read_bytes(&out).unwrap();
        assert_eq!(used, out.len());
        assert_eq!(back.bits(), f.bits());
        assert!(back.query(Digest64(1)));
    }
}
