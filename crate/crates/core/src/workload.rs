//! Replica pairs with a controlled Jaccard similarity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::wire::{element_wire_len, Element};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkloadSpec {
    /// Cardinality of each replica.
    pub n: usize,
    /// Target `|A ∩ B| / |A ∪ B|`.
    pub jaccard: f64,
    /// Inclusive element length bounds in bytes.
    pub size_range: (usize, usize),
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_range;
        if self.n == 0 {
            return Err(Error::InvalidParameter("workload needs n >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.jaccard) {
            return Err(Error::InvalidParameter(format!("jaccard {} not in [0, 1]", self.jaccard)));
        }
        if lo == 0 || hi < lo {
            return Err(Error::InvalidParameter(format!("element sizes {lo}:{hi} need 1 <= lo <= hi")));
        }
        Ok(())
    }

    /// Elements exclusive to each side: `round(n (1 - s) / (1 + s))`.
    pub fn half_difference(&self) -> usize {
        (self.n as f64 * (1.0 - self.jaccard) / (1.0 + self.jaccard)).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub a: Vec<Element>,
    pub b: Vec<Element>,
    /// `|A \ B| + |B \ A|`.
    pub d: usize,
    /// Serialized size of the symmetric difference, the least any protocol
    /// must transmit.
    pub min_bytes: u64,
}

/// Jaccard index of two element sets, for checking generated workloads.
pub fn jaccard(a: &[Element], b: &[Element]) -> f64 {
    let sa: HashSet<&Element> = a.iter().collect();
    let inter = b.iter().filter(|e| sa.contains(e)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Number of distinct byte strings with length in `[lo, hi]`, saturating.
fn distinct_strings(lo: usize, hi: usize) -> u128 {
    (lo..=hi).fold(0u128, |acc, len| acc.saturating_add(if len >= 16 { u128::MAX } else { 1u128 << (8 * len) }))
}

pub fn generate_workload(spec: &WorkloadSpec) -> Result<Workload> {
    spec.validate()?;
    let half = spec.half_difference();
    if half > spec.n {
        return Err(Error::InvalidParameter(format!("difference {half} per side exceeds n = {}", spec.n)));
    }
    let total = spec.n + half;
    let (lo, hi) = spec.size_range;
    if distinct_strings(lo, hi) < 2 * total as u128 {
        return Err(Error::InvalidParameter(format!("sizes {lo}:{hi} cannot hold {total} distinct elements")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::with_capacity(total);
    let mut pool = Vec::with_capacity(total);
    while pool.len() < total {
        let len = rng.gen_range(lo..=hi);
        let mut e = vec![0u8; len];
        rng.fill(e.as_mut_slice());
        if seen.insert(e.clone()) {
            pool.push(e);
        }
    }
    drop(seen);

    let common = spec.n - half;
    let b_only = pool.split_off(spec.n);
    let a_only = &pool[common..];
    let min_bytes = a_only.iter().chain(&b_only).map(|e| element_wire_len(e) as u64).sum();
    let mut b: Vec<Element> = pool[..common].iter().cloned().chain(b_only).collect();
    let mut a = pool;
    a.shuffle(&mut rng);
    b.shuffle(&mut rng);
    Ok(Workload { a, b, d: 2 * half, min_bytes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, jaccard: f64) -> WorkloadSpec {
        WorkloadSpec { n, jaccard, size_range: (5, 80), seed: 42 }
    }

    #[test]
    fn difference_sizes() {
        assert_eq!(spec(100_000, 1.0).half_difference(), 0);
        assert_eq!(spec(100_000, 0.0).half_difference(), 100_000);
        assert_eq!(2 * spec(100_000, 0.85).half_difference(), 16_216);
        assert_eq!(2 * spec(100_000, 0.9).half_difference(), 10_526);
    }

    #[test]
    fn identical_and_disjoint_extremes() {
        let w = generate_workload(&spec(2_000, 1.0)).unwrap();
        assert_eq!(w.d, 0);
        assert_eq!(jaccard(&w.a, &w.b), 1.0);
        assert_eq!(w.min_bytes, 0);
        let w = generate_workload(&spec(2_000, 0.0)).unwrap();
        assert_eq!(w.d, 4_000);
        assert_eq!(jaccard(&w.a, &w.b), 0.0);
    }

    #[test]
    fn shape_of_generated_sets() {
        for s in [0.05, 0.5, 0.85, 0.95] {
            let w = generate_workload(&spec(5_000, s)).unwrap();
            assert_eq!(w.a.len(), 5_000);
            assert_eq!(w.b.len(), 5_000);
            let x = (w.d / 2) as f64;
            let expected = (5_000.0 - x) / (5_000.0 + x);
            assert!((jaccard(&w.a, &w.b) - expected).abs() < 1e-12);
            assert!((expected - s).abs() < 1e-3, "s={s} got {expected}");
            assert!(w.a.iter().chain(&w.b).all(|e| (5..=80).contains(&e.len())));
            let distinct: HashSet<_> = w.a.iter().collect();
            assert_eq!(distinct.len(), w.a.len());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_workload(&spec(1_000, 0.3)).unwrap();
        let b = generate_workload(&spec(1_000, 0.3)).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.b, b.b);
        let c = generate_workload(&WorkloadSpec { seed: 43, ..spec(1_000, 0.3) }).unwrap();
        assert_ne!(a.a, c.a);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate_workload(&spec(0, 0.5)).is_err());
        assert!(generate_workload(&spec(10, 1.5)).is_err());
        assert!(generate_workload(&WorkloadSpec { size_range: (0, 4), ..spec(10, 0.5) }).is_err());
        assert!(generate_workload(&WorkloadSpec { size_range: (1, 1), ..spec(1_000, 0.5) }).is_err());
    }
}
