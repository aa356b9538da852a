//! Digest-seeded cell index sequences.
//!
//! Every element maps to cell 0, and to cell `i` with probability
//! `p_i = 1 / (1 + i/2)`, independently across indices. Instead of flipping a
//! coin per index, the generator jumps straight to the next included index by
//! inverting the gap distribution: given the current index `c`,
//! `P(next > x) = prod_{i=c+1..=x} (1 - p_i) = (c+1)(c+2) / ((x+1)(x+2))`.

/// SplitMix64 increment and output mixer.
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Marginal probability that an element maps to cell `i`.
pub fn inclusion_probability(i: u64) -> f64 {
    1.0 / (1.0 + i as f64 / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MappingGenerator {
    prng: u64,
    current: Option<u64>,
}

impl MappingGenerator {
    pub fn new(seed: u64) -> Self {
        MappingGenerator { prng: seed, current: None }
    }

    /// Index returned by the last call to [`next_index`](Self::next_index).
    pub fn current(&self) -> Option<u64> {
        self.current
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    fn uniform(&mut self) -> f64 {
        ((splitmix64(&mut self.prng) >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn next_index(&mut self) -> u64 {
        let next = match self.current {
            None => 0,
            Some(c) => {
                let u = self.uniform();
                let c = c as f64;
                // Smallest x with (x+1)(x+2) >= (c+1)(c+2)/u.
                let k = (c + 1.0) * (c + 2.0) / u;
                let x = ((-3.0 + (1.0 + 4.0 * k).sqrt()) / 2.0).ceil();
                let x = x.max(c + 1.0);
                if x >= (1u64 << 62) as f64 {
                    1u64 << 62
                } else {
                    x as u64
                }
            }
        };
        self.current = Some(next);
        next
    }
}

impl Iterator for MappingGenerator {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        Some(self.next_index())
    }
}
