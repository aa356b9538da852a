//! Deterministic 64-bit hashing shared by both replicas.
//!
//! Three independent hash functions are derived from XXH3 by fixing three
//! seed constants: one for element digests, one for the indexed slice hash
//! `H(d || i)`, and one for the IBLT check hash folded into `hashSum`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

const DIGEST_SEED: u64 = 0x5eed_0000_d16e_57a1;
const INDEXED_SEED: u64 = 0x5eed_0001_1dc5_e11c;
const CHECK_SEED: u64 = 0x5eed_0002_c4ec_4a54;

/// 64-bit identifier of an element.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Digest64(pub u64);

impl Digest64 {
    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }
}

impl fmt::Debug for Digest64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest64({:#018x})", self.0)
    }
}

impl From<u64> for Digest64 {
    fn from(v: u64) -> Self {
        Digest64(v)
    }
}

/// Digests are already uniformly distributed, so maps keyed by them use the
/// low bits directly instead of rehashing.
#[derive(Default, Clone, Copy)]
pub struct DigestHasher(u64);

impl Hasher for DigestHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ b as u64;
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

pub type DigestMap<V> = HashMap<Digest64, V, BuildHasherDefault<DigestHasher>>;
pub type DigestSet = HashSet<Digest64, BuildHasherDefault<DigestHasher>>;

/// Digest of an element's raw bytes.
#[inline]
pub fn digest(element: &[u8]) -> Digest64 {
    Digest64(xxh3_64_with_seed(element, DIGEST_SEED))
}

/// `H(d || i)`: hash of the digest's 8 little-endian bytes followed by the
/// stream index as 8 little-endian bytes. The index selects the hash function.
#[inline]
pub fn indexed_hash(d: Digest64, index: u64) -> u64 {
    let mut buf = [0u8; 16];
    buf[..8].copy_from_slice(&d.0.to_le_bytes());
    buf[8..].copy_from_slice(&index.to_le_bytes());
    xxh3_64_with_seed(&buf, INDEXED_SEED)
}

/// Hash accumulated into an IBLT cell's `hashSum`.
#[inline]
pub fn check_hash(d: Digest64) -> u64 {
    xxh3_64_with_seed(&d.0.to_le_bytes(), CHECK_SEED)
}
