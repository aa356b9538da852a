use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{CodedCell, MappingGenerator};
use crate::hashing::{check_hash, Digest64};

/// An element waiting for its next mapped cell.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PendingSymbol {
    pub(crate) next: u64,
    pub(crate) digest: Digest64,
    pub(crate) check: u64,
    pub(crate) sign: i64,
    pub(crate) mapping: MappingGenerator,
}

impl PendingSymbol {
    pub(crate) fn new(digest: Digest64, sign: i64) -> Self {
        let mut mapping = MappingGenerator::new(digest.0);
        let next = mapping.next_index();
        PendingSymbol { next, digest, check: check_hash(digest), sign, mapping }
    }

    #[inline]
    pub(crate) fn advance(&mut self) {
        self.next = self.mapping.next_index();
    }
}

impl PartialEq for PendingSymbol {
    fn eq(&self, other: &Self) -> bool {
        self.next == other.next && self.digest == other.digest && self.sign == other.sign
    }
}

impl Eq for PendingSymbol {}

impl PartialOrd for PendingSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PendingSymbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.next, self.digest, self.sign).cmp(&(other.next, other.digest, other.sign))
    }
}

/// Ring of per-index buckets covering `[base, base + WINDOW)`.
const WINDOW: u64 = 4096;

/// Symbols keyed by their next cell index, drained in increasing index order.
///
/// A calendar queue: symbols due within the window sit in per-index buckets
/// (constant-time push and drain); later ones wait in a min-heap and move
/// into the ring as the window slides. Every pushed symbol must be due at or
/// after the last drained index.
#[derive(Clone, Debug)]
pub(crate) struct SymbolQueue {
    base: u64,
    ring: Vec<Vec<PendingSymbol>>,
    far: BinaryHeap<Reverse<PendingSymbol>>,
}

impl Default for SymbolQueue {
    fn default() -> Self {
        SymbolQueue { base: 0, ring: vec![Vec::new(); WINDOW as usize], far: BinaryHeap::new() }
    }
}

impl SymbolQueue {
    pub(crate) fn from_symbols(symbols: Vec<PendingSymbol>) -> Self {
        let mut q = SymbolQueue::default();
        for s in symbols {
            q.push(s);
        }
        q
    }

    #[inline]
    pub(crate) fn push(&mut self, s: PendingSymbol) {
        debug_assert!(s.next >= self.base);
        if s.next < self.base + WINDOW {
            self.ring[(s.next % WINDOW) as usize].push(s);
        } else {
            self.far.push(Reverse(s));
        }
    }

    /// Slides the window so it starts at `index`.
    fn advance_to(&mut self, index: u64) {
        debug_assert!(index >= self.base);
        while self.base < index {
            debug_assert!(self.ring[(self.base % WINDOW) as usize].is_empty());
            self.base += 1;
            let end = self.base + WINDOW;
            while let Some(top) = self.far.peek() {
                if top.0.next >= end {
                    break;
                }
                let Reverse(s) = self.far.pop().unwrap();
                self.ring[(s.next % WINDOW) as usize].push(s);
            }
        }
    }

    /// Applies every symbol mapped to `index` to `cell` with the given sign
    /// multiplier, advancing each to its following index.
    pub(crate) fn drain_into(&mut self, index: u64, cell: &mut CodedCell, sign: i64) {
        self.advance_to(index);
        let slot = (index % WINDOW) as usize;
        let mut due = std::mem::take(&mut self.ring[slot]);
        for s in &mut due {
            cell.apply_hashed(s.digest, s.check, sign * s.sign);
            s.advance();
        }
        for s in due.drain(..) {
            self.push(s);
        }
        // Keep the allocation unless a later symbol already claimed the slot.
        if self.ring[slot].is_empty() {
            self.ring[slot] = due;
        }
    }
}

/// Streams the coded cells of a digest set in index order.
///
/// Produced cells stay materialized so the encoding can be maintained under
/// set updates: [`insert`](Self::insert) and [`remove`](Self::remove) patch
/// every cell already produced and affect all future ones.
#[derive(Clone, Debug)]
pub struct CellEncoder {
    queue: SymbolQueue,
    cells: Vec<CodedCell>,
}

impl CellEncoder {
    pub fn new<'a>(set: impl IntoIterator<Item = &'a Digest64>) -> Self {
        let symbols = set.into_iter().map(|d| PendingSymbol::new(*d, 1)).collect();
        CellEncoder { queue: SymbolQueue::from_symbols(symbols), cells: Vec::new() }
    }

    pub fn next_cell(&mut self) -> CodedCell {
        let index = self.cells.len() as u64;
        let mut cell = CodedCell::default();
        self.queue.drain_into(index, &mut cell, 1);
        self.cells.push(cell);
        cell
    }

    /// Cells produced so far.
    pub fn cells(&self) -> &[CodedCell] {
        &self.cells
    }

    /// Materializes cells up to `len` and returns the prefix.
    pub fn prefix(&mut self, len: usize) -> &[CodedCell] {
        while self.cells.len() < len {
            self.next_cell();
        }
        &self.cells[..len]
    }

    pub fn insert(&mut self, d: Digest64) {
        self.update(d, 1);
    }

    /// Removes a digest previously inserted. Removing an absent digest leaves
    /// it encoded with count -1.
    pub fn remove(&mut self, d: Digest64) {
        self.update(d, -1);
    }

    fn update(&mut self, d: Digest64, sign: i64) {
        let mut s = PendingSymbol::new(d, sign);
        while (s.next as usize) < self.cells.len() {
            self.cells[s.next as usize].apply_hashed(d, s.check, sign);
            s.advance();
        }
        self.queue.push(s);
    }
}

/// Cell `index` of `set`, computed directly from each element's mapping.
pub fn encode_cell(set: &[Digest64], index: u64) -> CodedCell {
    let mut cell = CodedCell::default();
    for d in set {
        if MappingGenerator::new(d.0).take_while(|&i| i <= index).any(|i| i == index) {
            cell.apply(*d, 1);
        }
    }
    cell
}
