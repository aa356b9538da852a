use std::collections::HashMap;

use super::encoder::{PendingSymbol, SymbolQueue};
use super::CodedCell;
use crate::error::{Error, Result};
use crate::hashing::Digest64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeStatus {
    NeedsMore,
    Decoded,
}

/// Incremental peeling decoder over a stream of combined (local - remote)
/// cells.
///
/// Each arriving cell first has every already-decoded element that maps to it
/// removed; any pure cell then triggers a peeling cascade over the prefix.
/// Decoding completes when every received cell is empty.
#[derive(Debug, Default)]
pub struct Decoder {
    cells: Vec<CodedCell>,
    nonempty: usize,
    peeled: SymbolQueue,
    signs: HashMap<Digest64, i64>,
    local: Vec<Digest64>,
    remote: Vec<Digest64>,
    pure_queue: Vec<usize>,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cells_received(&self) -> usize {
        self.cells.len()
    }

    /// Residual cells after peeling.
    pub fn cells(&self) -> &[CodedCell] {
        &self.cells
    }

    /// Digests only in the local set (decoded with count +1).
    pub fn local_only(&self) -> &[Digest64] {
        &self.local
    }

    /// Digests only in the remote set (decoded with count -1).
    pub fn remote_only(&self) -> &[Digest64] {
        &self.remote
    }

    pub fn status(&self) -> DecodeStatus {
        if !self.cells.is_empty() && self.nonempty == 0 {
            DecodeStatus::Decoded
        } else {
            DecodeStatus::NeedsMore
        }
    }

    pub fn add_cell(&mut self, mut cell: CodedCell) -> Result<DecodeStatus> {
        let index = self.cells.len();
        self.peeled.drain_into(index as u64, &mut cell, -1);
        if !cell.is_empty() {
            self.nonempty += 1;
            if cell.pure().is_some() {
                self.pure_queue.push(index);
            }
        }
        self.cells.push(cell);
        self.peel()?;
        Ok(self.status())
    }

    fn peel(&mut self) -> Result<()> {
        while let Some(i) = self.pure_queue.pop() {
            let Some((digest, sign)) = self.cells[i].pure() else {
                continue;
            };
            if let Some(&first) = self.signs.get(&digest) {
                return Err(Error::InconsistentPeel { digest, first, second: sign });
            }
            self.signs.insert(digest, sign);
            if sign > 0 {
                self.local.push(digest);
            } else {
                self.remote.push(digest);
            }
            let mut symbol = PendingSymbol::new(digest, sign);
            while (symbol.next as usize) < self.cells.len() {
                let j = symbol.next as usize;
                let cell = &mut self.cells[j];
                let was_empty = cell.is_empty();
                cell.apply_hashed(digest, symbol.check, -sign);
                match (was_empty, cell.is_empty()) {
                    (false, true) => self.nonempty -= 1,
                    (true, false) => self.nonempty += 1,
                    _ => {}
                }
                if cell.pure().is_some() {
                    self.pure_queue.push(j);
                }
                symbol.advance();
            }
            self.peeled.push(symbol);
        }
        Ok(())
    }
}
