//! Hierarchical dirty-row counters.
//!
//! One tree per bank. Leaves are one-bit flags, one per DRAM row, set while
//! the row holds at least one dirty line. Every internal node counts the
//! dirty rows below it, so enumeration can skip any subtree whose counter is
//! zero. Levels are stored as flat arrays, leaves first, like a d-ary heap.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirtyRowTree {
    rows: usize,
    arity: usize,
    /// `levels[0]` holds the leaves, the last level holds the root.
    levels: Vec<Vec<u32>>,
}

/// Result of a pruned walk over the tree.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirtyRowWalk {
    /// Dirty rows in ascending order.
    pub rows: Vec<usize>,
    /// Counter reads performed, root included.
    pub nodes_visited: usize,
}

fn level_sizes(rows: usize, arity: usize) -> Vec<usize> {
    let mut sizes = vec![rows];
    let mut n = rows;
    while n > 1 {
        n = n.div_ceil(arity);
        sizes.push(n);
    }
    sizes
}

fn bits_to_count(n: usize) -> u32 {
    // ceil(log2(n + 1))
    usize::BITS - n.leading_zeros()
}

/// Width in bits of a counter at `level` (0 = leaves).
fn counter_bits(rows: usize, arity: usize, level: usize) -> u32 {
    if level == 0 {
        return 1;
    }
    let covered = arity
        .checked_pow(level as u32)
        .map_or(rows, |span| span.min(rows));
    bits_to_count(covered)
}

/// SRAM bits needed for one tree over `rows` rows with fan-out `arity`.
pub fn storage_bits(rows: usize, arity: usize) -> u64 {
    if rows == 0 || arity < 2 {
        return 0;
    }
    level_sizes(rows, arity)
        .iter()
        .enumerate()
        .map(|(level, &n)| n as u64 * counter_bits(rows, arity, level) as u64)
        .sum()
}

impl DirtyRowTree {
    pub fn new(rows: usize, arity: usize) -> Result<Self> {
        if arity < 2 {
            return Err(Error::Arity(arity));
        }
        if rows == 0 {
            return Err(Error::RowOutOfRange { row: 0, rows: 0 });
        }
        let levels = level_sizes(rows, arity)
            .into_iter()
            .map(|n| vec![0u32; n])
            .collect();
        Ok(Self { rows, arity, levels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Number of internal levels above the leaves.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn storage_bits(&self) -> u64 {
        storage_bits(self.rows, self.arity)
    }

    pub fn counter_width(&self, level: usize) -> u32 {
        counter_bits(self.rows, self.arity, level)
    }

    /// Number of dirty rows in the bank.
    pub fn root(&self) -> u32 {
        self.levels[self.levels.len() - 1][0]
    }

    pub fn level(&self, level: usize) -> &[u32] {
        &self.levels[level]
    }

    pub fn is_dirty(&self, row: usize) -> bool {
        self.levels[0].get(row).is_some_and(|&c| c != 0)
    }

    /// Set or clear a row's dirty flag, adjusting every ancestor when the
    /// flag actually flips.
    pub fn set(&mut self, row: usize, dirty: bool) -> Result<()> {
        if row >= self.rows {
            return Err(Error::RowOutOfRange { row, rows: self.rows });
        }
        let leaf = &mut self.levels[0][row];
        if (*leaf != 0) == dirty {
            return Ok(());
        }
        *leaf = dirty as u32;
        let mut idx = row;
        for level in self.levels.iter_mut().skip(1) {
            idx /= self.arity;
            if dirty {
                level[idx] += 1;
            } else {
                level[idx] -= 1;
            }
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        for level in &mut self.levels {
            level.fill(0);
        }
    }

    /// Enumerate dirty rows, descending only into subtrees with a nonzero count.
    pub fn enumerate(&self) -> DirtyRowWalk {
        let mut walk = DirtyRowWalk {
            rows: Vec::with_capacity(self.root() as usize),
            nodes_visited: 1,
        };
        let top = self.levels.len() - 1;
        if self.levels[top][0] != 0 {
            self.descend(top, 0, &mut walk);
        }
        walk
    }

    fn descend(&self, level: usize, idx: usize, walk: &mut DirtyRowWalk) {
        if level == 0 {
            walk.rows.push(idx);
            return;
        }
        let children = &self.levels[level - 1];
        let first = idx * self.arity;
        let last = (first + self.arity).min(children.len());
        walk.nodes_visited += last - first;
        for child in first..last {
            if children[child] != 0 {
                self.descend(level - 1, child, walk);
            }
        }
    }
}
