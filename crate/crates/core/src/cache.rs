//! Set-associative DRAM cache with single-banked sets.
//!
//! Each physical DRAM row holds one set: `data_ways` lines kept in exact LRU
//! order (slot 0 is MRU). Every bank owns a [`DirtyRowTree`] that is kept in
//! step with the per-row dirty-line counts.

use crate::error::{Error, Result};
use crate::geometry::{CacheGeometry, DecodedAddress};
use crate::hier::DirtyRowTree;

/// Fan-out of the per-bank dirty-row trees.
pub const DEFAULT_HIER_ARITY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Line {
    /// Full line address.
    pub tag: u64,
    /// Opaque payload token, lets tests tell versions of a line apart.
    pub data: u64,
    pub dirty: bool,
}

/// Snapshot view of one cached line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheLineState {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    pub lru_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Read,
    Write(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessResult {
    pub hit: bool,
    /// Line payload after the access.
    pub data: u64,
    /// Line evicted to make room on a miss. The caller writes it back when dirty.
    pub victim: Option<Line>,
}

#[derive(Debug, Clone)]
pub struct BankState {
    pub bank_id: usize,
    pub powered: bool,
    ways: usize,
    lines: Vec<Line>,
    occupancy: Vec<u8>,
    dirty_lines: Vec<u8>,
    dirty_rows: DirtyRowTree,
}

impl BankState {
    fn new(bank_id: usize, rows: usize, ways: usize, arity: usize) -> Result<Self> {
        Ok(Self {
            bank_id,
            powered: true,
            ways,
            lines: vec![Line::default(); rows * ways],
            occupancy: vec![0; rows],
            dirty_lines: vec![0; rows],
            dirty_rows: DirtyRowTree::new(rows, arity)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.occupancy.len()
    }

    /// Valid lines of `row`, MRU first.
    pub fn row(&self, row: usize) -> &[Line] {
        let start = row * self.ways;
        &self.lines[start..start + self.occupancy[row] as usize]
    }

    pub fn dirty_rows(&self) -> &DirtyRowTree {
        &self.dirty_rows
    }

    pub fn dirty_lines_in_row(&self, row: usize) -> usize {
        self.dirty_lines[row] as usize
    }

    pub fn occupancy(&self, row: usize) -> usize {
        self.occupancy[row] as usize
    }

    pub fn valid_lines(&self) -> usize {
        self.occupancy.iter().map(|&o| o as usize).sum()
    }

    pub fn dirty_line_count(&self) -> usize {
        self.dirty_lines.iter().map(|&d| d as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.iter().all(|&o| o == 0)
    }

    fn row_slice_mut(&mut self, row: usize) -> &mut [Line] {
        let start = row * self.ways;
        let occ = self.occupancy[row] as usize;
        &mut self.lines[start..start + occ]
    }

    fn find(&self, row: usize, tag: u64) -> Option<usize> {
        self.row(row).iter().position(|l| l.tag == tag)
    }

    fn bump_dirty(&mut self, row: usize, became_dirty: bool) {
        if became_dirty {
            self.dirty_lines[row] += 1;
            if self.dirty_lines[row] == 1 {
                self.dirty_rows.set(row, true).expect("row within bank");
            }
        } else {
            self.dirty_lines[row] -= 1;
            if self.dirty_lines[row] == 0 {
                self.dirty_rows.set(row, false).expect("row within bank");
            }
        }
    }

    /// Insert `line` at MRU, evicting the LRU line when the row is full.
    fn insert_mru(&mut self, row: usize, line: Line) -> Option<Line> {
        let start = row * self.ways;
        let occ = self.occupancy[row] as usize;
        let victim = if occ == self.ways {
            let v = self.lines[start + occ - 1];
            if v.dirty {
                self.bump_dirty(row, false);
            }
            self.lines[start..start + occ].rotate_right(1);
            Some(v)
        } else {
            self.occupancy[row] += 1;
            self.lines[start..start + occ + 1].rotate_right(1);
            None
        };
        self.lines[start] = line;
        if line.dirty {
            self.bump_dirty(row, true);
        }
        victim
    }

    fn remove_at(&mut self, row: usize, pos: usize) -> Line {
        let start = row * self.ways;
        let occ = self.occupancy[row] as usize;
        let line = self.lines[start + pos];
        self.lines[start + pos..start + occ].rotate_left(1);
        self.occupancy[row] -= 1;
        if line.dirty {
            self.bump_dirty(row, false);
        }
        line
    }

    fn invalidate_all(&mut self) {
        self.occupancy.fill(0);
        self.dirty_lines.fill(0);
        self.dirty_rows.clear();
    }
}

#[derive(Debug, Clone)]
pub struct Cache {
    geometry: CacheGeometry,
    banks: Vec<BankState>,
}

impl Cache {
    pub fn new(geometry: CacheGeometry) -> Result<Self> {
        Self::with_arity(geometry, DEFAULT_HIER_ARITY)
    }

    pub fn with_arity(geometry: CacheGeometry, arity: usize) -> Result<Self> {
        geometry.validate()?;
        let banks = (0..geometry.total_banks())
            .map(|i| {
                BankState::new(
                    i % geometry.banks_per_channel,
                    geometry.rows_per_bank,
                    geometry.data_ways,
                    arity,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { geometry, banks })
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    fn index(&self, channel: usize, bank: usize) -> usize {
        debug_assert!(channel < self.geometry.channels && bank < self.geometry.banks_per_channel);
        channel * self.geometry.banks_per_channel + bank
    }

    pub fn bank(&self, channel: usize, bank: usize) -> &BankState {
        &self.banks[self.index(channel, bank)]
    }

    fn powered_bank_mut(&mut self, channel: usize, bank: usize) -> Result<&mut BankState> {
        let idx = self.index(channel, bank);
        let b = &mut self.banks[idx];
        if !b.powered {
            return Err(Error::BankPoweredDown { channel, bank });
        }
        Ok(b)
    }

    /// Service one demand access. `fill` supplies the line payload on a miss.
    pub fn access(
        &mut self,
        addr: &DecodedAddress,
        bank: usize,
        request: Request,
        fill: impl FnOnce() -> u64,
    ) -> Result<AccessResult> {
        let row = addr.row_index;
        let b = self.powered_bank_mut(addr.channel, bank)?;
        if let Some(pos) = b.find(row, addr.tag) {
            b.row_slice_mut(row)[..=pos].rotate_right(1);
            let was_dirty = b.row(row)[0].dirty;
            if let Request::Write(data) = request {
                let line = &mut b.row_slice_mut(row)[0];
                line.data = data;
                line.dirty = true;
                if !was_dirty {
                    b.bump_dirty(row, true);
                }
            }
            let data = b.row(row)[0].data;
            return Ok(AccessResult { hit: true, data, victim: None });
        }
        let line = match request {
            Request::Read => Line { tag: addr.tag, data: fill(), dirty: false },
            Request::Write(data) => Line { tag: addr.tag, data, dirty: true },
        };
        let victim = b.insert_mru(row, line);
        Ok(AccessResult { hit: false, data: line.data, victim })
    }

    pub fn probe(&self, channel: usize, bank: usize, row: usize, tag: u64) -> Option<&Line> {
        let b = self.bank(channel, bank);
        b.find(row, tag).map(|pos| &b.row(row)[pos])
    }

    /// Install a line at MRU of its row in `bank`. Returns the evicted LRU line, if any.
    pub fn insert(&mut self, channel: usize, bank: usize, row: usize, line: Line) -> Result<Option<Line>> {
        let b = self.powered_bank_mut(channel, bank)?;
        debug_assert!(b.find(row, line.tag).is_none(), "duplicate line {:#x}", line.tag);
        Ok(b.insert_mru(row, line))
    }

    /// Remove and return every line of a row for which `pred` holds, preserving
    /// the LRU order of what remains.
    pub fn extract_if(
        &mut self,
        channel: usize,
        bank: usize,
        row: usize,
        mut pred: impl FnMut(&Line) -> bool,
    ) -> Vec<Line> {
        let idx = self.index(channel, bank);
        let b = &mut self.banks[idx];
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < b.occupancy[row] as usize {
            if pred(&b.row(row)[pos]) {
                out.push(b.remove_at(row, pos));
            } else {
                pos += 1;
            }
        }
        out
    }

    pub fn set_powered(&mut self, channel: usize, bank: usize, powered: bool) {
        let idx = self.index(channel, bank);
        let b = &mut self.banks[idx];
        if !powered {
            b.invalidate_all();
        }
        b.powered = powered;
    }

    pub fn line_states(&self, channel: usize, bank: usize, row: usize) -> Vec<CacheLineState> {
        self.bank(channel, bank)
            .row(row)
            .iter()
            .enumerate()
            .map(|(rank, l)| CacheLineState { tag: l.tag, valid: true, dirty: l.dirty, lru_rank: rank })
            .collect()
    }

    /// Every valid line as `(channel, bank, row, line)`.
    pub fn lines(&self) -> impl Iterator<Item = (usize, usize, usize, &Line)> + '_ {
        let bpc = self.geometry.banks_per_channel;
        self.banks.iter().enumerate().flat_map(move |(i, b)| {
            (0..b.rows()).flat_map(move |r| b.row(r).iter().map(move |l| (i / bpc, i % bpc, r, l)))
        })
    }

    pub fn valid_lines(&self) -> usize {
        self.banks.iter().map(BankState::valid_lines).sum()
    }

    pub fn dirty_line_count(&self) -> usize {
        self.banks.iter().map(BankState::dirty_line_count).sum()
    }

    pub fn invalidate_all(&mut self) {
        for b in &mut self.banks {
            b.invalidate_all();
        }
    }
}
