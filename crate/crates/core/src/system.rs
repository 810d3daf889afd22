//! A cache bound to a remapping scheme, a bank mask and a backing memory.

use std::collections::HashMap;

use crate::cache::{Cache, Request};
use crate::error::{Error, Result};
use crate::geometry::CacheGeometry;
use crate::remap::{ActiveBankMask, Remapper};

/// Off-chip memory holding line payloads. Unwritten lines read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MainMemory {
    lines: HashMap<u64, u64>,
    pub reads: u64,
    pub writes: u64,
}

impl MainMemory {
    pub fn read(&mut self, tag: u64) -> u64 {
        self.reads += 1;
        self.peek(tag)
    }

    pub fn peek(&self, tag: u64) -> u64 {
        self.lines.get(&tag).copied().unwrap_or(0)
    }

    pub fn write(&mut self, tag: u64, data: u64) {
        self.writes += 1;
        self.lines.insert(tag, data);
    }

    pub fn image(&self) -> &HashMap<u64, u64> {
        &self.lines
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SystemStats {
    pub hits: u64,
    pub misses: u64,
    pub reads: u64,
    pub writes: u64,
    /// Dirty victims written back on the demand path.
    pub writebacks: u64,
    /// Accesses served straight from memory while the whole cache is off.
    pub bypassed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub hit: bool,
    pub data: u64,
    pub channel: usize,
    /// `None` when the cache is fully powered off.
    pub bank: Option<usize>,
    pub wrote_back: bool,
}

#[derive(Debug, Clone)]
pub struct CacheSystem {
    cache: Cache,
    remapper: Remapper,
    mask: ActiveBankMask,
    memory: MainMemory,
    pub stats: SystemStats,
}

impl CacheSystem {
    pub fn new(geometry: CacheGeometry, remapper: Remapper, mask: ActiveBankMask) -> Result<Self> {
        let mut cache = Cache::new(geometry)?;
        if remapper.banks() != geometry.banks_per_channel || mask.banks() != geometry.banks_per_channel {
            return Err(Error::Mask(format!(
                "cache has {} banks per channel, remapper {} and mask {}",
                geometry.banks_per_channel,
                remapper.banks(),
                mask.banks()
            )));
        }
        for ch in 0..geometry.channels {
            for b in 0..geometry.banks_per_channel {
                cache.set_powered(ch, b, mask.is_active(b));
            }
        }
        Ok(Self { cache, remapper, mask, memory: MainMemory::default(), stats: SystemStats::default() })
    }

    pub fn geometry(&self) -> &CacheGeometry {
        self.cache.geometry()
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub(crate) fn cache_mut(&mut self) -> &mut Cache {
        &mut self.cache
    }

    pub fn remapper(&self) -> &Remapper {
        &self.remapper
    }

    pub fn mask(&self) -> ActiveBankMask {
        self.mask
    }

    pub(crate) fn set_mask(&mut self, mask: ActiveBankMask) {
        self.mask = mask;
    }

    pub fn memory(&self) -> &MainMemory {
        &self.memory
    }

    pub(crate) fn memory_mut(&mut self) -> &mut MainMemory {
        &mut self.memory
    }

    /// Bank serving `set_key` under the current mask.
    pub fn bank_of(&self, set_key: u64) -> Result<usize> {
        self.remapper.bank_of(set_key, &self.mask)
    }

    pub fn access(&mut self, address: u64, request: Request) -> Result<Outcome> {
        let d = self.geometry().decode(address);
        match request {
            Request::Read => self.stats.reads += 1,
            Request::Write(_) => self.stats.writes += 1,
        }
        if self.mask.is_empty() {
            self.stats.bypassed += 1;
            self.stats.misses += 1;
            let data = match request {
                Request::Read => self.memory.read(d.tag),
                Request::Write(v) => {
                    self.memory.write(d.tag, v);
                    v
                }
            };
            return Ok(Outcome { hit: false, data, channel: d.channel, bank: None, wrote_back: false });
        }
        let bank = self.bank_of(d.set_key)?;
        let memory = &mut self.memory;
        let r = self.cache.access(&d, bank, request, || memory.read(d.tag))?;
        let mut wrote_back = false;
        if let Some(v) = r.victim {
            if v.dirty {
                self.memory.write(v.tag, v.data);
                self.stats.writebacks += 1;
                wrote_back = true;
            }
        }
        if r.hit {
            self.stats.hits += 1;
        } else {
            self.stats.misses += 1;
        }
        Ok(Outcome { hit: r.hit, data: r.data, channel: d.channel, bank: Some(bank), wrote_back })
    }

    pub fn read(&mut self, address: u64) -> Result<u64> {
        self.access(address, Request::Read).map(|o| o.data)
    }

    pub fn write(&mut self, address: u64, data: u64) -> Result<()> {
        self.access(address, Request::Write(data)).map(|_| ())
    }

    /// Memory contents as a reader would see them: backing store overlaid
    /// with every dirty line in the cache.
    pub fn visible_image(&self) -> HashMap<u64, u64> {
        let mut img = self.memory.image().clone();
        for (_, _, _, line) in self.cache.lines() {
            if line.dirty {
                img.insert(line.tag, line.data);
            }
        }
        img
    }

    /// Verify every cached line sits in the bank and row its address maps to
    /// under the current mask, at most once.
    pub fn check_placement(&self) -> Result<()> {
        let g = *self.geometry();
        let mut seen = std::collections::HashSet::new();
        for (ch, bank, row, line) in self.cache.lines() {
            let d = g.decode_line(line.tag);
            let want = self.bank_of(d.set_key)?;
            if d.channel != ch || d.row_index != row || want != bank {
                return Err(Error::Transition(format!(
                    "line {:#x} found at ch{ch}/bank{bank}/row{row}, maps to ch{}/bank{want}/row{}",
                    line.tag, d.channel, d.row_index
                )));
            }
            if !seen.insert(line.tag) {
                return Err(Error::Transition(format!("line {:#x} cached twice", line.tag)));
            }
        }
        for ch in 0..g.channels {
            for b in 0..g.banks_per_channel {
                let bank = self.cache.bank(ch, b);
                if bank.powered != self.mask.is_active(b) {
                    return Err(Error::Transition(format!("bank {b} power state disagrees with mask")));
                }
                if !bank.powered && !bank.is_empty() {
                    return Err(Error::Transition(format!("powered-down bank {b} still holds lines")));
                }
            }
        }
        Ok(())
    }
}
