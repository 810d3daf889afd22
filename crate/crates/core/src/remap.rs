//! Bank selection under a partially powered cache.
//!
//! Three schemes are provided:
//! * bank fail-over: a down bank's sets go to the next active bank by index;
//! * modulo re-indexing: `set_key mod k` over the `k` active banks;
//! * multi-namespace consistent hashing: the set key is folded into a region
//!   id, the region's super-region selects a bank permutation from the
//!   [`RegionRemapTable`], and the first active bank at or after the region's
//!   position (wrapping inside the super-region) serves it.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rrt::RegionRemapTable;

/// Shutdown patterns for 1 to 7 powered-down banks, bank 0 leftmost.
pub const PAPER_PATTERNS: [&str; 7] = [
    "11110111", "11010111", "11010101", "10010101", "10010001", "10000001", "10000000",
];

/// One flag per bank. Bank 0 is the leftmost character of the text form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActiveBankMask {
    bits: u32,
    banks: u8,
}

impl ActiveBankMask {
    pub fn all(banks: usize) -> Self {
        assert!((1..=32).contains(&banks));
        let bits = if banks == 32 { u32::MAX } else { (1u32 << banks) - 1 };
        Self { bits, banks: banks as u8 }
    }

    pub fn none(banks: usize) -> Self {
        assert!((1..=32).contains(&banks));
        Self { bits: 0, banks: banks as u8 }
    }

    pub fn from_bits(bits: u32, banks: usize) -> Result<Self> {
        if !(1..=32).contains(&banks) {
            return Err(Error::Mask(format!("bank count {banks} out of range")));
        }
        if banks < 32 && bits >> banks != 0 {
            return Err(Error::Mask(format!("bits {bits:#x} name banks beyond {banks}")));
        }
        Ok(Self { bits, banks: banks as u8 })
    }

    /// `k` banks off, taken sequentially from bank 0.
    pub fn sequential_down(banks: usize, down: usize) -> Self {
        let mut m = Self::all(banks);
        for b in 0..down.min(banks) {
            m = m.without(b);
        }
        m
    }

    /// The balanced pattern leaving `active` of 8 banks on.
    pub fn paper_pattern(active: usize) -> Option<Self> {
        match active {
            8 => Some(Self::all(8)),
            1..=7 => PAPER_PATTERNS[8 - active - 1].parse().ok(),
            _ => None,
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn banks(&self) -> usize {
        self.banks as usize
    }

    pub fn is_active(&self, bank: usize) -> bool {
        bank < self.banks() && self.bits >> bank & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.banks()).filter(|&b| self.is_active(b))
    }

    /// The `n`-th active bank in ascending index order.
    pub fn nth_active(&self, n: usize) -> Option<usize> {
        self.active().nth(n)
    }

    pub fn with(self, bank: usize) -> Self {
        Self { bits: self.bits | 1 << bank, ..self }
    }

    pub fn without(self, bank: usize) -> Self {
        Self { bits: self.bits & !(1 << bank), ..self }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.banks == other.banks && self.bits & !other.bits == 0
    }

    /// Banks active in `self` but not in `other`.
    pub fn minus(&self, other: &Self) -> Self {
        Self { bits: self.bits & !other.bits, ..*self }
    }
}

impl fmt::Display for ActiveBankMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in 0..self.banks() {
            f.write_str(if self.is_active(b) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ActiveBankMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.len() > 32 {
            return Err(Error::Mask(format!("pattern {s:?} must have 1..=32 characters")));
        }
        let mut bits = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => bits |= 1 << i,
                '0' => {}
                _ => return Err(Error::Mask(format!("pattern {s:?} may only contain 0 and 1"))),
            }
        }
        Ok(Self { bits, banks: s.len() as u8 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bfo,
    Mri,
    Crunch,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Bfo, Scheme::Mri, Scheme::Crunch];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Bfo => "bfo",
            Scheme::Mri => "mri",
            Scheme::Crunch => "crunch",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bfo" => Ok(Scheme::Bfo),
            "mri" => Ok(Scheme::Mri),
            "crunch" => Ok(Scheme::Crunch),
            _ => Err(Error::Parse(format!("unknown scheme {s:?} (expected bfo, mri or crunch)"))),
        }
    }
}

/// How a set key is reduced to a region id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RegionHash {
    /// XOR of every region-width chunk of the key.
    #[default]
    XorFold,
    /// Low bits of the key, no swizzle.
    BitSelect,
}

impl RegionHash {
    pub fn name(&self) -> &'static str {
        match self {
            RegionHash::XorFold => "xor-fold",
            RegionHash::BitSelect => "bit-select",
        }
    }
}

impl FromStr for RegionHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor-fold" => Ok(RegionHash::XorFold),
            "bit-select" => Ok(RegionHash::BitSelect),
            _ => Err(Error::Parse(format!("unknown region hash {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionId {
    pub super_region: usize,
    pub position: usize,
}

impl RegionId {
    pub fn index(&self, banks: usize) -> usize {
        self.super_region * banks + self.position
    }

    pub fn from_index(index: usize, banks: usize) -> Self {
        Self { super_region: index / banks, position: index % banks }
    }
}

/// Bit widths of the region id: the position picks a bank slot inside a
/// super-region, the super-region picks an RRT row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLayout {
    pub position_bits: u32,
    pub super_bits: u32,
}

impl Default for RegionLayout {
    fn default() -> Self {
        Self { position_bits: 3, super_bits: 5 }
    }
}

impl RegionLayout {
    pub fn for_table(banks: usize, super_regions: usize) -> Result<Self> {
        if !banks.is_power_of_two() || !super_regions.is_power_of_two() {
            return Err(Error::Rrt(format!(
                "region hashing needs power-of-two banks and super-regions, got {banks} and {super_regions}"
            )));
        }
        Ok(Self { position_bits: banks.trailing_zeros(), super_bits: super_regions.trailing_zeros() })
    }

    pub fn width(&self) -> u32 {
        self.position_bits + self.super_bits
    }
}

fn xor_fold(key: u64, width: u32) -> u64 {
    if width == 0 {
        return 0;
    }
    if width >= 64 {
        return key;
    }
    let mask = (1u64 << width) - 1;
    let mut k = key;
    let mut acc = 0;
    while k != 0 {
        acc ^= k & mask;
        k >>= width;
    }
    acc
}

/// Region of a set key. With the default layout the region id is 8 bits:
/// the top 5 select the super-region, the low 3 the position.
pub fn region_of(set_key: u64, layout: RegionLayout, hash: RegionHash) -> RegionId {
    let width = layout.width();
    let id = match hash {
        RegionHash::XorFold => xor_fold(set_key, width),
        RegionHash::BitSelect => set_key & ((1u64 << width) - 1),
    };
    RegionId {
        super_region: (id >> layout.position_bits) as usize,
        position: (id & ((1u64 << layout.position_bits) - 1)) as usize,
    }
}

/// Home bank if powered, else the next active bank upwards with wrap-around.
pub fn bfo_bank(home_bank: usize, mask: &ActiveBankMask) -> Result<usize> {
    let n = mask.banks();
    (0..n)
        .map(|i| (home_bank + i) % n)
        .find(|&b| mask.is_active(b))
        .ok_or(Error::NoActiveBanks)
}

/// `set_key mod k` over the `k` active banks, shifted onto the actual bank ids.
pub fn mri_bank(set_key: u64, mask: &ActiveBankMask) -> Result<usize> {
    let k = mask.count();
    if k == 0 {
        return Err(Error::NoActiveBanks);
    }
    let j = (set_key % k as u64) as usize;
    Ok(mask.nth_active(j).expect("j < active count"))
}

/// First active bank in the super-region's permutation, starting at the
/// region's position and wrapping within the super-region.
pub fn crunch_bank(region: RegionId, rrt: &RegionRemapTable, mask: &ActiveBankMask) -> Result<usize> {
    let perm = rrt.permutation(region.super_region);
    let n = perm.len();
    (0..n)
        .map(|i| perm[(region.position + i) % n] as usize)
        .find(|&b| mask.is_active(b))
        .ok_or(Error::NoActiveBanks)
}

/// A scheme bound to everything it needs to map set keys to banks.
#[derive(Debug, Clone)]
pub struct Remapper {
    scheme: Scheme,
    banks: usize,
    table: Option<(RegionRemapTable, RegionLayout, RegionHash)>,
}

impl Remapper {
    pub fn bfo(banks: usize) -> Self {
        Self { scheme: Scheme::Bfo, banks, table: None }
    }

    pub fn mri(banks: usize) -> Self {
        Self { scheme: Scheme::Mri, banks, table: None }
    }

    pub fn crunch(rrt: RegionRemapTable, hash: RegionHash) -> Result<Self> {
        let layout = RegionLayout::for_table(rrt.banks(), rrt.super_regions())?;
        Ok(Self { scheme: Scheme::Crunch, banks: rrt.banks(), table: Some((rrt, layout, hash)) })
    }

    /// Build any scheme; the table is only used by CRUNCH.
    pub fn new(scheme: Scheme, banks: usize, rrt: impl FnOnce() -> Result<RegionRemapTable>, hash: RegionHash) -> Result<Self> {
        match scheme {
            Scheme::Bfo => Ok(Self::bfo(banks)),
            Scheme::Mri => Ok(Self::mri(banks)),
            Scheme::Crunch => {
                let t = rrt()?;
                if t.banks() != banks {
                    return Err(Error::Rrt(format!("table has {} banks, cache has {banks}", t.banks())));
                }
                Self::crunch(t, hash)
            }
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn rrt(&self) -> Option<&RegionRemapTable> {
        self.table.as_ref().map(|(t, _, _)| t)
    }

    pub fn region(&self, set_key: u64) -> Option<RegionId> {
        self.table.as_ref().map(|(_, layout, hash)| region_of(set_key, *layout, *hash))
    }

    pub fn bank_of(&self, set_key: u64, mask: &ActiveBankMask) -> Result<usize> {
        match self.scheme {
            Scheme::Bfo => bfo_bank((set_key % self.banks as u64) as usize, mask),
            Scheme::Mri => mri_bank(set_key, mask),
            Scheme::Crunch => {
                let (rrt, layout, hash) = self.table.as_ref().expect("crunch remapper has a table");
                crunch_bank(region_of(set_key, *layout, *hash), rrt, mask)
            }
        }
    }

    /// Banks that must be searched for displaced dirty lines when moving from
    /// `before` to `after`.
    pub fn transition_scope(&self, before: &ActiveBankMask, after: &ActiveBankMask) -> Vec<usize> {
        let down = before.minus(after);
        let up = after.minus(before);
        let mut scope = vec![false; self.banks];
        match self.scheme {
            // power-down: only the banks going away; power-up: only the fail-over
            // banks that absorbed the returning banks' sets
            Scheme::Bfo | Scheme::Crunch if up.is_empty() => down.active().for_each(|b| scope[b] = true),
            Scheme::Bfo => {
                for b in up.active() {
                    if let Ok(f) = bfo_bank(b, before) {
                        scope[f] = true;
                    }
                }
                down.active().for_each(|b| scope[b] = true);
            }
            _ => before.active().for_each(|b| scope[b] = true),
        }
        (0..self.banks).filter(|&b| scope[b]).collect()
    }
}

/// Mapping classes whose bank differs between two masks.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapDelta {
    /// Number of mapping classes enumerated.
    pub classes: usize,
    /// Classes whose bank changed. CRUNCH: region indices; BFO: home banks;
    /// MRI: residues modulo lcm(k_before, k_after).
    pub changed: Vec<usize>,
}

impl RemapDelta {
    /// Fraction of uniformly distributed keys that move.
    pub fn moved_fraction(&self) -> f64 {
        self.changed.len() as f64 / self.classes as f64
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Exact enumeration of the classes that change bank between two masks.
pub fn remap_delta(remapper: &Remapper, before: &ActiveBankMask, after: &ActiveBankMask) -> Result<RemapDelta> {
    let banks = remapper.banks();
    let moved = |b: Result<usize>, a: Result<usize>| -> bool {
        match (b, a) {
            (Ok(x), Ok(y)) => x != y,
            (Err(_), Err(_)) => false,
            _ => true,
        }
    };
    match remapper.scheme() {
        Scheme::Bfo => {
            let changed = (0..banks).filter(|&h| moved(bfo_bank(h, before), bfo_bank(h, after))).collect();
            Ok(RemapDelta { classes: banks, changed })
        }
        Scheme::Mri => {
            let (kb, ka) = (before.count().max(1), after.count().max(1));
            let classes = kb / gcd(kb, ka) * ka;
            let changed = (0..classes)
                .filter(|&r| moved(mri_bank(r as u64, before), mri_bank(r as u64, after)))
                .collect();
            Ok(RemapDelta { classes, changed })
        }
        Scheme::Crunch => {
            let rrt = remapper.rrt().expect("crunch remapper has a table");
            let classes = rrt.regions();
            let changed = (0..classes)
                .filter(|&i| {
                    let r = RegionId::from_index(i, banks);
                    moved(crunch_bank(r, rrt, before), crunch_bank(r, rrt, after))
                })
                .collect();
            Ok(RemapDelta { classes, changed })
        }
    }
}

/// Number of regions each bank serves under `mask`.
pub fn crunch_region_counts(rrt: &RegionRemapTable, mask: &ActiveBankMask) -> Result<Vec<usize>> {
    let mut counts = vec![0; rrt.banks()];
    for i in 0..rrt.regions() {
        counts[crunch_bank(RegionId::from_index(i, rrt.banks()), rrt, mask)?] += 1;
    }
    Ok(counts)
}
