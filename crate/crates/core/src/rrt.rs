//! Region remap table: one bank permutation per super-region.
//!
//! Tables are built offline by a seeded local search. Every row is a
//! permutation of the banks, no two rows are rotations of one another, and
//! for every bank the cyclic successors across all rows are spread as evenly
//! as possible over the other banks. The last property makes a single bank
//! failure spread its regions evenly over the survivors. A second search
//! phase then evens out the load under two- and three-bank failures without
//! giving up the successor balance.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_SUPER_REGIONS: usize = 32;
/// Picked from a scan of seeds 1..=20 for the flattest load under the balanced
/// and sequential shutdown patterns.
pub const DEFAULT_RRT_SEED: u64 = 2;

const RESTARTS: usize = 64;
const STEPS_PER_RESTART: usize = 200_000;
const REFINE_STEPS: usize = 20_000;
/// Tables are refined for multi-bank failures up to this many banks down.
const REFINE_MAX_DOWN: usize = 3;
const REFINE_MAX_BANKS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionRemapTable {
    banks: usize,
    seed: u64,
    permutations: Vec<Vec<u8>>,
}

/// A constraint the table fails to meet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RrtViolation {
    NotPermutation { row: usize },
    RotationEquivalent { first: usize, second: usize },
    SuccessorImbalance { bank: usize, successor: usize, count: usize, lo: usize, hi: usize },
}

impl fmt::Display for RrtViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RrtViolation::NotPermutation { row } => write!(f, "row {row} is not a permutation of the banks"),
            RrtViolation::RotationEquivalent { first, second } => {
                write!(f, "rows {first} and {second} are rotation equivalent")
            }
            RrtViolation::SuccessorImbalance { bank, successor, count, lo, hi } => write!(
                f,
                "bank {successor} follows bank {bank} in {count} rows, expected {lo}..={hi}"
            ),
        }
    }
}

/// Number of rotation classes of permutations of `banks` items, `(banks-1)!`,
/// saturating at `u128::MAX`.
pub fn rotation_classes(banks: usize) -> u128 {
    (1..banks as u128).fold(1u128, |acc, k| acc.saturating_mul(k))
}

fn bits_per_entry(banks: usize) -> usize {
    (usize::BITS - (banks.max(2) - 1).leading_zeros()) as usize
}

/// Successor-count bounds for one bank across `rows` rows.
fn successor_bounds(banks: usize, rows: usize) -> (usize, usize) {
    let others = banks - 1;
    (rows / others, rows.div_ceil(others))
}

/// Rotate so bank 0 comes first.
fn canonical(row: &[u8]) -> Vec<u8> {
    let p = row.iter().position(|&b| b == 0).unwrap_or(0);
    let mut v = row.to_vec();
    v.rotate_left(p);
    v
}

fn successor_counts(banks: usize, rows: &[Vec<u8>]) -> Vec<usize> {
    let mut m = vec![0usize; banks * banks];
    for row in rows {
        for i in 0..row.len() {
            let from = row[i] as usize;
            let to = row[(i + 1) % row.len()] as usize;
            m[from * banks + to] += 1;
        }
    }
    m
}

fn residual(banks: usize, m: &[usize], lo: usize, hi: usize) -> (usize, usize) {
    let mut total = 0;
    let mut pairs = 0;
    for b in 0..banks {
        for c in 0..banks {
            if b == c {
                continue;
            }
            let v = m[b * banks + c];
            let r = v.saturating_sub(hi) + lo.saturating_sub(v);
            if r > 0 {
                pairs += 1;
                total += r;
            }
        }
    }
    (total, pairs)
}

/// Masks (bit set = active) with 1..=REFINE_MAX_DOWN banks down, keeping at least two up.
fn refine_masks(banks: usize) -> Vec<u32> {
    let all = (1u32 << banks) - 1;
    (0..=all)
        .filter(|m| {
            let down = banks - m.count_ones() as usize;
            down >= 1 && down <= REFINE_MAX_DOWN && m.count_ones() >= 2
        })
        .collect()
}

/// Add `sign` times the number of positions of `row` each active bank serves under `mask`.
fn add_row_load(row: &[u8], mask: u32, load: &mut [i64], sign: i64) {
    let n = row.len();
    for p in 0..n {
        let b = (0..n).map(|i| row[(p + i) % n]).find(|&b| mask >> b & 1 == 1).expect("mask has active banks");
        load[b as usize] += sign;
    }
}

fn load_cost(banks: usize, mask: u32, load: &[i64], total: i64) -> f64 {
    let k = mask.count_ones() as f64;
    let ideal = total as f64 / k;
    (0..banks)
        .filter(|&b| mask >> b & 1 == 1)
        .map(|b| {
            let d = load[b] as f64 - ideal;
            d * d
        })
        .sum::<f64>()
        / (ideal * ideal)
}

/// Second search phase on a table whose successor counts are already
/// balanced: swap entries while the successor balance holds, keeping moves
/// that do not worsen the load spread under two- and three-bank failures.
fn refine_multi_failure(
    banks: usize,
    rows: &mut [Vec<u8>],
    seen: &mut HashSet<Vec<u8>>,
    m: &mut Vec<usize>,
    lo: usize,
    hi: usize,
    rng: &mut ChaCha8Rng,
) {
    if banks < 4 || banks > REFINE_MAX_BANKS {
        return;
    }
    let masks = refine_masks(banks);
    let total = (rows.len() * banks) as i64;
    let mut loads: Vec<Vec<i64>> = masks
        .iter()
        .map(|&mask| {
            let mut load = vec![0i64; banks];
            rows.iter().for_each(|r| add_row_load(r, mask, &mut load, 1));
            load
        })
        .collect();
    let mut costs: Vec<f64> = masks.iter().zip(&loads).map(|(&mk, l)| load_cost(banks, mk, l, total)).collect();
    let mut cost: f64 = costs.iter().sum();

    for _ in 0..REFINE_STEPS {
        let r = rng.gen_range(0..rows.len());
        let i = rng.gen_range(1..banks);
        let j = rng.gen_range(1..banks);
        if i == j {
            continue;
        }
        let mut cand = rows[r].clone();
        cand.swap(i, j);
        if seen.contains(&cand) {
            continue;
        }
        let mut m2 = m.clone();
        for k in 0..banks {
            let (a, b) = (rows[r][k] as usize, rows[r][(k + 1) % banks] as usize);
            m2[a * banks + b] -= 1;
            let (a, b) = (cand[k] as usize, cand[(k + 1) % banks] as usize);
            m2[a * banks + b] += 1;
        }
        if residual(banks, &m2, lo, hi).0 != 0 {
            continue;
        }
        let mut loads2 = loads.clone();
        let mut costs2 = costs.clone();
        for (idx, &mask) in masks.iter().enumerate() {
            add_row_load(&rows[r], mask, &mut loads2[idx], -1);
            add_row_load(&cand, mask, &mut loads2[idx], 1);
            costs2[idx] = load_cost(banks, mask, &loads2[idx], total);
        }
        let c2: f64 = costs2.iter().sum();
        if c2 <= cost {
            seen.remove(&rows[r]);
            seen.insert(cand.clone());
            rows[r] = cand;
            *m = m2;
            loads = loads2;
            costs = costs2;
            cost = c2;
        }
    }
}

impl RegionRemapTable {
    /// Build a table from explicit rows, validating only their shape.
    pub fn from_rows(banks: usize, seed: u64, permutations: Vec<Vec<u8>>) -> Result<Self> {
        if !(2..=256).contains(&banks) {
            return Err(Error::Rrt(format!("bank count {banks} out of range")));
        }
        if permutations.is_empty() {
            return Err(Error::Rrt("table has no rows".into()));
        }
        for (i, row) in permutations.iter().enumerate() {
            if row.len() != banks {
                return Err(Error::Rrt(format!("row {i} has {} entries, expected {banks}", row.len())));
            }
            if row.iter().any(|&b| b as usize >= banks) {
                return Err(Error::Rrt(format!("row {i} names a bank outside 0..{banks}")));
            }
        }
        Ok(Self { banks, seed, permutations })
    }

    /// Seeded randomized search for a table meeting every invariant.
    pub fn generate(banks: usize, super_regions: usize, seed: u64) -> Result<Self> {
        if banks < 2 || banks > 256 {
            return Err(Error::Rrt(format!("need 2..=256 banks, got {banks}")));
        }
        if super_regions == 0 {
            return Err(Error::Rrt("need at least one super-region".into()));
        }
        if super_regions as u128 > rotation_classes(banks) {
            return Err(Error::Rrt(format!(
                "{super_regions} super-regions exceed the {} rotation classes of {banks} banks",
                rotation_classes(banks)
            )));
        }
        let (lo, hi) = successor_bounds(banks, super_regions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = (usize::MAX, 0usize);

        for _ in 0..RESTARTS {
            let mut seen = HashSet::new();
            let mut rows: Vec<Vec<u8>> = Vec::with_capacity(super_regions);
            while rows.len() < super_regions {
                let mut tail: Vec<u8> = (1..banks as u8).collect();
                tail.shuffle(&mut rng);
                let mut row = vec![0u8];
                row.extend(tail);
                if seen.insert(row.clone()) {
                    rows.push(row);
                }
            }
            let mut m = successor_counts(banks, &rows);
            let (mut cost, mut pairs) = residual(banks, &m, lo, hi);

            let mut step = 0;
            while cost > 0 && step < STEPS_PER_RESTART && banks > 2 {
                step += 1;
                let r = rng.gen_range(0..super_regions);
                let i = rng.gen_range(1..banks);
                let j = rng.gen_range(1..banks);
                if i == j {
                    continue;
                }
                let mut cand = rows[r].clone();
                cand.swap(i, j);
                if seen.contains(&cand) {
                    continue;
                }
                let mut m2 = m.clone();
                for k in 0..banks {
                    let (a, b) = (rows[r][k] as usize, rows[r][(k + 1) % banks] as usize);
                    m2[a * banks + b] -= 1;
                    let (a, b) = (cand[k] as usize, cand[(k + 1) % banks] as usize);
                    m2[a * banks + b] += 1;
                }
                let (c2, p2) = residual(banks, &m2, lo, hi);
                // accept sideways moves so the search can cross plateaus
                if c2 <= cost || rng.gen_bool(0.001) {
                    seen.remove(&rows[r]);
                    seen.insert(cand.clone());
                    rows[r] = cand;
                    m = m2;
                    cost = c2;
                    pairs = p2;
                }
            }

            if cost < best.0 {
                best = (cost, pairs);
            }
            if cost == 0 {
                refine_multi_failure(banks, &mut rows, &mut seen, &mut m, lo, hi, &mut rng);
                // rotations leave the successor relation and the load split unchanged
                for row in &mut rows {
                    let k = rng.gen_range(0..banks);
                    row.rotate_left(k);
                }
                return Ok(Self { banks, seed, permutations: rows });
            }
        }
        Err(Error::RrtUnsatisfiable {
            banks,
            super_regions,
            attempts: RESTARTS,
            best_residual: best.0,
            unbalanced_pairs: best.1,
        })
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn super_regions(&self) -> usize {
        self.permutations.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn permutations(&self) -> &[Vec<u8>] {
        &self.permutations
    }

    pub fn permutation(&self, super_region: usize) -> &[u8] {
        &self.permutations[super_region]
    }

    pub fn regions(&self) -> usize {
        self.banks * self.permutations.len()
    }

    pub fn bits_per_entry(&self) -> usize {
        bits_per_entry(self.banks)
    }

    /// Hardware storage: rows x banks x bits per bank id.
    pub fn size_bits(&self) -> usize {
        self.regions() * self.bits_per_entry()
    }

    pub fn size_bytes(&self) -> f64 {
        self.size_bits() as f64 / 8.0
    }

    /// `counts[b * banks + c]` is the number of rows in which `c` directly follows `b`.
    pub fn successor_counts(&self) -> Vec<usize> {
        successor_counts(self.banks, &self.permutations)
    }

    /// Every invariant violation; empty when the table is well formed.
    pub fn violations(&self) -> Vec<RrtViolation> {
        let mut out = Vec::new();
        let mut canon: Vec<(Vec<u8>, usize)> = Vec::new();
        let mut all_perms = true;
        for (i, row) in self.permutations.iter().enumerate() {
            let mut seen = vec![false; self.banks];
            let ok = row.len() == self.banks
                && row.iter().all(|&b| {
                    let b = b as usize;
                    b < self.banks && !std::mem::replace(&mut seen[b], true)
                });
            if !ok {
                all_perms = false;
                out.push(RrtViolation::NotPermutation { row: i });
                continue;
            }
            let c = canonical(row);
            if let Some((_, first)) = canon.iter().find(|(k, _)| *k == c) {
                out.push(RrtViolation::RotationEquivalent { first: *first, second: i });
            } else {
                canon.push((c, i));
            }
        }
        if all_perms {
            let (lo, hi) = successor_bounds(self.banks, self.permutations.len());
            let m = self.successor_counts();
            for b in 0..self.banks {
                for c in 0..self.banks {
                    let count = m[b * self.banks + c];
                    if b != c && (count < lo || count > hi) {
                        out.push(RrtViolation::SuccessorImbalance { bank: b, successor: c, count, lo, hi });
                    }
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some(v) => Err(Error::Rrt(v.to_string())),
        }
    }
}

/// Text form: header `rrt <banks> <super_regions> <seed>`, then one row per
/// line as space-separated bank indices.
impl fmt::Display for RegionRemapTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rrt {} {} {}", self.banks, self.permutations.len(), self.seed)?;
        for row in &self.permutations {
            let cells: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for RegionRemapTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Rrt("empty table".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "rrt" {
            return Err(Error::TraceParse { line: 1, msg: "expected `rrt <banks> <super_regions> <seed>`".into() });
        }
        let num = |i: usize| -> Result<u64> {
            fields[i]
                .parse::<u64>()
                .map_err(|e| Error::TraceParse { line: 1, msg: format!("{}: {e}", fields[i]) })
        };
        let (banks, super_regions, seed) = (num(1)? as usize, num(2)? as usize, num(3)?);
        let mut rows = Vec::with_capacity(super_regions);
        for (n, line) in lines {
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<u8>())
                .collect::<std::result::Result<Vec<u8>, _>>()
                .map_err(|e| Error::TraceParse { line: n + 1, msg: e.to_string() })?;
            rows.push(row);
        }
        if rows.len() != super_regions {
            return Err(Error::Rrt(format!("header declares {super_regions} rows, found {}", rows.len())));
        }
        Self::from_rows(banks, seed, rows)
    }
}
