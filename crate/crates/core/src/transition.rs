//! Bank power-down and power-up.
//!
//! A transition searches the banks whose contents may remap (the scope given
//! by [`Remapper::transition_scope`]) for dirty lines, then either migrates
//! each displaced dirty line to its bank under the new mask or writes it back
//! to memory. Rows are found either by walking every row of a bank or by
//! enumerating the bank's [`DirtyRowTree`](crate::hier::DirtyRowTree).
//!
//! Clean lines whose bank changes are invalidated in a separate pass over all
//! powered banks. Left in place they would be stale copies that become
//! visible again if the mapping later returns to their bank. The pass is not
//! charged to `rows_walked`: it only clears valid bits and needs no data
//! movement.

use std::fmt;
use std::str::FromStr;

use crate::cache::Line;
use crate::error::{Error, Result};
use crate::kv;
use crate::power::TransitionEnergy;
use crate::remap::{ActiveBankMask, Scheme};
use crate::system::CacheSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discovery {
    FullWalk,
    Hier,
}

impl Discovery {
    pub fn name(&self) -> &'static str {
        match self {
            Discovery::FullWalk => "full",
            Discovery::Hier => "hier",
        }
    }
}

impl fmt::Display for Discovery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Discovery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "full_walk" => Ok(Discovery::FullWalk),
            "hier" => Ok(Discovery::Hier),
            _ => Err(Error::Parse(format!("unknown discovery {s:?}; expected full or hier"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirtyHandling {
    Migrate,
    Writeback,
}

impl DirtyHandling {
    pub fn name(&self) -> &'static str {
        match self {
            DirtyHandling::Migrate => "migrate",
            DirtyHandling::Writeback => "writeback",
        }
    }
}

impl fmt::Display for DirtyHandling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DirtyHandling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "migrate" => Ok(DirtyHandling::Migrate),
            "writeback" => Ok(DirtyHandling::Writeback),
            _ => Err(Error::Parse(format!("unknown dirty handling {s:?}; expected migrate or writeback"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionPolicy {
    pub discovery: Discovery,
    pub handling: DirtyHandling,
    /// Reading one row's tags: cache tRCD + tCAS.
    pub row_walk_cycles: u64,
    pub line_migrate_cycles: u64,
    /// Off-chip tRCD + tCAS.
    pub line_writeback_cycles: u64,
    /// Fraction of the shorter phase hidden under the longer one. 0 = phases run back to back.
    pub overlap: f64,
    pub energy: TransitionEnergy,
}

impl Default for TransitionPolicy {
    fn default() -> Self {
        Self {
            discovery: Discovery::Hier,
            handling: DirtyHandling::Migrate,
            row_walk_cycles: 16,
            line_migrate_cycles: 4,
            line_writeback_cycles: 22,
            overlap: 0.0,
            energy: TransitionEnergy::default(),
        }
    }
}

impl TransitionPolicy {
    pub fn new(discovery: Discovery, handling: DirtyHandling) -> Self {
        Self { discovery, handling, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Transition(format!("overlap {} outside [0, 1]", self.overlap)));
        }
        let e = &self.energy;
        if [e.row_read_nj, e.line_migrate_nj, e.line_writeback_nj].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Transition("transition energies must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("transition.discovery", self.discovery.to_string()),
            ("transition.handling", self.handling.to_string()),
            ("transition.row_walk_cycles", self.row_walk_cycles.to_string()),
            ("transition.line_migrate_cycles", self.line_migrate_cycles.to_string()),
            ("transition.line_writeback_cycles", self.line_writeback_cycles.to_string()),
            ("transition.overlap", self.overlap.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Apply one `transition.*` key; `Ok(false)` for keys it does not own.
    /// Energies come from the power model.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "transition.discovery" => self.discovery = value.parse()?,
            "transition.handling" => self.handling = value.parse()?,
            "transition.row_walk_cycles" => self.row_walk_cycles = kv::parse_value(key, value)?,
            "transition.line_migrate_cycles" => self.line_migrate_cycles = kv::parse_value(key, value)?,
            "transition.line_writeback_cycles" => self.line_writeback_cycles = kv::parse_value(key, value)?,
            "transition.overlap" => self.overlap = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn latency(&self, rows_walked: u64, migrated: u64, written_back: u64) -> u64 {
        let walk = rows_walked * self.row_walk_cycles;
        let transfer = migrated * self.line_migrate_cycles + written_back * self.line_writeback_cycles;
        let hidden = (self.overlap * walk.min(transfer) as f64).round() as u64;
        walk + transfer - hidden
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Down,
    Up,
    /// Some banks go down while others come up.
    Mixed,
    /// The whole cache is disabled.
    Shutdown,
}

impl TransitionKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransitionKind::Down => "down",
            TransitionKind::Up => "up",
            TransitionKind::Mixed => "mixed",
            TransitionKind::Shutdown => "shutdown",
        }
    }
}

/// Counts are summed over all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionReport {
    pub kind: TransitionKind,
    pub scheme: Scheme,
    pub before: ActiveBankMask,
    pub after: ActiveBankMask,
    pub discovery: Discovery,
    pub handling: DirtyHandling,
    pub latency_cycles: u64,
    pub rows_walked: u64,
    /// Tree nodes read during hierarchical discovery, root included.
    pub nodes_visited: u64,
    pub lines_migrated: u64,
    pub lines_written_back: u64,
    /// Clean lines invalidated because their bank changed, plus clean
    /// victims displaced by migrated lines.
    pub clean_lines_dropped: u64,
    pub initial_dirty_lines: u64,
    pub final_dirty_lines: u64,
    pub energy_nj: f64,
}

impl TransitionReport {
    pub const CSV_HEADER: &'static str = "kind,scheme,before,after,discovery,handling,latency_cycles,rows_walked,nodes_visited,lines_migrated,lines_written_back,clean_lines_dropped,initial_dirty_lines,final_dirty_lines,energy_nj";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.kind.name(),
            self.scheme,
            self.before,
            self.after,
            self.discovery,
            self.handling,
            self.latency_cycles,
            self.rows_walked,
            self.nodes_visited,
            self.lines_migrated,
            self.lines_written_back,
            self.clean_lines_dropped,
            self.initial_dirty_lines,
            self.final_dirty_lines,
            self.energy_nj
        )
    }

    /// `key = value` record, one field per line.
    pub fn to_text(&self) -> String {
        let header: Vec<&str> = Self::CSV_HEADER.split(',').collect();
        let row = self.csv_row();
        let pairs: Vec<(String, String)> =
            header.iter().zip(row.split(',')).map(|(k, v)| (k.to_string(), v.to_string())).collect();
        kv::render(&pairs)
    }

    /// Dirty lines present before = dirty lines left + lines written back.
    pub fn conserves_dirty_lines(&self) -> bool {
        self.initial_dirty_lines == self.final_dirty_lines + self.lines_written_back
    }
}

/// Energy of the events in a report.
pub fn transition_energy(report: &TransitionReport, energy: &TransitionEnergy) -> f64 {
    report.rows_walked as f64 * energy.row_read_nj
        + report.lines_migrated as f64 * energy.line_migrate_nj
        + report.lines_written_back as f64 * energy.line_writeback_nj
}

/// Power down the banks in `before \ after`. `after` must be a nonempty subset
/// of the current mask.
pub fn power_down(sys: &mut CacheSystem, after: ActiveBankMask, policy: &TransitionPolicy) -> Result<TransitionReport> {
    let before = sys.mask();
    if !after.is_subset_of(&before) {
        return Err(Error::Transition(format!("power-down target {after} is not a subset of {before}")));
    }
    apply(sys, after, policy, TransitionKind::Down)
}

/// Power up the banks in `after \ before` and repatriate displaced dirty lines.
pub fn power_up(sys: &mut CacheSystem, after: ActiveBankMask, policy: &TransitionPolicy) -> Result<TransitionReport> {
    let before = sys.mask();
    if !before.is_subset_of(&after) {
        return Err(Error::Transition(format!("power-up target {after} is not a superset of {before}")));
    }
    apply(sys, after, policy, TransitionKind::Up)
}

/// Move between any two nonempty masks in one step.
pub fn reconfigure(sys: &mut CacheSystem, after: ActiveBankMask, policy: &TransitionPolicy) -> Result<TransitionReport> {
    let before = sys.mask();
    let kind = if after.is_subset_of(&before) {
        TransitionKind::Down
    } else if before.is_subset_of(&after) {
        TransitionKind::Up
    } else {
        TransitionKind::Mixed
    };
    apply(sys, after, policy, kind)
}

/// Disable the whole cache: every dirty line is written back and every bank
/// powered off. This is the only way to reach an empty mask.
pub fn shutdown_all(sys: &mut CacheSystem, policy: &TransitionPolicy) -> Result<TransitionReport> {
    policy.validate()?;
    let before = sys.mask();
    let g = *sys.geometry();
    let initial = sys.cache().dirty_line_count() as u64;
    let mut report = empty_report(sys, before, ActiveBankMask::none(g.banks_per_channel), policy, TransitionKind::Shutdown);
    report.initial_dirty_lines = initial;
    let mut dirty = Vec::new();
    for ch in 0..g.channels {
        for b in before.active() {
            let rows = discover(sys, ch, b, policy.discovery, &mut report);
            for row in rows {
                dirty.extend(sys.cache_mut().extract_if(ch, b, row, |l| l.dirty));
            }
            report.clean_lines_dropped += sys.cache().bank(ch, b).valid_lines() as u64;
            sys.cache_mut().set_powered(ch, b, false);
        }
    }
    for line in dirty {
        sys.memory_mut().write(line.tag, line.data);
        report.lines_written_back += 1;
    }
    sys.set_mask(ActiveBankMask::none(g.banks_per_channel));
    finish(sys, report, policy)
}

fn empty_report(
    sys: &CacheSystem,
    before: ActiveBankMask,
    after: ActiveBankMask,
    policy: &TransitionPolicy,
    kind: TransitionKind,
) -> TransitionReport {
    TransitionReport {
        kind,
        scheme: sys.remapper().scheme(),
        before,
        after,
        discovery: policy.discovery,
        handling: policy.handling,
        latency_cycles: 0,
        rows_walked: 0,
        nodes_visited: 0,
        lines_migrated: 0,
        lines_written_back: 0,
        clean_lines_dropped: 0,
        initial_dirty_lines: 0,
        final_dirty_lines: 0,
        energy_nj: 0.0,
    }
}

/// Rows of one bank to inspect, charging the discovery cost to `report`.
fn discover(sys: &CacheSystem, ch: usize, bank: usize, discovery: Discovery, report: &mut TransitionReport) -> Vec<usize> {
    let b = sys.cache().bank(ch, bank);
    match discovery {
        Discovery::FullWalk => {
            report.rows_walked += b.rows() as u64;
            (0..b.rows()).collect()
        }
        Discovery::Hier => {
            let walk = b.dirty_rows().enumerate();
            report.rows_walked += walk.rows.len() as u64;
            report.nodes_visited += walk.nodes_visited as u64;
            walk.rows
        }
    }
}

fn finish(sys: &CacheSystem, mut report: TransitionReport, policy: &TransitionPolicy) -> Result<TransitionReport> {
    report.final_dirty_lines = sys.cache().dirty_line_count() as u64;
    report.latency_cycles = policy.latency(report.rows_walked, report.lines_migrated, report.lines_written_back);
    report.energy_nj = transition_energy(&report, &policy.energy);
    if !report.conserves_dirty_lines() {
        return Err(Error::Transition(format!(
            "dirty line accounting broken: {} before, {} after, {} written back",
            report.initial_dirty_lines, report.final_dirty_lines, report.lines_written_back
        )));
    }
    Ok(report)
}

fn apply(
    sys: &mut CacheSystem,
    after: ActiveBankMask,
    policy: &TransitionPolicy,
    kind: TransitionKind,
) -> Result<TransitionReport> {
    policy.validate()?;
    let before = sys.mask();
    let g = *sys.geometry();
    if after.banks() != before.banks() {
        return Err(Error::Mask(format!("mask {after} has {} banks, cache has {}", after.banks(), before.banks())));
    }
    if after.is_empty() {
        return Err(Error::Transition("target mask has no active banks; use a full shutdown".into()));
    }
    let remapper = sys.remapper().clone();
    let mut report = empty_report(sys, before, after, policy, kind);
    report.initial_dirty_lines = sys.cache().dirty_line_count() as u64;
    let moves = |line: &Line, bank: usize| -> bool {
        let d = g.decode_line(line.tag);
        remapper.bank_of(d.set_key, &after).expect("target mask is nonempty") != bank
    };

    // dirty lines in the search scope that change bank
    let scope = remapper.transition_scope(&before, &after);
    let mut displaced: Vec<(usize, Line)> = Vec::new();
    for ch in 0..g.channels {
        for &b in &scope {
            for row in discover(sys, ch, b, policy.discovery, &mut report) {
                let out = sys.cache_mut().extract_if(ch, b, row, |l| l.dirty && moves(l, b));
                displaced.extend(out.into_iter().map(|l| (ch, l)));
            }
        }
    }

    // clean lines that change bank, anywhere
    for ch in 0..g.channels {
        for b in before.active() {
            for row in 0..g.rows_per_bank {
                if sys.cache().bank(ch, b).occupancy(row) == 0 {
                    continue;
                }
                let out = sys.cache_mut().extract_if(ch, b, row, |l| moves(l, b));
                for l in out {
                    if l.dirty {
                        return Err(Error::Transition(format!(
                            "dirty line {:#x} in bank {b} escaped the {} search scope",
                            l.tag, remapper.scheme()
                        )));
                    }
                    report.clean_lines_dropped += 1;
                }
            }
        }
    }

    for ch in 0..g.channels {
        for b in 0..g.banks_per_channel {
            let (was, will) = (before.is_active(b), after.is_active(b));
            if was != will {
                debug_assert!(will || sys.cache().bank(ch, b).is_empty());
                sys.cache_mut().set_powered(ch, b, will);
            }
        }
    }
    sys.set_mask(after);

    for (ch, line) in displaced {
        match policy.handling {
            DirtyHandling::Migrate => {
                let d = g.decode_line(line.tag);
                let bank = remapper.bank_of(d.set_key, &after)?;
                report.lines_migrated += 1;
                if let Some(victim) = sys.cache_mut().insert(ch, bank, d.row_index, line)? {
                    if victim.dirty {
                        sys.memory_mut().write(victim.tag, victim.data);
                        report.lines_written_back += 1;
                    } else {
                        report.clean_lines_dropped += 1;
                    }
                }
            }
            DirtyHandling::Writeback => {
                sys.memory_mut().write(line.tag, line.data);
                report.lines_written_back += 1;
            }
        }
    }
    finish(sys, report, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CacheGeometry;
    use crate::remap::Remapper;
    use crate::rrt::RegionRemapTable;

    fn geometry() -> CacheGeometry {
        CacheGeometry { channels: 1, banks_per_channel: 8, rows_per_bank: 64, row_bytes: 512, line_bytes: 64, data_ways: 4 }
    }

    fn system(scheme: Scheme) -> CacheSystem {
        let r = Remapper::new(scheme, 8, || RegionRemapTable::generate(8, 32, 2), Default::default()).unwrap();
        CacheSystem::new(geometry(), r, ActiveBankMask::all(8)).unwrap()
    }

    fn mask(s: &str) -> ActiveBankMask {
        s.parse().unwrap()
    }

    fn fill(sys: &mut CacheSystem, write: bool) {
        let lines = sys.geometry().data_lines() as u64;
        for i in 0..lines {
            if write {
                sys.write(i * 64, i + 1).unwrap();
            } else {
                sys.read(i * 64).unwrap();
            }
        }
    }

    #[test]
    fn clean_cache_costs_only_the_walk() {
        let mut sys = system(Scheme::Crunch);
        fill(&mut sys, false);
        let p = TransitionPolicy::new(Discovery::FullWalk, DirtyHandling::Migrate);
        let r = power_down(&mut sys, mask("11110111"), &p).unwrap();
        assert_eq!(r.lines_migrated, 0);
        assert_eq!(r.rows_walked, 64);
        assert_eq!(r.latency_cycles, r.rows_walked * p.row_walk_cycles);
        sys.check_placement().unwrap();
    }

    #[test]
    fn latency_is_sum_of_phases() {
        let mut sys = system(Scheme::Bfo);
        fill(&mut sys, true);
        let p = TransitionPolicy::new(Discovery::FullWalk, DirtyHandling::Migrate);
        let r = power_down(&mut sys, mask("11110111"), &p).unwrap();
        assert!(r.lines_migrated > 0);
        assert_eq!(
            r.latency_cycles,
            r.rows_walked * 16 + r.lines_migrated * 4 + r.lines_written_back * 22
        );
        assert!(r.conserves_dirty_lines());
        sys.check_placement().unwrap();
    }

    #[test]
    fn overlap_hides_the_shorter_phase() {
        let p = TransitionPolicy { overlap: 1.0, ..TransitionPolicy::default() };
        assert_eq!(p.latency(10, 10, 0), 160);
        let p = TransitionPolicy { overlap: 0.5, ..TransitionPolicy::default() };
        assert_eq!(p.latency(10, 10, 0), 160 + 40 - 20);
    }

    #[test]
    fn bfo_power_up_walks_only_the_fail_over_bank() {
        let mut sys = system(Scheme::Bfo);
        let p = TransitionPolicy::new(Discovery::FullWalk, DirtyHandling::Migrate);
        power_down(&mut sys, mask("11110111"), &p).unwrap();
        fill(&mut sys, true);
        let before_dirty = sys.cache().bank(0, 5).dirty_line_count();
        let r = power_up(&mut sys, ActiveBankMask::all(8), &p).unwrap();
        assert_eq!(r.rows_walked, 64);
        assert!(r.lines_migrated > 0);
        assert_eq!(sys.cache().bank(0, 5).dirty_line_count() + r.lines_migrated as usize, before_dirty);
        sys.check_placement().unwrap();
    }

    #[test]
    fn hier_on_clean_cache_walks_nothing() {
        let mut sys = system(Scheme::Crunch);
        let p = TransitionPolicy::new(Discovery::Hier, DirtyHandling::Migrate);
        power_down(&mut sys, mask("11110111"), &p).unwrap();
        fill(&mut sys, false);
        let r = power_up(&mut sys, ActiveBankMask::all(8), &p).unwrap();
        assert_eq!(r.rows_walked, 0);
        assert_eq!(r.lines_migrated, 0);
        assert_eq!(r.nodes_visited, 7);
        sys.check_placement().unwrap();
    }

    #[test]
    fn writeback_policy_empties_displaced_lines() {
        let mut sys = system(Scheme::Mri);
        fill(&mut sys, true);
        let p = TransitionPolicy::new(Discovery::Hier, DirtyHandling::Writeback);
        let r = power_down(&mut sys, mask("11010111"), &p).unwrap();
        assert_eq!(r.lines_migrated, 0);
        assert!(r.lines_written_back > 0);
        assert!(r.conserves_dirty_lines());
        sys.check_placement().unwrap();
    }

    #[test]
    fn subset_rules_enforced() {
        let mut sys = system(Scheme::Crunch);
        let p = TransitionPolicy::default();
        assert!(power_up(&mut sys, mask("11110111"), &p).is_err());
        power_down(&mut sys, mask("11110111"), &p).unwrap();
        assert!(power_down(&mut sys, mask("11111011"), &p).is_err());
        assert!(power_down(&mut sys, ActiveBankMask::none(8), &p).is_err());
        let r = reconfigure(&mut sys, mask("11111011"), &p).unwrap();
        assert_eq!(r.kind, TransitionKind::Mixed);
        sys.check_placement().unwrap();
    }

    #[test]
    fn shutdown_writes_everything_back() {
        let mut sys = system(Scheme::Crunch);
        fill(&mut sys, true);
        let dirty = sys.cache().dirty_line_count() as u64;
        let r = shutdown_all(&mut sys, &TransitionPolicy::default()).unwrap();
        assert_eq!(r.lines_written_back, dirty);
        assert_eq!(sys.cache().valid_lines(), 0);
        assert!(sys.mask().is_empty());
        assert_eq!(sys.read(64).unwrap(), 2);
        let r = power_up(&mut sys, ActiveBankMask::all(8), &TransitionPolicy::default()).unwrap();
        assert_eq!(r.rows_walked, 0);
        sys.check_placement().unwrap();
    }

    #[test]
    fn energy_is_linear() {
        let mut sys = system(Scheme::Crunch);
        let e = TransitionEnergy { row_read_nj: 1.0, line_migrate_nj: 2.0, line_writeback_nj: 3.0 };
        let p = TransitionPolicy { energy: e, ..TransitionPolicy::default() };
        let mut r = power_down(&mut sys, mask("11110111"), &p).unwrap();
        assert_eq!(transition_energy(&r, &e), 0.0);
        r.rows_walked = 1;
        r.lines_migrated = 2;
        r.lines_written_back = 3;
        assert_eq!(transition_energy(&r, &e), 1.0 + 4.0 + 9.0);
        r.lines_migrated = 4;
        assert_eq!(transition_energy(&r, &e), 1.0 + 8.0 + 9.0);
    }

    #[test]
    fn report_serializes() {
        let mut sys = system(Scheme::Bfo);
        let r = power_down(&mut sys, mask("11110111"), &TransitionPolicy::default()).unwrap();
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), TransitionReport::CSV_HEADER.split(',').count());
        assert!(row.starts_with("down,bfo,11111111,11110111,hier,migrate,"));
        let text = r.to_text();
        assert!(text.contains("lines_migrated = 0\n"));
    }

    #[test]
    fn policy_keys_round_trip() {
        let mut p = TransitionPolicy::default();
        let q = TransitionPolicy { overlap: 0.25, discovery: Discovery::FullWalk, ..p };
        for (k, v) in q.to_pairs() {
            assert!(p.set(&k, &v).unwrap());
        }
        assert_eq!(p.overlap, 0.25);
        assert_eq!(p.discovery, Discovery::FullWalk);
        assert!(!p.set("geometry.channels", "1").unwrap());
        assert!(p.set("transition.handling", "sideways").is_err());
    }
}
