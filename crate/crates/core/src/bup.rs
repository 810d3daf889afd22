//! Bank utility predictor.
//!
//! A sampled LRU stack-distance monitor watches a handful of cache sets with
//! a shadow tag directory as associative as the full cache. At the end of an
//! epoch the hit histogram gives the miss count for every smaller
//! associativity; the smallest associativity whose misses stay within a slack
//! of the full-cache misses is scaled to a bank count. Epochs with very low
//! memory intensity switch the whole cache off.

use crate::error::{Error, Result};
use crate::geometry::CacheGeometry;
use crate::kv;
use crate::workload::TraceRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMonitor {
    sampled_sets: usize,
    ways: usize,
    stride: u64,
    /// Shadow tags per sampled set, MRU first.
    shadow: Vec<Vec<u64>>,
    /// `hit_counters[i]` counts hits at stack position `i + 1`.
    pub hit_counters: Vec<u64>,
    pub access_count: u64,
    pub miss_count: u64,
}

impl UtilityMonitor {
    /// Monitor `sampled_sets` sets, one every `stride` set indices.
    pub fn new(sampled_sets: usize, ways: usize, stride: u64) -> Result<Self> {
        if sampled_sets == 0 || ways == 0 || stride == 0 {
            return Err(Error::Model("monitor needs sampled sets, ways and stride > 0".into()));
        }
        Ok(Self {
            sampled_sets,
            ways,
            stride,
            shadow: vec![Vec::with_capacity(ways); sampled_sets],
            hit_counters: vec![0; ways],
            access_count: 0,
            miss_count: 0,
        })
    }

    /// Spread `sampled_sets` samples evenly over all sets of `geometry`.
    pub fn for_geometry(geometry: &CacheGeometry, sampled_sets: usize, ways: usize) -> Result<Self> {
        let sets = geometry.total_banks() as u64 * geometry.rows_per_bank as u64;
        Self::new(sampled_sets, ways, (sets / sampled_sets.max(1) as u64).max(1))
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn sampled_sets(&self) -> usize {
        self.sampled_sets
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    pub fn is_sampled(&self, set_index: u64) -> bool {
        set_index % self.stride == 0
    }

    /// Record one access; ignored unless `set_index` is sampled.
    pub fn observe(&mut self, set_index: u64, tag: u64) {
        if !self.is_sampled(set_index) {
            return;
        }
        let s = ((set_index / self.stride) % self.sampled_sets as u64) as usize;
        self.access_count += 1;
        let stack = &mut self.shadow[s];
        match stack.iter().position(|&t| t == tag) {
            Some(pos) => {
                self.hit_counters[pos] += 1;
                stack[..=pos].rotate_right(1);
            }
            None => {
                self.miss_count += 1;
                if stack.len() == self.ways {
                    stack.pop();
                }
                stack.insert(0, tag);
            }
        }
    }

    /// Misses an LRU cache of `w` ways would have taken on the sampled sets.
    pub fn misses(&self, w: usize) -> u64 {
        let hits: u64 = self.hit_counters.iter().take(w).sum();
        self.access_count - hits
    }

    /// Clear the counters, keeping the shadow tags warm.
    pub fn reset_counters(&mut self) {
        self.hit_counters.iter_mut().for_each(|c| *c = 0);
        self.access_count = 0;
        self.miss_count = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BupParams {
    pub sampled_sets: usize,
    pub ways: usize,
    pub banks: usize,
    /// Allowed growth of the miss count over the full-cache miss count.
    pub miss_slack: f64,
    pub mpki_threshold: f64,
    pub epoch_requests: u64,
    /// Instruction proxy when the trace has no instruction counts:
    /// `requests * 1000 / requests_per_kilo_instruction`.
    pub requests_per_kilo_instruction: f64,
}

impl Default for BupParams {
    fn default() -> Self {
        Self {
            sampled_sets: 32,
            ways: 32,
            banks: 8,
            miss_slack: 0.05,
            mpki_threshold: 5.0,
            epoch_requests: 1_000_000,
            requests_per_kilo_instruction: 20.0,
        }
    }
}

impl BupParams {
    pub fn validate(&self) -> Result<()> {
        if self.sampled_sets == 0 || self.ways == 0 || self.banks == 0 || self.epoch_requests == 0 {
            return Err(Error::Model("bup sizes and epoch length must be positive".into()));
        }
        if !(self.miss_slack >= 0.0) || !(self.mpki_threshold >= 0.0) || !(self.requests_per_kilo_instruction > 0.0) {
            return Err(Error::Model("bup slack and threshold must be >= 0, request rate > 0".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("bup.sampled_sets", self.sampled_sets.to_string()),
            ("bup.ways", self.ways.to_string()),
            ("bup.banks", self.banks.to_string()),
            ("bup.miss_slack", self.miss_slack.to_string()),
            ("bup.mpki_threshold", self.mpki_threshold.to_string()),
            ("bup.epoch_requests", self.epoch_requests.to_string()),
            ("bup.requests_per_kilo_instruction", self.requests_per_kilo_instruction.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "bup.sampled_sets" => self.sampled_sets = kv::parse_value(key, value)?,
            "bup.ways" => self.ways = kv::parse_value(key, value)?,
            "bup.banks" => self.banks = kv::parse_value(key, value)?,
            "bup.miss_slack" => self.miss_slack = kv::parse_value(key, value)?,
            "bup.mpki_threshold" => self.mpki_threshold = kv::parse_value(key, value)?,
            "bup.epoch_requests" => self.epoch_requests = kv::parse_value(key, value)?,
            "bup.requests_per_kilo_instruction" => {
                self.requests_per_kilo_instruction = kv::parse_value(key, value)?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BupDecision {
    pub epoch: usize,
    pub recommended_ways: usize,
    pub recommended_banks: usize,
    pub cache_off: bool,
    /// Requests reaching the cache per thousand instructions.
    pub epoch_mpki: f64,
    /// The monitor saw no sampled access; keep the current configuration.
    pub no_change: bool,
}

impl BupDecision {
    pub const CSV_HEADER: &'static str = "epoch,mpki,w_star,banks,cache_off";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{},{},{}",
            self.epoch,
            self.epoch_mpki,
            self.recommended_ways,
            if self.cache_off { 0 } else { self.recommended_banks },
            self.cache_off as u8
        )
    }
}

/// Banks needed to hold `ways` of `total_ways`, rounded up, at least one.
pub fn banks_for_ways(ways: usize, total_ways: usize, banks: usize) -> usize {
    (ways * banks).div_ceil(total_ways).clamp(1, banks)
}

/// Smallest associativity whose misses stay within `slack` of the full monitor's.
pub fn knee_ways(monitor: &UtilityMonitor, slack: f64) -> usize {
    let full = monitor.misses(monitor.ways()) as f64;
    let limit = full * (1.0 + slack);
    (1..=monitor.ways())
        .find(|&w| monitor.misses(w) as f64 <= limit)
        .unwrap_or(monitor.ways())
}

/// Decide the bank count for the epoch that just ended.
///
/// The shutdown gate uses memory intensity: the requests that reached the
/// cache in the epoch per thousand instructions.
pub fn bup_decide(
    monitor: &UtilityMonitor,
    epoch_requests: u64,
    epoch_instructions: f64,
    params: &BupParams,
) -> Result<BupDecision> {
    if monitor.access_count == 0 {
        return Ok(BupDecision {
            epoch: 0,
            recommended_ways: monitor.ways(),
            recommended_banks: params.banks,
            cache_off: false,
            epoch_mpki: f64::NAN,
            no_change: true,
        });
    }
    if !(epoch_instructions > 0.0) {
        return Err(Error::Model(format!("epoch instruction count {epoch_instructions} must be positive")));
    }
    let epoch_mpki = epoch_requests as f64 * 1000.0 / epoch_instructions;
    let w = knee_ways(monitor, params.miss_slack);
    Ok(BupDecision {
        epoch: 0,
        recommended_ways: w,
        recommended_banks: banks_for_ways(w, monitor.ways(), params.banks),
        cache_off: epoch_mpki < params.mpki_threshold,
        epoch_mpki,
        no_change: false,
    })
}

/// Set index used for sampling: the line address modulo the number of sets.
pub fn sampling_set(geometry: &CacheGeometry, line_address: u64) -> u64 {
    let sets = geometry.total_banks() as u64 * geometry.rows_per_bank as u64;
    (line_address >> geometry.line_bits()) % sets
}

/// Replay a trace through the monitor, one decision per full or final partial epoch.
pub fn run_bup(
    trace: impl IntoIterator<Item = TraceRecord>,
    geometry: &CacheGeometry,
    params: &BupParams,
) -> Result<Vec<BupDecision>> {
    params.validate()?;
    let mut monitor = UtilityMonitor::for_geometry(geometry, params.sampled_sets, params.ways)?;
    let mut out = Vec::new();
    let (mut requests, mut instructions, mut have_instr) = (0u64, 0f64, false);
    let mut close = |monitor: &mut UtilityMonitor, requests: u64, instructions: f64, have_instr: bool| -> Result<()> {
        let instr = if have_instr { instructions } else { requests as f64 * 1000.0 / params.requests_per_kilo_instruction };
        let mut d = bup_decide(monitor, requests, instr, params)?;
        d.epoch = out.len();
        out.push(d);
        monitor.reset_counters();
        Ok(())
    };
    for rec in trace {
        monitor.observe(sampling_set(geometry, rec.line_address), rec.line_address >> geometry.line_bits());
        requests += 1;
        if let Some(d) = rec.instr_delta {
            instructions += d as f64;
            have_instr = true;
        }
        if requests == params.epoch_requests {
            close(&mut monitor, requests, instructions, have_instr)?;
            (requests, instructions, have_instr) = (0, 0.0, false);
        }
    }
    if requests > 0 {
        close(&mut monitor, requests, instructions, have_instr)?;
    }
    Ok(out)
}
