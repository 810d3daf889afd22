//! Trace-driven experiments.
//!
//! Requests issue one every `issue_interval` cycles. Each is mapped to its
//! bank, waits behind earlier requests to the same bank (FIFO), and holds
//! the bank for a closed-page access (tRCD + tCAS + tRP). Misses add a fixed
//! off-chip penalty. During a transition the cache serves nothing and the
//! request stream stalls until it completes.
//!
//! Metrics cover requests after a warmup prefix. Power is computed from the
//! activity rates measured over that window: every access costs one
//! activate and one read; write requests and fills add one write. Off-chip
//! traffic is one read per fill and one write per dirty writeback.

use crate::analytic::ModelInputs;
use crate::error::{Error, Result};
use crate::geometry::CacheGeometry;
use crate::kv;
use crate::power::{cache_power, memory_system_power, ActivityRates, MemorySystemPower, PowerBreakdown, PowerModel};
use crate::remap::{ActiveBankMask, Remapper, PAPER_PATTERNS};
use crate::cache::Request;
use crate::system::CacheSystem;
use crate::transition::{reconfigure, TransitionPolicy, TransitionReport};
use crate::workload::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams {
    pub cache_tcas: u64,
    pub cache_trcd: u64,
    pub cache_trp: u64,
    pub offchip_tcas: u64,
    pub offchip_trcd: u64,
    pub offchip_trp: u64,
    /// Cache clock period.
    pub cycle_ns: f64,
    pub offchip_cycle_ns: f64,
    /// Cache cycles between request arrivals.
    pub issue_interval: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            cache_tcas: 8,
            cache_trcd: 8,
            cache_trp: 15,
            offchip_tcas: 11,
            offchip_trcd: 11,
            offchip_trp: 11,
            cycle_ns: 1.0,
            offchip_cycle_ns: 1.25,
            issue_interval: 2,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cache_tcas,
            self.cache_trcd,
            self.cache_trp,
            self.offchip_tcas,
            self.offchip_trcd,
            self.offchip_trp,
            self.issue_interval,
        ];
        if all.contains(&0) || !(self.cycle_ns > 0.0) || !(self.offchip_cycle_ns > 0.0) {
            return Err(Error::Model("timing parameters must be positive".into()));
        }
        Ok(())
    }

    /// Closed-page bank occupancy per access.
    pub fn service_cycles(&self) -> u64 {
        self.cache_trcd + self.cache_tcas + self.cache_trp
    }

    /// Off-chip access time in cache cycles, rounded to nearest.
    pub fn miss_penalty_cycles(&self) -> u64 {
        let ns = (self.offchip_trcd + self.offchip_tcas + self.offchip_trp) as f64 * self.offchip_cycle_ns;
        (ns / self.cycle_ns).round() as u64
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("timing.cache_tcas", self.cache_tcas.to_string()),
            ("timing.cache_trcd", self.cache_trcd.to_string()),
            ("timing.cache_trp", self.cache_trp.to_string()),
            ("timing.offchip_tcas", self.offchip_tcas.to_string()),
            ("timing.offchip_trcd", self.offchip_trcd.to_string()),
            ("timing.offchip_trp", self.offchip_trp.to_string()),
            ("timing.cycle_ns", self.cycle_ns.to_string()),
            ("timing.offchip_cycle_ns", self.offchip_cycle_ns.to_string()),
            ("timing.issue_interval", self.issue_interval.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "timing.cache_tcas" => self.cache_tcas = kv::parse_value(key, value)?,
            "timing.cache_trcd" => self.cache_trcd = kv::parse_value(key, value)?,
            "timing.cache_trp" => self.cache_trp = kv::parse_value(key, value)?,
            "timing.offchip_tcas" => self.offchip_tcas = kv::parse_value(key, value)?,
            "timing.offchip_trcd" => self.offchip_trcd = kv::parse_value(key, value)?,
            "timing.offchip_trp" => self.offchip_trp = kv::parse_value(key, value)?,
            "timing.cycle_ns" => self.cycle_ns = kv::parse_value(key, value)?,
            "timing.offchip_cycle_ns" => self.offchip_cycle_ns = kv::parse_value(key, value)?,
            "timing.issue_interval" => self.issue_interval = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Everything a simulation needs besides the trace, scheme and masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub geometry: CacheGeometry,
    pub timing: TimingParams,
    pub power: PowerModel,
    /// Fraction of the trace excluded from steady metrics.
    pub warmup_fraction: f64,
    /// Requests per sample of the serviced-request series.
    pub sample_window: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            geometry: CacheGeometry::default(),
            timing: TimingParams::default(),
            power: PowerModel::default(),
            warmup_fraction: 0.15,
            sample_window: 10_000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.timing.validate()?;
        self.power.validate()?;
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Model(format!("warmup fraction {} outside [0, 1)", self.warmup_fraction)));
        }
        if self.sample_window == 0 {
            return Err(Error::Model("sample window must be positive".into()));
        }
        Ok(())
    }

    pub fn warmup_for(&self, requests: usize) -> usize {
        (requests as f64 * self.warmup_fraction).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyMetrics {
    pub requests: u64,
    pub hits: u64,
    pub hit_rate: f64,
    /// Indexed by bank, summed over channels.
    pub per_bank_accesses: Vec<u64>,
    /// Max over min of `per_bank_accesses` across active banks; infinite when an active bank saw nothing.
    pub imbalance_ratio: f64,
    pub avg_latency_cycles: f64,
    /// Requests per cycle over the measured window.
    pub throughput: f64,
    pub window_cycles: u64,
    pub offchip_reads: u64,
    pub offchip_writes: u64,
    pub cache_activity: ActivityRates,
    pub offchip_activity: ActivityRates,
    pub power: PowerBreakdown,
    pub system_power: MemorySystemPower,
}

impl SteadyMetrics {
    pub const CSV_HEADER: &'static str = "requests,hits,hit_rate,imbalance_ratio,avg_latency_cycles,throughput,window_cycles,offchip_reads,offchip_writes,cache_activates_per_s,cache_reads_per_s,cache_writes_per_s,offchip_activates_per_s,offchip_reads_per_s,offchip_writes_per_s,cache_mw,offchip_mw,total_mw,per_bank_accesses";

    pub fn csv_fields(&self) -> String {
        let banks: Vec<String> = self.per_bank_accesses.iter().map(u64::to_string).collect();
        format!(
            "{},{},{:.6},{:.6},{:.4},{:.6},{},{},{},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1},{:.4},{:.4},{:.4},{}",
            self.requests,
            self.hits,
            self.hit_rate,
            self.imbalance_ratio,
            self.avg_latency_cycles,
            self.throughput,
            self.window_cycles,
            self.offchip_reads,
            self.offchip_writes,
            self.cache_activity.activates_per_s,
            self.cache_activity.reads_per_s,
            self.cache_activity.writes_per_s,
            self.offchip_activity.activates_per_s,
            self.offchip_activity.reads_per_s,
            self.offchip_activity.writes_per_s,
            self.system_power.cache_mw,
            self.system_power.offchip_mw,
            self.system_power.total_mw,
            banks.join(";")
        )
    }
}

/// Max over min across the active banks.
pub fn imbalance_ratio(per_bank: &[u64], mask: &ActiveBankMask) -> f64 {
    let active: Vec<u64> = mask.active().map(|b| per_bank[b]).collect();
    let max = active.iter().copied().max().unwrap_or(0);
    let min = active.iter().copied().min().unwrap_or(0);
    if min == 0 { f64::INFINITY } else { max as f64 / min as f64 }
}

#[derive(Debug, Clone, Default)]
struct Window {
    requests: u64,
    hits: u64,
    per_bank: Vec<u64>,
    latency_sum: u64,
    first_arrival: Option<u64>,
    last_finish: u64,
    writes: u64,
    read_misses: u64,
    writebacks: u64,
}

impl Window {
    fn new(banks: usize) -> Self {
        Self { per_bank: vec![0; banks], ..Default::default() }
    }

    fn record(&mut self, s: &Served) {
        self.requests += 1;
        self.hits += s.hit as u64;
        self.per_bank[s.bank] += 1;
        self.latency_sum += s.finish - s.arrival;
        self.first_arrival.get_or_insert(s.arrival);
        self.last_finish = self.last_finish.max(s.finish);
        self.writes += s.write as u64;
        self.read_misses += (!s.hit && !s.write) as u64;
        self.writebacks += s.wrote_back as u64;
    }

    fn metrics(&self, mask: &ActiveBankMask, cfg: &EngineConfig) -> Result<SteadyMetrics> {
        if self.requests == 0 {
            return Err(Error::EmptyTrace);
        }
        let cycles = (self.last_finish - self.first_arrival.unwrap_or(0)).max(1);
        let seconds = cycles as f64 * cfg.timing.cycle_ns * 1e-9;
        let n = self.requests as f64;
        let cache_activity = ActivityRates {
            activates_per_s: n / seconds,
            reads_per_s: n / seconds,
            writes_per_s: (self.writes + self.read_misses) as f64 / seconds,
        };
        let offchip_activity = ActivityRates {
            activates_per_s: (self.read_misses + self.writebacks) as f64 / seconds,
            reads_per_s: self.read_misses as f64 / seconds,
            writes_per_s: self.writebacks as f64 / seconds,
        };
        let power = cache_power(&cfg.power, mask.count(), &cache_activity)?;
        let system_power = memory_system_power(&cfg.power, &power, &offchip_activity)?;
        Ok(SteadyMetrics {
            requests: self.requests,
            hits: self.hits,
            hit_rate: self.hits as f64 / n,
            per_bank_accesses: self.per_bank.clone(),
            imbalance_ratio: imbalance_ratio(&self.per_bank, mask),
            avg_latency_cycles: self.latency_sum as f64 / n,
            throughput: n / cycles as f64,
            window_cycles: cycles,
            offchip_reads: self.read_misses,
            offchip_writes: self.writebacks,
            cache_activity,
            offchip_activity,
            power,
            system_power,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Served {
    arrival: u64,
    finish: u64,
    bank: usize,
    hit: bool,
    write: bool,
    wrote_back: bool,
}

/// A cache system plus bank queues and a clock.
#[derive(Debug, Clone)]
pub struct Simulator {
    sys: CacheSystem,
    cfg: EngineConfig,
    free_at: Vec<u64>,
    next_arrival: u64,
    issued: u64,
}

impl Simulator {
    pub fn new(cfg: EngineConfig, remapper: Remapper, mask: ActiveBankMask) -> Result<Self> {
        cfg.validate()?;
        if mask.is_empty() {
            return Err(Error::NoActiveBanks);
        }
        let sys = CacheSystem::new(cfg.geometry, remapper, mask)?;
        Ok(Self { sys, cfg, free_at: vec![0; cfg.geometry.total_banks()], next_arrival: 0, issued: 0 })
    }

    pub fn system(&self) -> &CacheSystem {
        &self.sys
    }

    pub fn now(&self) -> u64 {
        self.next_arrival
    }

    fn serve(&mut self, rec: &TraceRecord) -> Result<Served> {
        let arrival = self.next_arrival;
        self.next_arrival += self.cfg.timing.issue_interval;
        self.issued += 1;
        let write = rec.is_write();
        let req = if write { Request::Write(self.issued) } else { Request::Read };
        let out = self.sys.access(rec.line_address, req)?;
        let bank = out.bank.ok_or(Error::NoActiveBanks)?;
        let q = out.channel * self.cfg.geometry.banks_per_channel + bank;
        let start = arrival.max(self.free_at[q]);
        self.free_at[q] = start + self.cfg.timing.service_cycles();
        let mut finish = self.free_at[q];
        if !out.hit {
            finish += self.cfg.timing.miss_penalty_cycles();
        }
        Ok(Served { arrival, finish, bank, hit: out.hit, write, wrote_back: out.wrote_back })
    }

    /// Drain the queues, then reconfigure while the cache is blocked.
    pub fn transition(&mut self, after: ActiveBankMask, policy: &TransitionPolicy) -> Result<TransitionReport> {
        let start = self.free_at.iter().copied().max().unwrap_or(0).max(self.next_arrival);
        let report = reconfigure(&mut self.sys, after, policy)?;
        let end = start + report.latency_cycles;
        self.free_at.iter_mut().for_each(|f| *f = end);
        self.next_arrival = end;
        Ok(report)
    }
}

/// Steady-state run; the first `warmup` requests are excluded from metrics.
pub fn run_steady(
    trace: &[TraceRecord],
    cfg: &EngineConfig,
    remapper: &Remapper,
    mask: ActiveBankMask,
    warmup: usize,
) -> Result<SteadyMetrics> {
    let mut sim = Simulator::new(*cfg, remapper.clone(), mask)?;
    let mut w = Window::new(cfg.geometry.banks_per_channel);
    for (i, rec) in trace.iter().enumerate() {
        let s = sim.serve(rec)?;
        if i >= warmup {
            w.record(&s);
        }
    }
    w.metrics(&mask, cfg)
}

/// One point of the serviced-request series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub start_cycle: u64,
    pub end_cycle: u64,
    pub requests: u64,
    pub hits: u64,
    pub after_transition: bool,
}

impl Sample {
    pub const CSV_HEADER: &'static str = "index,start_cycle,end_cycle,requests,hits,after_transition";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.index, self.start_cycle, self.end_cycle, self.requests, self.hits, self.after_transition as u8
        )
    }

    pub fn hit_rate(&self) -> f64 {
        self.hits as f64 / self.requests.max(1) as f64
    }

    /// Requests serviced per 1000 cycles.
    pub fn rate(&self) -> f64 {
        self.requests as f64 * 1000.0 / (self.end_cycle - self.start_cycle).max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionExperiment {
    pub report: TransitionReport,
    /// Warm phase after its own warmup prefix.
    pub before: SteadyMetrics,
    pub after: SteadyMetrics,
    pub samples: Vec<Sample>,
}

/// Warm under `before` for `warmup_requests`, transition to `after`, then run
/// the rest of the trace.
pub fn run_transition_experiment(
    trace: &[TraceRecord],
    cfg: &EngineConfig,
    remapper: &Remapper,
    before: ActiveBankMask,
    after: ActiveBankMask,
    policy: &TransitionPolicy,
    warmup_requests: usize,
) -> Result<TransitionExperiment> {
    if warmup_requests >= trace.len() {
        return Err(Error::EmptyTrace);
    }
    let mut sim = Simulator::new(*cfg, remapper.clone(), before)?;
    let banks = cfg.geometry.banks_per_channel;
    let (mut pre, mut post) = (Window::new(banks), Window::new(banks));
    let pre_skip = cfg.warmup_for(warmup_requests);
    let mut samples = Vec::new();
    let mut cur = Window::new(banks);
    let flush = |cur: &mut Window, after_transition: bool, samples: &mut Vec<Sample>| {
        if cur.requests > 0 {
            samples.push(Sample {
                index: samples.len(),
                start_cycle: cur.first_arrival.unwrap_or(0),
                end_cycle: cur.last_finish,
                requests: cur.requests,
                hits: cur.hits,
                after_transition,
            });
        }
        *cur = Window::new(banks);
    };

    for (i, rec) in trace[..warmup_requests].iter().enumerate() {
        let s = sim.serve(rec)?;
        if i >= pre_skip {
            pre.record(&s);
        }
        cur.record(&s);
        if cur.requests == cfg.sample_window {
            flush(&mut cur, false, &mut samples);
        }
    }
    flush(&mut cur, false, &mut samples);
    let report = sim.transition(after, policy)?;
    for rec in &trace[warmup_requests..] {
        let s = sim.serve(rec)?;
        post.record(&s);
        cur.record(&s);
        if cur.requests == cfg.sample_window {
            flush(&mut cur, true, &mut samples);
        }
    }
    flush(&mut cur, true, &mut samples);
    Ok(TransitionExperiment {
        report,
        before: pre.metrics(&before, cfg)?,
        after: post.metrics(&after, cfg)?,
        samples,
    })
}

/// Balanced patterns for 1..=7 banks down, the all-on mask, and the
/// sequential patterns `00011111`-style for the same counts.
pub fn sweep_patterns(include_sequential: bool) -> Vec<ActiveBankMask> {
    let mut v = vec![ActiveBankMask::all(8)];
    v.extend(PAPER_PATTERNS.iter().map(|p| p.parse::<ActiveBankMask>().expect("valid pattern")));
    if include_sequential {
        v.extend((1..8).map(|down| ActiveBankMask::sequential_down(8, down)));
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownUp {
    pub down: TransitionReport,
    pub up: TransitionReport,
}

/// Warm with `full`, power down to `reduced`, run the middle part of the
/// trace, power back up. The trace is split into thirds.
pub fn run_down_up(
    trace: &[TraceRecord],
    cfg: &EngineConfig,
    remapper: &Remapper,
    full: ActiveBankMask,
    reduced: ActiveBankMask,
    policy: &TransitionPolicy,
) -> Result<DownUp> {
    let mut sim = Simulator::new(*cfg, remapper.clone(), full)?;
    let third = trace.len() / 3;
    for rec in &trace[..third] {
        sim.serve(rec)?;
    }
    let down = sim.transition(reduced, policy)?;
    for rec in &trace[third..2 * third] {
        sim.serve(rec)?;
    }
    let up = sim.transition(full, policy)?;
    Ok(DownUp { down, up })
}

/// Measure every input of the closed-form model on one trace: steady runs
/// with all banks and with the balanced `b`-bank pattern give the IPC proxies
/// and powers, a down/up cycle gives the transition costs.
///
/// The IPC proxy converts request throughput to instructions with
/// `requests_per_kilo_instruction`.
pub fn measure_model_inputs(
    trace: &[TraceRecord],
    cfg: &EngineConfig,
    remapper: &Remapper,
    b: usize,
    policy: &TransitionPolicy,
    n_millions: f64,
    requests_per_kilo_instruction: f64,
) -> Result<ModelInputs> {
    let banks = cfg.geometry.banks_per_channel;
    let full = ActiveBankMask::all(banks);
    let reduced = ActiveBankMask::paper_pattern(b)
        .filter(|m| m.banks() == banks)
        .ok_or_else(|| Error::Model(format!("no balanced pattern with {b} of {banks} banks")))?;
    let warmup = cfg.warmup_for(trace.len());
    let hi = run_steady(trace, cfg, remapper, full, warmup)?;
    let lo = run_steady(trace, cfg, remapper, reduced, warmup)?;
    let du = run_down_up(trace, cfg, remapper, full, reduced, policy)?;
    let ipc = |m: &SteadyMetrics| m.throughput * 1000.0 / requests_per_kilo_instruction;
    let inputs = ModelInputs {
        n_millions,
        b,
        ipc8: ipc(&hi),
        ipc_b: ipc(&lo),
        t_up: du.up.latency_cycles as f64,
        t_down: du.down.latency_cycles as f64,
        tpmi: 0.0,
        p8_mw: hi.system_power.total_mw,
        pb_mw: lo.system_power.total_mw,
        e_up_nj: du.up.energy_nj,
        e_down_nj: du.down.energy_nj,
        ns_per_cycle: cfg.timing.cycle_ns,
    };
    inputs.validate()?;
    Ok(inputs)
}
