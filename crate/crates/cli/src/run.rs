//! Experiment commands. Each renders its primary output as text so that
//! reruns can be compared byte for byte.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context};
use rayon::prelude::*;

use crunch_core::analytic::{sweep_csv, tpmi_sweep};
use crunch_core::bup::{run_bup, BupDecision};
use crunch_core::engine::{
    measure_model_inputs, run_steady, run_transition_experiment, sweep_patterns, Sample, SteadyMetrics,
};
use crunch_core::power::{cache_power, memory_system_power, ActivityRates, PowerBreakdown};
use crunch_core::remap::{crunch_region_counts, ActiveBankMask, Scheme, PAPER_PATTERNS};
use crunch_core::rrt::RegionRemapTable;
use crunch_core::transition::TransitionReport;

use crate::config::{RunConfig, UsageError};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    RrtGen,
    Steady,
    Transition { up: bool, samples: Option<PathBuf>, phases: Option<PathBuf> },
    SweepPatterns,
    SweepBanks,
    SweepTpmi,
    PowerReport,
    BupRun,
}

impl Command {
    /// Name recorded in manifests.
    pub fn name(&self) -> &'static str {
        match self {
            Command::RrtGen => "rrt gen",
            Command::Steady => "steady",
            Command::Transition { up: false, .. } => "transition down",
            Command::Transition { up: true, .. } => "transition up",
            Command::SweepPatterns => "sweep patterns",
            Command::SweepBanks => "sweep banks",
            Command::SweepTpmi => "sweep tpmi",
            Command::PowerReport => "power report",
            Command::BupRun => "bup run",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.split_whitespace().collect::<Vec<_>>().join(" ").as_str() {
            "rrt gen" => Command::RrtGen,
            "steady" => Command::Steady,
            "transition down" => Command::Transition { up: false, samples: None, phases: None },
            "transition up" => Command::Transition { up: true, samples: None, phases: None },
            "sweep patterns" => Command::SweepPatterns,
            "sweep banks" => Command::SweepBanks,
            "sweep tpmi" => Command::SweepTpmi,
            "power report" => Command::PowerReport,
            "bup run" => Command::BupRun,
            _ => return None,
        })
    }
}

pub fn execute(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<String> {
    match cmd {
        Command::RrtGen => Ok(cfg.rrt()?.to_string()),
        Command::Steady => steady(cfg),
        Command::Transition { up, samples, phases } => transition(cfg, *up, samples.as_ref(), phases.as_ref()),
        Command::SweepPatterns => {
            let mut masks = sweep_patterns(cfg.sweep_sequential);
            masks.retain(|m| m.banks() == cfg.geometry.banks_per_channel);
            mask_sweep(cfg, &masks)
        }
        Command::SweepBanks => {
            let masks: Vec<ActiveBankMask> =
                (1..=8).rev().filter_map(ActiveBankMask::paper_pattern).collect();
            if cfg.geometry.banks_per_channel != 8 {
                bail!("sweep banks uses the 8-bank balanced patterns");
            }
            mask_sweep(cfg, &masks)
        }
        Command::SweepTpmi => sweep_tpmi(cfg),
        Command::PowerReport => power_report(cfg),
        Command::BupRun => bup(cfg),
    }
}

const STEADY_PREFIX: &str = "scheme,pattern,active_banks";

fn steady_row(scheme: Scheme, mask: &ActiveBankMask, m: &SteadyMetrics) -> String {
    format!("{scheme},{mask},{},{}\n", mask.count(), m.csv_fields())
}

fn steady_header() -> String {
    format!("{STEADY_PREFIX},{}\n", SteadyMetrics::CSV_HEADER)
}

fn steady(cfg: &RunConfig) -> anyhow::Result<String> {
    let trace = cfg.load_trace()?;
    let engine = cfg.engine();
    let m = run_steady(&trace, &engine, &cfg.remapper(cfg.scheme)?, cfg.pattern, engine.warmup_for(trace.len()))?;
    Ok(steady_header() + &steady_row(cfg.scheme, &cfg.pattern, &m))
}

fn mask_sweep(cfg: &RunConfig, masks: &[ActiveBankMask]) -> anyhow::Result<String> {
    let trace = cfg.load_trace()?;
    let engine = cfg.engine();
    let warmup = engine.warmup_for(trace.len());
    let remappers = cfg
        .sweep_schemes
        .iter()
        .map(|&s| Ok((s, cfg.remapper(s)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cells: Vec<(usize, ActiveBankMask)> =
        (0..remappers.len()).flat_map(|i| masks.iter().map(move |&m| (i, m))).collect();
    let rows = cells
        .par_iter()
        .map(|&(i, m)| {
            let (scheme, r) = &remappers[i];
            run_steady(&trace, &engine, r, m, warmup).map(|x| steady_row(*scheme, &m, &x))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(steady_header() + &rows.concat())
}

fn transition(
    cfg: &RunConfig,
    up: bool,
    samples: Option<&PathBuf>,
    phases: Option<&PathBuf>,
) -> anyhow::Result<String> {
    let (before, after) = (cfg.before, cfg.after);
    if up && !before.is_subset_of(&after) {
        return Err(UsageError(format!("transition up needs before {before} to be a subset of after {after}")).into());
    }
    if !up && !after.is_subset_of(&before) {
        return Err(UsageError(format!("transition down needs after {after} to be a subset of before {before}")).into());
    }
    let trace = cfg.load_trace()?;
    let split = (trace.len() as f64 * cfg.split).floor() as usize;
    let x = run_transition_experiment(
        &trace,
        &cfg.engine(),
        &cfg.remapper(cfg.scheme)?,
        before,
        after,
        &cfg.policy,
        split,
    )?;
    if let Some(p) = samples {
        let mut s = format!("{}\n", Sample::CSV_HEADER);
        for sample in &x.samples {
            s.push_str(&sample.csv_row());
            s.push('\n');
        }
        std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = phases {
        let s = format!(
            "phase,{}before,{}after,{}",
            steady_header(),
            steady_row(cfg.scheme, &before, &x.before),
            steady_row(cfg.scheme, &after, &x.after),
        );
        std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(format!("{}\n{}\n", TransitionReport::CSV_HEADER, x.report.csv_row()))
}

fn sweep_tpmi(cfg: &RunConfig) -> anyhow::Result<String> {
    let trace = cfg.load_trace()?;
    let engine = cfg.engine();
    let inputs = cfg
        .sweep_schemes
        .par_iter()
        .map(|&s| {
            let r = cfg.remapper(s)?;
            let m = measure_model_inputs(&trace, &engine, &r, cfg.model_b, &cfg.policy, cfg.model_n_millions, cfg.model_rpki)?;
            Ok((s.to_string(), m))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(sweep_csv(&tpmi_sweep(&inputs, &cfg.model_tpmi)?))
}

const POWER_HEADER: &str =
    "source,active_banks,background_mw,refresh_mw,activate_mw,read_write_mw,cache_mw,offchip_mw,total_mw,background_share";

fn power_row(cfg: &RunConfig, source: &str, banks: usize, cache: &ActivityRates, off: &ActivityRates) -> anyhow::Result<String> {
    let c: PowerBreakdown = cache_power(&cfg.power, banks, cache)?;
    let s = memory_system_power(&cfg.power, &c, off)?;
    Ok(format!(
        "{source},{banks},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
        c.background_mw,
        c.refresh_mw,
        c.activate_mw,
        c.read_write_mw,
        c.total_mw,
        s.offchip_mw,
        s.total_mw,
        c.background_share()
    ))
}

/// Recompute power from the activity columns of a metrics CSV, or, with no
/// metrics file, tabulate every bank count at reference and idle traffic.
fn power_report(cfg: &RunConfig) -> anyhow::Result<String> {
    let mut out = format!("{POWER_HEADER}\n");
    let Some(path) = &cfg.metrics else {
        for banks in (1..=cfg.power.cache.banks).rev() {
            out += &power_row(cfg, "reference", banks, &ActivityRates::reference(), &ActivityRates::IDLE)?;
        }
        for banks in (1..=cfg.power.cache.banks).rev() {
            out += &power_row(cfg, "idle", banks, &ActivityRates::IDLE, &ActivityRates::IDLE)?;
        }
        return Ok(out);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("metrics file is empty")?.split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).with_context(|| format!("metrics file has no {name} column"))
    };
    let banks_col = col("active_banks")?;
    let act = [
        col("cache_activates_per_s")?,
        col("cache_reads_per_s")?,
        col("cache_writes_per_s")?,
        col("offchip_activates_per_s")?,
        col("offchip_reads_per_s")?,
        col("offchip_writes_per_s")?,
    ];
    let source_col = header.iter().position(|h| *h == "pattern");
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            bail!("metrics row {} has {} fields, header has {}", n + 2, f.len(), header.len());
        }
        let num = |i: usize| f[i].parse::<f64>().with_context(|| format!("metrics row {}: {:?}", n + 2, f[i]));
        let banks: usize = f[banks_col].parse().with_context(|| format!("metrics row {}: active_banks", n + 2))?;
        let cache = ActivityRates { activates_per_s: num(act[0])?, reads_per_s: num(act[1])?, writes_per_s: num(act[2])? };
        let off = ActivityRates { activates_per_s: num(act[3])?, reads_per_s: num(act[4])?, writes_per_s: num(act[5])? };
        let source = source_col.map_or_else(|| format!("row{}", n + 1), |i| f[i].to_string());
        out += &power_row(cfg, &source, banks, &cache, &off)?;
    }
    Ok(out)
}

fn bup(cfg: &RunConfig) -> anyhow::Result<String> {
    let trace = cfg.load_trace()?;
    let decisions = run_bup(trace, &cfg.geometry, &cfg.bup)?;
    let mut out = format!("{}\n", BupDecision::CSV_HEADER);
    for d in decisions {
        out.push_str(&d.csv_row());
        out.push('\n');
    }
    Ok(out)
}

/// Human-readable summary of a table: rows, size, successor counts and the
/// region share of each bank under the balanced patterns.
pub fn rrt_summary(t: &RegionRemapTable) -> anyhow::Result<String> {
    let mut s = t.to_string();
    let b = t.banks();
    writeln!(s, "\n# {} bits per entry, {} bits, {} bytes", t.bits_per_entry(), t.size_bits(), t.size_bytes())?;
    writeln!(s, "# successor counts (row = bank, column = following bank)")?;
    let m = t.successor_counts();
    for i in 0..b {
        let cells: Vec<String> = (0..b).map(|j| if i == j { "-".into() } else { m[i * b + j].to_string() }).collect();
        writeln!(s, "#   {i}: {}", cells.join(" "))?;
    }
    if b == 8 {
        writeln!(s, "# regions owned per bank")?;
        for p in std::iter::once("11111111").chain(PAPER_PATTERNS) {
            let mask: ActiveBankMask = p.parse()?;
            let counts = crunch_region_counts(t, &mask)?;
            let cells: Vec<String> = counts.iter().map(usize::to_string).collect();
            writeln!(s, "#   {p}: {}", cells.join(" "))?;
        }
    }
    Ok(s)
}
