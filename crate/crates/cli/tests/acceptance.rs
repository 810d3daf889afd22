//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Each check computes its expectation independently of the code under test
//! where that is possible (brute-force scans, recounts from raw tables).

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crunch_core::analytic::{execution_time, model_energy, ModelInputs};
use crunch_core::bup::{banks_for_ways, bup_decide, knee_ways, BupParams, UtilityMonitor};
use crunch_core::engine::{measure_model_inputs, run_steady, EngineConfig};
use crunch_core::geometry::CacheGeometry;
use crunch_core::hier::{storage_bits, DirtyRowTree};
use crunch_core::power::{cache_power, ActivityRates, PowerModel};
use crunch_core::remap::{crunch_bank, crunch_region_counts, remap_delta, ActiveBankMask, RegionId, Remapper, Scheme, PAPER_PATTERNS};
use crunch_core::rrt::{RegionRemapTable, DEFAULT_RRT_SEED};
use crunch_core::system::CacheSystem;
use crunch_core::transition::{power_down, power_up, reconfigure, shutdown_all, DirtyHandling, Discovery, TransitionPolicy};
use crunch_core::workload::{generate, SyntheticSpec};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn crunch(args: &[&str], dir: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_crunch"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("crunch {args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn table() -> RegionRemapTable {
    RegionRemapTable::generate(8, 32, DEFAULT_RRT_SEED).expect("default table")
}

fn mask(s: &str) -> ActiveBankMask {
    s.parse().expect("pattern")
}

fn remapper(scheme: Scheme) -> Remapper {
    Remapper::new(scheme, 8, || Ok(table()), Default::default()).expect("remapper")
}

/// Rows from `rrt gen`, checked by recounting the raw text.
fn rrt_structure() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    crunch(&["rrt", "gen", "--banks", "8", "--super-regions", "32", "--out", "t.rrt"], dir.path())?;
    let text = std::fs::read_to_string(dir.path().join("t.rrt")).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<usize>> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    ensure!(rows.len() == 32, "{} rows", rows.len());
    let mut canon = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        let mut sorted = r.clone();
        sorted.sort();
        ensure!(sorted == (0..8).collect::<Vec<_>>(), "row {i} is not a permutation: {r:?}");
        let z = r.iter().position(|&b| b == 0).unwrap();
        let mut c = r.clone();
        c.rotate_left(z);
        ensure!(canon.insert(c), "row {i} is a rotation of an earlier row");
    }
    let bits_per_entry = usize::BITS - 7usize.leading_zeros();
    let bytes = 32 * 8 * bits_per_entry as usize / 8;
    ensure!(bytes == 96, "table is {bytes} bytes");
    let parsed: RegionRemapTable = text.parse().map_err(|e| format!("{e}"))?;
    ensure!(parsed.size_bytes() == 96.0, "size_bytes {}", parsed.size_bytes());
    let mut succ = [[0usize; 8]; 8];
    for r in &rows {
        for i in 0..8 {
            succ[r[i]][r[(i + 1) % 8]] += 1;
        }
    }
    let (mut lo, mut hi) = (usize::MAX, 0);
    for (a, row) in succ.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            if a != b {
                ensure!((4..=5).contains(&n), "bank {b} follows bank {a} {n} times");
                lo = lo.min(n);
                hi = hi.max(n);
            }
        }
    }
    Ok(format!("32 distinct rotation classes, 96 bytes, successor counts {lo}..={hi}"))
}

fn hier_sizing() -> Check {
    let bits = storage_bits(2048, 16);
    ensure!(bits == 2772, "storage_bits(2048, 16) = {bits}");
    let kb = 32.0 * bits as f64 / 8.0 / 1024.0;
    ensure!((kb * 10.0).round() / 10.0 == 10.8, "32 banks need {kb:.3} KB");
    Ok(format!("{bits} bits per bank ({} bytes), {kb:.2} KB for 32 banks", bits as f64 / 8.0))
}

fn hier_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sparse = 0;
    let mut sparse = 0;
    for config in 0..1000 {
        let mut t = DirtyRowTree::new(2048, 16).map_err(|e| e.to_string())?;
        let mut truth = vec![false; 2048];
        let count = if config % 2 == 0 { rng.gen_range(0..=20) } else { rng.gen_range(0..=2048) };
        for _ in 0..count {
            let r = rng.gen_range(0..2048);
            truth[r] = true;
            t.set(r, true).map_err(|e| e.to_string())?;
        }
        // some clears exercise decrements
        for _ in 0..rng.gen_range(0..5) {
            let r = rng.gen_range(0..2048);
            truth[r] = false;
            t.set(r, false).map_err(|e| e.to_string())?;
        }
        let brute: Vec<usize> = (0..2048).filter(|&r| truth[r]).collect();
        let walk = t.enumerate();
        ensure!(walk.rows == brute, "config {config}: enumeration differs from leaf scan");
        if brute.len() <= 20 {
            sparse += 1;
            worst_sparse = worst_sparse.max(walk.nodes_visited);
            ensure!(walk.nodes_visited <= 20 * 3 * 16 + 16, "config {config}: {} nodes for {} dirty rows", walk.nodes_visited, brute.len());
        }
    }
    Ok(format!("1000 configurations exact; {sparse} with <=20 dirty rows, max {worst_sparse} nodes (bound 976)"))
}

fn minimal_remapping() -> Check {
    let t = table();
    let r = remapper(Scheme::Crunch);
    let all = ActiveBankMask::all(8);
    for p in PAPER_PATTERNS {
        let after = mask(p);
        let d = remap_delta(&r, &all, &after).map_err(|e| e.to_string())?;
        let oracle: Vec<usize> = (0..256)
            .filter(|&i| !after.is_active(t.permutation(i / 8)[i % 8] as usize))
            .collect();
        ensure!(d.changed == oracle, "pattern {p}: delta differs from newly-down regions");
    }
    let mut pairs = 0;
    for before_bits in 1u32..256 {
        let before = ActiveBankMask::from_bits(before_bits, 8).unwrap();
        // every nonempty subset of `before`
        let mut sub = before_bits;
        while sub > 0 {
            let after = ActiveBankMask::from_bits(sub, 8).unwrap();
            let d = remap_delta(&r, &before, &after).map_err(|e| e.to_string())?;
            let oracle: Vec<usize> = (0..256)
                .filter(|&i| {
                    let b = crunch_bank(RegionId::from_index(i, 8), &t, &before).unwrap();
                    !after.is_active(b)
                })
                .collect();
            ensure!(d.changed == oracle, "{before} -> {after}: delta differs from oracle");
            pairs += 1;
            sub = (sub - 1) & before_bits;
        }
    }
    Ok(format!("7 patterns exact; {pairs} (before, after) mask pairs x 256 regions exact"))
}

fn load_balance() -> Check {
    let t = table();
    let all = crunch_region_counts(&t, &ActiveBankMask::all(8)).map_err(|e| e.to_string())?;
    ensure!(all.iter().all(|&c| c == 32), "all-on counts {all:?}");
    for down in 0..8 {
        let m = ActiveBankMask::all(8).without(down);
        let c = crunch_region_counts(&t, &m).map_err(|e| e.to_string())?;
        for b in m.active() {
            ensure!(c[b] == 36 || c[b] == 37, "bank {down} down: bank {b} owns {}", c[b]);
        }
    }
    Ok("all-on 32 each; every single-bank-down survivor owns 36 or 37".into())
}

fn uniform_imbalance() -> Check {
    let cfg = EngineConfig::default();
    let trace: Vec<_> = generate(&SyntheticSpec { length: 1_000_000, ..Default::default() }).unwrap().collect();
    let warmup = cfg.warmup_for(trace.len());
    let imb = |s: Scheme, p: &str| run_steady(&trace, &cfg, &remapper(s), mask(p), warmup).map(|m| m.imbalance_ratio);
    let bfo = imb(Scheme::Bfo, "11010111").map_err(|e| e.to_string())?;
    let crunch_bal = imb(Scheme::Crunch, "11010111").map_err(|e| e.to_string())?;
    let mri = imb(Scheme::Mri, "11010111").map_err(|e| e.to_string())?;
    let bfo_seq = imb(Scheme::Bfo, "00011111").map_err(|e| e.to_string())?;
    let crunch_seq = imb(Scheme::Crunch, "00011111").map_err(|e| e.to_string())?;
    let crunch_bal3 = imb(Scheme::Crunch, "11010101").map_err(|e| e.to_string())?;
    let detail = format!(
        "11010111: bfo {bfo:.3} crunch {crunch_bal:.3} mri {mri:.3}; 00011111: bfo {bfo_seq:.3} crunch {crunch_seq:.3} (balanced 11010101 {crunch_bal3:.3})"
    );
    ensure!((bfo - 2.0).abs() <= 0.05, "{detail}");
    ensure!(crunch_bal <= 1.10, "{detail}");
    ensure!(mri <= 1.05, "{detail}");
    ensure!((bfo_seq - 4.0).abs() <= 0.10, "{detail}");
    ensure!((crunch_seq / crunch_bal3 - 1.0).abs() <= 0.05, "{detail}");
    Ok(detail)
}

fn conservation_case(case: u64, table: &RegionRemapTable) -> Result<(), String> {
    let g = CacheGeometry { channels: 2, banks_per_channel: 8, rows_per_bank: 16, row_bytes: 256, line_bytes: 64, data_ways: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
    let scheme = Scheme::ALL[(case % 3) as usize];
    let policy = TransitionPolicy::new(
        if case % 2 == 0 { Discovery::Hier } else { Discovery::FullWalk },
        if (case / 2) % 2 == 0 { DirtyHandling::Migrate } else { DirtyHandling::Writeback },
    );
    let r = Remapper::new(scheme, 8, || Ok(table.clone()), Default::default()).map_err(|e| e.to_string())?;
    let start = ActiveBankMask::from_bits(rng.gen_range(1..256), 8).unwrap();
    let mut sys = CacheSystem::new(g, r, start).map_err(|e| e.to_string())?;
    let mut oracle: HashMap<u64, u64> = HashMap::new();
    let footprint = rng.gen_range(64..2048u64);
    let ctx = format!("case {case} ({scheme}, {}/{})", policy.discovery, policy.handling);
    let check = |sys: &CacheSystem, oracle: &HashMap<u64, u64>| -> Result<(), String> {
        sys.check_placement().map_err(|e| format!("{ctx}: {e}"))?;
        let image = sys.visible_image();
        let keys: HashSet<u64> = image.keys().chain(oracle.keys()).copied().collect();
        for k in keys {
            let (a, b) = (image.get(&k).copied().unwrap_or(0), oracle.get(&k).copied().unwrap_or(0));
            if a != b {
                return Err(format!("{ctx}: line {k:#x} holds {a}, expected {b}"));
            }
        }
        Ok(())
    };
    let mut token = 1;
    for _ in 0..400 {
        let roll = rng.gen_range(0..100);
        if roll < 4 {
            let target = ActiveBankMask::from_bits(rng.gen_range(1..256), 8).unwrap();
            let cur = sys.mask();
            let rep = if cur.is_empty() || cur.is_subset_of(&target) {
                power_up(&mut sys, target, &policy)
            } else if target.is_subset_of(&cur) {
                power_down(&mut sys, target, &policy)
            } else {
                reconfigure(&mut sys, target, &policy)
            }
            .map_err(|e| format!("{ctx}: {e}"))?;
            if !rep.conserves_dirty_lines() {
                return Err(format!("{ctx}: dirty-line count not conserved"));
            }
            check(&sys, &oracle)?;
        } else if roll < 5 {
            if !sys.mask().is_empty() {
                shutdown_all(&mut sys, &policy).map_err(|e| format!("{ctx}: {e}"))?;
                check(&sys, &oracle)?;
            }
        } else {
            let line = rng.gen_range(0..footprint);
            if rng.gen_bool(0.4) {
                sys.write(line * 64, token).map_err(|e| e.to_string())?;
                oracle.insert(line, token);
                token += 1;
            } else {
                let got = sys.read(line * 64).map_err(|e| e.to_string())?;
                let want = oracle.get(&line).copied().unwrap_or(0);
                if got != want {
                    return Err(format!("{ctx}: read {line:#x} returned {got}, expected {want}"));
                }
            }
        }
    }
    check(&sys, &oracle)
}

fn dirty_conservation() -> Check {
    let t = table();
    for case in 0..1000 {
        conservation_case(case, &t)?;
    }
    Ok("1000 interleavings over 3 schemes x 2 discovery x 2 handling policies, images exact".into())
}

fn migration_scope() -> Check {
    let g = CacheGeometry { channels: 1, banks_per_channel: 8, rows_per_bank: 1024, row_bytes: 2048, line_bytes: 64, data_ways: 29 };
    let p = TransitionPolicy::new(Discovery::FullWalk, DirtyHandling::Migrate);
    let dirty = |scheme| -> Result<CacheSystem, String> {
        let mut sys = CacheSystem::new(g, remapper(scheme), ActiveBankMask::all(8)).map_err(|e| e.to_string())?;
        for i in 0..g.data_lines() {
            sys.write(i * 64, i + 1).map_err(|e| e.to_string())?;
        }
        ensure!(sys.cache().dirty_line_count() as u64 == g.data_lines(), "cache not fully dirty");
        Ok(sys)
    };
    let total = g.data_lines() as f64;
    let mut frac = HashMap::new();
    let mut walk = HashMap::new();
    for s in Scheme::ALL {
        let mut sys = dirty(s)?;
        let r = power_down(&mut sys, mask("11110111"), &p).map_err(|e| e.to_string())?;
        frac.insert(s, r.lines_migrated as f64 / total);
        walk.insert(s, r.rows_walked);
    }
    for s in [Scheme::Bfo, Scheme::Crunch] {
        ensure!((frac[&s] - 0.125).abs() <= 0.02, "{s} migrated {:.4} of lines", frac[&s]);
        ensure!(walk[&s] == 1024, "{s} walked {} rows", walk[&s]);
    }
    ensure!(frac[&Scheme::Mri] >= 6.0 * frac[&Scheme::Crunch], "mri {:.3} vs crunch {:.3}", frac[&Scheme::Mri], frac[&Scheme::Crunch]);
    ensure!(walk[&Scheme::Mri] == 8 * 1024, "mri walked {} rows", walk[&Scheme::Mri]);

    let mut costs = Vec::new();
    for pat in PAPER_PATTERNS {
        let mut sys = dirty(Scheme::Mri)?;
        let r = power_down(&mut sys, mask(pat), &p).map_err(|e| e.to_string())?;
        costs.push((r.rows_walked * p.row_walk_cycles) as f64);
    }
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    ensure!(costs.iter().all(|c| (c - mean).abs() <= 0.05 * mean), "mri walk costs {costs:?}");
    Ok(format!(
        "migrated: bfo {:.4} crunch {:.4} mri {:.4}; rows walked bfo/crunch 1024, mri 8192; mri walk cost {mean} cycles for 1..7 banks down",
        frac[&Scheme::Bfo], frac[&Scheme::Crunch], frac[&Scheme::Mri]
    ))
}

fn bup_checks() -> Check {
    ensure!(banks_for_ways(13, 32, 8) == 4, "13 ways -> {} banks", banks_for_ways(13, 32, 8));
    // histograms with a sharp knee at k
    for k in 1..=32 {
        let mut m = UtilityMonitor::new(32, 32, 1).map_err(|e| e.to_string())?;
        for i in 0..32 {
            m.hit_counters[i] = if i < k { 1000 - 10 * i as u64 } else { 1 };
        }
        m.access_count = m.hit_counters.iter().sum::<u64>() + 5000;
        let w = knee_ways(&m, 0.05);
        ensure!(w.abs_diff(k) <= 1, "histogram knee {k}, recovered {w}");
    }
    // cyclic reuse of k tags per sampled set puts every hit at stack depth k
    for k in [3usize, 9, 13, 20, 27] {
        let mut m = UtilityMonitor::new(32, 32, 1).map_err(|e| e.to_string())?;
        for round in 0..50 {
            for set in 0..32u64 {
                for t in 0..k as u64 {
                    let _ = round;
                    m.observe(set, set * 1000 + t);
                }
            }
        }
        let w = knee_ways(&m, 0.05);
        ensure!(w.abs_diff(k) <= 1, "trace knee {k}, recovered {w}");
    }
    let mut m = UtilityMonitor::new(32, 32, 1).map_err(|e| e.to_string())?;
    m.observe(0, 1);
    let p = BupParams::default();
    let low = bup_decide(&m, 4_000, 1e6, &p).map_err(|e| e.to_string())?;
    let high = bup_decide(&m, 6_000, 1e6, &p).map_err(|e| e.to_string())?;
    ensure!(low.cache_off && !high.cache_off, "mpki 4 off={} mpki 6 off={}", low.cache_off, high.cache_off);
    Ok("13 ways -> 4 banks; knees 1..=32 recovered within 1 way; mpki 4 turns the cache off, 6 does not".into())
}

fn power_checks() -> Check {
    let model = PowerModel::default();
    let refp = ActivityRates::reference();
    let one = cache_power(&model, 1, &refp).map_err(|e| e.to_string())?;
    for n in 0..=8 {
        let b = cache_power(&model, n, &refp).map_err(|e| e.to_string())?;
        ensure!(b.background_mw == n as f64 * one.background_mw, "background at {n} banks: {}", b.background_mw);
        ensure!(b.refresh_mw == n as f64 * one.refresh_mw, "refresh at {n} banks: {}", b.refresh_mw);
    }
    let full = cache_power(&model, 8, &refp).map_err(|e| e.to_string())?;
    let cut = 1.0 - one.total_mw / full.total_mw;
    ensure!((0.63..=0.79).contains(&cut), "8 -> 1 reduction {cut:.3}");
    let idle = cache_power(&model, 8, &ActivityRates::IDLE).map_err(|e| e.to_string())?;
    ensure!(idle.background_share() >= 0.80, "idle background share {:.3}", idle.background_share());
    Ok(format!("linear in banks; 8->1 cuts {:.1}% ({:.0} -> {:.0} mW); idle background share {:.1}%", cut * 100.0, full.total_mw, one.total_mw, idle.background_share() * 100.0))
}

fn analytic_checks() -> Check {
    let base = ModelInputs { n_millions: 100.0, ipc8: 2.0, ipc_b: 1.25, t_up: 5e3, t_down: 2e4, p8_mw: 500.0, pb_mw: 300.0, e_up_nj: 50.0, e_down_nj: 400.0, ..Default::default() };
    let t0 = execution_time(&base).map_err(|e| e.to_string())?;
    ensure!((t0 - (1e8 / 4.0 + 1e8 / 2.5)).abs() < 1e-6, "tpmi 0 time {t0}");
    let same = ModelInputs { ipc_b: 2.0, ..base };
    ensure!((execution_time(&same).unwrap() - 1e8 / 2.0).abs() < 1e-6, "equal-ipc limit");
    let at = |x: f64| {
        let m = ModelInputs { tpmi: x, ..base };
        (execution_time(&m).unwrap(), model_energy(&m).unwrap())
    };
    let (a, b, c) = (at(1.0), at(4.0), at(10.0));
    ensure!(((b.0 - a.0) / 3.0 - (c.0 - b.0) / 6.0).abs() < 1e-6 * c.0, "time not affine in tpmi");
    ensure!(((b.1 - a.1) / 3.0 - (c.1 - b.1) / 6.0).abs() < 1e-6 * c.1, "energy not affine in tpmi");
    ensure!(((b.0 - a.0) / 3.0 - 100.0 * 2.5e4).abs() < 1e-6, "time slope");

    let cfg = EngineConfig::default();
    let trace: Vec<_> = generate(&SyntheticSpec { footprint_bytes: 32 << 20, write_fraction: 0.3, length: 300_000, ..Default::default() })
        .unwrap()
        .collect();
    let policy = TransitionPolicy::new(Discovery::Hier, DirtyHandling::Migrate);
    let measure = |s| measure_model_inputs(&trace, &cfg, &remapper(s), 4, &policy, 1000.0, 20.0).map_err(|e| e.to_string());
    let (c, m) = (measure(Scheme::Crunch)?, measure(Scheme::Mri)?);
    let mut detail = Vec::new();
    for tpmi in [1.0, 10.0, 100.0] {
        let (ct, ce) = (execution_time(&ModelInputs { tpmi, ..c }).unwrap(), model_energy(&ModelInputs { tpmi, ..c }).unwrap());
        let (mt, me) = (execution_time(&ModelInputs { tpmi, ..m }).unwrap(), model_energy(&ModelInputs { tpmi, ..m }).unwrap());
        ensure!(ct <= mt && ce <= me, "tpmi {tpmi}: crunch ({ct:.3e}, {ce:.3e}) vs mri ({mt:.3e}, {me:.3e})");
        detail.push(format!("tpmi {tpmi}: time {:.2}x energy {:.2}x", ct / mt, ce / me));
    }
    Ok(format!("affine and limits hold; crunch/mri at b=4: {}", detail.join(", ")))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    let small = ["--length", "60000", "--footprint", "8000000", "--write-fraction", "0.3"];
    crunch(&[&["steady", "--scheme", "crunch", "--pattern", "11010111", "--out", "s.csv"][..], &small].concat(), p)?;
    crunch(&[&["transition", "down", "--scheme", "mri", "--after", "10010101", "--out", "t.csv"][..], &small].concat(), p)?;
    for f in ["s.csv", "t.csv"] {
        for rep in 0..2 {
            let out = format!("{f}.{rep}");
            crunch(&["rerun", &format!("{f}.manifest"), "--out", &out], p)?;
            let a = std::fs::read(p.join(f)).map_err(|e| e.to_string())?;
            let b = std::fs::read(p.join(&out)).map_err(|e| e.to_string())?;
            ensure!(a == b, "{f}: rerun {rep} differs");
        }
    }
    Ok("steady and transition reruns from their manifests are byte-identical".into())
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    // `cargo test -- --list` and similar harness probes
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "RRT structure", limit: secs(5), run: rrt_structure },
        Criterion { id: 2, name: "HIER sizing", limit: secs(1), run: hier_sizing },
        Criterion { id: 3, name: "HIER correctness", limit: secs(10), run: hier_correctness },
        Criterion { id: 4, name: "Minimal remapping", limit: secs(30), run: minimal_remapping },
        Criterion { id: 5, name: "Load balance", limit: secs(1), run: load_balance },
        Criterion { id: 6, name: "Uniform-traffic imbalance", limit: secs(60), run: uniform_imbalance },
        Criterion { id: 7, name: "Dirty-data conservation", limit: secs(120), run: dirty_conservation },
        Criterion { id: 8, name: "Migration-scope ordering", limit: secs(60), run: migration_scope },
        Criterion { id: 9, name: "BUP", limit: secs(1), run: bup_checks },
        Criterion { id: 10, name: "Power model", limit: secs(1), run: power_checks },
        Criterion { id: 11, name: "Analytic model", limit: secs(60), run: analytic_checks },
        Criterion { id: 12, name: "Determinism", limit: secs(60), run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > c.limit => Err(format!("took {elapsed:.2?}, limit {:?}; {d}", c.limit)),
            r => r,
        };
        match result {
            Ok(d) => println!("PASS {:>2} {} ({elapsed:.2?}): {d}", c.id, c.name),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {} ({elapsed:.2?}): {d}", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
