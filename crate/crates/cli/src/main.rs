mod config;
mod run;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crunch_core::remap::{ActiveBankMask, Scheme};
use crunch_core::rrt::RegionRemapTable;
use crunch_core::transition::{DirtyHandling, Discovery};
use crunch_core::workload::PatternKind;

use config::{parse_assignment, RunConfig, UsageError};
use run::{execute, rrt_summary, Command};

/// Trace-driven simulator for a DRAM cache whose banks can be powered down.
///
/// Bank patterns are 8-character strings, bank 0 leftmost, `1` = powered:
/// `11010111` has banks 2 and 4 off.
#[derive(Parser, Debug)]
#[command(name = "crunch", version)]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate, validate or print region remap tables.
    #[command(subcommand)]
    Rrt(RrtCmd),
    /// Steady-state run at one bank pattern.
    Steady(SteadyArgs),
    /// Warm the cache, change the powered banks, keep running.
    #[command(subcommand)]
    Transition(TransitionCmd),
    /// Sweep patterns, bank counts or transition frequency.
    #[command(subcommand)]
    Sweep(SweepCmd),
    /// Power breakdowns.
    #[command(subcommand)]
    Power(PowerCmd),
    /// Bank-count predictor.
    #[command(subcommand)]
    Bup(BupCmd),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Subcommand, Debug)]
enum RrtCmd {
    Gen(RrtGenArgs),
    /// Exit nonzero and name the offending rows if the table breaks a constraint.
    Check { file: PathBuf },
    /// Print a table with its size, successor counts and region shares.
    Show(RrtShowArgs),
}

#[derive(Subcommand, Debug)]
enum TransitionCmd {
    Down(TransitionArgs),
    Up(TransitionArgs),
}

#[derive(Subcommand, Debug)]
enum SweepCmd {
    /// All schemes over the balanced and sequential shutdown patterns.
    Patterns(SweepArgs),
    /// All schemes over 8..1 powered banks.
    Banks(SweepArgs),
    /// Closed-form time and energy against transitions per million instructions.
    Tpmi(TpmiArgs),
}

#[derive(Subcommand, Debug)]
enum PowerCmd {
    Report(PowerArgs),
}

#[derive(Subcommand, Debug)]
enum BupCmd {
    Run(BupArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Set any config key, e.g. `--set workload.length=200000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path (default: `<out>.manifest`, or stderr when writing to stdout).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct Workload {
    /// Trace file; `.bin`/`.trc` are read as binary, anything else as text.
    #[arg(long, conflicts_with = "synthetic")]
    trace: Option<PathBuf>,
    /// Synthetic workload: uniform, zipf, strided or phased.
    #[arg(long)]
    synthetic: Option<PatternKind>,
    /// Records to generate.
    #[arg(long)]
    length: Option<u64>,
    /// Footprint in bytes.
    #[arg(long)]
    footprint: Option<u64>,
    #[arg(long)]
    write_fraction: Option<f64>,
    /// Workload seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Region remap table seed (crunch).
    #[arg(long)]
    rrt_seed: Option<u64>,
    /// Region remap table file (crunch).
    #[arg(long)]
    rrt_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RrtGenArgs {
    #[arg(long)]
    banks: Option<usize>,
    #[arg(long)]
    super_regions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RrtShowArgs {
    /// Table file; generated from the flags when absent.
    #[arg(long, conflicts_with_all = ["banks", "super_regions", "seed"])]
    file: Option<PathBuf>,
    #[arg(long)]
    banks: Option<usize>,
    #[arg(long)]
    super_regions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SteadyArgs {
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Powered banks, bank 0 leftmost.
    #[arg(long)]
    pattern: Option<ActiveBankMask>,
    #[command(flatten)]
    workload: Workload,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TransitionArgs {
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    before: Option<ActiveBankMask>,
    #[arg(long)]
    after: Option<ActiveBankMask>,
    /// Dirty-row discovery: full or hier.
    #[arg(long)]
    discovery: Option<Discovery>,
    /// Displaced dirty lines: migrate or writeback.
    #[arg(long)]
    handling: Option<DirtyHandling>,
    /// Serviced-request series, one row per sample window.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Steady metrics before and after the transition.
    #[arg(long)]
    phases: Option<PathBuf>,
    #[command(flatten)]
    workload: Workload,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    /// Leave out the sequential shutdown patterns.
    #[arg(long)]
    no_sequential: bool,
    #[command(flatten)]
    workload: Workload,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TpmiArgs {
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    /// Banks left on in the reduced phase.
    #[arg(long)]
    b: Option<usize>,
    /// Comma-separated transition frequencies.
    #[arg(long, value_delimiter = ',')]
    tpmi: Vec<f64>,
    #[command(flatten)]
    workload: Workload,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PowerArgs {
    /// Metrics CSV from `steady` or `sweep`; without it every bank count is
    /// tabulated at reference and idle traffic.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BupArgs {
    #[command(flatten)]
    workload: Workload,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RerunArgs {
    #[arg(value_name = "MANIFEST")]
    from: PathBuf,
    /// Extra overrides applied after the manifest.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the new manifest (default as for other commands).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn push<T: ToString>(v: &mut Vec<(String, String)>, key: &str, value: &Option<T>) {
    if let Some(x) = value {
        v.push((key.to_string(), x.to_string()));
    }
}

impl Workload {
    fn overrides(&self, v: &mut Vec<(String, String)>) {
        push(v, "trace", &self.trace.as_ref().map(|p| p.display()));
        push(v, "workload.kind", &self.synthetic);
        push(v, "workload.length", &self.length);
        push(v, "workload.footprint_bytes", &self.footprint);
        push(v, "workload.write_fraction", &self.write_fraction);
        push(v, "workload.seed", &self.seed);
        push(v, "rrt.seed", &self.rrt_seed);
        push(v, "rrt.file", &self.rrt_file.as_ref().map(|p| p.display()));
    }
}

/// A resolved command plus where its outputs go.
struct Job {
    cmd: Command,
    flags: Vec<(String, String)>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
    /// Manifests are replayed without consulting the environment.
    use_env: bool,
}

impl Job {
    fn new(cmd: Command, common: Common, mut flags: Vec<(String, String)>) -> Self {
        flags.extend(common.set);
        Job { cmd, flags, config: common.config, out: common.out, manifest: common.manifest, use_env: true }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run_job(job: Job) -> anyhow::Result<()> {
    let env = |k: &str| if job.use_env { std::env::var(k).ok() } else { None };
    let cfg = RunConfig::load(job.config.as_deref(), env, &job.flags)?;
    let text = execute(&job.cmd, &cfg)?;
    write_out(job.out.as_deref(), &text)?;
    let manifest = cfg.manifest(job.cmd.name());
    match (&job.manifest, &job.out) {
        (Some(m), _) => write_out(Some(m), &manifest),
        (None, Some(o)) => {
            let mut m = o.clone().into_os_string();
            m.push(".manifest");
            write_out(Some(Path::new(&m)), &manifest)
        }
        (None, None) => {
            eprint!("{manifest}");
            Ok(())
        }
    }
}

/// Flags shared by `rrt gen` and `rrt show`. Tables for other bank counts
/// need all-on patterns of the same width to pass validation.
fn rrt_flags(banks: Option<usize>, super_regions: Option<usize>, seed: Option<u64>) -> Vec<(String, String)> {
    let mut flags = Vec::new();
    push(&mut flags, "geometry.banks_per_channel", &banks);
    push(&mut flags, "rrt.super_regions", &super_regions);
    push(&mut flags, "rrt.seed", &seed);
    if let Some(b) = banks {
        let all = ActiveBankMask::all(b).to_string();
        for k in ["pattern", "before", "after"] {
            flags.push((k.to_string(), all.clone()));
        }
    }
    flags
}

fn sweep_job(cmd: Command, a: SweepArgs) -> Job {
    let mut f = Vec::new();
    if !a.scheme.is_empty() {
        f.push(("sweep.schemes".to_string(), join(&a.scheme)));
    }
    if a.no_sequential {
        f.push(("sweep.sequential".to_string(), "false".to_string()));
    }
    a.workload.overrides(&mut f);
    Job::new(cmd, a.common, f)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let job = match cli.cmd {
        Cmd::Rrt(RrtCmd::Check { file }) => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let table: RegionRemapTable = text.parse().with_context(|| format!("parsing {}", file.display()))?;
            let violations = table.violations();
            if violations.is_empty() {
                println!("ok: {} rows, {} bytes", table.super_regions(), table.size_bytes());
                return Ok(());
            }
            for v in &violations {
                println!("{v}");
            }
            anyhow::bail!("{} constraint violation(s) in {}", violations.len(), file.display());
        }
        Cmd::Rrt(RrtCmd::Show(a)) => {
            let table = match a.file {
                Some(f) => std::fs::read_to_string(&f)
                    .with_context(|| format!("reading {}", f.display()))?
                    .parse::<RegionRemapTable>()?,
                None => RunConfig::load(None, |_| None, &rrt_flags(a.banks, a.super_regions, a.seed))?.rrt()?,
            };
            print!("{}", rrt_summary(&table)?);
            return Ok(());
        }
        Cmd::Rrt(RrtCmd::Gen(a)) => Job::new(Command::RrtGen, a.common, rrt_flags(a.banks, a.super_regions, a.seed)),
        Cmd::Steady(a) => {
            let mut f = Vec::new();
            push(&mut f, "scheme", &a.scheme);
            push(&mut f, "pattern", &a.pattern);
            a.workload.overrides(&mut f);
            Job::new(Command::Steady, a.common, f)
        }
        Cmd::Transition(t) => {
            let (up, a) = match t {
                TransitionCmd::Down(a) => (false, a),
                TransitionCmd::Up(a) => (true, a),
            };
            let mut f = Vec::new();
            push(&mut f, "scheme", &a.scheme);
            push(&mut f, "before", &a.before);
            push(&mut f, "after", &a.after);
            push(&mut f, "transition.discovery", &a.discovery);
            push(&mut f, "transition.handling", &a.handling);
            a.workload.overrides(&mut f);
            Job::new(Command::Transition { up, samples: a.samples, phases: a.phases }, a.common, f)
        }
        Cmd::Sweep(s) => match s {
            SweepCmd::Patterns(a) => sweep_job(Command::SweepPatterns, a),
            SweepCmd::Banks(a) => sweep_job(Command::SweepBanks, a),
            SweepCmd::Tpmi(a) => {
                let mut f = Vec::new();
                if !a.scheme.is_empty() {
                    f.push(("sweep.schemes".to_string(), join(&a.scheme)));
                }
                if !a.tpmi.is_empty() {
                    f.push(("model.tpmi".to_string(), join(&a.tpmi)));
                }
                push(&mut f, "model.b", &a.b);
                a.workload.overrides(&mut f);
                Job::new(Command::SweepTpmi, a.common, f)
            }
        },
        Cmd::Power(PowerCmd::Report(a)) => {
            let mut f = Vec::new();
            push(&mut f, "metrics", &a.metrics.as_ref().map(|p| p.display()));
            Job::new(Command::PowerReport, a.common, f)
        }
        Cmd::Bup(BupCmd::Run(a)) => {
            let mut f = Vec::new();
            a.workload.overrides(&mut f);
            Job::new(Command::BupRun, a.common, f)
        }
        Cmd::Rerun(a) => {
            let text = std::fs::read_to_string(&a.from).with_context(|| format!("reading {}", a.from.display()))?;
            let pairs = crunch_core::kv::parse(&text).map_err(|e| UsageError(e.to_string()))?;
            let name = pairs
                .iter()
                .find(|(k, _)| k == "command")
                .map(|(_, v)| v.clone())
                .ok_or_else(|| UsageError(format!("{} has no command entry", a.from.display())))?;
            let cmd = Command::from_name(&name).ok_or_else(|| UsageError(format!("unknown command {name:?} in manifest")))?;
            Job { cmd, flags: a.set, config: Some(a.from), out: a.out, manifest: a.manifest, use_env: false }
        }
    };
    run_job(job)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs {n}: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
