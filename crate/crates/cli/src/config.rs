//! Run configuration as flat `key = value` pairs.
//!
//! Sources are applied in order: built-in defaults, the `--config` file,
//! `CRUNCH_<KEY>` environment variables, then command-line flags. The
//! environment name of a key is its upper-cased form with `.` replaced by
//! `_`, so `workload.length` becomes `CRUNCH_WORKLOAD_LENGTH`.

use std::fmt;
use std::path::{Path, PathBuf};

use crunch_core::bup::BupParams;
use crunch_core::engine::{EngineConfig, TimingParams};
use crunch_core::geometry::CacheGeometry;
use crunch_core::kv;
use crunch_core::power::PowerModel;
use crunch_core::remap::{ActiveBankMask, RegionHash, Remapper, Scheme};
use crunch_core::rrt::{RegionRemapTable, DEFAULT_RRT_SEED, DEFAULT_SUPER_REGIONS};
use crunch_core::transition::{DirtyHandling, Discovery, TransitionPolicy};
use crunch_core::workload::{generate, read_trace, SyntheticSpec, TraceFormat, TraceRecord};

pub const ENV_PREFIX: &str = "CRUNCH_";

/// Keys a manifest carries besides the configuration itself.
const MANIFEST_ONLY: [&str; 2] = ["command", "version"];

/// Bad configuration or flags. Reported as a usage error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: CacheGeometry,
    pub timing: TimingParams,
    pub power: PowerModel,
    pub warmup_fraction: f64,
    pub sample_window: u64,
    pub scheme: Scheme,
    pub region_hash: RegionHash,
    pub rrt_seed: u64,
    pub super_regions: usize,
    pub rrt_file: Option<PathBuf>,
    /// Mask for steady runs.
    pub pattern: ActiveBankMask,
    pub before: ActiveBankMask,
    pub after: ActiveBankMask,
    pub policy: TransitionPolicy,
    /// Fraction of the trace replayed before a transition.
    pub split: f64,
    pub workload: SyntheticSpec,
    pub trace: Option<PathBuf>,
    pub trace_format: Option<TraceFormat>,
    pub bup: BupParams,
    pub sweep_schemes: Vec<Scheme>,
    pub sweep_sequential: bool,
    pub model_b: usize,
    pub model_tpmi: Vec<f64>,
    pub model_n_millions: f64,
    pub model_rpki: f64,
    /// Metrics CSV read by `power report`.
    pub metrics: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        let banks = engine.geometry.banks_per_channel;
        Self {
            geometry: engine.geometry,
            timing: engine.timing,
            power: engine.power,
            warmup_fraction: engine.warmup_fraction,
            sample_window: engine.sample_window,
            scheme: Scheme::Crunch,
            region_hash: RegionHash::default(),
            rrt_seed: DEFAULT_RRT_SEED,
            super_regions: DEFAULT_SUPER_REGIONS,
            rrt_file: None,
            pattern: ActiveBankMask::all(banks),
            before: ActiveBankMask::all(banks),
            after: "11010111".parse().expect("valid pattern"),
            policy: TransitionPolicy::new(Discovery::Hier, DirtyHandling::Migrate),
            split: 0.8,
            workload: SyntheticSpec::default(),
            trace: None,
            trace_format: None,
            bup: BupParams::default(),
            sweep_schemes: Scheme::ALL.to_vec(),
            sweep_sequential: true,
            model_b: 4,
            model_tpmi: vec![1.0, 10.0, 100.0],
            model_n_millions: 1000.0,
            model_rpki: 20.0,
            metrics: None,
        }
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_list<T: std::str::FromStr>(key: &str, v: &str) -> crunch_core::Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| kv::parse_value(key, s)).collect()
}

impl RunConfig {
    /// Every key in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = [
            ("scheme", self.scheme.to_string()),
            ("region_hash", self.region_hash.name().to_string()),
            ("rrt.seed", self.rrt_seed.to_string()),
            ("rrt.super_regions", self.super_regions.to_string()),
            ("rrt.file", path_str(&self.rrt_file)),
            ("pattern", self.pattern.to_string()),
            ("before", self.before.to_string()),
            ("after", self.after.to_string()),
            ("split", self.split.to_string()),
            ("trace", path_str(&self.trace)),
            ("trace.format", self.trace_format.map(|f| f.to_string()).unwrap_or_default()),
            ("metrics", path_str(&self.metrics)),
            ("engine.warmup_fraction", self.warmup_fraction.to_string()),
            ("engine.sample_window", self.sample_window.to_string()),
            ("sweep.schemes", join(&self.sweep_schemes)),
            ("sweep.sequential", self.sweep_sequential.to_string()),
            ("model.b", self.model_b.to_string()),
            ("model.tpmi", join(&self.model_tpmi)),
            ("model.n_millions", self.model_n_millions.to_string()),
            ("model.requests_per_kilo_instruction", self.model_rpki.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        out.extend(self.geometry.to_pairs());
        out.extend(self.timing.to_pairs());
        out.extend(self.power.to_pairs());
        out.extend(self.policy.to_pairs());
        out.extend(self.workload.to_pairs());
        out.extend(self.bup.to_pairs());
        out
    }

    pub fn keys() -> Vec<String> {
        Self::default().to_pairs().into_iter().map(|(k, _)| k).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let r: crunch_core::Result<bool> = (|| {
            match key {
                "scheme" => self.scheme = value.parse()?,
                "region_hash" => self.region_hash = value.parse()?,
                "rrt.seed" => self.rrt_seed = kv::parse_value(key, value)?,
                "rrt.super_regions" => self.super_regions = kv::parse_value(key, value)?,
                "rrt.file" => self.rrt_file = opt_path(value),
                "pattern" => self.pattern = value.parse()?,
                "before" => self.before = value.parse()?,
                "after" => self.after = value.parse()?,
                "split" => self.split = kv::parse_value(key, value)?,
                "trace" => self.trace = opt_path(value),
                "trace.format" => {
                    self.trace_format = if value.is_empty() { None } else { Some(value.parse()?) }
                }
                "metrics" => self.metrics = opt_path(value),
                "engine.warmup_fraction" => self.warmup_fraction = kv::parse_value(key, value)?,
                "engine.sample_window" => self.sample_window = kv::parse_value(key, value)?,
                "sweep.schemes" => self.sweep_schemes = split_list(key, value)?,
                "sweep.sequential" => self.sweep_sequential = kv::parse_value(key, value)?,
                "model.b" => self.model_b = kv::parse_value(key, value)?,
                "model.tpmi" => self.model_tpmi = split_list(key, value)?,
                "model.n_millions" => self.model_n_millions = kv::parse_value(key, value)?,
                "model.requests_per_kilo_instruction" => self.model_rpki = kv::parse_value(key, value)?,
                _ => {
                    let owned = self.geometry.set(key, value)?
                        || self.timing.set(key, value)?
                        || self.power.set(key, value)?
                        || self.policy.set(key, value)?
                        || self.workload.set(key, value)?
                        || self.bup.set(key, value)?;
                    return Ok(owned);
                }
            }
            Ok(true)
        })();
        match r {
            Ok(true) => Ok(()),
            Ok(false) => Err(usage(format!("unknown config key {key:?}"))),
            Err(e) => Err(usage(format!("{key}: {e}"))),
        }
    }

    /// Apply a `key = value` file. Manifest bookkeeping keys are skipped.
    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let pairs = kv::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        for (k, v) in pairs {
            if !MANIFEST_ONLY.contains(&k.as_str()) {
                self.set(&k, &v)?;
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        for key in Self::keys() {
            if let Some(v) = lookup(&env_name(&key)) {
                self.set(&key, &v)?;
            }
        }
        Ok(())
    }

    /// Layer every source over the defaults and validate.
    pub fn load(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        overrides: &[(String, String)],
    ) -> anyhow::Result<Self> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        cfg.apply_env(env)?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.finish()?;
        Ok(cfg)
    }

    /// Derive dependent values and check cross-field constraints.
    pub fn finish(&mut self) -> anyhow::Result<()> {
        self.policy.energy = self.power.transition_energy();
        self.engine().validate().map_err(|e| usage(e.to_string()))?;
        self.policy.validate().map_err(|e| usage(e.to_string()))?;
        self.workload.validate().map_err(|e| usage(e.to_string()))?;
        self.bup.validate().map_err(|e| usage(e.to_string()))?;
        let banks = self.geometry.banks_per_channel;
        for (name, m) in [("pattern", self.pattern), ("before", self.before), ("after", self.after)] {
            if m.banks() != banks {
                return Err(usage(format!("{name} {m} has {} characters, expected {banks} (one per bank)", m.banks())));
            }
            if m.is_empty() {
                return Err(usage(format!("{name} {m} leaves no bank powered")));
            }
        }
        if !(0.0..1.0).contains(&self.split) || self.split == 0.0 {
            return Err(usage(format!("split {} must be in (0, 1)", self.split)));
        }
        if self.sweep_schemes.is_empty() {
            return Err(usage("sweep.schemes is empty"));
        }
        if self.model_b == 0 || self.model_b > banks {
            return Err(usage(format!("model.b {} outside 1..={banks}", self.model_b)));
        }
        if self.model_tpmi.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(usage("model.tpmi values must be finite and non-negative"));
        }
        if !(self.model_rpki > 0.0) {
            return Err(usage("model.requests_per_kilo_instruction must be positive"));
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            geometry: self.geometry,
            timing: self.timing,
            power: self.power,
            warmup_fraction: self.warmup_fraction,
            sample_window: self.sample_window,
        }
    }

    pub fn rrt(&self) -> anyhow::Result<RegionRemapTable> {
        match &self.rrt_file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
                let t: RegionRemapTable = text.parse()?;
                t.check()?;
                Ok(t)
            }
            None => Ok(RegionRemapTable::generate(self.geometry.banks_per_channel, self.super_regions, self.rrt_seed)?),
        }
    }

    pub fn remapper(&self, scheme: Scheme) -> anyhow::Result<Remapper> {
        let banks = self.geometry.banks_per_channel;
        Ok(match scheme {
            Scheme::Bfo => Remapper::bfo(banks),
            Scheme::Mri => Remapper::mri(banks),
            Scheme::Crunch => Remapper::crunch(self.rrt()?, self.region_hash)?,
        })
    }

    pub fn load_trace(&self) -> anyhow::Result<Vec<TraceRecord>> {
        match &self.trace {
            Some(p) => {
                let fmt = self.trace_format.unwrap_or_else(|| TraceFormat::from_path(p));
                Ok(read_trace(p, fmt)?)
            }
            None => Ok(generate(&self.workload)?.collect()),
        }
    }

    pub fn manifest(&self, command: &str) -> String {
        let mut pairs = vec![
            ("command".to_string(), command.to_string()),
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ];
        pairs.extend(self.to_pairs());
        kv::render(&pairs)
    }
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

/// Split `key=value` from a `--set` flag.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}
