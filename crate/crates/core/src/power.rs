//! DRAM power model in the style of the Micron system power calculator.
//!
//! Static power (background and refresh) is charged per powered bank, so it
//! scales linearly with the number of active banks. Dynamic power is event
//! rate times per-event energy and does not depend on the bank count.
//!
//! Defaults are a calibration, not datasheet values. The stacked cache is
//! static-heavy: at the reference activity, 8 banks burn 400 mW static and
//! 100 mW dynamic, and an idle cache spends 83% of its power on background.
//! The activate energy is small because one stacked die serves a whole
//! access, and refresh runs at twice the off-chip rate.

use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DramPowerParams {
    pub banks: usize,
    pub background_mw_per_bank: f64,
    /// Refresh power per bank at the nominal refresh rate.
    pub refresh_mw_per_bank: f64,
    pub refresh_rate_multiplier: f64,
    pub activate_nj: f64,
    pub read_nj: f64,
    pub write_nj: f64,
}

impl DramPowerParams {
    pub fn stacked_cache() -> Self {
        Self {
            banks: 8,
            background_mw_per_bank: 41.5,
            refresh_mw_per_bank: 4.25,
            refresh_rate_multiplier: 2.0,
            activate_nj: 0.25,
            read_nj: 1.0,
            write_nj: 1.0,
        }
    }

    pub fn offchip_ddr3() -> Self {
        Self {
            banks: 16,
            background_mw_per_bank: 20.0,
            refresh_mw_per_bank: 2.5,
            refresh_rate_multiplier: 1.0,
            activate_nj: 2.0,
            read_nj: 1.0,
            write_nj: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.background_mw_per_bank,
            self.refresh_mw_per_bank,
            self.refresh_rate_multiplier,
            self.activate_nj,
            self.read_nj,
            self.write_nj,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Power("power parameters must be finite and non-negative".into()));
        }
        if self.banks == 0 {
            return Err(Error::Power("bank count must be positive".into()));
        }
        Ok(())
    }

    pub fn refresh_mw_per_active_bank(&self) -> f64 {
        self.refresh_mw_per_bank * self.refresh_rate_multiplier
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    pub cache: DramPowerParams,
    pub offchip: DramPowerParams,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self { cache: DramPowerParams::stacked_cache(), offchip: DramPowerParams::offchip_ddr3() }
    }
}

const PARAM_KEYS: [&str; 7] = [
    "banks",
    "background_mw_per_bank",
    "refresh_mw_per_bank",
    "refresh_rate_multiplier",
    "activate_nj",
    "read_nj",
    "write_nj",
];

impl PowerModel {
    /// Keys are `cache.<name>` and `offchip.<name>`.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (prefix, p) in [("cache", &self.cache), ("offchip", &self.offchip)] {
            let vals = [
                p.banks.to_string(),
                p.background_mw_per_bank.to_string(),
                p.refresh_mw_per_bank.to_string(),
                p.refresh_rate_multiplier.to_string(),
                p.activate_nj.to_string(),
                p.read_nj.to_string(),
                p.write_nj.to_string(),
            ];
            for (k, v) in PARAM_KEYS.iter().zip(vals) {
                out.push((format!("{prefix}.{k}"), v));
            }
        }
        out
    }

    /// Apply one `key = value` pair; returns `Ok(false)` for keys this model does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let Some((prefix, name)) = key.split_once('.') else { return Ok(false) };
        let p = match prefix {
            "cache" => &mut self.cache,
            "offchip" => &mut self.offchip,
            _ => return Ok(false),
        };
        match name {
            "banks" => p.banks = kv::parse_value(key, value)?,
            "background_mw_per_bank" => p.background_mw_per_bank = kv::parse_value(key, value)?,
            "refresh_mw_per_bank" => p.refresh_mw_per_bank = kv::parse_value(key, value)?,
            "refresh_rate_multiplier" => p.refresh_rate_multiplier = kv::parse_value(key, value)?,
            "activate_nj" => p.activate_nj = kv::parse_value(key, value)?,
            "read_nj" => p.read_nj = kv::parse_value(key, value)?,
            "write_nj" => p.write_nj = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for (k, v) in kv::parse(text)? {
            if !m.set(&k, &v)? {
                return Err(Error::Power(format!("unknown key {k:?}")));
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn render(&self) -> String {
        kv::render(&self.to_pairs())
    }

    pub fn validate(&self) -> Result<()> {
        self.cache.validate()?;
        self.offchip.validate()
    }

    /// Per-event energies charged by power-down/up transitions.
    pub fn transition_energy(&self) -> TransitionEnergy {
        TransitionEnergy {
            row_read_nj: self.cache.activate_nj + self.cache.read_nj,
            line_migrate_nj: self.cache.read_nj + self.cache.activate_nj + self.cache.write_nj,
            line_writeback_nj: self.cache.read_nj + self.offchip.activate_nj + self.offchip.write_nj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEnergy {
    /// Activate plus tag read of one row during a walk.
    pub row_read_nj: f64,
    /// Read at the old bank, activate and write at the new bank.
    pub line_migrate_nj: f64,
    /// Cache read plus off-chip activate and write.
    pub line_writeback_nj: f64,
}

impl Default for TransitionEnergy {
    fn default() -> Self {
        PowerModel::default().transition_energy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActivityRates {
    pub activates_per_s: f64,
    pub reads_per_s: f64,
    pub writes_per_s: f64,
}

impl ActivityRates {
    pub const IDLE: ActivityRates = ActivityRates { activates_per_s: 0.0, reads_per_s: 0.0, writes_per_s: 0.0 };

    /// Traffic at which the default stacked-cache calibration splits 4:1
    /// static to dynamic with all 8 banks on.
    pub fn reference() -> Self {
        Self { activates_per_s: 80e6, reads_per_s: 64e6, writes_per_s: 16e6 }
    }

    fn validate(&self) -> Result<()> {
        let v = [self.activates_per_s, self.reads_per_s, self.writes_per_s];
        if v.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Power(format!("activity rates must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerBreakdown {
    pub background_mw: f64,
    pub refresh_mw: f64,
    pub activate_mw: f64,
    pub read_write_mw: f64,
    pub total_mw: f64,
}

impl PowerBreakdown {
    pub fn static_mw(&self) -> f64 {
        self.background_mw + self.refresh_mw
    }

    pub fn dynamic_mw(&self) -> f64 {
        self.activate_mw + self.read_write_mw
    }

    pub fn background_share(&self) -> f64 {
        if self.total_mw == 0.0 { 0.0 } else { self.background_mw / self.total_mw }
    }

    pub const CSV_HEADER: &'static str = "background_mw,refresh_mw,activate_mw,read_write_mw,total_mw";

    pub fn csv_fields(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.background_mw, self.refresh_mw, self.activate_mw, self.read_write_mw, self.total_mw
        )
    }
}

// rate [1/s] x energy [nJ] = 1e-9 J/s = 1e-6 mW
const NJ_PER_S_TO_MW: f64 = 1e-6;

/// Power of a DRAM device with `active_banks` banks powered.
pub fn dram_power(params: &DramPowerParams, active_banks: usize, activity: &ActivityRates) -> Result<PowerBreakdown> {
    params.validate()?;
    activity.validate()?;
    if active_banks > params.banks {
        return Err(Error::Power(format!("{active_banks} active banks exceed the {} available", params.banks)));
    }
    let n = active_banks as f64;
    let background_mw = n * params.background_mw_per_bank;
    let refresh_mw = n * params.refresh_mw_per_active_bank();
    let activate_mw = activity.activates_per_s * params.activate_nj * NJ_PER_S_TO_MW;
    let read_write_mw =
        (activity.reads_per_s * params.read_nj + activity.writes_per_s * params.write_nj) * NJ_PER_S_TO_MW;
    Ok(PowerBreakdown {
        background_mw,
        refresh_mw,
        activate_mw,
        read_write_mw,
        total_mw: background_mw + refresh_mw + activate_mw + read_write_mw,
    })
}

pub fn cache_power(model: &PowerModel, active_banks: usize, activity: &ActivityRates) -> Result<PowerBreakdown> {
    dram_power(&model.cache, active_banks, activity)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MemorySystemPower {
    pub cache_mw: f64,
    pub offchip_mw: f64,
    pub total_mw: f64,
    pub offchip: PowerBreakdown,
}

/// Cache power plus an always-fully-powered off-chip DRAM.
pub fn memory_system_power(
    model: &PowerModel,
    cache: &PowerBreakdown,
    offchip_activity: &ActivityRates,
) -> Result<MemorySystemPower> {
    let offchip = dram_power(&model.offchip, model.offchip.banks, offchip_activity)?;
    Ok(MemorySystemPower {
        cache_mw: cache.total_mw,
        offchip_mw: offchip.total_mw,
        total_mw: cache.total_mw + offchip.total_mw,
        offchip,
    })
}
