//! Closed-form cost of bank reconfiguration.
//!
//! A run retires `N` instructions, half with all 8 banks powered and half
//! with `b` banks, and reconfigures `M = N(millions) * tpmi` times in each
//! direction:
//!
//! ```text
//! time   = N / (2 ipc8) + N / (2 ipcB) + M (T_up + T_down)
//! energy = t8 P8 + tB PB + M (E_up + E_down)
//! ```
//!
//! where `t8` and `tB` are the two steady phases of the time expression. The
//! energy form mirrors the time form; transition times and energies are meant
//! to be averages measured by the simulator.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInputs {
    /// Instructions retired, in millions.
    pub n_millions: f64,
    pub b: usize,
    pub ipc8: f64,
    pub ipc_b: f64,
    pub t_up: f64,
    pub t_down: f64,
    /// Transitions per million instructions.
    pub tpmi: f64,
    pub p8_mw: f64,
    pub pb_mw: f64,
    pub e_up_nj: f64,
    pub e_down_nj: f64,
    pub ns_per_cycle: f64,
}

impl Default for ModelInputs {
    fn default() -> Self {
        Self {
            n_millions: 1000.0,
            b: 4,
            ipc8: 1.0,
            ipc_b: 1.0,
            t_up: 0.0,
            t_down: 0.0,
            tpmi: 0.0,
            p8_mw: 0.0,
            pb_mw: 0.0,
            e_up_nj: 0.0,
            e_down_nj: 0.0,
            ns_per_cycle: 1.0,
        }
    }
}

impl ModelInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.ipc8 > 0.0 && self.ipc_b > 0.0) {
            return Err(Error::Model(format!("ipc values must be positive: {} {}", self.ipc8, self.ipc_b)));
        }
        if !(self.tpmi >= 0.0) || !(self.n_millions >= 0.0) {
            return Err(Error::Model("tpmi and N must be non-negative".into()));
        }
        let rest = [self.t_up, self.t_down, self.p8_mw, self.pb_mw, self.e_up_nj, self.e_down_nj, self.ns_per_cycle];
        if rest.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Model("costs and powers must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn transitions(&self) -> f64 {
        self.n_millions * self.tpmi
    }

    fn phase_cycles(&self) -> (f64, f64) {
        let n = self.n_millions * 1e6;
        (n / (2.0 * self.ipc8), n / (2.0 * self.ipc_b))
    }
}

/// Cycles to retire the run.
pub fn execution_time(m: &ModelInputs) -> Result<f64> {
    m.validate()?;
    let (t8, tb) = m.phase_cycles();
    Ok(t8 + tb + m.transitions() * (m.t_up + m.t_down))
}

/// Energy of the run in nJ. mW x ns = 1e-3 nJ.
pub fn model_energy(m: &ModelInputs) -> Result<f64> {
    m.validate()?;
    let (t8, tb) = m.phase_cycles();
    let steady = (t8 * m.p8_mw + tb * m.pb_mw) * m.ns_per_cycle * 1e-3;
    Ok(steady + m.transitions() * (m.e_up_nj + m.e_down_nj))
}

/// The tpmi at which `a` and `b` take equal time, if any is non-negative.
pub fn time_crossover(a: &ModelInputs, b: &ModelInputs) -> Result<Option<f64>> {
    let a0 = execution_time(&ModelInputs { tpmi: 0.0, ..*a })?;
    let b0 = execution_time(&ModelInputs { tpmi: 0.0, ..*b })?;
    let sa = a.n_millions * (a.t_up + a.t_down);
    let sb = b.n_millions * (b.t_up + b.t_down);
    if sa == sb {
        return Ok(None);
    }
    let x = (b0 - a0) / (sa - sb);
    Ok((x >= 0.0).then_some(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: String,
    pub b: usize,
    pub tpmi: f64,
    pub time_cycles: f64,
    pub energy_nj: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "scheme,b,tpmi,time_cycles,energy_nj";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:.3},{:.3}", self.scheme, self.b, self.tpmi, self.time_cycles, self.energy_nj)
    }
}

/// Every (scheme inputs, tpmi) combination, in input order.
pub fn tpmi_sweep(schemes: &[(String, ModelInputs)], tpmis: &[f64]) -> Result<Vec<SweepRow>> {
    let mut out = Vec::with_capacity(schemes.len() * tpmis.len());
    for (name, inputs) in schemes {
        for &tpmi in tpmis {
            let m = ModelInputs { tpmi, ..*inputs };
            out.push(SweepRow {
                scheme: name.clone(),
                b: m.b,
                tpmi,
                time_cycles: execution_time(&m)?,
                energy_nj: model_energy(&m)?,
            });
        }
    }
    Ok(out)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SweepRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
