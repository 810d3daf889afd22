//! Synthetic request streams and trace files.
//!
//! Text traces are CSV with the header `app,addr_hex,op,instr_delta`:
//!
//! ```text
//! app,addr_hex,op,instr_delta
//! 0,0x1fc0,R,12
//! 1,0x2000,W,
//! ```
//!
//! An empty `instr_delta` means the record carries no instruction count.
//!
//! Binary traces are a sequence of 16-byte little-endian records:
//!
//! | bytes  | field                                         |
//! |--------|-----------------------------------------------|
//! | 0..8   | byte address, `u64`                           |
//! | 8..12  | instruction delta, `u32`; `u32::MAX` = absent |
//! | 12     | app id, `u8`                                  |
//! | 13     | op: 0 = read, 1 = write                       |
//! | 14..16 | reserved, zero                                |

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv;

pub const TEXT_HEADER: &str = "app,addr_hex,op,instr_delta";
pub const BINARY_RECORD_BYTES: usize = 16;
const NO_INSTR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub app_id: u8,
    /// Byte address; offset bits are ignored by the cache.
    pub line_address: u64,
    pub op: Op,
    pub instr_delta: Option<u32>,
}

impl TraceRecord {
    pub fn read(line_address: u64) -> Self {
        Self { app_id: 0, line_address, op: Op::Read, instr_delta: None }
    }

    pub fn write(line_address: u64) -> Self {
        Self { app_id: 0, line_address, op: Op::Write, instr_delta: None }
    }

    pub fn is_write(&self) -> bool {
        self.op == Op::Write
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternKind {
    Uniform,
    Zipf,
    Strided,
    /// Alternates every `phase_length` records between the whole footprint
    /// and its first sixteenth, both uniform.
    Phased,
}

impl PatternKind {
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::Uniform => "uniform",
            PatternKind::Zipf => "zipf",
            PatternKind::Strided => "strided",
            PatternKind::Phased => "phased",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(PatternKind::Uniform),
            "zipf" => Ok(PatternKind::Zipf),
            "strided" => Ok(PatternKind::Strided),
            "phased" => Ok(PatternKind::Phased),
            _ => Err(Error::Parse(format!("unknown workload kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: PatternKind,
    pub footprint_bytes: u64,
    pub zipf_alpha: f64,
    pub stride_bytes: u64,
    pub write_fraction: f64,
    pub length: u64,
    pub seed: u64,
    pub line_bytes: u64,
    pub phase_length: u64,
    /// Records are tagged with app ids round-robin over this many apps.
    pub apps: u8,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: PatternKind::Uniform,
            footprint_bytes: 64 << 20,
            zipf_alpha: 1.0,
            stride_bytes: 2048,
            write_fraction: 0.0,
            length: 1_000_000,
            seed: 1,
            line_bytes: 64,
            phase_length: 100_000,
            apps: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.line_bytes == 0 || !self.line_bytes.is_power_of_two() {
            return Err(Error::Workload(format!("line size {} is not a power of two", self.line_bytes)));
        }
        if self.footprint_bytes < self.line_bytes {
            return Err(Error::Workload(format!("footprint {} B is smaller than one line", self.footprint_bytes)));
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return Err(Error::Workload(format!("write fraction {} outside [0, 1]", self.write_fraction)));
        }
        if self.kind == PatternKind::Zipf && !(self.zipf_alpha >= 0.0 && self.zipf_alpha.is_finite()) {
            return Err(Error::Workload(format!("zipf alpha {} must be finite and >= 0", self.zipf_alpha)));
        }
        if self.kind == PatternKind::Strided && self.stride_bytes == 0 {
            return Err(Error::Workload("stride must be positive".into()));
        }
        if self.kind == PatternKind::Phased && self.phase_length == 0 {
            return Err(Error::Workload("phase length must be positive".into()));
        }
        if self.apps == 0 {
            return Err(Error::Workload("need at least one app".into()));
        }
        Ok(())
    }

    pub fn lines(&self) -> u64 {
        self.footprint_bytes / self.line_bytes
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("workload.kind", self.kind.to_string()),
            ("workload.footprint_bytes", self.footprint_bytes.to_string()),
            ("workload.zipf_alpha", self.zipf_alpha.to_string()),
            ("workload.stride_bytes", self.stride_bytes.to_string()),
            ("workload.write_fraction", self.write_fraction.to_string()),
            ("workload.length", self.length.to_string()),
            ("workload.seed", self.seed.to_string()),
            ("workload.line_bytes", self.line_bytes.to_string()),
            ("workload.phase_length", self.phase_length.to_string()),
            ("workload.apps", self.apps.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "workload.kind" => self.kind = value.parse()?,
            "workload.footprint_bytes" => self.footprint_bytes = kv::parse_value(key, value)?,
            "workload.zipf_alpha" => self.zipf_alpha = kv::parse_value(key, value)?,
            "workload.stride_bytes" => self.stride_bytes = kv::parse_value(key, value)?,
            "workload.write_fraction" => self.write_fraction = kv::parse_value(key, value)?,
            "workload.length" => self.length = kv::parse_value(key, value)?,
            "workload.seed" => self.seed = kv::parse_value(key, value)?,
            "workload.line_bytes" => self.line_bytes = kv::parse_value(key, value)?,
            "workload.phase_length" => self.phase_length = kv::parse_value(key, value)?,
            "workload.apps" => self.apps = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Deterministic record stream for a [`SyntheticSpec`].
#[derive(Debug, Clone)]
pub struct Generator {
    spec: SyntheticSpec,
    rng: ChaCha8Rng,
    /// Cumulative rank weights for zipf.
    cumulative: Vec<f64>,
    emitted: u64,
}

impl Generator {
    fn next_line(&mut self) -> u64 {
        let lines = self.spec.lines();
        match self.spec.kind {
            PatternKind::Uniform => self.rng.gen_range(0..lines),
            PatternKind::Zipf => {
                let total = *self.cumulative.last().expect("nonempty table");
                let u = self.rng.gen::<f64>() * total;
                let r = self.cumulative.partition_point(|&c| c <= u);
                (r as u64).min(lines - 1)
            }
            PatternKind::Strided => {
                let step = self.spec.stride_bytes / self.spec.line_bytes;
                let step = step.max(1);
                (self.emitted.wrapping_mul(step)) % lines
            }
            PatternKind::Phased => {
                let phase = self.emitted / self.spec.phase_length;
                let span = if phase % 2 == 0 { lines } else { (lines / 16).max(1) };
                self.rng.gen_range(0..span)
            }
        }
    }
}

impl Iterator for Generator {
    type Item = TraceRecord;

    fn next(&mut self) -> Option<TraceRecord> {
        if self.emitted >= self.spec.length {
            return None;
        }
        let line = self.next_line();
        let op = if self.spec.write_fraction > 0.0 && self.rng.gen_bool(self.spec.write_fraction) {
            Op::Write
        } else {
            Op::Read
        };
        let app_id = (self.emitted % self.spec.apps as u64) as u8;
        self.emitted += 1;
        Some(TraceRecord { app_id, line_address: line * self.spec.line_bytes, op, instr_delta: None })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.spec.length - self.emitted) as usize;
        (left, Some(left))
    }
}

/// Stream of exactly `spec.length` records; identical for identical specs.
pub fn generate(spec: &SyntheticSpec) -> Result<Generator> {
    spec.validate()?;
    let cumulative = if spec.kind == PatternKind::Zipf {
        let mut acc = 0.0;
        (1..=spec.lines())
            .map(|r| {
                acc += (r as f64).powf(-spec.zipf_alpha);
                acc
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Generator { spec: *spec, rng: ChaCha8Rng::seed_from_u64(spec.seed), cumulative, emitted: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Text,
    Binary,
}

impl TraceFormat {
    /// `.bin` and `.trc` are binary, anything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("trc") => TraceFormat::Binary,
            _ => TraceFormat::Text,
        }
    }
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "csv" => Ok(TraceFormat::Text),
            "binary" | "bin" => Ok(TraceFormat::Binary),
            _ => Err(Error::Parse(format!("unknown trace format {s:?}"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Text => "text",
            TraceFormat::Binary => "binary",
        })
    }
}

fn parse_text_line(n: usize, line: &str) -> Result<TraceRecord> {
    let err = |msg: String| Error::TraceParse { line: n, msg };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    }
    let app_id = fields[0].parse::<u8>().map_err(|e| err(format!("app {:?}: {e}", fields[0])))?;
    let hex = fields[1].strip_prefix("0x").or_else(|| fields[1].strip_prefix("0X")).unwrap_or(fields[1]);
    let line_address = u64::from_str_radix(hex, 16).map_err(|e| err(format!("address {:?}: {e}", fields[1])))?;
    let op = match fields[2] {
        "R" | "r" => Op::Read,
        "W" | "w" => Op::Write,
        other => return Err(err(format!("op {other:?} is not R or W"))),
    };
    let instr_delta = if fields[3].is_empty() {
        None
    } else {
        Some(fields[3].parse::<u32>().map_err(|e| err(format!("instr_delta {:?}: {e}", fields[3])))?)
    };
    Ok(TraceRecord { app_id, line_address, op, instr_delta })
}

pub fn read_text(reader: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || (i == 0 && t == TEXT_HEADER) {
            continue;
        }
        out.push(parse_text_line(i + 1, t)?);
    }
    Ok(out)
}

pub fn write_text<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a TraceRecord>) -> Result<()> {
    writeln!(w, "{TEXT_HEADER}")?;
    for r in records {
        let op = if r.is_write() { 'W' } else { 'R' };
        match r.instr_delta {
            Some(d) => writeln!(w, "{},{:#x},{op},{d}", r.app_id, r.line_address)?,
            None => writeln!(w, "{},{:#x},{op},", r.app_id, r.line_address)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn encode_binary(r: &TraceRecord) -> Result<[u8; BINARY_RECORD_BYTES]> {
    let delta = match r.instr_delta {
        Some(NO_INSTR) => {
            return Err(Error::Workload(format!("instr_delta {NO_INSTR} is reserved in binary traces")));
        }
        Some(d) => d,
        None => NO_INSTR,
    };
    let mut b = [0u8; BINARY_RECORD_BYTES];
    b[0..8].copy_from_slice(&r.line_address.to_le_bytes());
    b[8..12].copy_from_slice(&delta.to_le_bytes());
    b[12] = r.app_id;
    b[13] = r.is_write() as u8;
    Ok(b)
}

/// Decode record number `n` (1-based, for error messages).
pub fn decode_binary(n: usize, b: &[u8; BINARY_RECORD_BYTES]) -> Result<TraceRecord> {
    let err = |msg: String| Error::TraceParse { line: n, msg };
    let line_address = u64::from_le_bytes(b[0..8].try_into().expect("8 bytes"));
    let delta = u32::from_le_bytes(b[8..12].try_into().expect("4 bytes"));
    let op = match b[13] {
        0 => Op::Read,
        1 => Op::Write,
        v => return Err(err(format!("op byte {v} is not 0 or 1"))),
    };
    if b[14] != 0 || b[15] != 0 {
        return Err(err("reserved bytes are not zero".into()));
    }
    Ok(TraceRecord { app_id: b[12], line_address, op, instr_delta: (delta != NO_INSTR).then_some(delta) })
}

pub fn read_binary(mut reader: impl Read) -> Result<Vec<TraceRecord>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % BINARY_RECORD_BYTES != 0 {
        return Err(Error::TraceParse {
            line: bytes.len() / BINARY_RECORD_BYTES + 1,
            msg: format!("truncated record: {} trailing bytes", bytes.len() % BINARY_RECORD_BYTES),
        });
    }
    bytes
        .chunks_exact(BINARY_RECORD_BYTES)
        .enumerate()
        .map(|(i, c)| decode_binary(i + 1, c.try_into().expect("exact chunk")))
        .collect()
}

pub fn write_binary<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a TraceRecord>) -> Result<()> {
    for r in records {
        w.write_all(&encode_binary(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match format {
        TraceFormat::Text => read_text(BufReader::new(f)),
        TraceFormat::Binary => read_binary(BufReader::new(f)),
    }
}

pub fn write_trace(records: &[TraceRecord], path: &Path, format: TraceFormat) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let w = BufWriter::new(f);
    match format {
        TraceFormat::Text => write_text(w, records),
        TraceFormat::Binary => write_binary(w, records),
    }
}
