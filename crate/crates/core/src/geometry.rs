//! Cache geometry and physical address decomposition.
//!
//! A line address is split, from the least significant bit upwards, into
//! the channel index and the `set_key` (everything above the channel bits).
//! Inside the `set_key` the lowest `log2(banks_per_channel)` bits are the
//! bank-selection field used by bit-select mapping, and the next
//! `log2(rows_per_bank)` bits are the row index. Keeping the row bits above
//! the bank bits means modulo-k bank selection never correlates with the
//! row a set lands in.

use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheGeometry {
    pub channels: usize,
    pub banks_per_channel: usize,
    pub rows_per_bank: usize,
    pub row_bytes: usize,
    pub line_bytes: usize,
    /// Ways per row left after reserving slots for the tags.
    pub data_ways: usize,
}

impl Default for CacheGeometry {
    /// 4 channels x 8 banks x 2048 rows of 2 KB, 64 B lines, 29 data ways (128 MB).
    fn default() -> Self {
        Self {
            channels: 4,
            banks_per_channel: 8,
            rows_per_bank: 2048,
            row_bytes: 2048,
            line_bytes: 64,
            data_ways: 29,
        }
    }
}

impl CacheGeometry {
    pub fn validate(&self) -> Result<()> {
        let pow2 = [
            ("channels", self.channels),
            ("banks_per_channel", self.banks_per_channel),
            ("rows_per_bank", self.rows_per_bank),
            ("row_bytes", self.row_bytes),
            ("line_bytes", self.line_bytes),
        ];
        for (name, v) in pow2 {
            if v == 0 || !v.is_power_of_two() {
                return Err(Error::Geometry(format!("{name} = {v} is not a power of two")));
            }
        }
        if self.banks_per_channel > 32 {
            return Err(Error::Geometry("at most 32 banks per channel are supported".into()));
        }
        if self.data_ways == 0 || self.data_ways > u8::MAX as usize {
            return Err(Error::Geometry(format!("data_ways = {} out of range", self.data_ways)));
        }
        if self.row_bytes < self.line_bytes {
            return Err(Error::Geometry("row smaller than a line".into()));
        }
        if self.slots_per_row() < self.data_ways + 1 {
            return Err(Error::Geometry(format!(
                "row holds {} line slots, need data_ways + 1 = {} (one slot for tags)",
                self.slots_per_row(),
                self.data_ways + 1
            )));
        }
        Ok(())
    }

    pub fn slots_per_row(&self) -> usize {
        self.row_bytes / self.line_bytes
    }

    pub fn total_banks(&self) -> usize {
        self.channels * self.banks_per_channel
    }

    /// Raw DRAM capacity in bytes (tags included).
    pub fn capacity_bytes(&self) -> u64 {
        (self.channels * self.banks_per_channel * self.rows_per_bank * self.row_bytes) as u64
    }

    /// Number of data lines the cache can hold.
    pub fn data_lines(&self) -> u64 {
        (self.channels * self.banks_per_channel * self.rows_per_bank * self.data_ways) as u64
    }

    /// Data lines held by `active_banks` banks in every channel.
    pub fn data_lines_for(&self, active_banks: usize) -> u64 {
        (self.channels * active_banks * self.rows_per_bank * self.data_ways) as u64
    }

    pub fn line_bits(&self) -> u32 {
        self.line_bytes.trailing_zeros()
    }

    pub fn channel_bits(&self) -> u32 {
        self.channels.trailing_zeros()
    }

    pub fn bank_bits(&self) -> u32 {
        self.banks_per_channel.trailing_zeros()
    }

    pub fn row_bits(&self) -> u32 {
        self.rows_per_bank.trailing_zeros()
    }

    /// Decode a byte address. Offset bits are masked off.
    pub fn decode(&self, address: u64) -> DecodedAddress {
        self.decode_line(address >> self.line_bits())
    }

    /// Decode a line address (byte address shifted right by the line offset).
    pub fn decode_line(&self, line: u64) -> DecodedAddress {
        let channel = (line & (self.channels as u64 - 1)) as usize;
        let set_key = line >> self.channel_bits();
        let row_index = ((set_key >> self.bank_bits()) & (self.rows_per_bank as u64 - 1)) as usize;
        DecodedAddress {
            channel,
            set_key,
            row_index,
            tag: line,
        }
    }

    /// Reconstruct the line-aligned byte address from decoded fields.
    pub fn encode(&self, d: &DecodedAddress) -> u64 {
        let line = (d.set_key << self.channel_bits()) | d.channel as u64;
        line << self.line_bits()
    }

    /// The bank bit-select mapping would choose with every bank powered.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("geometry.channels", self.channels),
            ("geometry.banks_per_channel", self.banks_per_channel),
            ("geometry.rows_per_bank", self.rows_per_bank),
            ("geometry.row_bytes", self.row_bytes),
            ("geometry.line_bytes", self.line_bytes),
            ("geometry.data_ways", self.data_ways),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    /// Apply one `geometry.*` key; `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let field = match key {
            "geometry.channels" => &mut self.channels,
            "geometry.banks_per_channel" => &mut self.banks_per_channel,
            "geometry.rows_per_bank" => &mut self.rows_per_bank,
            "geometry.row_bytes" => &mut self.row_bytes,
            "geometry.line_bytes" => &mut self.line_bytes,
            "geometry.data_ways" => &mut self.data_ways,
            _ => return Ok(false),
        };
        *field = kv::parse_value(key, value)?;
        Ok(true)
    }

    pub fn home_bank(&self, set_key: u64) -> usize {
        (set_key & (self.banks_per_channel as u64 - 1)) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecodedAddress {
    pub channel: usize,
    /// All line-address bits above the channel bits; identifies the logical set.
    pub set_key: u64,
    pub row_index: usize,
    /// Full line address. Wider than a hardware tag, identical hit/miss behaviour.
    pub tag: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_128mb() {
        let g = CacheGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.capacity_bytes(), 128 << 20);
        assert_eq!(g.slots_per_row(), 32);
        assert_eq!(g.total_banks(), 32);
    }

    #[test]
    fn decode_zero() {
        let d = CacheGeometry::default().decode(0);
        assert_eq!((d.channel, d.row_index, d.set_key), (0, 0, 0));
    }

    #[test]
    fn next_line_lands_on_next_channel() {
        let g = CacheGeometry::default();
        assert_eq!(g.decode(0x40).channel, 1);
        assert_eq!(g.decode(0x80).channel, 2);
        assert_eq!(g.decode(0x100).channel, 0);
        assert_eq!(g.decode(0x7f).channel, 1);
    }

    #[test]
    fn far_addresses_differ_in_tag() {
        let g = CacheGeometry::default();
        let a = g.decode(0x1_0000_0040);
        let b = g.decode(0x40);
        assert_ne!(a.tag, b.tag);
        assert_eq!(a.row_index, b.row_index);
        assert_eq!(a.channel, b.channel);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut g = CacheGeometry::default();
        g.data_ways = 32;
        assert!(g.validate().is_err());
        let mut g = CacheGeometry::default();
        g.channels = 3;
        assert!(g.validate().is_err());
    }

    #[test]
    fn row_bits_sit_above_bank_bits() {
        let g = CacheGeometry::default();
        // consecutive set keys walk the banks of one row first
        for k in 0..8u64 {
            let d = g.decode_line(k << 2);
            assert_eq!(d.row_index, 0);
            assert_eq!(g.home_bank(d.set_key), k as usize);
        }
        assert_eq!(g.decode_line(8 << 2).row_index, 1);
    }
}
