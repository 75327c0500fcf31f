//! Kangxi radical lookup by codepoint range.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_RADICALS: usize = 214;
/// Rows in the radical embedding table: index 0 is shared by every
/// character outside the lookup range.
pub const RADICAL_ROWS: usize = NUM_RADICALS + 1;

const CJK_FIRST: u32 = 0x4E00;
const CJK_LAST: u32 = 0x9FFF;

const BUILTIN: &str = include_str!("../../data/kangxi_ranges.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadicalTable {
    /// Sorted, non-overlapping `(first, last, radical)` ranges.
    ranges: Vec<(u32, u32, u16)>,
}

impl RadicalTable {
    /// The table shipped with the crate, covering U+4E00..U+9FA5.
    pub fn builtin() -> &'static RadicalTable {
        static TABLE: OnceLock<RadicalTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            RadicalTable::parse(BUILTIN, Path::new("<builtin kangxi table>"))
                .expect("builtin radical table is valid")
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut ranges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::parse(origin, lineno + 1, msg);
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [first, last, idx] = fields[..] else {
                return Err(err("expected `U+XXXX U+YYYY index`"));
            };
            let first = parse_codepoint(first).ok_or_else(|| err("bad codepoint"))?;
            let last = parse_codepoint(last).ok_or_else(|| err("bad codepoint"))?;
            let idx: u16 = idx.parse().map_err(|_| err("bad radical index"))?;
            if !(1..=NUM_RADICALS as u16).contains(&idx) {
                return Err(err("radical index must be in 1..=214"));
            }
            if first > last || first < CJK_FIRST || last > CJK_LAST {
                return Err(err("range must lie inside U+4E00..U+9FFF"));
            }
            ranges.push((first, last, idx));
        }
        ranges.sort_unstable();
        if ranges.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(Error::parse(origin, 0, "overlapping ranges"));
        }
        Ok(Self { ranges })
    }

    /// Radical index in `1..=214`, or 0 for characters outside the table.
    pub fn radical_of(&self, ch: char) -> usize {
        let cp = ch as u32;
        if !(CJK_FIRST..=CJK_LAST).contains(&cp) {
            return 0;
        }
        let pos = self.ranges.partition_point(|r| r.0 <= cp);
        match pos.checked_sub(1).map(|p| self.ranges[p]) {
            Some((_, last, idx)) if cp <= last => idx as usize,
            _ => 0,
        }
    }
}

/// Radical index of `ch` under the builtin table.
pub fn radical_of(ch: char) -> usize {
    RadicalTable::builtin().radical_of(ch)
}

pub(crate) fn parse_codepoint(s: &str) -> Option<u32> {
    let hex = s.strip_prefix("U+").or_else(|| s.strip_prefix("u+"))?;
    u32::from_str_radix(hex, 16).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metal_characters_share_a_radical() {
        let r = radical_of('银');
        assert_eq!(r, radical_of('铁'));
        assert_eq!(r, radical_of('针'));
        assert_eq!(r, 167);
    }

    #[test]
    fn non_chinese_maps_to_zero() {
        assert_eq!(radical_of('A'), 0);
        assert_eq!(radical_of('。'), 0);
        // Compatibility ideograph outside the unified block.
        assert_eq!(radical_of('\u{F900}'), 0);
    }

    #[test]
    fn distinct_radicals() {
        assert_eq!(radical_of('夏'), 35);
        assert_eq!(radical_of('天'), 37);
        assert_eq!(radical_of('的'), 106);
        assert_eq!(radical_of('一'), 1);
        assert_eq!(radical_of('龥'), 214);
    }

    #[test]
    fn builtin_covers_every_radical() {
        let t = RadicalTable::builtin();
        assert_eq!(t.ranges.len(), NUM_RADICALS);
        for cp in CJK_FIRST..=CJK_LAST {
            let r = t.radical_of(char::from_u32(cp).unwrap());
            assert!(r <= NUM_RADICALS);
        }
    }

    #[test]
    fn parse_rejects_bad_lines() {
        let p = Path::new("r.txt");
        assert!(RadicalTable::parse("U+4E00 U+4E27 215\n", p).is_err());
        assert!(RadicalTable::parse("U+0041 U+0042 1\n", p).is_err());
        assert!(RadicalTable::parse("U+4E00 U+4E27\n", p).is_err());
        assert!(RadicalTable::parse("U+4E00 U+4E27 1\nU+4E20 U+4E30 2\n", p).is_err());
        let t = RadicalTable::parse("# c\nU+4E00 U+4E01 7\n", p).unwrap();
        assert_eq!(t.radical_of('\u{4E01}'), 7);
        assert_eq!(t.radical_of('\u{4E02}'), 0);
    }
}
