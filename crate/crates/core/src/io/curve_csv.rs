//! Curve CSV: `t_start_min,t_end_min,value`, one row per frame.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{SampledCurve, TimeGrid};

pub const CURVE_HEADER: &str = "t_start_min,t_end_min,value";

/// Shortest round-trip float formatting; never locale dependent.
pub fn encode_curve(c: &SampledCurve) -> String {
    let mut s = String::with_capacity(32 * c.len());
    s.push_str(CURVE_HEADER);
    s.push('\n');
    for ((a, b), v) in c.grid.starts().iter().zip(c.grid.ends()).zip(&c.values) {
        let _ = writeln!(s, "{a:?},{b:?},{v:?}");
    }
    s
}

pub fn decode_curve(text: &str, path: &Path) -> Result<SampledCurve> {
    let mut offset = 0u64;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end_matches(['\n', '\r']) != CURVE_HEADER {
        return Err(Error::format(path, 0, format!("expected header '{CURVE_HEADER}'")));
    }
    offset += header.len() as u64;
    let (mut starts, mut ends, mut values) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines {
        let row = line.trim_end_matches(['\n', '\r']);
        if !row.is_empty() {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::format(path, offset, format!("expected 3 fields, found {}", fields.len())));
            }
            let mut parsed = [0.0; 3];
            let mut col = 0u64;
            for (i, f) in fields.iter().enumerate() {
                parsed[i] = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(path, offset + col, format!("'{f}' is not a number")))?;
                col += f.len() as u64 + 1;
            }
            starts.push(parsed[0]);
            ends.push(parsed[1]);
            values.push(parsed[2]);
        }
        offset += line.len() as u64;
    }
    let grid = TimeGrid::new(starts, ends).map_err(|e| Error::format(path, offset, e.to_string()))?;
    SampledCurve::new(grid, values)
}

pub fn write_curve(path: &Path, c: &SampledCurve) -> Result<()> {
    fs::write(path, encode_curve(c)).map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<SampledCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_curve(&text, path)
}
