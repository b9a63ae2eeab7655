use std::io::{BufRead, Read, Write};

use super::ValueTable;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VTBL";
const VERSION: u32 = 1;

impl ValueTable {
    /// Flat `t,cell,value` CSV including the terminal row. Values use the
    /// shortest decimal form that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,cell,value")?;
        for t in 0..=self.horizon() {
            for (cell, v) in self.row(t).iter().enumerate() {
                writeln!(out, "{t},{cell},{v}")?;
            }
        }
        Ok(())
    }

    /// Reads the [`write_csv`](Self::write_csv) layout. The shape is inferred
    /// from the largest indices and every `(t, cell)` must appear exactly once.
    pub fn read_csv<R: BufRead>(input: R, gamma: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 {
                if line != "t,cell,value" {
                    return Err(bad_line(lineno, "expected header `t,cell,value`"));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(t), Some(cell), Some(value), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad_line(lineno, "expected three fields"));
            };
            let t: usize = t.parse().map_err(|_| bad_line(lineno, "bad time index"))?;
            let cell: usize = cell
                .parse()
                .map_err(|_| bad_line(lineno, "bad cell index"))?;
            let value: f64 = value.parse().map_err(|_| bad_line(lineno, "bad value"))?;
            entries.push((t, cell, value));
        }
        let horizon = entries
            .iter()
            .map(|e| e.0)
            .max()
            .ok_or_else(|| Error::domain("empty value table"))?;
        let n_cells = entries.iter().map(|e| e.1).max().unwrap_or(0) + 1;
        let mut values = vec![0.0; (horizon + 1) * n_cells];
        let mut seen = vec![false; values.len()];
        for (t, cell, v) in entries {
            let k = t * n_cells + cell;
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::domain(format!("duplicate entry for ({t}, {cell})")));
            }
            values[k] = v;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::domain(format!(
                "missing entry for ({}, {})",
                k / n_cells,
                k % n_cells
            )));
        }
        ValueTable::from_raw(horizon, n_cells, gamma, values)
    }

    /// Little-endian binary layout: magic, version, horizon, cells, gamma, values.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.horizon() as u64).to_le_bytes())?;
        out.write_all(&(self.n_cells() as u64).to_le_bytes())?;
        out.write_all(&self.gamma().to_le_bytes())?;
        for v in self.values() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::domain("not a value table (bad magic)"));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::domain(format!(
                "unsupported value table version {version}"
            )));
        }
        let mut quad = [0u8; 8];
        input.read_exact(&mut quad)?;
        let horizon = u64::from_le_bytes(quad) as usize;
        input.read_exact(&mut quad)?;
        let n_cells = u64::from_le_bytes(quad) as usize;
        input.read_exact(&mut quad)?;
        let gamma = f64::from_le_bytes(quad);
        let len = horizon
            .checked_add(1)
            .and_then(|r| r.checked_mul(n_cells))
            .ok_or_else(|| Error::domain("value table shape overflows"))?;
        let mut values = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            input.read_exact(&mut quad)?;
            values.push(f64::from_le_bytes(quad));
        }
        ValueTable::from_raw(horizon, n_cells, gamma, values)
    }
}

fn bad_line(lineno: usize, what: &str) -> Error {
    Error::domain(format!("value table CSV line {}: {what}", lineno + 1))
}
