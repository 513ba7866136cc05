//! On-disk formats: whitespace-delimited decimal text for PDP matrices
//! and CIR tap lists, JSON for everything structured.
//!
//! Decimal fields use Rust's default float formatting, which emits the
//! shortest string that parses back to the same f64, so text round-trips
//! are bit exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::semantic::{ChannelRealization, DelayGrid, SemanticLabel};

const PDP_MAGIC: &str = "#pdp";
const CIR_MAGIC: &str = "#cir";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Writes a PDP matrix: a header carrying the bin width, then one
/// whitespace-separated row of linear powers per snapshot.
pub fn write_pdp<W: Write>(w: &mut W, pdp: &[Vec<f64>], delay_bin_ns: f64) -> Result<()> {
    if pdp.is_empty() {
        return Err(Error::EmptyInput("PDP matrix is empty".into()));
    }
    let n_bins = pdp[0].len();
    if pdp.iter().any(|row| row.len() != n_bins) {
        return Err(Error::Validation("ragged PDP matrix".into()));
    }
    writeln!(w, "{PDP_MAGIC} delay_bin_ns={delay_bin_ns} n_bins={n_bins}")?;
    for row in pdp {
        let mut first = true;
        for &p in row {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{p}")?;
            first = false;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a PDP matrix written by [`write_pdp`]. Returns the matrix and
/// the delay bin width in ns.
pub fn read_pdp<R: Read>(r: R) -> Result<(Vec<Vec<f64>>, f64)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header"))?;
    let header = header?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(PDP_MAGIC) {
        return Err(parse_err(1, format!("expected '{PDP_MAGIC}' header")));
    }
    let mut delay_bin_ns = None;
    let mut n_bins = None;
    for field in fields {
        match field.split_once('=') {
            Some(("delay_bin_ns", v)) => {
                delay_bin_ns = Some(v.parse().map_err(|e| parse_err(1, format!("delay_bin_ns: {e}")))?)
            }
            Some(("n_bins", v)) => {
                n_bins = Some(v.parse().map_err(|e| parse_err(1, format!("n_bins: {e}")))?)
            }
            _ => return Err(parse_err(1, format!("unknown header field '{field}'"))),
        }
    }
    let delay_bin_ns: f64 = delay_bin_ns.ok_or_else(|| parse_err(1, "missing delay_bin_ns"))?;
    let n_bins: usize = n_bins.ok_or_else(|| parse_err(1, "missing n_bins"))?;
    if delay_bin_ns <= 0.0 || n_bins == 0 {
        return Err(parse_err(1, "delay_bin_ns and n_bins must be positive"));
    }
    let mut pdp = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| parse_err(idx + 1, format!("bad number '{tok}': {e}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != n_bins {
            return Err(parse_err(
                idx + 1,
                format!("expected {n_bins} bins, found {}", row.len()),
            ));
        }
        if let Some(&bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(parse_err(idx + 1, format!("power {bad} is not a finite nonnegative value")));
        }
        pdp.push(row);
    }
    if pdp.is_empty() {
        return Err(parse_err(2, "no snapshot rows"));
    }
    Ok((pdp, delay_bin_ns))
}

/// One exported CIR tap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirRow {
    pub snapshot: usize,
    pub bin: usize,
    pub re: f64,
    pub im: f64,
    /// Label of the strongest path landing in this bin.
    pub label: SemanticLabel,
}

/// Exports a realization as one tap per occupied delay bin:
/// `snapshot bin re im label`. Paths sharing a bin sum coherently; the
/// strongest contributor supplies the label.
pub fn write_cir<W: Write>(w: &mut W, r: &ChannelRealization, grid: &DelayGrid) -> Result<()> {
    writeln!(
        w,
        "{CIR_MAGIC} delay_bin_ns={} snapshot_rate_hz={} seed={}",
        r.delay_bin_ns, r.snapshot_rate_hz, r.seed
    )?;
    for snap in &r.snapshots {
        let mut taps: std::collections::BTreeMap<usize, (f64, f64, f64, SemanticLabel)> =
            std::collections::BTreeMap::new();
        for (i, m) in snap.multipaths().enumerate() {
            let bin = grid.quantize(m.delay_ns).ok_or(Error::DelayOutOfRange {
                index: i,
                delay_ns: m.delay_ns,
                max_ns: grid.window_ns(),
            })?;
            let entry = taps.entry(bin).or_insert((0.0, 0.0, f64::NEG_INFINITY, m.label));
            entry.0 += m.amplitude * m.phase.cos();
            entry.1 += m.amplitude * m.phase.sin();
            if m.amplitude > entry.2 {
                entry.2 = m.amplitude;
                entry.3 = m.label;
            }
        }
        for (bin, (re, im, _, label)) in taps {
            writeln!(w, "{} {} {} {} {}", snap.time_index, bin, re, im, label.id())?;
        }
    }
    Ok(())
}

/// Reads a tap list written by [`write_cir`].
pub fn read_cir<R: Read>(r: R) -> Result<Vec<CirRow>> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    if !header?.starts_with(CIR_MAGIC) {
        return Err(parse_err(1, format!("expected '{CIR_MAGIC}' header")));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(idx + 1, format!("expected 5 fields, found {}", fields.len())));
        }
        let field = |i: usize, what: &str| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| parse_err(idx + 1, format!("bad {what} '{}': {e}", fields[i])))
        };
        rows.push(CirRow {
            snapshot: field(0, "snapshot")? as usize,
            bin: field(1, "bin")? as usize,
            re: field(2, "re")?,
            im: field(3, "im")?,
            label: SemanticLabel::new(
                fields[4]
                    .parse()
                    .map_err(|e| parse_err(idx + 1, format!("bad label '{}': {e}", fields[4])))?,
            )
            .map_err(|e| parse_err(idx + 1, e.to_string()))?,
        });
    }
    Ok(rows)
}

/// Pretty-printed JSON to a path.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// JSON from a path.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// [`write_pdp`] to a path.
pub fn save_pdp(path: impl AsRef<Path>, pdp: &[Vec<f64>], delay_bin_ns: f64) -> Result<()> {
    write_pdp(&mut BufWriter::new(File::create(path)?), pdp, delay_bin_ns)
}

/// [`read_pdp`] from a path.
pub fn load_pdp(path: impl AsRef<Path>) -> Result<(Vec<Vec<f64>>, f64)> {
    read_pdp(File::open(path)?)
}
