//! Trace persistence.
//!
//! Binary layout (all little-endian):
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 8    | magic `JPOTRACE`          |
//! | 8      | 2    | version (u16, currently 1)|
//! | 10     | 8    | sample rate (f64, Hz)     |
//! | 18     | 8    | sample count (u64)        |
//! | 26     | 8    | seed (u64)                |
//! | 34     | 30   | reserved, zero            |
//! | 64     | 16 n | interleaved (I, Q) f64    |
//!
//! The CSV form is `t,i,q` with one row per sample.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dynamics::{QuadratureTrace, TraceMetadata};
use crate::error::{JpoError, Result};

pub const MAGIC: &[u8; 8] = b"JPOTRACE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;

fn format_err(offset: u64, message: impl Into<String>) -> JpoError {
    JpoError::Format {
        offset,
        message: message.into(),
    }
}

pub fn write_binary<W: Write>(out: W, trace: &QuadratureTrace) -> Result<()> {
    let mut out = BufWriter::new(out);
    let mut header = [0u8; HEADER_LEN];
    header[0..8].copy_from_slice(MAGIC);
    header[8..10].copy_from_slice(&VERSION.to_le_bytes());
    header[10..18].copy_from_slice(&trace.sample_rate.to_le_bytes());
    header[18..26].copy_from_slice(&(trace.len() as u64).to_le_bytes());
    header[26..34].copy_from_slice(&trace.seed().to_le_bytes());
    out.write_all(&header)?;
    for (i, q) in trace.i_samples.iter().zip(&trace.q_samples) {
        out.write_all(&i.to_le_bytes())?;
        out.write_all(&q.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(input: R) -> Result<QuadratureTrace> {
    let mut input = BufReader::new(input);
    let mut header = [0u8; HEADER_LEN];
    let got = read_up_to(&mut input, &mut header)?;
    if got < HEADER_LEN {
        return Err(format_err(
            got as u64,
            format!("truncated header: expected {HEADER_LEN} bytes, found {got}"),
        ));
    }
    if &header[0..8] != MAGIC {
        return Err(format_err(0, "bad magic, expected JPOTRACE"));
    }
    let version = u16::from_le_bytes([header[8], header[9]]);
    if version != VERSION {
        return Err(format_err(8, format!("unsupported version {version}")));
    }
    let sample_rate = f64::from_le_bytes(header[10..18].try_into().unwrap());
    let count = u64::from_le_bytes(header[18..26].try_into().unwrap());
    let seed = u64::from_le_bytes(header[26..34].try_into().unwrap());
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(format_err(10, format!("invalid sample rate {sample_rate}")));
    }
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected_bytes = count.checked_mul(16).ok_or_else(|| format_err(18, "sample count overflows"))?;
    if body.len() as u64 != expected_bytes {
        let actual = body.len() / 16;
        return Err(format_err(
            HEADER_LEN as u64 + body.len() as u64,
            format!(
                "sample count mismatch: header declares {count} samples, file holds {actual}{}",
                if body.len() % 16 != 0 { " plus a partial record" } else { "" }
            ),
        ));
    }
    let n = count as usize;
    let mut i_samples = Vec::with_capacity(n);
    let mut q_samples = Vec::with_capacity(n);
    for rec in body.chunks_exact(16) {
        i_samples.push(f64::from_le_bytes(rec[0..8].try_into().unwrap()));
        q_samples.push(f64::from_le_bytes(rec[8..16].try_into().unwrap()));
    }
    let trace = QuadratureTrace::new(sample_rate, i_samples, q_samples)?;
    Ok(trace.with_metadata(TraceMetadata {
        source: "binary".into(),
        params: None,
        drive: None,
        sim: None,
        seed,
    }))
}

fn read_up_to<R: Read>(input: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

pub fn write_csv<W: Write>(out: W, trace: &QuadratureTrace) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "t,i,q")?;
    for (k, (i, q)) in trace.i_samples.iter().zip(&trace.q_samples).enumerate() {
        writeln!(out, "{:e},{i:e},{q:e}", k as f64 / trace.sample_rate)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `t,i,q` CSV; the sample rate is inferred from the time column.
pub fn read_csv<R: Read>(input: R) -> Result<QuadratureTrace> {
    let reader = BufReader::new(input);
    let mut offset = 0u64;
    let mut t = Vec::new();
    let mut i_samples = Vec::new();
    let mut q_samples = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_len = line.len() as u64 + 1;
        if line_no == 0 {
            if line.trim() != "t,i,q" {
                return Err(format_err(0, format!("expected header 't,i,q', found '{}'", line.trim())));
            }
            offset += line_len;
            continue;
        }
        if line.trim().is_empty() {
            offset += line_len;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format_err(offset, format!("line {}: expected 3 fields", line_no + 1)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format_err(offset, format!("line {}: {e}", line_no + 1)))
        };
        t.push(parse(fields[0])?);
        i_samples.push(parse(fields[1])?);
        q_samples.push(parse(fields[2])?);
        offset += line_len;
    }
    if t.len() < 2 {
        return Err(format_err(offset, format!("expected at least 2 samples, found {}", t.len())));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(format_err(offset, "time column is not increasing"));
    }
    let sample_rate = (t.len() - 1) as f64 / span;
    QuadratureTrace::new(sample_rate, i_samples, q_samples)
}

/// Reads a trace, choosing the format from the file contents.
pub fn load(path: &Path) -> Result<QuadratureTrace> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 8];
    let got = read_up_to(&mut file, &mut magic)?;
    drop(file);
    let file = File::open(path)?;
    if got == 8 && &magic == MAGIC {
        read_binary(file)
    } else if magic.starts_with(b"t,i,q") {
        read_csv(file)
    } else if got < 8 && MAGIC.starts_with(&magic[..got]) {
        read_binary(file)
    } else {
        Err(format_err(0, "unrecognised trace file (neither JPOTRACE binary nor t,i,q CSV)"))
    }
}

pub fn save_binary(path: &Path, trace: &QuadratureTrace) -> Result<()> {
    write_binary(File::create(path)?, trace)
}
