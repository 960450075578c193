//! Per-cycle signal snapshots and their on-disk formats.
//!
//! A trace is persisted as JSON-Lines, one object per cycle with exactly
//! the keys `cycle, pc, r_en, w_en, d_addr, dma_en, dma_addr, irq, reset,
//! exec`. Addresses are unsigned decimal, bits are 0/1. Program images are
//! raw binary with a sidecar symbol map of `name=hex-address` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One cycle's worth of the monitored wires plus reset and the monitor's
/// EXEC output (backfilled after the monitor ticks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSnapshot {
    pub cycle: u64,
    pub pc: u16,
    pub r_en: u8,
    pub w_en: u8,
    pub d_addr: u16,
    pub dma_en: u8,
    pub dma_addr: u16,
    pub irq: u8,
    pub reset: u8,
    pub exec: u8,
}

impl SignalSnapshot {
    pub fn idle(cycle: u64, pc: u16) -> Self {
        SignalSnapshot {
            cycle,
            pc,
            r_en: 0,
            w_en: 0,
            d_addr: 0,
            dma_en: 0,
            dma_addr: 0,
            irq: 0,
            reset: 0,
            exec: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn write_jsonl(path: &Path, trace: &[SignalSnapshot]) -> Result<(), TraceIoError> {
    let mut out = Vec::with_capacity(trace.len() * 96);
    for snap in trace {
        serde_json::to_writer(&mut out, snap).expect("snapshot serializes");
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SignalSnapshot>, TraceIoError> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut trace = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let snap: SignalSnapshot =
            serde_json::from_str(&line).map_err(|e| TraceIoError::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        trace.push(snap);
    }
    Ok(trace)
}

/// Writes a raw program image plus its `name=hex` symbol sidecar.
pub fn write_image(
    path: &Path,
    image: &[u8],
    symbols: &BTreeMap<String, u16>,
) -> Result<(), TraceIoError> {
    fs::write(path, image)?;
    let mut side = fs::File::create(sidecar_path(path, "sym"))?;
    for (name, addr) in symbols {
        writeln!(side, "{name}={addr:04X}")?;
    }
    Ok(())
}

pub fn read_symbols(path: &Path) -> Result<BTreeMap<String, u16>, TraceIoError> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, addr) = line.split_once('=').ok_or_else(|| TraceIoError::Parse {
            line: idx + 1,
            msg: "expected name=hex-address".into(),
        })?;
        let addr = u16::from_str_radix(addr.trim(), 16).map_err(|e| TraceIoError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        map.insert(name.trim().to_string(), addr);
    }
    Ok(map)
}

/// `<file>.<ext>` next to `<file>`.
pub fn sidecar_path(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    std::path::PathBuf::from(s)
}

/// Fixed ER/OR bounds accompanying a persisted trace, so the trace can be
/// re-checked offline against the region-dependent formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceBounds {
    pub er_min: u16,
    pub er_max: u16,
    pub or_min: u16,
    pub or_max: u16,
}

pub fn write_bounds(path: &Path, b: &TraceBounds) -> Result<(), TraceIoError> {
    let text = format!(
        "er_min={:04X}\ner_max={:04X}\nor_min={:04X}\nor_max={:04X}\n",
        b.er_min, b.er_max, b.or_min, b.or_max
    );
    fs::write(path, text)?;
    Ok(())
}

pub fn read_bounds(path: &Path) -> Result<TraceBounds, TraceIoError> {
    let map = read_symbols(path)?;
    let get = |key: &str| {
        map.get(key).copied().ok_or_else(|| TraceIoError::Parse {
            line: 0,
            msg: format!("missing {key}"),
        })
    };
    Ok(TraceBounds {
        er_min: get("er_min")?,
        er_max: get("er_max")?,
        or_min: get("or_min")?,
        or_max: get("or_max")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_key_set() {
        let dir = std::env::temp_dir().join("pox_trace_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.jsonl");
        let mut s = SignalSnapshot::idle(3, 0xE000);
        s.w_en = 1;
        s.d_addr = 0x4000;
        write_jsonl(&path, &[s]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.trim(),
            r#"{"cycle":3,"pc":57344,"r_en":0,"w_en":1,"d_addr":16384,"dma_en":0,"dma_addr":0,"irq":0,"reset":0,"exec":0}"#
        );
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, vec![s]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = std::env::temp_dir().join("pox_trace_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        fs::write(&path, "{\"cycle\":0,\"pc\":0,\"r_en\":0,\"w_en\":0,\"d_addr\":0,\"dma_en\":0,\"dma_addr\":0,\"irq\":0,\"reset\":0,\"exec\":0}\nnot json\n").unwrap();
        let err = read_jsonl(&path).unwrap_err();
        match err {
            TraceIoError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn symbol_sidecar_round_trip() {
        let dir = std::env::temp_dir().join("pox_trace_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prog.bin");
        let mut syms = BTreeMap::new();
        syms.insert("entry".to_string(), 0xE000);
        syms.insert("exit".to_string(), 0xE00C);
        write_image(&path, &[0, 1, 2, 3], &syms).unwrap();
        let back = read_symbols(&sidecar_path(&path, "sym")).unwrap();
        assert_eq!(back, syms);
        assert_eq!(fs::read(&path).unwrap(), vec![0, 1, 2, 3]);
    }
}
