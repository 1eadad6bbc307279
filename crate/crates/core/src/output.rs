//! Atomic file output (temp file in the target directory, then rename).

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{DiagnosticsRecord, WeightedCloud};
use crate::error::{Error, Result};
use crate::kinetic::WeightedParticleMeasure;
use crate::micro::AgentEnsemble;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `bytes` to `path` so that readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn trajectory_header(dim: usize) -> String {
    let mut h = String::from("t,N,M,m0");
    for k in 1..=dim {
        let _ = write!(h, ",m1_{k}");
    }
    h.push_str(",m2,V,V_X,D,M1dist,c1_residual");
    h
}

pub fn trajectory_csv(records: &[DiagnosticsRecord]) -> String {
    let dim = records.first().map_or(1, |r| r.m1.len());
    let mut s = trajectory_header(dim);
    s.push('\n');
    for r in records {
        let _ = write!(s, "{},{},{},{}", r.t, r.n, r.count, r.m0);
        for m in &r.m1 {
            let _ = write!(s, ",{m}");
        }
        let _ = writeln!(s, ",{},{},{},{},{},{}", r.m2, r.v, r.v_x, r.d, r.m1_dist, r.c1_residual);
    }
    s
}

/// One row per agent: `agent_index,birth_time,x_1..x_d`.
pub fn snapshot_csv(e: &AgentEnsemble) -> String {
    let mut s = String::from("agent_index,birth_time");
    for k in 1..=e.dim() {
        let _ = write!(s, ",x_{k}");
    }
    s.push('\n');
    for (i, (birth, x)) in e.expanded().enumerate() {
        let _ = write!(s, "{i},{birth}");
        for v in x {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// `weight,x_1..x_d`.
pub fn measure_csv(f: &WeightedParticleMeasure) -> String {
    let mut s = String::from("weight");
    for k in 1..=f.dim() {
        let _ = write!(s, ",x_{k}");
    }
    s.push('\n');
    for (w, x) in f.weights().iter().zip(f.atoms().chunks_exact(f.dim())) {
        let _ = write!(s, "{w}");
        for v in x {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Two-column whitespace-separated data for gnuplot.
pub fn two_column(xs: &[f64], ys: &[f64]) -> String {
    let mut s = String::new();
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(s, "{x} {y}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(2), "t,N,M,m0,m1_1,m1_2,m2,V,V_X,D,M1dist,c1_residual");
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested").join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        let leftovers = std::fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn snapshot_rows_expand_multiplicities() {
        let e = AgentEnsemble::from_positions(1, vec![0.5, -0.5], 1.0, 2.0).unwrap();
        let csv = snapshot_csv(&e);
        assert_eq!(csv, "agent_index,birth_time,x_1\n0,0,0.5\n1,0,-0.5\n");
    }
}
