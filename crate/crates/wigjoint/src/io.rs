//! Array, CSV, and text exports.
//!
//! Binary arrays are flat little-endian `(re, im)` f64 pairs, row-major,
//! preceded by a 16-byte header: magic `WJG1`, `n` as u32, rank as u32,
//! 4 reserved zero bytes. Real-valued arrays are stored with zero imaginary
//! parts. Text output uses Rust's shortest round-trip float formatting, so
//! identical runs produce byte-identical files.

use crate::conditional::GaussianityReport;
use crate::error::{Error, Result};
use crate::fourier::C64;
use crate::grid::Grid;
use crate::joint::{CumulantTable, JointDistribution};
use crate::state::DensityMatrix;
use crate::wigner::{wigner_moments, wigner_transform, WignerFunction};
use ndarray::Array2;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"WJG1";

fn header(n: u32, rank: u32) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[0..4].copy_from_slice(MAGIC);
    h[4..8].copy_from_slice(&n.to_le_bytes());
    h[8..12].copy_from_slice(&rank.to_le_bytes());
    h
}

pub fn write_complex_1d(path: &Path, values: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + values.len() * 16);
    buf.extend_from_slice(&header(values.len() as u32, 1));
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn write_complex_2d(path: &Path, values: &Array2<C64>) -> Result<()> {
    let (rows, cols) = values.dim();
    if rows != cols {
        return Err(Error::InvalidArgument(format!(
            "rank-2 export expects a square array, got {rows}x{cols}"
        )));
    }
    let mut buf = Vec::with_capacity(16 + rows * cols * 16);
    buf.extend_from_slice(&header(rows as u32, 2));
    for v in values.iter() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn write_real_2d(path: &Path, values: &Array2<f64>) -> Result<()> {
    write_complex_2d(path, &values.mapv(|v| C64::new(v, 0.0)))
}

/// Read any array written by the writers above: `(n, rank, data)`.
pub fn read_array(path: &Path) -> Result<(u32, u32, Vec<C64>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::MalformedArray(format!(
            "{}: missing WJG1 header",
            path.display()
        )));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let count = match rank {
        1 => n as usize,
        2 => (n as usize) * (n as usize),
        r => {
            return Err(Error::MalformedArray(format!(
                "{}: unsupported rank {r}",
                path.display()
            )))
        }
    };
    if bytes.len() != 16 + count * 16 {
        return Err(Error::MalformedArray(format!(
            "{}: expected {} data bytes, found {}",
            path.display(),
            count * 16,
            bytes.len() - 16
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes[16..].chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        data.push(C64::new(re, im));
    }
    Ok((n, rank, data))
}

pub fn read_real_2d(path: &Path) -> Result<Array2<f64>> {
    let (n, rank, data) = read_array(path)?;
    if rank != 2 {
        return Err(Error::MalformedArray(format!(
            "{}: expected rank 2, found {rank}",
            path.display()
        )));
    }
    let n = n as usize;
    let mut out = Array2::<f64>::zeros((n, n));
    for (flat, v) in data.iter().enumerate() {
        out[[flat / n, flat % n]] = v.re;
    }
    Ok(out)
}

/// Axis-range sidecar for a rank-2 phase-space array.
pub fn wigner_sidecar(w: &WignerFunction) -> String {
    let g = w.grid();
    let mut s = String::new();
    let (k0, q0) = w.origin_offset();
    s.push_str(&format!("axis.k.min={}\n", k0));
    s.push_str(&format!("axis.k.step={}\n", g.dk()));
    s.push_str(&format!("axis.k.count={}\n", g.n()));
    s.push_str(&format!("axis.q.min={}\n", q0));
    s.push_str(&format!("axis.q.step={}\n", g.dx()));
    s.push_str(&format!("axis.q.count={}\n", g.n()));
    s
}

/// `(Q, K, W)` triplets for plotting.
pub fn wigner_csv(w: &WignerFunction) -> String {
    let g = w.grid();
    let mut s = String::from("q,k,w\n");
    for (b, &k) in g.momenta_sorted().iter().enumerate() {
        for (a, &q) in g.positions().iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", q, k, w.at(b, a)));
        }
    }
    s
}

/// `(I_Q, I_K, value)` triplets.
pub fn joint_csv(p: &JointDistribution) -> String {
    let g = p.grid();
    let mut s = String::from("i_q,i_k,value\n");
    for (b, &ik) in g.momenta_sorted().iter().enumerate() {
        for (a, &iq) in g.positions().iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", iq, ik, p.at(b, a)));
        }
    }
    s
}

/// `(a, b, system, detector, total)` rows.
pub fn cumulant_csv(t: &CumulantTable) -> String {
    let mut s = String::from("a,b,system,detector,total\n");
    for e in t.entries() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            e.a, e.b, e.system, e.detector, e.total
        ));
    }
    s
}

/// Mean, covariance, and purity of a state as key=value lines.
pub fn state_summary(rho: &DensityMatrix) -> Result<String> {
    let w = wigner_transform(rho)?;
    let t = wigner_moments(&w, 2)?;
    let mut s = String::new();
    s.push_str(&format!("mean.q={}\n", t.mean_q()));
    s.push_str(&format!("mean.k={}\n", t.mean_k()));
    s.push_str(&format!("cov.qq={}\n", t.var_q()));
    s.push_str(&format!("cov.qk={}\n", t.cov_qk()));
    s.push_str(&format!("cov.kk={}\n", t.var_k()));
    s.push_str(&format!("purity={}\n", rho.purity()));
    Ok(s)
}

/// Structured text form of a Gaussianity report, nested by axis.
pub fn gaussianity_report_text(r: &GaussianityReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("outcome.i_q={}\n", r.outcome.0));
    s.push_str(&format!("outcome.i_k={}\n", r.outcome.1));
    s.push_str(&format!("weight={}\n", r.weight));
    s.push_str(&format!("axis.q.mean={}\n", r.mean_q));
    s.push_str(&format!("axis.q.variance={}\n", r.var_q));
    s.push_str(&format!("axis.q.excess_kurtosis={}\n", r.excess_kurtosis_q));
    s.push_str(&format!("axis.k.mean={}\n", r.mean_k));
    s.push_str(&format!("axis.k.variance={}\n", r.var_k));
    s.push_str(&format!("axis.k.excess_kurtosis={}\n", r.excess_kurtosis_k));
    s.push_str(&format!("negativity_volume={}\n", r.negativity_volume));
    s
}

/// Import a rank-2 real array as a Wigner function on `grid`.
pub fn read_wigner(path: &Path, grid: &Grid) -> Result<WignerFunction> {
    let values = read_real_2d(path)?;
    WignerFunction::from_real(grid.clone(), values)
}
