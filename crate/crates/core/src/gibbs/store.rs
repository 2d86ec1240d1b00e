//! On-disk chain formats.
//!
//! `chain.bin` holds the whole [`ChainOutput`] (magic `FBVARCHN`, a
//! little-endian `u32` version, then the bincode body). The draw store is
//! one file per parameter block (magic `FBVDRAW1`, then little-endian
//! `u64` draw count, rows and columns, then the `f64` values draw by draw,
//! each matrix column-major), plus `ensembles.json` with one array of
//! ensemble snapshots per draw.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::ChainOutput;
use crate::error::{Error, Result};
use crate::model::ParameterDraw;

const CHAIN_MAGIC: &[u8; 8] = b"FBVARCHN";
const CHAIN_VERSION: u32 = 1;
const DRAW_MAGIC: &[u8; 8] = b"FBVDRAW1";

fn format_err(path: &Path, message: impl ToString) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn write_chain(path: &Path, out: &ChainOutput) -> Result<()> {
    let body = bincode::serialize(out).map_err(|e| format_err(path, e))?;
    let mut bytes = Vec::with_capacity(body.len() + 12);
    bytes.extend_from_slice(CHAIN_MAGIC);
    bytes.extend_from_slice(&CHAIN_VERSION.to_le_bytes());
    bytes.extend_from_slice(&body);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_chain(path: &Path) -> Result<ChainOutput> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != CHAIN_MAGIC {
        return Err(format_err(path, "not a chain file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHAIN_VERSION {
        return Err(format_err(path, format!("chain version {version}, expected {CHAIN_VERSION}")));
    }
    bincode::deserialize(&bytes[12..]).map_err(|e| format_err(path, e))
}

fn write_block<'a>(
    path: &Path,
    rows: usize,
    cols: usize,
    mats: impl Iterator<Item = &'a [f64]>,
    n: usize,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(DRAW_MAGIC).map_err(io)?;
    for v in [n as u64, rows as u64, cols as u64] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for m in mats {
        for v in m {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads one block file as a list of matrices.
pub fn read_draw_block(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 || &bytes[..8] != DRAW_MAGIC {
        return Err(format_err(path, "not a draw block"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let (n, rows, cols) = (word(0), word(1), word(2));
    let body = &bytes[32..];
    if body.len() != n * rows * cols * 8 {
        return Err(format_err(path, "truncated draw block"));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(vals
        .chunks(rows * cols.max(1))
        .take(n)
        .map(|c| DMatrix::from_column_slice(rows, cols, c))
        .collect())
}

/// Writes one file per parameter block into `dir`.
pub fn write_draw_store(dir: &Path, out: &ChainOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = out.draws.len();
    let d = out.dims;
    let blocks: [(&str, usize, usize, fn(&ParameterDraw) -> &[f64]); 6] = [
        ("A", d.m, d.k, |p| p.a.as_slice()),
        ("lambda_f", d.m, d.q_f, |p| p.lambda_f.as_slice()),
        ("lambda_q", d.m, d.q_q, |p| p.lambda_q.as_slice()),
        ("omega", d.m, 1, |p| p.omega.as_slice()),
        ("v_q", d.q_q, 1, |p| p.v_q.as_slice()),
        ("v_f", d.q_f, 1, |p| p.v_f.as_slice()),
    ];
    for (name, r, c, get) in blocks {
        write_block(&dir.join(format!("{name}.bin")), r, c, out.draws.iter().map(get), n)?;
    }
    if out.draws.iter().all(|p| p.f.is_some() && p.q.is_some()) && n > 0 {
        write_block(
            &dir.join("f.bin"),
            d.t_len,
            d.q_f,
            out.draws.iter().map(|p| p.f.as_ref().unwrap().as_slice()),
            n,
        )?;
        write_block(
            &dir.join("q.bin"),
            d.t_len,
            d.q_q,
            out.draws.iter().map(|p| p.q.as_ref().unwrap().as_slice()),
            n,
        )?;
    }
    let ens: Vec<_> = out.draws.iter().map(|p| &p.ensembles).collect();
    let path = dir.join("ensembles.json");
    let json = serde_json::to_vec(&ens).map_err(|e| format_err(&path, e))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
