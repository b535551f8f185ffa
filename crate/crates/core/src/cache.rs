//! Binary cache of the per-k half-space operators.
//!
//! Layout (little endian): magic, format version, 32-byte operator hash, n_t,
//! N_k, cell node count, then per k the wavenumber, the two scalar diagnostics and
//! the twelve matrices column-major as (re, im) pairs; a SHA-256 of everything
//! before it closes the file.

use std::path::Path;

use faer::{c64, Mat};
use sha2::{Digest, Sha256};

use crate::config::{hex, operator_hash};
use crate::error::{Error, Result};
use crate::halfspace::CellOperatorSet;
use crate::interior::{Precomputed, ProblemConfig};

const MAGIC: &[u8; 8] = b"HEXDTNOP";
pub const FORMAT_VERSION: u32 = 1;

fn put_mat(out: &mut Vec<u8>, m: &Mat<c64>) {
    out.extend((m.nrows() as u64).to_le_bytes());
    out.extend((m.ncols() as u64).to_le_bytes());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.extend(m[(i, j)].re.to_le_bytes());
            out.extend(m[(i, j)].im.to_le_bytes());
        }
    }
}

fn matrices(s: &CellOperatorSet) -> [&Mat<c64>; 12] {
    [
        &s.t_ll, &s.t_lr, &s.t_rl, &s.t_rr, &s.d_lp, &s.d_lm, &s.d_rp, &s.d_rm, &s.p, &s.lambda_hat, &s.e_l, &s.e_r,
    ]
}

pub fn encode(key: &[u8; 32], sets: &[CellOperatorSet]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend(key);
    let n_t = sets.first().map_or(0, |s| s.p.nrows());
    let n_cell = sets.first().map_or(0, |s| s.e_l.nrows());
    for v in [n_t, sets.len(), n_cell] {
        out.extend((v as u64).to_le_bytes());
    }
    for s in sets {
        for v in [s.k, s.riccati_residual, s.spectral_radius] {
            out.extend(v.to_le_bytes());
        }
        for m in matrices(s) {
            put_mat(&mut out, m);
        }
    }
    let sum: [u8; 32] = Sha256::digest(&out).into();
    out.extend(sum);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Option<Mat<c64>> {
        if self.u64()? != rows as u64 || self.u64()? != cols as u64 {
            return None;
        }
        let mut m = Mat::<c64>::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = c64::new(self.f64()?, self.f64()?);
            }
        }
        Some(m)
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Miss {
    Corrupt,
    Version(u32),
    Hash,
}

/// Decodes a cache written for `key`.
pub fn decode(bytes: &[u8], key: &[u8; 32]) -> std::result::Result<Vec<CellOperatorSet>, Miss> {
    if bytes.len() < 32 + MAGIC.len() + 4 + 32 + 24 {
        return Err(Miss::Corrupt);
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Miss::Corrupt);
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8) != Some(&MAGIC[..]) {
        return Err(Miss::Corrupt);
    }
    let version = u32::from_le_bytes(r.take(4).ok_or(Miss::Corrupt)?.try_into().map_err(|_| Miss::Corrupt)?);
    if version != FORMAT_VERSION {
        return Err(Miss::Version(version));
    }
    if r.take(32) != Some(&key[..]) {
        return Err(Miss::Hash);
    }
    let parse = |r: &mut Reader| -> Option<Vec<CellOperatorSet>> {
        let (n_t, n_k, n_cell) = (r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
        let mut sets = Vec::with_capacity(n_k.min(1 << 16));
        for _ in 0..n_k {
            let (k, riccati_residual, spectral_radius) = (r.f64()?, r.f64()?, r.f64()?);
            let mut sq = (0..10).map(|_| r.mat(n_t, n_t)).collect::<Option<Vec<_>>>()?.into_iter();
            let e_l = r.mat(n_cell, n_t)?;
            let e_r = r.mat(n_cell, n_t)?;
            let mut next = || sq.next();
            sets.push(CellOperatorSet {
                k,
                t_ll: next()?,
                t_lr: next()?,
                t_rl: next()?,
                t_rr: next()?,
                d_lp: next()?,
                d_lm: next()?,
                d_rp: next()?,
                d_rm: next()?,
                p: next()?,
                lambda_hat: next()?,
                e_l,
                e_r,
                riccati_residual,
                spectral_radius,
            });
        }
        (r.pos == r.buf.len()).then_some(sets)
    };
    parse(&mut r).ok_or(Miss::Corrupt)
}

pub fn write(path: &Path, key: &[u8; 32], sets: &[CellOperatorSet]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(key, sets)).map_err(|e| Error::io(path, e))
}

/// Operators from the cache when its hash matches, otherwise recomputed (and the
/// cache rewritten). Returns whether the cache was used.
pub fn load_or_compute(config: &ProblemConfig, path: Option<&Path>) -> Result<(Precomputed, bool)> {
    let key = operator_hash(config)?;
    let Some(path) = path else {
        return Ok((Precomputed::compute(config)?, false));
    };
    match std::fs::read(path) {
        Ok(bytes) => match decode(&bytes, &key) {
            Ok(sets) => {
                let pre = Precomputed::from_sets(config, sets)?;
                log::info!("operator cache hit: {} (hash {})", path.display(), hex(&key));
                return Ok((pre, true));
            }
            Err(miss) => log::info!("operator cache at {} ignored ({miss:?}); recomputing", path.display()),
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::info!("no operator cache at {}; computing", path.display())
        }
        Err(e) => return Err(Error::io(path, e)),
    }
    let pre = Precomputed::compute(config)?;
    write(path, &key, &pre.sets)?;
    log::info!("operator cache written: {} (hash {})", path.display(), hex(&key));
    Ok((pre, false))
}
