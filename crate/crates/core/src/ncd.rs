//! Normalized compression distance between windows, with a swap bootstrap
//! for significance.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::rng;

pub const DEFAULT_LEVEL: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcdConfig {
    /// DEFLATE level, 0 to 9.
    pub level: u32,
    pub bootstrap_runs: usize,
    pub swap_fraction: f64,
    pub seed: u64,
}

impl Default for NcdConfig {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            bootstrap_runs: 100,
            swap_fraction: 0.5,
            seed: 0,
        }
    }
}

impl NcdConfig {
    pub fn codec_id(&self) -> String {
        format!("deflate-{}", self.level)
    }

    fn validate(&self) -> Result<()> {
        if self.level > 9 {
            return arg(format!("DEFLATE level {} outside 0..=9", self.level));
        }
        if self.bootstrap_runs < 10 {
            return arg("at least 10 bootstrap runs are required");
        }
        if !(self.swap_fraction > 0.0 && self.swap_fraction <= 1.0) {
            return arg("swap fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcdResult {
    pub ncd: f64,
    pub p_value: f64,
    pub reject: bool,
    pub codec: String,
}

/// Little-endian f64 values, point after point.
pub fn encode_window(points: &[&[f64]]) -> Vec<u8> {
    points
        .iter()
        .flat_map(|p| p.iter())
        .flat_map(|v| v.to_le_bytes())
        .collect()
}

/// Length of the raw DEFLATE stream, without container framing.
pub fn compressed_len(parts: &[&[u8]], level: u32) -> Result<usize> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut enc = DeflateEncoder::new(Vec::with_capacity(total / 2 + 64), Compression::new(level));
    for p in parts {
        enc.write_all(p).map_err(|e| Error::Codec(e.to_string()))?;
    }
    Ok(enc.finish().map_err(|e| Error::Codec(e.to_string()))?.len())
}

pub fn ncd(r: &[u8], w: &[u8], level: u32) -> Result<f64> {
    if r.is_empty() || w.is_empty() {
        return arg("NCD needs non-empty inputs");
    }
    let cr = compressed_len(&[r], level)? as f64;
    let cw = compressed_len(&[w], level)? as f64;
    let crw = compressed_len(&[r, w], level)? as f64;
    Ok((crw - cr.min(cw)) / cr.max(cw))
}

/// Sorted NCD values of `bootstrap_runs` pairs obtained by swapping a
/// random subset of aligned points between the windows.
pub fn bootstrap_null(r: &[&[f64]], w: &[&[f64]], cfg: &NcdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if r.len() != w.len() || r.is_empty() {
        return arg(format!(
            "bootstrap needs equal non-empty windows, got {} and {}",
            r.len(),
            w.len()
        ));
    }
    let n = r.len();
    let swaps = (cfg.swap_fraction * n as f64).round() as usize;
    let mut out = Vec::with_capacity(cfg.bootstrap_runs);
    for run in 0..cfg.bootstrap_runs {
        let mut a = r.to_vec();
        let mut b = w.to_vec();
        let mut g = rng::stream(cfg.seed, &[run as u64]);
        for k in index::sample(&mut g, n, swaps.min(n)) {
            std::mem::swap(&mut a[k], &mut b[k]);
        }
        out.push(ncd(&encode_window(&a), &encode_window(&b), cfg.level)?);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Mid-rank of `observed` in the null; reject when it exceeds `1 - alpha`.
pub fn ncd_test(observed: f64, null: &[f64], alpha: f64) -> Result<NcdResult> {
    if null.is_empty() {
        return arg("empty null distribution");
    }
    let less = null.iter().filter(|&&v| v < observed).count() as f64;
    let equal = null.iter().filter(|&&v| v == observed).count() as f64;
    let p_value = (less + 0.5 * equal) / null.len() as f64;
    Ok(NcdResult {
        ncd: observed,
        p_value,
        reject: p_value > 1.0 - alpha,
        codec: String::new(),
    })
}

/// Observed NCD of two windows plus its bootstrap significance.
pub fn ncd_window_test(r: &[&[f64]], w: &[&[f64]], cfg: &NcdConfig, alpha: f64) -> Result<NcdResult> {
    cfg.validate()?;
    let observed = ncd(&encode_window(r), &encode_window(w), cfg.level)?;
    let null = bootstrap_null(r, w, cfg)?;
    let mut res = ncd_test(observed, &null, alpha)?;
    res.codec = cfg.codec_id();
    Ok(res)
}
