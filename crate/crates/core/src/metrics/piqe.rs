//! Perception-based image quality evaluator (blockwise MSCN analysis).
//!
//! Each block whose MSCN variance `v` exceeds the activity threshold is checked for a noticeable
//! artefact (some edge segment of the block is nearly flat, adds `1 - v`) and for noise (the
//! centre/surround deviation criterion, adds `v`). Scores are clamped to [0, 100]; lower is better.

use serde::{Deserialize, Serialize};

use super::mscn::mscn;
use super::quantize;
use crate::error::{CoreError, Result};
use crate::field::ScalarField2D;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiqeConfig {
    pub block: usize,
    pub activity_threshold: f64,
    /// Segment standard deviation below which a block edge counts as impaired.
    pub impaired_threshold: f64,
    pub segment: usize,
}

impl Default for PiqeConfig {
    fn default() -> Self {
        PiqeConfig { block: 16, activity_threshold: 0.1, impaired_threshold: 0.1, segment: 6 }
    }
}

impl PiqeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block < 4 || self.segment < 2 || self.segment > self.block {
            return Err(CoreError::Config(format!("invalid PIQE block/segment sizes {}/{}", self.block, self.segment)));
        }
        if !(self.activity_threshold >= 0.0 && self.impaired_threshold >= 0.0) {
            return Err(CoreError::Config("PIQE thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample (n - 1) variance.
fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn impaired_edge(edge: &[f64], segment: usize, threshold: f64) -> bool {
    edge.windows(segment).any(|s| var(s).sqrt() < threshold)
}

fn noticeable_artefact(block: &[f64], n: usize, cfg: &PiqeConfig) -> bool {
    let top = &block[..n];
    let bottom = &block[(n - 1) * n..];
    let left: Vec<f64> = (0..n).map(|i| block[i * n]).collect();
    let right: Vec<f64> = (0..n).map(|i| block[i * n + n - 1]).collect();
    [top, bottom, &left, &right].iter().any(|e| impaired_edge(e, cfg.segment, cfg.impaired_threshold))
}

/// Centre/surround noise test: the block deviation exceeds twice the relative mismatch between
/// it and the centre-to-surround deviation ratio.
fn noisy_block(block: &[f64], n: usize, block_var: f64) -> bool {
    let c1 = (n - 1) / 2;
    let c2 = c1 + 1;
    let mut centre = Vec::with_capacity(2 * n);
    let mut surround = Vec::with_capacity(n * (n - 2));
    for y in 0..n {
        for x in 0..n {
            if x == c1 || x == c2 {
                centre.push(block[y * n + x]);
            } else {
                surround.push(block[y * n + x]);
            }
        }
    }
    let (cs, ss) = (var(&centre).sqrt(), var(&surround).sqrt());
    let ratio = if ss > 0.0 { cs / ss } else { 0.0 };
    let sigma = block_var.sqrt();
    let beta = (sigma - ratio).abs() / sigma.max(ratio);
    sigma > 2.0 * beta
}

/// PIQE score of an image with values in [0, 1].
pub fn piqe<T: Scalar>(img: &ScalarField2D<T>, cfg: &PiqeConfig) -> Result<f64> {
    cfg.validate()?;
    let n = cfg.block;
    let (h, w) = img.shape();
    // Pad to whole blocks by replicating the last row/column.
    let (ph, pw) = (h.div_ceil(n) * n, w.div_ceil(n) * n);
    if (ph / n) * (pw / n) < 2 {
        return Err(CoreError::Validation(format!("PIQE needs at least two {n}x{n} blocks, image is {h}x{w}")));
    }
    let q = quantize(img);
    let mut padded = Vec::with_capacity(ph * pw);
    for y in 0..ph {
        for x in 0..pw {
            padded.push(q.get(y.min(h - 1), x.min(w - 1)));
        }
    }
    let m = mscn(&padded, ph, pw, 1.0);
    let mut active = 0usize;
    let mut distortion = 0.0;
    let mut block = vec![0.0; n * n];
    for by in (0..ph).step_by(n) {
        for bx in (0..pw).step_by(n) {
            for y in 0..n {
                block[y * n..(y + 1) * n].copy_from_slice(&m[(by + y) * pw + bx..(by + y) * pw + bx + n]);
            }
            let v = var(&block);
            if v <= cfg.activity_threshold {
                continue;
            }
            active += 1;
            if noticeable_artefact(&block, n, cfg) {
                distortion += 1.0 - v;
            }
            if noisy_block(&block, n, v) {
                distortion += v;
            }
        }
    }
    let score = (distortion + 1.0) / (active as f64 + 1.0) * 100.0;
    Ok(score.clamp(0.0, 100.0))
}
