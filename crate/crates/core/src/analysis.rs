//! Distortion sweeps, capacity arithmetic and search-space strength.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::container::{validate_chunk_length, ChunkPlan, DType, LayerTensor, MAX_CHUNK_LENGTH};
use crate::error::{Error, Result};
use crate::keying::derive_nu;
use crate::marker::{embed_layer, layer_schedule, ScalingParams};
use crate::payload::PAYLOAD_BITS;

/// Weights smaller than this are left out of the relative-distortion maximum.
pub const DEFAULT_REL_FLOOR: f64 = 0.14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionPoint {
    pub watermark_level: u32,
    pub requested_chunk_length: usize,
    pub chunk_length: usize,
    pub max_abs_distortion: f64,
    /// `None` when no weight reaches the relative floor.
    pub max_rel_distortion: Option<f64>,
    pub mean_abs_distortion: f64,
}

/// Rounds up to the next multiple of 32.
pub fn round_chunk_length(len: usize) -> Result<usize> {
    let rounded = len.div_ceil(32) * 32;
    if rounded == 0 || rounded > MAX_CHUNK_LENGTH {
        return Err(Error::InvalidChunkLength(len));
    }
    Ok(rounded)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub levels: Vec<u32>,
    pub chunk_lengths: Vec<usize>,
    pub rel_floor: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 3, 4],
            chunk_lengths: vec![4000, 6000, 8192, 10000, 12000],
            rel_floor: DEFAULT_REL_FLOOR,
            seed: 0,
        }
    }
}

/// Embeds a random payload at every (level, chunk length) pair and measures
/// the weight-domain change. The key and payload depend only on `seed`, so
/// every point sees the same secret bits.
pub fn sweep_distortion(weights: &[f64], config: &SweepConfig) -> Result<Vec<DistortionPoint>> {
    if weights.is_empty() {
        return Err(Error::EmptyTensor("sweep weights".into()));
    }
    let layer = LayerTensor::new("sweep", vec![weights.len()], DType::Float64, weights.to_vec())?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let seed: [u8; 32] = rng.random();
    let key = derive_nu(&seed)?;
    let payload: Vec<u8> = (0..PAYLOAD_BITS).map(|_| rng.random_range(0..2u8)).collect();

    let mut grid = Vec::new();
    for &requested in &config.chunk_lengths {
        let chunk_length = round_chunk_length(requested)?;
        validate_chunk_length(chunk_length)?;
        for &level in &config.levels {
            grid.push((level, requested, chunk_length));
        }
    }
    grid.par_iter()
        .map(|&(level, requested, chunk_length)| {
            let params = ScalingParams::with_level(level);
            let plan = ChunkPlan::new(layer.len(), chunk_length)?;
            let schedule = layer_schedule(&key, 0, &plan, &params, PAYLOAD_BITS)?;
            let (marked, _) = embed_layer(&layer, &payload, &schedule, &params, chunk_length)?;
            let stats = distortion_stats(&layer.data, &marked.data, config.rel_floor);
            Ok(DistortionPoint {
                watermark_level: level,
                requested_chunk_length: requested,
                chunk_length,
                max_abs_distortion: stats.max_abs,
                max_rel_distortion: stats.max_rel,
                mean_abs_distortion: stats.mean_abs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionStats {
    pub max_abs: f64,
    pub max_rel: Option<f64>,
    pub mean_abs: f64,
}

pub fn distortion_stats(original: &[f64], marked: &[f64], rel_floor: f64) -> DistortionStats {
    let mut max_abs = 0f64;
    let mut max_rel: Option<f64> = None;
    let mut sum = 0f64;
    for (&w, &m) in original.iter().zip(marked) {
        let d = (m - w).abs();
        max_abs = max_abs.max(d);
        sum += d;
        if w.abs() >= rel_floor {
            let r = d / w.abs();
            max_rel = Some(max_rel.map_or(r, |x| x.max(r)));
        }
    }
    DistortionStats { max_abs, max_rel, mean_abs: sum / original.len().max(1) as f64 }
}

/// Comma-separated table with a header row.
pub fn sweep_csv(points: &[DistortionPoint]) -> String {
    let mut out = String::from("watermark_level,requested_chunk_length,chunk_length,max_abs_distortion,max_rel_distortion,mean_abs_distortion\n");
    for p in points {
        let rel = p.max_rel_distortion.map(|r| format!("{r:.6e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{:.6e},{},{:.6e}",
            p.watermark_level, p.requested_chunk_length, p.chunk_length, p.max_abs_distortion, rel, p.mean_abs_distortion
        );
    }
    out
}

/// Raw detail-side capacity in bits: `level × chunks × chunk_length / 2`.
pub fn capacity(plan: &ChunkPlan, level: u32) -> usize {
    level as usize * plan.chunk_count * plan.chunk_length / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrengthReport {
    pub confidentiality_bits: u32,
    pub search_space: BigUint,
    pub log10: f64,
}

fn factorial(n: u64) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// Exact `Σ_{i=1}^{R} R! × Σ_{j=t}^{C} C!`, i.e. `(R·R!)·((C−t+1)·C!)`.
pub fn search_space(rows: u64, cols: u64, threshold: u64) -> Result<StrengthReport> {
    if rows == 0 || cols == 0 || threshold == 0 || threshold > cols {
        return Err(Error::InvalidArgument(format!("search space needs positive R, C, t with t <= C (got {rows}, {cols}, {threshold})")));
    }
    let row_term = BigUint::from(rows) * factorial(rows);
    let col_term = BigUint::from(cols - threshold + 1) * factorial(cols);
    let search_space = row_term * col_term;
    let log10 = big_log10(&search_space);
    Ok(StrengthReport { confidentiality_bits: 256, search_space, log10 })
}

/// log10 from the decimal expansion: digit count plus the leading digits.
fn big_log10(n: &BigUint) -> f64 {
    let digits = n.to_str_radix(10);
    let lead = &digits[..digits.len().min(17)];
    let mantissa: f64 = lead.parse().expect("decimal digits");
    mantissa.log10() + (digits.len() - lead.len()) as f64
}
