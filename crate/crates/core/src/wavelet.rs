//! Periodized Daubechies-2 wavelet packet transform.
//!
//! Every node of the packet tree is split into a low-pass and a high-pass
//! half, down to `levels` levels, giving `2^levels` equal sub-bands. The
//! periodized filter bank is orthonormal, so the transform preserves energy
//! and its inverse is its transpose.
//!
//! Leaves are returned in frequency order. A high-pass split mirrors the
//! spectrum of its child, so natural tree position `n` of the frequency band
//! `f` is the Gray code `f ^ (f >> 1)`.

use crate::error::{Error, Result};

/// Decomposition depth used by the watermark codec.
pub const LEVELS: u32 = 5;
/// Number of sub-bands at [`LEVELS`].
pub const SUBBANDS: usize = 1 << LEVELS;
/// First detail-side sub-band (1-based); bands above the midpoint carry payload.
pub const FIRST_DETAIL_SUBBAND: usize = SUBBANDS / 2 + 1;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const NORM: f64 = 5.656_854_249_492_381; // 4·√2

/// db2 scaling coefficients h₀..h₃.
const SCALING: [f64; 4] = [
    (1.0 + SQRT3) / NORM,
    (3.0 + SQRT3) / NORM,
    (3.0 - SQRT3) / NORM,
    (1.0 - SQRT3) / NORM,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Periodized,
}

/// Four-tap analysis/synthesis filters in convolution convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub dec_lo: [f64; 4],
    pub dec_hi: [f64; 4],
    pub rec_lo: [f64; 4],
    pub rec_hi: [f64; 4],
    pub boundary: BoundaryMode,
}

impl FilterBank {
    pub fn db2() -> Self {
        let h = SCALING;
        // g[t] = (-1)^t h[3 - t]
        let g = [h[3], -h[2], h[1], -h[0]];
        Self {
            dec_lo: [h[3], h[2], h[1], h[0]],
            dec_hi: [g[3], g[2], g[1], g[0]],
            rec_lo: h,
            rec_hi: g,
            boundary: BoundaryMode::Periodized,
        }
    }

    /// Largest deviation from the orthonormal quadrature-mirror identities.
    pub fn qmf_residual(&self) -> f64 {
        let (h, g) = (&self.rec_lo, &self.rec_hi);
        let dot = |a: &[f64; 4], b: &[f64; 4], shift: usize| (0..4 - shift).map(|t| a[t] * b[t + shift]).sum::<f64>();
        let mut worst = 0f64;
        worst = worst.max((dot(h, h, 0) - 1.0).abs());
        worst = worst.max((dot(g, g, 0) - 1.0).abs());
        worst = worst.max(dot(h, h, 2).abs());
        worst = worst.max(dot(g, g, 2).abs());
        worst = worst.max(dot(h, g, 0).abs());
        worst = worst.max(dot(h, g, 2).abs());
        worst = worst.max(dot(g, h, 2).abs());
        worst = worst.max((h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs());
        for t in 0..4 {
            worst = worst.max((self.dec_lo[t] - h[3 - t]).abs());
            worst = worst.max((self.dec_hi[t] - g[3 - t]).abs());
        }
        worst
    }
}

/// Packet coefficients of one chunk, sub-bands stored contiguously in
/// frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandGrid {
    coeffs: Vec<f64>,
    levels: u32,
}

impl SubbandGrid {
    pub fn from_subbands(subbands: Vec<Vec<f64>>) -> Result<Self> {
        let count = subbands.len();
        if count < 2 || !count.is_power_of_two() {
            return Err(Error::MalformedGrid(format!("{count} sub-bands is not a power of two")));
        }
        let band_len = subbands[0].len();
        if band_len == 0 || subbands.iter().any(|b| b.len() != band_len) {
            return Err(Error::MalformedGrid("sub-bands differ in length".into()));
        }
        Ok(Self { coeffs: subbands.concat(), levels: count.trailing_zeros() })
    }

    pub fn subband_count(&self) -> usize {
        1 << self.levels
    }

    pub fn band_len(&self) -> usize {
        self.coeffs.len() >> self.levels
    }

    pub fn chunk_length(&self) -> usize {
        self.coeffs.len()
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Sub-band `index`, 1-based (1 = lowest frequency).
    pub fn subband(&self, index: usize) -> &[f64] {
        let n = self.band_len();
        &self.coeffs[(index - 1) * n..index * n]
    }

    pub fn subband_mut(&mut self, index: usize) -> &mut [f64] {
        let n = self.band_len();
        &mut self.coeffs[(index - 1) * n..index * n]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, subband: usize, coeff: usize) -> f64 {
        self.coeffs[(subband - 1) * self.band_len() + coeff]
    }

    pub fn set(&mut self, subband: usize, coeff: usize, value: f64) {
        let n = self.band_len();
        self.coeffs[(subband - 1) * n + coeff] = value;
    }

    /// Zeroes the upper (detail) half of the sub-bands.
    pub fn zero_details(&mut self) {
        let half = self.coeffs.len() / 2;
        self.coeffs[half..].iter_mut().for_each(|c| *c = 0.0);
    }
}

fn gray(f: usize) -> usize {
    f ^ (f >> 1)
}

fn analysis_step(input: &[f64], lo: &mut [f64], hi: &mut [f64]) {
    let n = input.len();
    let h = SCALING;
    for k in 0..n / 2 {
        let base = 2 * k;
        let x = [input[base], input[base + 1], input[(base + 2) % n], input[(base + 3) % n]];
        lo[k] = h[0] * x[0] + h[1] * x[1] + h[2] * x[2] + h[3] * x[3];
        hi[k] = h[3] * x[0] - h[2] * x[1] + h[1] * x[2] - h[0] * x[3];
    }
}

fn synthesis_step(lo: &[f64], hi: &[f64], out: &mut [f64]) {
    let n = out.len();
    let h = SCALING;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..n / 2 {
        let (a, d) = (lo[k], hi[k]);
        let base = 2 * k;
        out[base] += h[0] * a + h[3] * d;
        out[base + 1] += h[1] * a - h[2] * d;
        out[(base + 2) % n] += h[2] * a + h[1] * d;
        out[(base + 3) % n] += h[3] * a - h[0] * d;
    }
}

/// Full packet decomposition of `chunk` to depth `levels`.
pub fn wpt_forward(chunk: &[f64], levels: u32) -> Result<SubbandGrid> {
    let n = chunk.len();
    if levels == 0 || levels > 16 || n == 0 || n % (1usize << levels) != 0 {
        return Err(Error::LengthNotDivisible { len: n, levels });
    }
    let mut cur = chunk.to_vec();
    let mut next = vec![0.0; n];
    for level in 0..levels {
        let node_len = n >> level;
        let half = node_len / 2;
        for node in 0..1usize << level {
            let src = &cur[node * node_len..(node + 1) * node_len];
            let (lo, hi) = next[node * node_len..(node + 1) * node_len].split_at_mut(half);
            analysis_step(src, lo, hi);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let band = n >> levels;
    let mut coeffs = vec![0.0; n];
    for f in 0..1usize << levels {
        let natural = gray(f);
        coeffs[f * band..(f + 1) * band].copy_from_slice(&cur[natural * band..(natural + 1) * band]);
    }
    Ok(SubbandGrid { coeffs, levels })
}

/// Perfect-reconstruction inverse of [`wpt_forward`].
pub fn wpt_inverse(grid: &SubbandGrid) -> Result<Vec<f64>> {
    let n = grid.coeffs.len();
    let levels = grid.levels;
    if levels == 0 || n == 0 || n % (1usize << levels) != 0 {
        return Err(Error::MalformedGrid(format!("{n} coefficients over {levels} levels")));
    }
    let band = n >> levels;
    let mut cur = vec![0.0; n];
    for f in 0..1usize << levels {
        let natural = gray(f);
        cur[natural * band..(natural + 1) * band].copy_from_slice(&grid.coeffs[f * band..(f + 1) * band]);
    }
    let mut next = vec![0.0; n];
    for level in (0..levels).rev() {
        let node_len = n >> level;
        let half = node_len / 2;
        for node in 0..1usize << level {
            let (lo, hi) = cur[node * node_len..(node + 1) * node_len].split_at(half);
            synthesis_step(lo, hi, &mut next[node * node_len..(node + 1) * node_len]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Reconstruction of a chunk from its approximation half alone.
#[derive(Debug, Clone)]
pub struct WipeResult {
    pub reconstructed: Vec<f64>,
    pub max_abs_error: f64,
    pub rms_error: f64,
}

pub fn wipe_details(chunk: &[f64]) -> Result<WipeResult> {
    let mut grid = wpt_forward(chunk, LEVELS)?;
    grid.zero_details();
    let reconstructed = wpt_inverse(&grid)?;
    let (mut max_abs_error, mut sq) = (0f64, 0f64);
    for (a, b) in chunk.iter().zip(&reconstructed) {
        let e = (a - b).abs();
        max_abs_error = max_abs_error.max(e);
        sq += e * e;
    }
    let rms_error = (sq / chunk.len() as f64).sqrt();
    Ok(WipeResult { reconstructed, max_abs_error, rms_error })
}

/// Samples touched by coefficient `k` of any sub-band, as the half-open
/// range `stride·k .. stride·k + span` (before periodic wrap).
pub fn atom_support(levels: u32, k: usize) -> std::ops::Range<usize> {
    let stride = 1usize << levels;
    // each level widens the support by three taps at that level's stride
    let span = 3 * (stride - 1) + 1;
    stride * k..stride * k + span
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chunk(rng: &mut impl Rng, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-amp..amp)).collect()
    }

    #[test]
    fn filter_bank_is_orthonormal_qmf() {
        assert!(FilterBank::db2().qmf_residual() <= 1e-12);
    }

    #[test]
    fn constant_chunk_lands_in_lowest_band() {
        let grid = wpt_forward(&vec![1.0; 8192], 5).unwrap();
        let expected = std::f64::consts::SQRT_2.powi(5);
        assert!(grid.subband(1).iter().all(|&c| (c - expected).abs() <= 1e-10));
        for b in 2..=32 {
            assert!(grid.subband(b).iter().all(|&c| c.abs() <= 1e-10), "band {b}");
        }
    }

    #[test]
    fn length_must_divide() {
        assert!(matches!(wpt_forward(&vec![0.0; 8190], 5), Err(Error::LengthNotDivisible { .. })));
    }

    #[test]
    fn zero_grid_inverts_to_zero() {
        let grid = SubbandGrid::from_subbands(vec![vec![0.0; 8]; 32]).unwrap();
        assert!(wpt_inverse(&grid).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn malformed_grid() {
        assert!(SubbandGrid::from_subbands(vec![vec![0.0; 8]; 3]).is_err());
        assert!(SubbandGrid::from_subbands(vec![vec![0.0; 8], vec![0.0; 7]]).is_err());
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [32, 64, 4000, 8192] {
            let x = random_chunk(&mut rng, n, 1e3);
            let grid = wpt_forward(&x, 5).unwrap();
            let y = wpt_inverse(&grid).unwrap();
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10, "n={n} err={err}");
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = grid.coefficients().iter().map(|v| v * v).sum();
            assert!(((ex - ec) / ex).abs() <= 1e-10);
        }
    }

    #[test]
    fn alternating_sequence_is_pure_top_band() {
        // Direct oracle: the level-1 high-pass of (+1,-1,...) is the constant
        // Σh = √2, which four further low-pass steps scale by (√2)^4, landing
        // in natural node 0b10000 = frequency band 32.
        let x: Vec<f64> = (0..8192).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let grid = wpt_forward(&x, 5).unwrap();
        let expected = std::f64::consts::SQRT_2.powi(5);
        assert!(grid.subband(32).iter().all(|&c| (c - expected).abs() <= 1e-10));
        for b in 1..32 {
            assert!(grid.subband(b).iter().all(|&c| c.abs() <= 1e-10), "band {b}");
        }
        let wiped = wipe_details(&x).unwrap();
        assert!(wiped.reconstructed.iter().all(|v| v.abs() <= 1e-10));
        assert!((wiped.max_abs_error - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn constant_chunk_wipes_without_error() {
        let w = wipe_details(&vec![0.3; 1024]).unwrap();
        assert!(w.max_abs_error <= 1e-12);
    }

    #[test]
    fn single_coefficient_stays_inside_atom_support() {
        let n = 1024;
        for (band, k) in [(17, 0), (32, 5), (24, 31)] {
            let mut grid = SubbandGrid::from_subbands(vec![vec![0.0; n / 32]; 32]).unwrap();
            grid.set(band, k, 1.0);
            let atom = wpt_inverse(&grid).unwrap();
            let support = atom_support(5, k);
            for (i, v) in atom.iter().enumerate() {
                let inside = support.clone().any(|s| s % n == i);
                if !inside {
                    assert!(v.abs() <= 1e-14, "band {band} k {k} sample {i} = {v}");
                }
                assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }
}
