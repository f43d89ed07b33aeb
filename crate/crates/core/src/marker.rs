//! The embed/verify codec.
//!
//! Each scheduled detail coefficient `v` is mapped to the integer
//! `q = round((v + delta) · rho)`, its lowest `level` bits are overwritten with
//! one payload fragment, and it is mapped back with `q / rho − delta`. Only
//! scheduled coefficients are touched; chunks holding no scheduled
//! coefficient are passed through bit-identical.
//!
//! Recovery relies on the round trip (inverse transform, optional `f32`
//! storage, forward transform) moving a marked coefficient by far less than
//! half a quantum `1/rho`, so `round` at extraction lands on the embedded
//! integer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{plan_chunks, ChunkPlan, LayerTensor, ModelContainer, Role, DEFAULT_CHUNK_LENGTH};
use crate::error::{Error, Result};
use crate::keying::{schedule_for_layer, DetailSpace, Position, ScrambleKey, ScrambleSchedule};
use crate::payload::{bit_error_rate, model_digest, parse_and_check, ModelDigest, SecretPayload, PAYLOAD_BITS};
use crate::wavelet::{wpt_forward, wpt_inverse, LEVELS};

pub const DEFAULT_DELTA: f64 = 16.0;
pub const DEFAULT_RHO: f64 = 1e4;
pub const DEFAULT_LEVEL: u32 = 2;
const EXACT_LIMIT: f64 = (1u64 << 52) as f64;
const RECORD_PREFIX: &str = "wavemark.embed.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub delta: f64,
    pub rho: f64,
    #[serde(rename = "watermark_level")]
    pub level: u32,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA, rho: DEFAULT_RHO, level: DEFAULT_LEVEL }
    }
}

impl ScalingParams {
    pub fn with_level(level: u32) -> Self {
        Self { level, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.level) {
            return Err(Error::InvalidScaling(format!("watermark level {} not in 1..=4", self.level)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidScaling(format!("delta {} must be finite and nonnegative", self.delta)));
        }
        if !(self.rho.is_finite() && self.rho >= 1.0) {
            return Err(Error::InvalidScaling(format!("rho {} must be at least 1", self.rho)));
        }
        Ok(())
    }

    /// Number of scheduled coefficients needed for `payload_bits`.
    pub fn fragments(&self, payload_bits: usize) -> usize {
        payload_bits.div_ceil(self.level as usize)
    }
}

pub fn scale(coeff: f64, params: &ScalingParams) -> Result<u64> {
    let shifted = coeff + params.delta;
    let scaled = shifted * params.rho;
    if !(shifted > 0.0 && scaled < EXACT_LIMIT) {
        return Err(Error::CoefficientOutOfRange { value: coeff, delta: params.delta });
    }
    Ok(scaled.round() as u64)
}

pub fn rescale(q: u64, params: &ScalingParams) -> f64 {
    q as f64 / params.rho - params.delta
}

pub fn hide_bits(q: u64, bits: u64, level: u32) -> u64 {
    let mask = (1u64 << level) - 1;
    debug_assert!(bits <= mask);
    (q & !mask) | (bits & mask)
}

pub fn read_bits(q: u64, level: u32) -> u64 {
    q & low_bits(level)
}

fn low_bits(level: u32) -> u64 {
    (1u64 << level) - 1
}

/// Scales `coeff`, writes `bits` into its low bits and returns the marked
/// coefficient.
///
/// After replacement the value may move by one step of `2^level` toward the
/// unrounded scaled coefficient; the low bits are unchanged by such a step and
/// the error drops from up to `2^level − 0.5` to at most `2^(level−1)` quanta.
pub fn mark_coefficient(coeff: f64, bits: u64, params: &ScalingParams) -> Result<f64> {
    let exact = (coeff + params.delta) * params.rho;
    let replaced = hide_bits(scale(coeff, params)?, bits, params.level);
    let step = 1u64 << params.level;
    let mut best = replaced;
    for cand in [replaced.checked_sub(step), replaced.checked_add(step)].into_iter().flatten() {
        if (cand as f64) < EXACT_LIMIT && (cand as f64 - exact).abs() < (best as f64 - exact).abs() {
            best = cand;
        }
    }
    Ok(rescale(best, params))
}

/// Groups payload bits into `level`-bit fragments, MSB first; the final
/// fragment is zero-filled when `level` does not divide the bit count.
pub fn bits_to_fragments(bits: &[u8], level: u32) -> Vec<u64> {
    bits.chunks(level as usize)
        .map(|c| {
            let v = c.iter().fold(0u64, |acc, &b| (acc << 1) | (b & 1) as u64);
            v << (level as usize - c.len())
        })
        .collect()
}

pub fn fragments_to_bits(fragments: &[u64], level: u32, bit_count: usize) -> Vec<u8> {
    let mut bits: Vec<u8> = fragments
        .iter()
        .flat_map(|&f| (0..level).rev().map(move |i| ((f >> i) & 1) as u8))
        .collect();
    bits.truncate(bit_count);
    bits
}

/// Per-layer facts the verifier needs besides the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRecord {
    pub layer_name: String,
    pub layer_index: usize,
    pub chunk_plan: ChunkPlan,
    pub schedule_length: usize,
    pub scaling: ScalingParams,
    pub payload_bits: usize,
    /// Model digest at embedding time, used to rebuild the expected payload.
    pub model_digest: String,
}

impl EmbedRecord {
    pub fn metadata_key(layer_name: &str) -> String {
        format!("{RECORD_PREFIX}{layer_name}")
    }
}

/// All records stored in a container's metadata, in layer order.
pub fn embed_records(container: &ModelContainer) -> Result<Vec<EmbedRecord>> {
    let mut records = Vec::new();
    for (key, value) in &container.metadata {
        if key.starts_with(RECORD_PREFIX) {
            let rec: EmbedRecord = serde_json::from_str(value).map_err(|e| Error::Format {
                offset: 0,
                reason: format!("embed record `{key}`: {e}"),
            })?;
            records.push(rec);
        }
    }
    records.sort_by_key(|r| r.layer_index);
    Ok(records)
}

/// Builds the schedule for a layer of `plan` geometry.
pub fn layer_schedule(key: &ScrambleKey, layer_index: usize, plan: &ChunkPlan, params: &ScalingParams, payload_bits: usize) -> Result<ScrambleSchedule> {
    let space = DetailSpace::new(plan);
    schedule_for_layer(key, layer_index, &space, params.fragments(payload_bits))
}

fn by_chunk(schedule: &ScrambleSchedule, chunk_count: usize) -> Vec<Vec<(usize, Position)>> {
    let mut groups = vec![Vec::new(); chunk_count];
    for (i, p) in schedule.positions.iter().enumerate() {
        groups[p.chunk].push((i, *p));
    }
    groups
}

/// Hides `payload_bits` in `layer` at the scheduled detail coefficients.
pub fn embed_layer(
    layer: &LayerTensor,
    payload_bits: &[u8],
    schedule: &ScrambleSchedule,
    params: &ScalingParams,
    chunk_length: usize,
) -> Result<(LayerTensor, EmbedRecord)> {
    params.validate()?;
    let (plan, chunks) = plan_chunks(layer, chunk_length)?;
    let fragments = bits_to_fragments(payload_bits, params.level);
    let available = DetailSpace::new(&plan).size();
    if available < fragments.len() {
        return Err(Error::InsufficientCapacity { needed: fragments.len(), available });
    }
    if schedule.len() != fragments.len() {
        return Err(Error::InsufficientCapacity { needed: fragments.len(), available: schedule.len() });
    }
    if let Some(p) = schedule.positions.iter().find(|p| p.chunk >= plan.chunk_count) {
        return Err(Error::InvalidArgument(format!("schedule position in chunk {} beyond the layer's {} chunks", p.chunk, plan.chunk_count)));
    }
    let groups = by_chunk(schedule, plan.chunk_count);

    let marked: Vec<Option<Vec<f64>>> = chunks
        .par_iter()
        .zip(groups.par_iter())
        .map(|(chunk, group)| {
            if group.is_empty() {
                return Ok(None);
            }
            let mut grid = wpt_forward(chunk, LEVELS)?;
            for &(i, p) in group {
                let frag = (fragments[i] ^ schedule.mask(i)) & low_bits(params.level);
                let marked = mark_coefficient(grid.get(p.subband, p.coeff), frag, params)?;
                grid.set(p.subband, p.coeff, marked);
            }
            wpt_inverse(&grid).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut flat = layer.data.clone();
    for (i, chunk) in marked.iter().enumerate() {
        if let Some(chunk) = chunk {
            plan.write_back(&mut flat, i, chunk);
        }
    }
    let mut out = layer.clone();
    out.set_data(flat)?;
    let record = EmbedRecord {
        layer_name: layer.name.clone(),
        layer_index: schedule.layer_index,
        chunk_plan: plan,
        schedule_length: schedule.len(),
        scaling: *params,
        payload_bits: payload_bits.len(),
        model_digest: String::new(),
    };
    Ok((out, record))
}

/// Reads back `payload_bits` bits from the scheduled coefficients.
///
/// Coefficients pushed outside the scalable range by tampering read as zero
/// low bits; the resulting hash mismatch reports the damage.
pub fn extract_layer(layer: &LayerTensor, schedule: &ScrambleSchedule, params: &ScalingParams, chunk_length: usize, payload_bits: usize) -> Result<Vec<u8>> {
    params.validate()?;
    let (plan, chunks) = plan_chunks(layer, chunk_length)?;
    let needed = params.fragments(payload_bits);
    if schedule.len() < needed || schedule.positions.iter().any(|p| p.chunk >= plan.chunk_count) {
        return Err(Error::InsufficientCapacity { needed, available: schedule.len() });
    }
    let groups = by_chunk(schedule, plan.chunk_count);
    let per_chunk: Vec<Vec<(usize, u64)>> = chunks
        .par_iter()
        .zip(groups.par_iter())
        .map(|(chunk, group)| {
            if group.is_empty() {
                return Ok(Vec::new());
            }
            let grid = wpt_forward(chunk, LEVELS)?;
            Ok(group
                .iter()
                .map(|&(i, p)| {
                    let frag = scale(grid.get(p.subband, p.coeff), params).map(|q| read_bits(q, params.level)).unwrap_or(0);
                    (i, (frag ^ schedule.mask(i)) & low_bits(params.level))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut fragments = vec![0u64; schedule.len()];
    for (i, f) in per_chunk.into_iter().flatten() {
        fragments[i] = f;
    }
    fragments.truncate(needed);
    Ok(fragments_to_bits(&fragments, params.level, payload_bits))
}

/// Model-wide embedding settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkConfig {
    pub scaling: ScalingParams,
    pub chunk_length: usize,
}

impl Default for MarkConfig {
    fn default() -> Self {
        Self { scaling: ScalingParams::default(), chunk_length: DEFAULT_CHUNK_LENGTH }
    }
}

/// Embeds a layer-stamped, digest-bound payload into every hidden layer.
///
/// All layers are processed before anything is committed; any failure
/// returns the error and no marked container.
pub fn embed_model(container: &ModelContainer, key: &ScrambleKey, user_secret: &[u8], config: &MarkConfig) -> Result<ModelContainer> {
    config.scaling.validate()?;
    container.validate()?;
    let eligible: Vec<usize> = container
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.role == Role::Hidden)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleLayers);
    }
    let digest = model_digest(container);

    let marked: Vec<(usize, LayerTensor, EmbedRecord)> = eligible
        .par_iter()
        .map(|&h| {
            let layer = &container.layers[h];
            let payload = SecretPayload::new(h, user_secret, digest)?;
            let plan = ChunkPlan::new(layer.len(), config.chunk_length)?;
            let schedule = layer_schedule(key, h, &plan, &config.scaling, PAYLOAD_BITS)?;
            let (out, mut record) = embed_layer(layer, &payload.to_bits(), &schedule, &config.scaling, config.chunk_length)?;
            record.model_digest = digest.to_hex();
            Ok((h, out, record))
        })
        .collect::<Result<_>>()?;

    let mut out = container.clone();
    out.metadata.retain(|k, _| !k.starts_with(RECORD_PREFIX));
    for (h, layer, record) in marked {
        let json = serde_json::to_string(&record).expect("embed record serializes");
        out.metadata.insert(EmbedRecord::metadata_key(&layer.name), json);
        out.layers[h] = layer;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerVerdict {
    pub layer_name: String,
    pub hash_match: bool,
    pub digest_match: bool,
    /// Present only when an expected secret was supplied.
    pub ber: Option<f64>,
    /// User part of the recovered secret, when its hash checks out.
    pub recovered_secret: Option<Vec<u8>>,
}

impl LayerVerdict {
    pub fn passed(&self) -> bool {
        self.hash_match && self.digest_match
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub layers: Vec<LayerVerdict>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn failing_layers(&self) -> impl Iterator<Item = &LayerVerdict> {
        self.layers.iter().filter(|l| !l.passed())
    }

    /// Mean BER over layers that report one.
    pub fn mean_ber(&self) -> Option<f64> {
        let bers: Vec<f64> = self.layers.iter().filter_map(|l| l.ber).collect();
        (!bers.is_empty()).then(|| bers.iter().sum::<f64>() / bers.len() as f64)
    }
}

fn verify_layer(container: &ModelContainer, key: &ScrambleKey, record: &EmbedRecord, fresh: &ModelDigest, expected_secret: Option<&[u8]>) -> Result<LayerVerdict> {
    let failed = || LayerVerdict {
        layer_name: record.layer_name.clone(),
        hash_match: false,
        digest_match: false,
        ber: expected_secret.map(|_| 1.0),
        recovered_secret: None,
    };
    let Some(layer) = container.layers.get(record.layer_index).filter(|l| l.name == record.layer_name) else {
        return Ok(failed());
    };
    let plan = record.chunk_plan;
    if record.payload_bits != PAYLOAD_BITS
        || record.scaling.validate().is_err()
        || ChunkPlan::new(layer.len(), plan.chunk_length).ok() != Some(plan)
    {
        return Ok(failed());
    }
    let schedule = match layer_schedule(key, record.layer_index, &plan, &record.scaling, PAYLOAD_BITS) {
        Ok(s) => s,
        Err(Error::InsufficientCapacity { .. }) => return Ok(failed()),
        Err(e) => return Err(e),
    };
    let bits = extract_layer(layer, &schedule, &record.scaling, plan.chunk_length, PAYLOAD_BITS)?;
    let parsed = parse_and_check(&bits)?;
    let digest_match = parsed.hash_match && parsed.model_digest == *fresh;

    let ber = match expected_secret {
        Some(secret) => {
            let embed_digest = ModelDigest::from_hex(&record.model_digest).unwrap_or(*fresh);
            let expected = SecretPayload::new(record.layer_index, secret, embed_digest)?;
            Some(bit_error_rate(&bits, &expected.to_bits()))
        }
        None => None,
    };
    let recovered_secret = (parsed.hash_match && parsed.secret_bytes.len() >= 2).then(|| parsed.secret_bytes[2..].to_vec());
    Ok(LayerVerdict { layer_name: record.layer_name.clone(), hash_match: parsed.hash_match, digest_match, ber, recovered_secret })
}

/// Recovers and checks every recorded layer's payload.
pub fn verify_model(container: &ModelContainer, key: &ScrambleKey, expected_secret: Option<&[u8]>) -> Result<VerificationReport> {
    let records = embed_records(container)?;
    if records.is_empty() {
        return Err(Error::MissingEmbedRecords);
    }
    let fresh = model_digest(container);
    let layers: Vec<LayerVerdict> = records
        .par_iter()
        .map(|r| verify_layer(container, key, r, &fresh, expected_secret))
        .collect::<Result<_>>()?;
    let overall_pass = layers.iter().all(LayerVerdict::passed);
    Ok(VerificationReport { layers, overall_pass })
}
