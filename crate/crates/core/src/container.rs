//! Neutral weight container: in-memory model, on-disk format and the
//! reshaping/chunking that feeds the wavelet transform.
//!
//! # File layout
//!
//! All integers are little-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `WMKCONT\0`                        |
//! | 8      | 4    | format version (`u32`, currently 1)     |
//! | 12     | 4    | reserved, zero                          |
//! | 16     | 8    | manifest length in bytes (`u64`)        |
//! | 24     | n    | manifest, UTF-8 JSON                    |
//! | …      | …    | zero padding up to a 64-byte boundary   |
//! | D      | …    | data section                            |
//!
//! Each manifest layer entry records `name`, `shape`, `dtype`, `role`,
//! `offset` (relative to `D`, 64-byte aligned) and `nbytes`. Scalars are raw
//! IEEE-754 values in row-major order. See `docs/container-format.md`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WMKCONT\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
const ALIGN: usize = 64;

/// Default number of scalars handed to one wavelet transform.
pub const DEFAULT_CHUNK_LENGTH: usize = 8192;
/// Upper bound on scalars per transform.
pub const MAX_CHUNK_LENGTH: usize = 12000;
/// Tensors smaller than this are excluded from embedding by default.
pub const MIN_EMBED_ELEMENTS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Float64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Float64 => 8,
        }
    }

    /// Rounds `v` to the nearest value representable in this dtype.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            DType::Float32 => v as f32 as f64,
            DType::Float64 => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hidden,
    Output,
    Excluded,
}

/// A named weight tensor.
///
/// Scalars are held as `f64` regardless of `dtype`; for `Float32` tensors
/// every value is exactly representable as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<f64>,
    pub role: Role,
}

impl LayerTensor {
    /// Builds a tensor with the default role: `Excluded` when it has fewer
    /// than [`MIN_EMBED_ELEMENTS`] scalars, `Hidden` otherwise.
    pub fn new(name: impl Into<String>, shape: Vec<usize>, dtype: DType, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expected = checked_len(&name, &shape)?;
        if expected != data.len() {
            return Err(Error::ShapeMismatch { expected, actual: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScalar(name));
        }
        let data = data.into_iter().map(|v| dtype.quantize(v)).collect::<Vec<_>>();
        let role = if data.len() < MIN_EMBED_ELEMENTS { Role::Excluded } else { Role::Hidden };
        Ok(Self { name, shape, dtype, data, role })
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Replaces the scalars, rounding to the tensor's dtype.
    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.data.len() {
            return Err(Error::ShapeMismatch { expected: self.data.len(), actual: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScalar(self.name.clone()));
        }
        self.data = data.into_iter().map(|v| self.dtype.quantize(v)).collect();
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let expected = checked_len(&self.name, &self.shape)?;
        if expected != self.data.len() {
            return Err(Error::ShapeMismatch { expected, actual: self.data.len() });
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScalar(self.name.clone()));
        }
        Ok(())
    }
}

fn checked_len(name: &str, shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::UnsupportedRank(shape.len()));
    }
    if shape.contains(&0) {
        return Err(Error::EmptyTensor(name.to_string()));
    }
    Ok(shape.iter().product())
}

/// An ordered collection of layers plus the class map and free-form metadata.
///
/// Layer order is significant: a layer's position is its index `h` for
/// payload stamping and schedule shifting.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub format_version: u32,
    pub layers: Vec<LayerTensor>,
    pub class_map: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

impl Default for ModelContainer {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            layers: Vec::new(),
            class_map: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }
}

impl ModelContainer {
    pub fn new(layers: Vec<LayerTensor>, class_map: Vec<String>) -> Result<Self> {
        let c = Self { layers, class_map, ..Self::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::DuplicateLayer(layer.name.clone()));
            }
            layer.validate()?;
        }
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&LayerTensor> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Marks `name` as the classification output layer.
    pub fn designate_output(&mut self, name: &str) -> Result<()> {
        let layer = self
            .layers
            .iter_mut()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))?;
        layer.role = Role::Output;
        Ok(())
    }

    pub fn output_layers(&self) -> impl Iterator<Item = &LayerTensor> {
        self.layers.iter().filter(|l| l.role == Role::Output)
    }

    /// Serializes to the container byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut offset = 0usize;
        for layer in &self.layers {
            let nbytes = layer.len() * layer.dtype.size();
            entries.push(LayerEntry {
                name: layer.name.clone(),
                shape: layer.shape.clone(),
                dtype: layer.dtype,
                role: layer.role,
                offset: offset as u64,
                nbytes: nbytes as u64,
            });
            offset = align_up(offset + nbytes);
        }
        let manifest = Manifest {
            layers: entries,
            class_map: self.class_map.clone(),
            metadata: self.metadata.clone(),
        };
        let manifest = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Format { offset: HEADER_LEN as u64, reason: e.to_string() })?;

        let data_start = align_up(HEADER_LEN + manifest.len());
        let mut out = Vec::with_capacity(data_start + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.resize(data_start, 0);
        for layer in &self.layers {
            match layer.dtype {
                DType::Float32 => layer.data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                DType::Float64 => layer.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
            }
            let aligned = data_start + align_up(out.len() - data_start);
            out.resize(aligned, 0);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, reason: &str| Error::Format { offset: offset as u64, reason: reason.to_string() };
        if bytes.len() < HEADER_LEN {
            return Err(fail(bytes.len(), "truncated header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(fail(0, "bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let manifest_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let manifest_end = (HEADER_LEN as u64)
            .checked_add(manifest_len)
            .filter(|&end| end <= bytes.len() as u64)
            .ok_or_else(|| fail(bytes.len(), "truncated manifest"))? as usize;
        let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
            .map_err(|e| fail(HEADER_LEN, &format!("manifest: {e}")))?;

        let data_start = align_up(manifest_end);
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for entry in manifest.layers {
            let count = checked_len(&entry.name, &entry.shape)?;
            let nbytes = count * entry.dtype.size();
            if entry.nbytes != nbytes as u64 {
                return Err(fail(HEADER_LEN, &format!("layer `{}` declares {} bytes, shape needs {nbytes}", entry.name, entry.nbytes)));
            }
            let start = (data_start as u64)
                .checked_add(entry.offset)
                .filter(|s| s % ALIGN as u64 == 0)
                .ok_or_else(|| fail(data_start, &format!("layer `{}` has a misaligned offset", entry.name)))?;
            let end = start
                .checked_add(entry.nbytes)
                .filter(|&e| e <= bytes.len() as u64)
                .ok_or_else(|| fail(bytes.len(), &format!("truncated data for layer `{}`", entry.name)))?;
            let raw = &bytes[start as usize..end as usize];
            let data: Vec<f64> = match entry.dtype {
                DType::Float32 => raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
                DType::Float64 => raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
            };
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(fail(start as usize + i * entry.dtype.size(), &format!("non-finite scalar in `{}`", entry.name)));
            }
            layers.push(LayerTensor { name: entry.name, shape: entry.shape, dtype: entry.dtype, data, role: entry.role });
        }
        let c = ModelContainer {
            format_version: version,
            layers,
            class_map: manifest.class_map,
            metadata: manifest.metadata,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    layers: Vec<LayerEntry>,
    #[serde(default)]
    class_map: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    role: Role,
    offset: u64,
    nbytes: u64,
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

pub fn load_container(path: impl AsRef<Path>) -> Result<ModelContainer> {
    let bytes = fs::read(path)?;
    ModelContainer::from_bytes(&bytes)
}

/// Writes the container atomically: temp file in the target directory, then rename.
pub fn save_container(container: &ModelContainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = container.to_bytes()?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// A dense row-major matrix view of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Views a tensor as a 2D matrix without reordering scalars.
///
/// Rank 4 `(a, b, c, d)` becomes `(a·b·d) × c`, so a `3×3×256×512` kernel
/// yields `4608 × 256`. Rank 3 `(a, b, c)` becomes `(a·b) × c`, rank 2 passes
/// through and rank 1 becomes a single row.
pub fn reshape_to_2d(layer: &LayerTensor) -> Result<Matrix> {
    let total = checked_len(&layer.name, &layer.shape)?;
    let cols = match layer.shape.as_slice() {
        [n] => *n,
        [_, c] => *c,
        [_, _, c] => *c,
        [_, _, c, _] => *c,
        other => return Err(Error::UnsupportedRank(other.len())),
    };
    Ok(Matrix { rows: total / cols, cols, data: layer.data.clone() })
}

/// Inverse of [`reshape_to_2d`]. The returned tensor gets the default role.
pub fn shape_to_nd(matrix: Matrix, name: impl Into<String>, shape: &[usize], dtype: DType) -> Result<LayerTensor> {
    let name = name.into();
    let expected = checked_len(&name, shape)?;
    let actual = matrix.rows * matrix.cols;
    if expected != actual || matrix.data.len() != actual {
        return Err(Error::ShapeMismatch { expected, actual: matrix.data.len() });
    }
    LayerTensor::new(name, shape.to_vec(), dtype, matrix.data)
}

/// How a layer's flat scalars are cut into transform-sized chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_length: usize,
    pub chunk_count: usize,
    pub padded_tail: usize,
    pub original_length: usize,
}

impl ChunkPlan {
    pub fn new(original_length: usize, chunk_length: usize) -> Result<Self> {
        validate_chunk_length(chunk_length)?;
        if original_length == 0 {
            return Err(Error::EmptyTensor(String::new()));
        }
        let chunk_count = original_length.div_ceil(chunk_length);
        Ok(Self {
            chunk_length,
            chunk_count,
            padded_tail: chunk_count * chunk_length - original_length,
            original_length,
        })
    }

    /// Number of genuine (non-padding) scalars in chunk `i`.
    pub fn valid_len(&self, i: usize) -> usize {
        if i + 1 == self.chunk_count {
            self.chunk_length - self.padded_tail
        } else {
            self.chunk_length
        }
    }

    /// Copies chunk `i` out of `flat`, zero-padding the tail.
    pub fn chunk(&self, flat: &[f64], i: usize) -> Vec<f64> {
        let start = i * self.chunk_length;
        let end = (start + self.chunk_length).min(flat.len());
        let mut out = flat[start..end].to_vec();
        out.resize(self.chunk_length, 0.0);
        out
    }

    /// Writes the genuine part of chunk `i` back into `flat`.
    pub fn write_back(&self, flat: &mut [f64], i: usize, chunk: &[f64]) {
        let start = i * self.chunk_length;
        let n = self.valid_len(i);
        flat[start..start + n].copy_from_slice(&chunk[..n]);
    }
}

pub fn validate_chunk_length(chunk_length: usize) -> Result<()> {
    if chunk_length == 0 || chunk_length % 32 != 0 || chunk_length > MAX_CHUNK_LENGTH {
        return Err(Error::InvalidChunkLength(chunk_length));
    }
    Ok(())
}

/// Flattens `layer` row-major and splits it into zero-padded chunks.
pub fn plan_chunks(layer: &LayerTensor, chunk_length: usize) -> Result<(ChunkPlan, Vec<Vec<f64>>)> {
    let plan = ChunkPlan::new(layer.len(), chunk_length).map_err(|e| match e {
        Error::EmptyTensor(_) => Error::EmptyTensor(layer.name.clone()),
        e => e,
    })?;
    let flat = reshape_to_2d(layer)?.data;
    let chunks = (0..plan.chunk_count).map(|i| plan.chunk(&flat, i)).collect();
    Ok((plan, chunks))
}

/// Concatenates chunks and drops the padding.
pub fn unchunk(plan: &ChunkPlan, chunks: &[Vec<f64>]) -> Vec<f64> {
    let mut flat: Vec<f64> = chunks.iter().flatten().copied().collect();
    flat.truncate(plan.original_length);
    flat
}
