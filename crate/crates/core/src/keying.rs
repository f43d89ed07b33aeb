//! Scramble key derivation and per-layer embedding schedules.
//!
//! A 32-byte seed expands into the 256-entry scramble vector `nu`. For layer
//! `h` the vector is rotated left by `h`, hashed into a layer key, and the
//! layer key drives a SHA-256 counter keystream. A partial Fisher–Yates
//! shuffle over the layer's detail-coefficient space consumes that keystream,
//! so every schedule is collision-free by construction.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::container::ChunkPlan;
use crate::error::{Error, Result};
use crate::wavelet::{atom_support, FIRST_DETAIL_SUBBAND, LEVELS, SUBBANDS};

pub const SEED_LEN: usize = 32;
pub const NU_LEN: usize = 256;

#[derive(Clone, PartialEq, Eq)]
pub struct ScrambleKey {
    seed: [u8; SEED_LEN],
    nu: Vec<u64>,
}

impl fmt::Debug for ScrambleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScrambleKey").finish_non_exhaustive()
    }
}

impl ScrambleKey {
    pub fn nu(&self) -> &[u64] {
        &self.nu
    }

    pub fn seed(&self) -> &[u8; SEED_LEN] {
        &self.seed
    }
}

/// `nu[i]` = first eight bytes (big-endian) of SHA-256(seed ‖ i as u32 BE).
pub fn derive_nu(seed: &[u8]) -> Result<ScrambleKey> {
    let seed: [u8; SEED_LEN] = seed.try_into().map_err(|_| Error::BadSeedLength(seed.len()))?;
    let nu = (0..NU_LEN as u32)
        .map(|i| {
            let mut h = Sha256::new();
            h.update(seed);
            h.update(i.to_be_bytes());
            let d = h.finalize();
            u64::from_be_bytes(d[..8].try_into().unwrap())
        })
        .collect();
    Ok(ScrambleKey { seed, nu })
}

/// Reads a key file: one line holding 64 hex digits.
pub fn read_key_file(path: impl AsRef<Path>) -> Result<ScrambleKey> {
    let text = fs::read_to_string(path)?;
    let line = text.trim();
    let seed = hex::decode(line).map_err(|e| Error::KeyFile(e.to_string()))?;
    derive_nu(&seed)
}

/// Writes `seed` as a key file, readable only by the owner on Unix.
pub fn write_key_file(path: impl AsRef<Path>, seed: &[u8; SEED_LEN]) -> Result<()> {
    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path.as_ref())?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        file.set_permissions(fs::Permissions::from_mode(0o600))?;
    }
    writeln!(file, "{}", hex::encode(seed))?;
    Ok(())
}

/// A detail-side coefficient: chunk, 1-based sub-band in 17..=32, index
/// within the sub-band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub chunk: usize,
    pub subband: usize,
    pub coeff: usize,
}

/// The embeddable detail coefficients of one layer, concatenated chunk by
/// chunk.
///
/// A zero-padded tail chunk only contributes coefficients whose synthesis
/// atoms lie wholly inside the genuine samples; anything touching the padding
/// would be lost when the padding is dropped after reconstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetailSpace {
    band_len: usize,
    full_chunks: usize,
    tail_usable: usize,
}

const DETAIL_BANDS: usize = SUBBANDS - FIRST_DETAIL_SUBBAND + 1;

impl DetailSpace {
    pub fn new(plan: &ChunkPlan) -> Self {
        let band_len = plan.chunk_length / SUBBANDS;
        if plan.padded_tail == 0 {
            return Self { band_len, full_chunks: plan.chunk_count, tail_usable: 0 };
        }
        let valid = plan.valid_len(plan.chunk_count - 1);
        let tail_usable = (0..band_len).take_while(|&k| atom_support(LEVELS, k).end <= valid).count();
        Self { band_len, full_chunks: plan.chunk_count - 1, tail_usable }
    }

    pub fn size(&self) -> usize {
        DETAIL_BANDS * (self.full_chunks * self.band_len + self.tail_usable)
    }

    pub fn position(&self, index: usize) -> Position {
        let per_chunk = DETAIL_BANDS * self.band_len;
        let (chunk, rem, per_band) = if index < self.full_chunks * per_chunk {
            (index / per_chunk, index % per_chunk, self.band_len)
        } else {
            (self.full_chunks, index - self.full_chunks * per_chunk, self.tail_usable)
        };
        Position { chunk, subband: FIRST_DETAIL_SUBBAND + rem / per_band, coeff: rem % per_band }
    }
}

/// Keystream of 64-bit words: SHA-256(layer_key ‖ counter) split into four words.
struct Keystream {
    layer_key: [u8; 32],
    counter: u64,
    buf: [u64; 4],
    used: usize,
}

const SCHEDULE_DOMAIN: &[u8] = b"wavemark-schedule-v1";
const MASK_DOMAIN: &[u8] = b"wavemark-mask-v1";

impl Keystream {
    fn new(key: &ScrambleKey, layer_index: usize, domain: &[u8]) -> Self {
        let shift = layer_index % NU_LEN;
        let mut h = Sha256::new();
        h.update(domain);
        for i in 0..NU_LEN {
            h.update(key.nu[(i + shift) % NU_LEN].to_be_bytes());
        }
        Self { layer_key: h.finalize().into(), counter: 0, buf: [0; 4], used: 4 }
    }

    fn next_u64(&mut self) -> u64 {
        if self.used == 4 {
            let mut h = Sha256::new();
            h.update(self.layer_key);
            h.update(self.counter.to_be_bytes());
            let d = h.finalize();
            for (i, w) in d.chunks_exact(8).enumerate() {
                self.buf[i] = u64::from_be_bytes(w.try_into().unwrap());
            }
            self.counter += 1;
            self.used = 0;
        }
        self.used += 1;
        self.buf[self.used - 1]
    }

    /// Uniform draw in `0..bound` by rejection sampling.
    fn below(&mut self, bound: u64) -> u64 {
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }
}

/// First `count` entries of a keyed permutation of `0..space_size`.
pub fn keyed_selection(key: &ScrambleKey, layer_index: usize, space_size: usize, count: usize) -> Result<Vec<usize>> {
    if count > space_size {
        return Err(Error::InsufficientCapacity { needed: count, available: space_size });
    }
    let mut stream = Keystream::new(key, layer_index, SCHEDULE_DOMAIN);
    // sparse Fisher–Yates: only displaced slots are stored
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * count);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let j = i + stream.below((space_size - i) as u64) as usize;
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    Ok(out)
}

/// Keyed mask words for a layer, one per scheduled position.
pub fn keyed_masks(key: &ScrambleKey, layer_index: usize, count: usize) -> Vec<u64> {
    let mut stream = Keystream::new(key, layer_index, MASK_DOMAIN);
    (0..count).map(|_| stream.next_u64()).collect()
}

/// Where a layer's payload fragments go, and the mask each fragment is
/// XORed with before it is written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrambleSchedule {
    pub layer_index: usize,
    pub positions: Vec<Position>,
    pub masks: Vec<u64>,
}

impl ScrambleSchedule {
    /// Mask for position `i`; positions without one are unmasked.
    pub fn mask(&self, i: usize) -> u64 {
        self.masks.get(i).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn schedule_for_layer(key: &ScrambleKey, layer_index: usize, space: &DetailSpace, count: usize) -> Result<ScrambleSchedule> {
    let picks = keyed_selection(key, layer_index, space.size(), count)?;
    Ok(ScrambleSchedule {
        layer_index,
        positions: picks.into_iter().map(|p| space.position(p)).collect(),
        masks: keyed_masks(key, layer_index, count),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn seed(b: u8) -> [u8; 32] {
        let mut s = [0u8; 32];
        s.iter_mut().enumerate().for_each(|(i, v)| *v = b.wrapping_add(i as u8));
        s
    }

    #[test]
    fn nu_is_deterministic() {
        assert_eq!(derive_nu(&seed(1)).unwrap(), derive_nu(&seed(1)).unwrap());
        assert_eq!(derive_nu(&seed(1)).unwrap().nu().len(), 256);
    }

    #[test]
    fn nu_matches_hash_oracle() {
        let key = derive_nu(&seed(9)).unwrap();
        let mut input = seed(9).to_vec();
        input.extend_from_slice(&17u32.to_be_bytes());
        let d = Sha256::digest(&input);
        assert_eq!(key.nu()[17], u64::from_be_bytes(d[..8].try_into().unwrap()));
    }

    #[test]
    fn one_bit_seed_change_scrambles_nu() {
        for trial in 0..100u8 {
            let a = seed(trial);
            let mut b = a;
            b[(trial as usize) % 32] ^= 1 << (trial % 8);
            let (ka, kb) = (derive_nu(&a).unwrap(), derive_nu(&b).unwrap());
            let differing = ka.nu().iter().zip(kb.nu()).filter(|(x, y)| x != y).count();
            assert!(differing >= 250, "trial {trial}: only {differing} entries differ");
        }
    }

    #[test]
    fn bad_seed_length() {
        assert!(matches!(derive_nu(&[0u8; 31]), Err(Error::BadSeedLength(31))));
    }

    #[test]
    fn exhaustive_selection_is_a_permutation() {
        let key = derive_nu(&seed(3)).unwrap();
        let mut picks = keyed_selection(&key, 0, 4096, 4096).unwrap();
        picks.sort_unstable();
        assert_eq!(picks, (0..4096).collect::<Vec<_>>());
    }

    #[test]
    fn layers_get_different_schedules() {
        let key = derive_nu(&seed(3)).unwrap();
        assert_ne!(keyed_selection(&key, 0, 100_000, 4096).unwrap(), keyed_selection(&key, 1, 100_000, 4096).unwrap());
    }

    #[test]
    fn over_capacity() {
        let key = derive_nu(&seed(3)).unwrap();
        assert!(matches!(keyed_selection(&key, 0, 4096, 4097), Err(Error::InsufficientCapacity { .. })));
    }

    #[test]
    fn detail_space_of_full_chunks() {
        let plan = ChunkPlan::new(2 * 8192, 8192).unwrap();
        let space = DetailSpace::new(&plan);
        assert_eq!(space.size(), 8192);
        assert_eq!(space.position(0), Position { chunk: 0, subband: 17, coeff: 0 });
        assert_eq!(space.position(4095), Position { chunk: 0, subband: 32, coeff: 255 });
        assert_eq!(space.position(4096 + 257), Position { chunk: 1, subband: 18, coeff: 1 });
    }

    #[test]
    fn padded_tail_only_offers_clean_atoms() {
        // 10000 scalars: one full chunk + 1808 genuine tail samples.
        // Coefficient k is usable when 32k + 94 <= 1808, i.e. k <= 53.
        let plan = ChunkPlan::new(10_000, 8192).unwrap();
        let space = DetailSpace::new(&plan);
        assert_eq!(space.size(), 4096 + 16 * 54);
        let last = space.position(space.size() - 1);
        assert_eq!(last, Position { chunk: 1, subband: 32, coeff: 53 });

        let small = DetailSpace::new(&ChunkPlan::new(4096, 8192).unwrap());
        assert!(small.size() < 4096);
    }

    #[test]
    fn schedules_are_collision_free() {
        let key = derive_nu(&seed(5)).unwrap();
        let plan = ChunkPlan::new(50_000, 8192).unwrap();
        let space = DetailSpace::new(&plan);
        let s = schedule_for_layer(&key, 2, &space, 4096).unwrap();
        let set: HashSet<_> = s.positions.iter().collect();
        assert_eq!(set.len(), 4096);
        assert!(s.positions.iter().all(|p| (17..=32).contains(&p.subband) && p.chunk < plan.chunk_count));
    }
}
