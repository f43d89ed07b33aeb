//! Fragile wavelet-domain watermarking for neural-network weights.
//!
//! Every hidden layer gets its own 8,192-bit payload: a layer-stamped secret,
//! a digest of the class map and output layer, and a SHA-256 over both. The
//! payload is hidden two bits at a time in key-selected detail coefficients
//! of a five-level Daubechies-2 wavelet packet decomposition of the layer's
//! weights, each fragment XORed with a keyed mask. Any later change to a
//! protected layer, the output layer or the class map breaks the hash or the
//! digest on verification.
//!
//! ```no_run
//! use wavemark_core::{embed_model, load_container, verify_model, derive_nu, MarkConfig};
//!
//! let model = load_container("model.wmk")?;
//! let key = derive_nu(&[7u8; 32])?;
//! let marked = embed_model(&model, &key, b"alice/resnet18/v1", &MarkConfig::default())?;
//! let report = verify_model(&marked, &key, Some(b"alice/resnet18/v1"))?;
//! assert!(report.overall_pass);
//! # Ok::<(), wavemark_core::Error>(())
//! ```

pub mod analysis;
pub mod attack;
pub mod container;
pub mod error;
pub mod keying;
pub mod marker;
pub mod payload;
pub mod synth;
pub mod wavelet;

pub use analysis::{capacity, search_space, sweep_distortion, DistortionPoint, StrengthReport, SweepConfig};
pub use attack::{apply_attack, detection_trial, AttackKind, AttackSpec, TrialSummary};
pub use container::{
    load_container, plan_chunks, reshape_to_2d, save_container, shape_to_nd, ChunkPlan, DType, LayerTensor, Matrix,
    ModelContainer, Role,
};
pub use error::{Error, Result};
pub use keying::{derive_nu, read_key_file, schedule_for_layer, write_key_file, DetailSpace, ScrambleKey, ScrambleSchedule};
pub use marker::{
    embed_layer, embed_model, embed_records, extract_layer, verify_model, EmbedRecord, LayerVerdict, MarkConfig,
    ScalingParams, VerificationReport,
};
pub use payload::{model_digest, parse_and_check, prepare_secret, ModelDigest, SecretPayload, PAYLOAD_BITS};
pub use synth::{synthetic_model, SynthConfig};
pub use wavelet::{wipe_details, wpt_forward, wpt_inverse, FilterBank, SubbandGrid};
