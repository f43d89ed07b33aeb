//! Direct-mutation stand-ins for model manipulation attacks.
//!
//! Verification only sees whether weights or labels changed, not how, so
//! retraining-style attacks are simulated by perturbing parameters in place.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::ModelContainer;
use crate::error::{Error, Result};
use crate::keying::ScrambleKey;
use crate::marker::verify_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Adds N(0, magnitude²) noise to a fraction of scalars.
    WeightPerturb,
    /// Adds `magnitude` to a fraction of scalars at seeded positions.
    TargetedEdit,
    /// Swaps two labels in the class map.
    ClassFlip,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::WeightPerturb => "weight_perturb",
            AttackKind::TargetedEdit => "targeted_edit",
            AttackKind::ClassFlip => "class_flip",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Layer names to touch; `None` means every layer.
    #[serde(default)]
    pub target_layers: Option<Vec<String>>,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default = "full_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Labels to exchange for `class_flip`; when absent two labels are drawn
    /// from `rng_seed`.
    #[serde(default)]
    pub swap: Option<(String, String)>,
}

fn full_fraction() -> f64 {
    1.0
}

impl AttackSpec {
    pub fn weight_perturb(sigma: f64, fraction: f64, rng_seed: u64) -> Self {
        Self { kind: AttackKind::WeightPerturb, target_layers: None, magnitude: sigma, fraction, rng_seed, swap: None }
    }

    pub fn targeted_edit(delta: f64, fraction: f64, rng_seed: u64) -> Self {
        Self { kind: AttackKind::TargetedEdit, target_layers: None, magnitude: delta, fraction, rng_seed, swap: None }
    }

    pub fn class_flip(a: &str, b: &str) -> Self {
        Self {
            kind: AttackKind::ClassFlip,
            target_layers: None,
            magnitude: 0.0,
            fraction: 1.0,
            rng_seed: 0,
            swap: Some((a.to_string(), b.to_string())),
        }
    }

    pub fn targeting(mut self, layers: &[&str]) -> Self {
        self.target_layers = Some(layers.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::InvalidAttack(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidAttack(format!("fraction {} must be in (0, 1]", self.fraction)));
        }
        if self.kind != AttackKind::ClassFlip && !(self.magnitude > 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidAttack(format!("magnitude {} must be positive", self.magnitude)));
        }
        Ok(())
    }
}

/// Returns a tampered copy of `container`.
pub fn apply_attack(container: &ModelContainer, spec: &AttackSpec) -> Result<ModelContainer> {
    spec.validate()?;
    let mut out = container.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.rng_seed);

    if spec.kind == AttackKind::ClassFlip {
        if out.class_map.len() < 2 {
            return Err(Error::EmptyClassMap);
        }
        let (i, j) = match &spec.swap {
            Some((a, b)) => {
                let find = |label: &str| {
                    out.class_map
                        .iter()
                        .position(|c| c == label)
                        .ok_or_else(|| Error::InvalidAttack(format!("label `{label}` not in class map")))
                };
                (find(a)?, find(b)?)
            }
            None => {
                let pair = sample(&mut rng, out.class_map.len(), 2);
                (pair.index(0), pair.index(1))
            }
        };
        out.class_map.swap(i, j);
        return Ok(out);
    }

    let targets: Vec<usize> = match &spec.target_layers {
        None => (0..out.layers.len()).collect(),
        Some(names) => names
            .iter()
            .map(|n| out.layer_index(n).ok_or_else(|| Error::UnknownLayer(n.clone())))
            .collect::<Result<_>>()?,
    };
    let noise = Normal::new(0.0, spec.magnitude).map_err(|e| Error::InvalidAttack(e.to_string()))?;
    for h in targets {
        let layer = &mut out.layers[h];
        let n = layer.len();
        let touched = ((spec.fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut data = layer.data.clone();
        for idx in sample(&mut rng, n, touched) {
            data[idx] += match spec.kind {
                AttackKind::WeightPerturb => noise.sample(&mut rng),
                _ => spec.magnitude,
            };
        }
        layer.set_data(data)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub detected: usize,
    pub detection_rate: f64,
    /// Smallest and largest per-layer BER seen, when an expected secret was given.
    pub ber_range: Option<(f64, f64)>,
}

/// Runs `trials` attack-then-verify rounds on a marked container. Trial `i`
/// uses `rng_seed + i`. With `spec = None` every round verifies the untouched
/// container, measuring the false-alarm rate.
pub fn detection_trial(
    container: &ModelContainer,
    key: &ScrambleKey,
    expected_secret: Option<&[u8]>,
    spec: Option<&AttackSpec>,
    trials: usize,
) -> Result<TrialSummary> {
    let outcomes: Vec<(bool, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let report = match spec {
                Some(s) => {
                    let s = AttackSpec { rng_seed: s.rng_seed.wrapping_add(i as u64), ..s.clone() };
                    verify_model(&apply_attack(container, &s)?, key, expected_secret)?
                }
                None => verify_model(container, key, expected_secret)?,
            };
            Ok((!report.overall_pass, report.layers.iter().filter_map(|l| l.ber).collect()))
        })
        .collect::<Result<_>>()?;
    let detected = outcomes.iter().filter(|(d, _)| *d).count();
    let bers: Vec<f64> = outcomes.iter().flat_map(|(_, b)| b.iter().copied()).collect();
    let ber_range = bers.iter().copied().fold(None, |acc: Option<(f64, f64)>, b| {
        Some(acc.map_or((b, b), |(lo, hi)| (lo.min(b), hi.max(b))))
    });
    Ok(TrialSummary {
        trials,
        detected,
        detection_rate: if trials == 0 { 0.0 } else { detected as f64 / trials as f64 },
        ber_range,
    })
}

/// Tabular form of a trial summary.
pub fn trial_csv(label: &str, s: &TrialSummary) -> String {
    let (lo, hi) = s
        .ber_range
        .map(|(a, b)| (format!("{a:.4}"), format!("{b:.4}")))
        .unwrap_or_default();
    format!("attack,trials,detected,detection_rate,ber_min,ber_max\n{label},{},{},{:.4},{lo},{hi}\n", s.trials, s.detected, s.detection_rate)
}
