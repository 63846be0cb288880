//! Shots, channel traces, the JSON dataset format, and a synthetic
//! multi-channel generator with labeled fault injection.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_structure::{StructureError, StructureSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("shot {shot_id}{}: {reason}", .channel.map(|c| format!(", channel {c}")).unwrap_or_default())]
    Invalid {
        shot_id: String,
        channel: Option<usize>,
        reason: String,
    },
    #[error("infeasible synthesis parameters: {0}")]
    Infeasible(String),
    #[error("dataset contains unlabeled channels (shot {shot_id}, channel {channel})")]
    Unlabeled { shot_id: String, channel: usize },
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed dataset")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Structure(#[from] StructureError),
}

impl DataError {
    fn invalid(shot_id: &str, channel: Option<usize>, reason: impl Into<String>) -> Self {
        DataError::Invalid {
            shot_id: shot_id.to_string(),
            channel,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Incorrect,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrace {
    #[serde(rename = "index")]
    pub channel_index: usize,
    pub label: Label,
    pub samples: Vec<f64>,
}

/// One discharge: every channel sampled on a shared time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub shot_id: String,
    /// Seconds per sample.
    pub dt: f64,
    pub channels: Vec<ChannelTrace>,
}

impl Shot {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn incorrect_count(&self) -> usize {
        self.channels
            .iter()
            .filter(|c| c.label == Label::Incorrect)
            .count()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let id = &self.shot_id;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DataError::invalid(
                id,
                None,
                format!("dt must be positive and finite, got {}", self.dt),
            ));
        }
        if self.channels.len() < 2 {
            return Err(DataError::invalid(
                id,
                None,
                format!("need at least 2 channels, got {}", self.channels.len()),
            ));
        }
        let expected_len = self.channels[0].samples.len();
        for (pos, ch) in self.channels.iter().enumerate() {
            if ch.channel_index != pos {
                return Err(DataError::invalid(
                    id,
                    Some(ch.channel_index),
                    format!("channel indices must be contiguous from 0; expected {pos}"),
                ));
            }
            if ch.samples.len() < 2 {
                return Err(DataError::invalid(
                    id,
                    Some(pos),
                    "trace shorter than 2 samples",
                ));
            }
            if ch.samples.len() != expected_len {
                return Err(DataError::invalid(
                    id,
                    Some(pos),
                    format!(
                        "length mismatch: {} samples, channel 0 has {}",
                        ch.samples.len(),
                        expected_len
                    ),
                ));
            }
            if let Some(i) = ch.samples.iter().position(|v| !v.is_finite()) {
                return Err(DataError::invalid(
                    id,
                    Some(pos),
                    format!("non-finite sample at position {i}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub shots: Vec<Shot>,
}

/// Builds the structure spec of fully labeled shots sharing one channel count.
pub fn structure_of(shots: &[Shot]) -> Result<StructureSpec, DataError> {
    let n_channels = shots.first().map_or(0, Shot::n_channels);
    let mut incorrect = Vec::with_capacity(shots.len());
    for shot in shots {
        if shot.n_channels() != n_channels {
            return Err(DataError::invalid(
                &shot.shot_id,
                None,
                format!(
                    "channel count {} differs from first shot ({n_channels})",
                    shot.n_channels()
                ),
            ));
        }
        if let Some(ch) = shot.channels.iter().find(|c| c.label == Label::Unknown) {
            return Err(DataError::Unlabeled {
                shot_id: shot.shot_id.clone(),
                channel: ch.channel_index,
            });
        }
        incorrect.push(shot.incorrect_count());
    }
    Ok(StructureSpec::new(n_channels, incorrect)?)
}

pub fn load_shots(path: impl AsRef<Path>) -> Result<Vec<Shot>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_shots(&text).map_err(|e| match e {
        DataError::Json { source, .. } => DataError::Json {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses and validates a JSON dataset document.
pub fn parse_shots(text: &str) -> Result<Vec<Shot>, DataError> {
    let dataset: Dataset = serde_json::from_str(text).map_err(|source| DataError::Json {
        path: PathBuf::from("<input>"),
        source,
    })?;
    for shot in &dataset.shots {
        shot.validate()?;
    }
    Ok(dataset.shots)
}

pub fn shots_to_json(shots: &[Shot]) -> String {
    #[derive(Serialize)]
    struct DatasetRef<'a> {
        shots: &'a [Shot],
    }
    let mut s = serde_json::to_string_pretty(&DatasetRef { shots }).expect("shots serialize");
    s.push('\n');
    s
}

pub fn save_shots(shots: &[Shot], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, shots_to_json(shots)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Standard deviation of the shared plasma fluctuation on the flat-top, in
/// units of the flat-top level.
pub const FLUCTUATION_AMPLITUDE: f64 = 0.03;
/// Independent per-channel measurement noise, same units.
pub const CHANNEL_NOISE: f64 = 0.01;
/// Amplitude of the slow profile-shape mode each correct channel sees with
/// its own weight in `[-1, 1]`.
pub const PROFILE_AMPLITUDE: f64 = 0.06;
/// Smallest trace length the trapezoid envelope and fault placement support.
pub const MIN_SYNTH_SAMPLES: usize = 20;

/// A corruption applied to one channel.
///
/// Amplitudes are in flat-top units and always exceed five times
/// [`FLUCTUATION_AMPLITUDE`] somewhere in the trace:
///
/// | kind | parameters |
/// |------|-----------|
/// | spike burst | 2–8 same-sign spikes, amplitude 0.16–0.5, width 1–3 samples |
/// | baseline jump | step of ±0.16–0.4 starting inside the flat-top, held to the end |
/// | dead channel | signal replaced by an offset in ±0.02 plus channel noise |
/// | random-walk drift | walk rescaled so its peak excursion is 0.16–0.4 |
/// | amplitude collapse | gain drops to 0.3–0.65 from a point in the first half of the flat-top |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    SpikeBurst {
        count: usize,
        amplitude: f64,
        width: usize,
    },
    BaselineJump {
        start: usize,
        step: f64,
    },
    DeadChannel {
        offset: f64,
    },
    RandomWalkDrift {
        peak: f64,
    },
    AmplitudeCollapse {
        start: usize,
        gain: f64,
    },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::SpikeBurst { .. } => "spike_burst",
            FaultKind::BaselineJump { .. } => "baseline_jump",
            FaultKind::DeadChannel { .. } => "dead_channel",
            FaultKind::RandomWalkDrift { .. } => "random_walk_drift",
            FaultKind::AmplitudeCollapse { .. } => "amplitude_collapse",
        }
    }

    fn random(rng: &mut ChaCha8Rng, len: usize) -> Self {
        let (flat_start, flat_end) = flat_top(len);
        match rng.gen_range(0..5) {
            0 => FaultKind::SpikeBurst {
                count: rng.gen_range(2..=8),
                amplitude: rng.gen_range(0.16..=0.5),
                width: rng.gen_range(1..=3),
            },
            1 => FaultKind::BaselineJump {
                start: rng.gen_range(flat_start..flat_end),
                step: random_sign(rng) * rng.gen_range(0.16..=0.4),
            },
            2 => FaultKind::DeadChannel {
                offset: rng.gen_range(-0.02..=0.02),
            },
            3 => FaultKind::RandomWalkDrift {
                peak: rng.gen_range(0.16..=0.4),
            },
            _ => FaultKind::AmplitudeCollapse {
                start: rng.gen_range(flat_start..(flat_start + flat_end) / 2),
                gain: rng.gen_range(0.3..=0.65),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target_channel: usize,
    #[serde(flatten)]
    pub kind: FaultKind,
}

impl FaultSpec {
    /// Applies the fault in place. `rng` drives the stochastic parts (spike
    /// positions and signs, walk increments, dead-channel noise).
    pub fn apply(&self, samples: &mut [f64], rng: &mut ChaCha8Rng) {
        let len = samples.len();
        match self.kind {
            FaultKind::SpikeBurst {
                count,
                amplitude,
                width,
            } => {
                let sign = random_sign(rng);
                for _ in 0..count {
                    let at = rng.gen_range(0..len);
                    for v in samples.iter_mut().skip(at).take(width) {
                        *v += sign * amplitude;
                    }
                }
            }
            FaultKind::BaselineJump { start, step } => {
                for v in samples.iter_mut().skip(start) {
                    *v += step;
                }
            }
            FaultKind::DeadChannel { offset } => {
                for v in samples.iter_mut() {
                    *v = offset + CHANNEL_NOISE * rng.sample::<f64, _>(StandardNormal);
                }
            }
            FaultKind::RandomWalkDrift { peak } => {
                let mut walk = Vec::with_capacity(len);
                let mut acc = 0.0;
                for _ in 0..len {
                    acc += rng.sample::<f64, _>(StandardNormal);
                    walk.push(acc);
                }
                let max_abs = walk.iter().fold(0.0f64, |m, w| m.max(w.abs()));
                let scale = if max_abs > 0.0 { peak / max_abs } else { 0.0 };
                for (v, w) in samples.iter_mut().zip(&walk) {
                    *v += w * scale;
                }
            }
            FaultKind::AmplitudeCollapse { start, gain } => {
                for v in samples.iter_mut().skip(start) {
                    *v *= gain;
                }
            }
        }
    }
}

/// Parameters of [`synthesize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub samples_per_shot: usize,
    /// Number of corrupted channels in each shot; its length is the shot count.
    pub faults_per_shot: Vec<usize>,
    pub seed: u64,
    pub dt: f64,
}

impl SynthConfig {
    pub fn new(
        n_channels: usize,
        samples_per_shot: usize,
        faults_per_shot: Vec<usize>,
        seed: u64,
    ) -> Self {
        Self {
            n_channels,
            samples_per_shot,
            faults_per_shot,
            seed,
            dt: 1e-3,
        }
    }
}

/// A synthesized shot together with the faults injected into it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthShot {
    pub shot: Shot,
    pub faults: Vec<FaultSpec>,
    /// Channel traces before fault injection.
    pub clean: Vec<Vec<f64>>,
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// `[start, end)` of the flat-top: 10% ramp-up, 80% flat, 10% ramp-down.
fn flat_top(len: usize) -> (usize, usize) {
    let ramp = (len / 10).max(1);
    (ramp, len - ramp)
}

fn envelope(len: usize) -> Vec<f64> {
    let (start, end) = flat_top(len);
    (0..len)
        .map(|i| {
            if i < start {
                i as f64 / start as f64
            } else if i < end {
                1.0
            } else {
                (len - 1 - i) as f64 / (len - end) as f64
            }
        })
        .collect()
}

/// Unit-variance low-pass noise: a first-order recursive filter over white noise.
fn smooth_noise(rng: &mut ChaCha8Rng, len: usize, pole: f64) -> Vec<f64> {
    let gain = (1.0 - pole * pole).sqrt();
    let mut state: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let w: f64 = rng.sample(StandardNormal);
        state = pole * state + gain * w;
        out.push(state);
    }
    out
}

fn shot_rng(seed: u64, shot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot as u64);
    rng
}

fn synthesize_one(config: &SynthConfig, shot_index: usize, n_faults: usize) -> SynthShot {
    let len = config.samples_per_shot;
    let mut rng = shot_rng(config.seed, shot_index);
    let env = envelope(len);
    let fluctuation = smooth_noise(&mut rng, len, 0.95);
    let base: Vec<f64> = env
        .iter()
        .zip(&fluctuation)
        .map(|(e, f)| e * (1.0 + FLUCTUATION_AMPLITUDE * f))
        .collect();
    let profile: Vec<f64> = env
        .iter()
        .zip(smooth_noise(&mut rng, len, 0.99))
        .map(|(e, g)| e * PROFILE_AMPLITUDE * g)
        .collect();

    let clean: Vec<Vec<f64>> = (0..config.n_channels)
        .map(|_| {
            // log-uniform chord factor in [0.5, 1.0]
            let chord = (rng.gen_range(0.5f64.ln()..=0.0)).exp();
            let shape = rng.gen_range(-1.0..=1.0);
            base.iter()
                .zip(&profile)
                .map(|(b, p)| {
                    chord * (b + shape * p) + CHANNEL_NOISE * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        })
        .collect();

    let mut targets = sample_indices(&mut rng, config.n_channels, n_faults).into_vec();
    targets.sort_unstable();
    let faults: Vec<FaultSpec> = targets
        .iter()
        .map(|&target_channel| FaultSpec {
            target_channel,
            kind: FaultKind::random(&mut rng, len),
        })
        .collect();

    let mut channels: Vec<ChannelTrace> = clean
        .iter()
        .enumerate()
        .map(|(i, s)| ChannelTrace {
            channel_index: i,
            label: Label::Correct,
            samples: s.clone(),
        })
        .collect();
    for fault in &faults {
        let ch = &mut channels[fault.target_channel];
        fault.apply(&mut ch.samples, &mut rng);
        ch.label = Label::Incorrect;
    }

    SynthShot {
        shot: Shot {
            shot_id: format!("synth-{:04}", shot_index),
            dt: config.dt,
            channels,
        },
        faults,
        clean,
    }
}

/// Like [`synthesize`] but also returns the injected faults and clean traces.
pub fn synthesize_detailed(config: &SynthConfig) -> Result<Vec<SynthShot>, DataError> {
    if config.n_channels < 2 {
        return Err(DataError::Infeasible(format!(
            "need at least 2 channels, got {}",
            config.n_channels
        )));
    }
    if config.faults_per_shot.is_empty() {
        return Err(DataError::Infeasible("need at least one shot".into()));
    }
    if config.samples_per_shot < MIN_SYNTH_SAMPLES {
        return Err(DataError::Infeasible(format!(
            "need at least {MIN_SYNTH_SAMPLES} samples per shot, got {}",
            config.samples_per_shot
        )));
    }
    if !(config.dt.is_finite() && config.dt > 0.0) {
        return Err(DataError::Infeasible(format!(
            "dt must be positive, got {}",
            config.dt
        )));
    }
    if let Some((i, k)) = config
        .faults_per_shot
        .iter()
        .enumerate()
        .find(|(_, &k)| k > config.n_channels)
    {
        return Err(DataError::Infeasible(format!(
            "shot {i} asks for {k} faulty channels but only {} exist",
            config.n_channels
        )));
    }
    Ok(config
        .faults_per_shot
        .iter()
        .enumerate()
        .map(|(i, &k)| synthesize_one(config, i, k))
        .collect())
}

/// Deterministic labeled multi-channel shots with `faults_per_shot[i]`
/// corrupted channels in shot `i`.
pub fn synthesize(config: &SynthConfig) -> Result<Vec<Shot>, DataError> {
    Ok(synthesize_detailed(config)?
        .into_iter()
        .map(|s| s.shot)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_structure::{class_ratios, total_pairs};

    fn two_shot_json() -> String {
        r#"{ "shots": [
            { "shot_id": "a", "dt": 0.001, "channels": [
                { "index": 0, "label": "correct", "samples": [1.0, 2.0, 3.0] },
                { "index": 1, "label": "incorrect", "samples": [0.5, 0.25, 0.125] } ] },
            { "shot_id": "b", "dt": 0.001, "channels": [
                { "index": 0, "label": "unknown", "samples": [1.0, 2.0] },
                { "index": 1, "label": "correct", "samples": [3.0, 4.0] } ] }
        ] }"#
            .to_string()
    }

    #[test]
    fn parses_well_formed_dataset() {
        let shots = parse_shots(&two_shot_json()).unwrap();
        assert_eq!(shots.len(), 2);
        assert_eq!(shots[0].channels[1].label, Label::Incorrect);
        assert_eq!(shots[1].channels[0].label, Label::Unknown);
        assert_eq!(shots[0].channels[1].samples, vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn rejects_length_mismatch() {
        let text = two_shot_json().replace("[3.0, 4.0]", "[3.0, 4.0, 5.0]");
        let err = parse_shots(&text).unwrap_err();
        match err {
            DataError::Invalid {
                shot_id,
                channel,
                reason,
            } => {
                assert_eq!(shot_id, "b");
                assert_eq!(channel, Some(1));
                assert!(reason.contains("length mismatch"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_indices() {
        let mut shots = parse_shots(&two_shot_json()).unwrap();
        shots[0].channels[0].samples[1] = f64::NAN;
        assert!(shots[0]
            .validate()
            .unwrap_err()
            .to_string()
            .contains("non-finite"));

        let mut shots = parse_shots(&two_shot_json()).unwrap();
        shots[1].channels[1].channel_index = 5;
        assert!(shots[1]
            .validate()
            .unwrap_err()
            .to_string()
            .contains("contiguous"));

        // JSON has no NaN literal; a huge exponent overflows and is rejected too
        let text = two_shot_json().replace("0.125", "1e999");
        assert!(parse_shots(&text).is_err());
    }

    #[test]
    fn unknown_labels_block_structure() {
        let shots = parse_shots(&two_shot_json()).unwrap();
        assert!(matches!(
            structure_of(&shots),
            Err(DataError::Unlabeled { .. })
        ));
        let spec = structure_of(&shots[..1]).unwrap();
        assert_eq!(spec.incorrect_per_shot(), &[1]);
    }

    #[test]
    fn synthesized_structure_matches_pair_arithmetic() {
        let cfg = SynthConfig::new(11, 200, vec![1, 1, 0, 2, 0, 1, 1], 7);
        let shots = synthesize(&cfg).unwrap();
        let spec = structure_of(&shots).unwrap();
        assert_eq!(spec.incorrect_per_shot(), &[1, 1, 0, 2, 0, 1, 1]);
        assert_eq!(total_pairs(&spec), 385);
        // 4 shots with 1 fault, 2 clean, 1 with 2 faults
        assert_eq!(class_ratios(&spec).similar, 4 * 45 + 2 * 55 + 36);
    }

    #[test]
    fn no_faults_means_all_correct() {
        let shots = synthesize(&SynthConfig::new(5, 50, vec![0, 0, 0], 1)).unwrap();
        assert!(shots
            .iter()
            .flat_map(|s| &s.channels)
            .all(|c| c.label == Label::Correct));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = SynthConfig::new(6, 100, vec![2, 1], 42);
        assert_eq!(synthesize(&cfg).unwrap(), synthesize(&cfg).unwrap());
        let other = SynthConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(synthesize(&cfg).unwrap(), synthesize(&other).unwrap());
    }

    #[test]
    fn rejects_infeasible_parameters() {
        assert!(synthesize(&SynthConfig::new(4, 100, vec![5], 0)).is_err());
        assert!(synthesize(&SynthConfig::new(1, 100, vec![0], 0)).is_err());
        assert!(synthesize(&SynthConfig::new(4, 10, vec![0], 0)).is_err());
        assert!(synthesize(&SynthConfig::new(4, 100, vec![], 0)).is_err());
    }

    #[test]
    fn every_fault_is_visible_above_fluctuation() {
        let cfg = SynthConfig::new(8, 300, vec![3; 40], 11);
        let mut kinds = std::collections::BTreeSet::new();
        for s in synthesize_detailed(&cfg).unwrap() {
            assert_eq!(s.shot.incorrect_count(), 3);
            for f in &s.faults {
                kinds.insert(f.kind.name());
                let ch = &s.shot.channels[f.target_channel];
                assert_eq!(ch.label, Label::Incorrect);
                let dev = ch
                    .samples
                    .iter()
                    .zip(&s.clean[f.target_channel])
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(
                    dev > 5.0 * FLUCTUATION_AMPLITUDE,
                    "{} deviates only {dev}",
                    f.kind.name()
                );
            }
            for ch in s.shot.channels.iter().filter(|c| c.label == Label::Correct) {
                assert_eq!(ch.samples, s.clean[ch.channel_index]);
            }
        }
        assert_eq!(kinds.len(), 5);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn save_then_load_is_identity(
            seed in proptest::prelude::any::<u64>(),
            n in 2usize..6,
            faults in proptest::collection::vec(0usize..6, 1..4),
        ) {
            let faults: Vec<usize> = faults.into_iter().map(|k| k % (n + 1)).collect();
            let shots = synthesize(&SynthConfig::new(n, 40, faults, seed)).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.json");
            save_shots(&shots, &path).unwrap();
            proptest::prop_assert_eq!(load_shots(&path).unwrap(), shots);
        }
    }
}
