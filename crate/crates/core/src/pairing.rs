//! Within-shot channel pairing and symmetric similarity features.

use serde::{Deserialize, Serialize};

use crate::data_model::{ChannelTrace, DataError, Label, Shot};
use crate::svm_smo::Class;

/// Number of summary statistics in every feature vector.
pub const SUMMARY_DIM: usize = 6;

/// Names of the summary features, in vector order.
pub const SUMMARY_NAMES: [&str; SUMMARY_DIM] = [
    "pearson",
    "cosine_centered",
    "rms_diff_z",
    "range_ratio",
    "diff_xcov",
    "exceed_frac",
];

/// z-score gap counted by the exceedance-fraction feature.
const EXCEED_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairTag {
    Similar,
    Dissimilar,
    Unknown,
}

impl PairTag {
    /// Dissimilar whenever a member is known incorrect, otherwise unknown if
    /// any label is missing, otherwise similar.
    pub fn from_labels(a: Label, b: Label) -> Self {
        match (a, b) {
            (Label::Incorrect, _) | (_, Label::Incorrect) => PairTag::Dissimilar,
            (Label::Unknown, _) | (_, Label::Unknown) => PairTag::Unknown,
            (Label::Correct, Label::Correct) => PairTag::Similar,
        }
    }

    pub fn class(self) -> Option<Class> {
        match self {
            PairTag::Similar => Some(Class::Similar),
            PairTag::Dissimilar => Some(Class::Dissimilar),
            PairTag::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairTag::Similar => "similar",
            PairTag::Dissimilar => "dissimilar",
            PairTag::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Append `|z(a) - z(b)|` of both traces resampled to `resample_len`.
    pub append_diff: bool,
    pub resample_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            append_diff: false,
            resample_len: 256,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        SUMMARY_DIM
            + if self.append_diff {
                self.resample_len
            } else {
                0
            }
    }
}

/// Feature vector of a channel pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub values: Vec<f64>,
    /// Set when either trace (or its first difference) has zero variance, in
    /// which case the affected correlation terms are reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub shot_id: String,
    pub channel_a: usize,
    pub channel_b: usize,
    pub features: Vec<f64>,
    pub tag: PairTag,
    pub degenerate: bool,
}

struct Centered {
    dev: Vec<f64>,
    sum_sq: f64,
}

impl Centered {
    fn new(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let sum_sq = dev.iter().map(|d| d * d).sum();
        Self { dev, sum_sq }
    }

    fn is_flat(&self) -> bool {
        self.sum_sq <= f64::MIN_POSITIVE
    }

    /// Population z-scores; all zeros for a flat trace.
    fn z_scores(&self) -> Vec<f64> {
        if self.is_flat() {
            return vec![0.0; self.dev.len()];
        }
        let sd = (self.sum_sq / self.dev.len() as f64).sqrt();
        self.dev.iter().map(|d| d / sd).collect()
    }
}

/// Normalized inner product of two centered series; `None` if either is flat.
fn correlation(a: &Centered, b: &Centered) -> Option<f64> {
    if a.is_flat() || b.is_flat() {
        return None;
    }
    let cross: f64 = a.dev.iter().zip(&b.dev).map(|(x, y)| x * y).sum();
    Some((cross / (a.sum_sq * b.sum_sq).sqrt()).clamp(-1.0, 1.0))
}

fn value_range(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

fn first_differences(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Linear-interpolation resampling onto `len` evenly spaced points.
pub fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    if len == 1 || x.len() == 1 {
        return vec![x[0]; len];
    }
    let span = (x.len() - 1) as f64;
    (0..len)
        .map(|i| {
            let pos = i as f64 * span / (len - 1) as f64;
            let lo = (pos.floor() as usize).min(x.len() - 2);
            let frac = pos - lo as f64;
            x[lo] + (x[lo + 1] - x[lo]) * frac
        })
        .collect()
}

/// Symmetric similarity features of two equal-length traces.
///
/// Layout: Pearson correlation, cosine of the mean-removed traces, RMS
/// difference of the z-scored traces, dynamic-range ratio (smaller / larger),
/// correlation of first differences, and the fraction of samples whose z-scores
/// differ by more than 2. Every term is computed with commutative operations
/// only, so swapping the arguments yields a bit-identical vector.
pub fn features(
    trace_a: &ChannelTrace,
    trace_b: &ChannelTrace,
    config: &FeatureConfig,
) -> Result<PairFeatures, DataError> {
    let (a, b) = (&trace_a.samples, &trace_b.samples);
    if a.len() != b.len() || a.len() < 2 {
        return Err(DataError::Invalid {
            shot_id: String::new(),
            channel: Some(trace_b.channel_index),
            reason: format!(
                "cannot pair traces of lengths {} and {} (need equal lengths >= 2)",
                a.len(),
                b.len()
            ),
        });
    }

    let ca = Centered::new(a);
    let cb = Centered::new(b);
    let mut degenerate = false;

    let pearson = correlation(&ca, &cb).unwrap_or_else(|| {
        degenerate = true;
        0.0
    });
    let cosine = {
        let dot: f64 = ca.dev.iter().zip(&cb.dev).map(|(x, y)| x * y).sum();
        let norms = ca.sum_sq.sqrt() * cb.sum_sq.sqrt();
        if ca.is_flat() || cb.is_flat() {
            0.0
        } else {
            (dot / norms).clamp(-1.0, 1.0)
        }
    };

    let za = ca.z_scores();
    let zb = cb.z_scores();
    let n = a.len() as f64;
    let mut sq = 0.0;
    let mut exceed = 0usize;
    for (x, y) in za.iter().zip(&zb) {
        let d = (x - y).abs();
        sq += d * d;
        if d > EXCEED_THRESHOLD {
            exceed += 1;
        }
    }
    let rms = (sq / n).sqrt();

    let (ra, rb) = (value_range(a), value_range(b));
    let (small, large) = (ra.min(rb), ra.max(rb));
    let range_ratio = if large > 0.0 { small / large } else { 0.0 };
    if large <= 0.0 {
        degenerate = true;
    }

    let da = Centered::new(&first_differences(a));
    let db = Centered::new(&first_differences(b));
    let diff_xcov = correlation(&da, &db).unwrap_or_else(|| {
        degenerate = true;
        0.0
    });

    let mut values = Vec::with_capacity(config.dim());
    values.extend([
        pearson,
        cosine,
        rms,
        range_ratio,
        diff_xcov,
        exceed as f64 / n,
    ]);

    if config.append_diff {
        let zra = Centered::new(&resample_linear(a, config.resample_len)).z_scores();
        let zrb = Centered::new(&resample_linear(b, config.resample_len)).z_scores();
        values.extend(zra.iter().zip(&zrb).map(|(x, y)| (x - y).abs()));
    }

    Ok(PairFeatures { values, degenerate })
}

/// All `C(N, 2)` within-shot channel pairs of every shot, ordered by shot and
/// then lexicographically by `(channel_a, channel_b)`.
pub fn build_pairs(shots: &[Shot], config: &FeatureConfig) -> Result<Vec<PairSample>, DataError> {
    let mut out = Vec::new();
    for shot in shots {
        shot.validate()?;
        out.extend(shot_pairs(shot, config)?);
    }
    Ok(out)
}

/// Pairs of a single shot.
pub fn shot_pairs(shot: &Shot, config: &FeatureConfig) -> Result<Vec<PairSample>, DataError> {
    let n = shot.n_channels();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for (i, a) in shot.channels.iter().enumerate() {
        for b in &shot.channels[i + 1..] {
            let f = features(a, b, config).map_err(|e| match e {
                DataError::Invalid {
                    channel, reason, ..
                } => DataError::Invalid {
                    shot_id: shot.shot_id.clone(),
                    channel,
                    reason,
                },
                other => other,
            })?;
            out.push(PairSample {
                shot_id: shot.shot_id.clone(),
                channel_a: a.channel_index,
                channel_b: b.channel_index,
                features: f.values,
                tag: PairTag::from_labels(a.label, b.label),
                degenerate: f.degenerate,
            });
        }
    }
    Ok(out)
}

/// CSV dump with header `shot_id,ch_a,ch_b,tag,f1..f6[,d1..dL]`.
pub fn pairs_csv(samples: &[PairSample]) -> String {
    let dim = samples.first().map_or(SUMMARY_DIM, |s| s.features.len());
    let mut out = String::from("shot_id,ch_a,ch_b,tag");
    for i in 1..=SUMMARY_DIM.min(dim) {
        out.push_str(&format!(",f{i}"));
    }
    for i in 1..=dim.saturating_sub(SUMMARY_DIM) {
        out.push_str(&format!(",d{i}"));
    }
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{}",
            s.shot_id,
            s.channel_a,
            s.channel_b,
            s.tag.as_str()
        ));
        for v in &s.features {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{synthesize_detailed, FaultKind, FaultSpec, SynthConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace(index: usize, label: Label, samples: Vec<f64>) -> ChannelTrace {
        ChannelTrace {
            channel_index: index,
            label,
            samples,
        }
    }

    fn wave(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (i as f64 * 0.1).sin() + 0.01 * i as f64)
            .collect()
    }

    #[test]
    fn identical_traces() {
        let a = trace(0, Label::Correct, wave(100));
        let f = features(&a, &a, &FeatureConfig::default()).unwrap();
        assert!(!f.degenerate);
        assert!((f.values[0] - 1.0).abs() < 1e-12);
        assert!((f.values[1] - 1.0).abs() < 1e-12);
        assert_eq!(f.values[2], 0.0);
        assert_eq!(f.values[3], 1.0);
        assert!((f.values[4] - 1.0).abs() < 1e-12);
        assert_eq!(f.values[5], 0.0);
    }

    #[test]
    fn flat_trace_is_degenerate_not_nan() {
        let a = trace(0, Label::Correct, wave(50));
        let b = trace(1, Label::Correct, vec![2.0; 50]);
        let f = features(&a, &b, &FeatureConfig::default()).unwrap();
        assert!(f.degenerate);
        assert!(f.values.iter().all(|v| v.is_finite()));
        assert_eq!(f.values[0], 0.0);
        assert_eq!(f.values[3], 0.0);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let a = trace(0, Label::Correct, wave(10));
        let b = trace(1, Label::Correct, wave(11));
        assert!(features(&a, &b, &FeatureConfig::default()).is_err());
    }

    #[test]
    fn symmetry_over_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = FeatureConfig {
            append_diff: true,
            resample_len: 32,
        };
        for _ in 0..100 {
            let n = rng.gen_range(2..80);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ta = trace(0, Label::Correct, a);
            let tb = trace(1, Label::Correct, b);
            let ab = features(&ta, &tb, &cfg).unwrap();
            let ba = features(&tb, &ta, &cfg).unwrap();
            assert_eq!(ab, ba);
            assert_eq!(ab.values.len(), SUMMARY_DIM + 32);
            let v = &ab.values;
            for c in [v[0], v[1], v[4]] {
                assert!((-1.0..=1.0).contains(&c));
            }
            assert!((0.0..=1.0).contains(&v[3]) && (0.0..=1.0).contains(&v[5]));
            assert!(v[2] >= 0.0 && v[6..].iter().all(|d| *d >= 0.0));
        }
    }

    #[test]
    fn baseline_jump_increases_dissimilarity() {
        let synth = synthesize_detailed(&SynthConfig::new(2, 400, vec![0], 5)).unwrap();
        let clean = &synth[0].shot.channels;
        let mut jumped = clean[1].clone();
        let fault = FaultSpec {
            target_channel: 1,
            kind: FaultKind::BaselineJump {
                start: 200,
                step: 0.4,
            },
        };
        fault.apply(&mut jumped.samples, &mut ChaCha8Rng::seed_from_u64(0));
        let cfg = FeatureConfig::default();
        let base = features(&clean[0], &clean[1], &cfg).unwrap().values;
        let bad = features(&clean[0], &jumped, &cfg).unwrap().values;
        assert!(bad[2] > base[2], "rms {} vs {}", bad[2], base[2]);
        assert!(bad[5] > base[5], "exceed {} vs {}", bad[5], base[5]);
    }

    #[test]
    fn tagging_rule() {
        use Label::*;
        assert_eq!(PairTag::from_labels(Correct, Correct), PairTag::Similar);
        assert_eq!(
            PairTag::from_labels(Correct, Incorrect),
            PairTag::Dissimilar
        );
        assert_eq!(
            PairTag::from_labels(Incorrect, Incorrect),
            PairTag::Dissimilar
        );
        assert_eq!(PairTag::from_labels(Unknown, Correct), PairTag::Unknown);
        assert_eq!(PairTag::from_labels(Unknown, Unknown), PairTag::Unknown);
        assert_eq!(
            PairTag::from_labels(Unknown, Incorrect),
            PairTag::Dissimilar
        );
    }

    #[test]
    fn four_channel_shot_with_one_fault() {
        let shot = Shot {
            shot_id: "four_ch".into(),
            dt: 1e-3,
            channels: (0..4)
                .map(|i| {
                    let label = if i == 2 {
                        Label::Incorrect
                    } else {
                        Label::Correct
                    };
                    trace(
                        i,
                        label,
                        wave(30).iter().map(|v| v * (1.0 + i as f64)).collect(),
                    )
                })
                .collect(),
        };
        let pairs = build_pairs(std::slice::from_ref(&shot), &FeatureConfig::default()).unwrap();
        assert_eq!(pairs.len(), 6);
        let similar = pairs.iter().filter(|p| p.tag == PairTag::Similar).count();
        assert_eq!(similar, 3);
        assert!(pairs.iter().all(|p| p.channel_a < p.channel_b));
        let dissimilar: Vec<_> = pairs
            .iter()
            .filter(|p| p.tag == PairTag::Dissimilar)
            .map(|p| (p.channel_a, p.channel_b))
            .collect();
        assert_eq!(dissimilar, vec![(0, 2), (1, 2), (2, 3)]);
    }

    #[test]
    fn all_unknown_labels_give_unknown_tags() {
        let shot = Shot {
            shot_id: "u".into(),
            dt: 1e-3,
            channels: (0..5).map(|i| trace(i, Label::Unknown, wave(20))).collect(),
        };
        let pairs = build_pairs(&[shot], &FeatureConfig::default()).unwrap();
        assert_eq!(pairs.len(), 10);
        assert!(pairs.iter().all(|p| p.tag == PairTag::Unknown));
    }

    #[test]
    fn csv_header_and_rows() {
        let shot = Shot {
            shot_id: "s".into(),
            dt: 1e-3,
            channels: (0..2).map(|i| trace(i, Label::Correct, wave(20))).collect(),
        };
        let cfg = FeatureConfig {
            append_diff: true,
            resample_len: 2,
        };
        let csv = pairs_csv(&build_pairs(&[shot], &cfg).unwrap());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "shot_id,ch_a,ch_b,tag,f1,f2,f3,f4,f5,f6,d1,d2"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("s,0,1,similar,"));
        assert_eq!(row.split(',').count(), 12);
    }

    #[test]
    fn resampling_endpoints() {
        let r = resample_linear(&[0.0, 1.0, 2.0], 5);
        assert_eq!(r, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
