//! End-to-end training, evaluation, cleaning, and the class-structure sweep.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use itertools::Itertools;
use num_integer::binomial;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class_structure::ClassRatio;
use crate::data_model::{Label, Shot};
use crate::evaluation::{
    flag_incorrect_channels, grouped_assessment, ConfusionMatrix, EvalReport, GroupRow,
};
use crate::pairing::{build_pairs, shot_pairs, FeatureConfig, PairSample, PairTag};
use crate::svm_smo::{train_with_report, Class, SvmError, SvmModel, TrainConfig, TrainReport};
use crate::Error;

/// A trained pair classifier plus everything needed to apply it to new shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningModel {
    pub features: FeatureConfig,
    /// Dissimilar/similar ratio of the training pairs.
    pub class_structure: ClassRatio,
    pub svm: SvmModel,
}

impl CleaningModel {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn predict_pairs(&self, shot: &Shot) -> Result<HashMap<(usize, usize), Class>, Error> {
        let mut out = HashMap::new();
        for p in shot_pairs(shot, &self.features)? {
            out.insert((p.channel_a, p.channel_b), self.svm.predict(&p.features)?);
        }
        Ok(out)
    }
}

/// Dissimilar/similar ratio over the labeled pairs.
pub fn pair_structure<'a>(pairs: impl IntoIterator<Item = &'a PairSample>) -> ClassRatio {
    let (mut dis, mut sim) = (0u64, 0u64);
    for p in pairs {
        match p.tag {
            PairTag::Dissimilar => dis += 1,
            PairTag::Similar => sim += 1,
            PairTag::Unknown => {}
        }
    }
    ClassRatio::from_counts(dis, sim)
}

fn fit<'a>(
    pairs: impl IntoIterator<Item = &'a PairSample>,
    features: FeatureConfig,
    config: &TrainConfig,
) -> Result<(CleaningModel, TrainReport), Error> {
    let labeled: Vec<&PairSample> = pairs
        .into_iter()
        .filter(|p| p.tag != PairTag::Unknown)
        .collect();
    let xs: Vec<&[f64]> = labeled.iter().map(|p| p.features.as_slice()).collect();
    let ys: Vec<Class> = labeled.iter().filter_map(|p| p.tag.class()).collect();
    if xs.is_empty() {
        return Err(SvmError::Empty.into());
    }
    let (svm, report) = train_with_report(&xs, &ys, config)?;
    Ok((
        CleaningModel {
            features,
            class_structure: pair_structure(labeled.iter().copied()),
            svm,
        },
        report,
    ))
}

/// Trains a pair classifier on the labeled pairs of `shots`.
pub fn train_cleaner(
    shots: &[Shot],
    features: FeatureConfig,
    config: &TrainConfig,
) -> Result<(CleaningModel, TrainReport), Error> {
    let pairs = build_pairs(shots, &features)?;
    fit(&pairs, features, config)
}

fn assess<'a>(
    model: &CleaningModel,
    pairs: impl IntoIterator<Item = &'a PairSample>,
) -> Result<EvalReport, Error> {
    let mut cm = ConfusionMatrix::default();
    for p in pairs {
        if let Some(truth) = p.tag.class() {
            cm.record(model.svm.predict(&p.features)?, truth);
        }
    }
    Ok(EvalReport::new(cm, model.class_structure)?)
}

/// Scores `model` on the labeled pairs of `shots`; unknown-tagged pairs are skipped.
pub fn evaluate(model: &CleaningModel, shots: &[Shot]) -> Result<EvalReport, Error> {
    let pairs = build_pairs(shots, &model.features)?;
    assess(model, &pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanedShot {
    /// Copy of the input shot labeled with the verdict: flagged channels
    /// incorrect, all others correct. Samples are unchanged.
    pub shot: Shot,
    pub flagged: BTreeSet<usize>,
}

pub fn clean_shots(
    model: &CleaningModel,
    shots: &[Shot],
    threshold: f64,
) -> Result<Vec<CleanedShot>, Error> {
    shots
        .iter()
        .map(|shot| {
            shot.validate()?;
            let preds = model.predict_pairs(shot)?;
            let flagged = flag_incorrect_channels(shot, &preds, threshold)?;
            let mut cleaned = shot.clone();
            for ch in &mut cleaned.channels {
                ch.label = if flagged.contains(&ch.channel_index) {
                    Label::Incorrect
                } else {
                    Label::Correct
                };
            }
            Ok(CleanedShot {
                shot: cleaned,
                flagged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Shots per training set.
    pub subset_size: usize,
    /// Enumerate every subset up to this many; sample this many otherwise.
    pub cap: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub features: FeatureConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            subset_size: 7,
            cap: 2000,
            seed: 0,
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetResult {
    /// Indices into the pool, ascending.
    pub subset: Vec<usize>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// `C(pool, subset_size)`
    pub total_subsets: u128,
    pub exhaustive: bool,
    pub results: Vec<SubsetResult>,
    /// Subsets whose pairs were all one class and so could not be trained on.
    pub skipped: Vec<Vec<usize>>,
    pub groups: Vec<GroupRow>,
}

impl SweepOutcome {
    pub fn visited(&self) -> usize {
        self.results.len() + self.skipped.len()
    }
}

/// The subsets a sweep visits, in ascending lexicographic order.
pub fn sweep_subsets(
    pool_size: usize,
    subset_size: usize,
    cap: usize,
    seed: u64,
) -> (Vec<Vec<usize>>, bool) {
    let total = binomial(pool_size as u128, subset_size as u128);
    if total <= cap as u128 {
        return ((0..pool_size).combinations(subset_size).collect(), true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    while chosen.len() < cap {
        let mut s = sample_indices(&mut rng, pool_size, subset_size).into_vec();
        s.sort_unstable();
        chosen.insert(s);
    }
    (chosen.into_iter().collect(), false)
}

/// Trains one classifier per pool subset and scores each on `validation`.
pub fn sweep(
    pool: &[Shot],
    validation: &[Shot],
    config: &SweepConfig,
) -> Result<SweepOutcome, Error> {
    if config.subset_size == 0 || config.subset_size > pool.len() {
        return Err(Error::Config(format!(
            "subset size {} must be between 1 and the pool size {}",
            config.subset_size,
            pool.len()
        )));
    }
    if config.cap == 0 {
        return Err(Error::Config("sweep cap must be positive".into()));
    }
    let pool_pairs: Vec<Vec<PairSample>> = pool
        .par_iter()
        .map(|shot| {
            shot.validate()?;
            shot_pairs(shot, &config.features)
        })
        .collect::<Result<_, _>>()?;
    let validation_pairs = build_pairs(validation, &config.features)?;
    {
        let cm_check = pair_structure(&validation_pairs);
        if cm_check == ClassRatio::from_counts(0, 1) || cm_check.is_infinite() {
            return Err(Error::Config(
                "validation set needs both similar and dissimilar pairs".into(),
            ));
        }
    }

    let total_subsets = binomial(pool.len() as u128, config.subset_size as u128);
    let (subsets, exhaustive) =
        sweep_subsets(pool.len(), config.subset_size, config.cap, config.seed);

    let outcomes: Vec<Result<Option<EvalReport>, Error>> = subsets
        .par_iter()
        .map(|subset| {
            let pairs = subset.iter().flat_map(|&i| pool_pairs[i].iter());
            match fit(pairs, config.features, &config.train) {
                Ok((model, _)) => assess(&model, &validation_pairs).map(Some),
                Err(Error::Svm(SvmError::SingleClass(_))) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (subset, outcome) in subsets.into_iter().zip(outcomes) {
        match outcome? {
            Some(report) => results.push(SubsetResult { subset, report }),
            None => skipped.push(subset),
        }
    }
    let reports: Vec<EvalReport> = results.iter().map(|r| r.report.clone()).collect();
    Ok(SweepOutcome {
        total_subsets,
        exhaustive,
        groups: grouped_assessment(&reports),
        results,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{synthesize, SynthConfig};

    #[test]
    fn subset_enumeration_counts() {
        let (subs, exhaustive) = sweep_subsets(12, 7, 2000, 0);
        assert!(exhaustive);
        assert_eq!(subs.len(), 792);
        assert_eq!(subs.iter().collect::<BTreeSet<_>>().len(), 792);

        let (subs, exhaustive) = sweep_subsets(5, 5, 2000, 0);
        assert!(exhaustive);
        assert_eq!(subs, vec![vec![0, 1, 2, 3, 4]]);

        let (subs, exhaustive) = sweep_subsets(30, 10, 50, 9);
        assert!(!exhaustive);
        assert_eq!(subs.len(), 50);
        assert_eq!(subs, sweep_subsets(30, 10, 50, 9).0);
        assert!(subs
            .iter()
            .all(|s| s.len() == 10 && s.windows(2).all(|w| w[0] < w[1])));
    }

    #[test]
    fn train_eval_clean_round() {
        let train = synthesize(&SynthConfig::new(8, 300, vec![1, 2, 1, 0, 1], 1)).unwrap();
        let (model, report) =
            train_cleaner(&train, FeatureConfig::default(), &TrainConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(
            model.class_structure,
            ClassRatio::from_counts(7 + 13 + 7 + 7, 21 + 15 + 21 + 28 + 21)
        );
        let back = CleaningModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);

        let clean = synthesize(&SynthConfig::new(8, 300, vec![0, 0], 2)).unwrap();
        let cleaned = clean_shots(&model, &clean, 0.6).unwrap();
        assert!(cleaned.iter().all(|c| c
            .shot
            .channels
            .iter()
            .all(|ch| ch.label == Label::Correct)));
    }

    #[test]
    fn sweep_rejects_bad_subset_size() {
        let shots = synthesize(&SynthConfig::new(4, 50, vec![1, 1], 0)).unwrap();
        let cfg = SweepConfig {
            subset_size: 3,
            ..SweepConfig::default()
        };
        assert!(matches!(sweep(&shots, &shots, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_with_full_pool_gives_one_row() {
        let pool = synthesize(&SynthConfig::new(6, 200, vec![1, 2, 0], 3)).unwrap();
        let val = synthesize(&SynthConfig::new(6, 200, vec![1, 0, 1], 4)).unwrap();
        let cfg = SweepConfig {
            subset_size: 3,
            ..SweepConfig::default()
        };
        let out = sweep(&pool, &val, &cfg).unwrap();
        assert_eq!(out.total_subsets, 1);
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].count, 1);
    }

    #[test]
    fn single_class_subsets_are_skipped() {
        let pool = synthesize(&SynthConfig::new(5, 100, vec![0, 0, 2], 3)).unwrap();
        let val = synthesize(&SynthConfig::new(5, 100, vec![1, 0], 4)).unwrap();
        let cfg = SweepConfig {
            subset_size: 2,
            ..SweepConfig::default()
        };
        let out = sweep(&pool, &val, &cfg).unwrap();
        assert_eq!(out.skipped, vec![vec![0, 1]]);
        assert_eq!(out.results.len(), 2);
        assert_eq!(out.visited(), 3);
    }
}
