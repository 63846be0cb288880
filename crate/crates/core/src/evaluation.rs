//! Confusion counts, G-mean, grouped assessment, and channel-level verdicts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_structure::ClassRatio;
use crate::data_model::Shot;
use crate::pairing::PairTag;
use crate::svm_smo::Class;

/// Fraction of a channel's pairs that must be predicted dissimilar to flag it.
pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{0} predictions for {1} ground-truth tags")]
    LengthMismatch(usize, usize),
    #[error("ground truth at position {0} is unknown")]
    UnknownTruth(usize),
    #[error("G-mean undefined: no actual {0} samples")]
    EmptyClass(Class),
    #[error("flag threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("shot {shot_id}: no prediction for channel pair ({a}, {b})")]
    MissingPair { shot_id: String, a: usize, b: usize },
}

/// Counts with dissimilar as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn record(&mut self, predicted: Class, truth: Class) {
        match (truth, predicted) {
            (Class::Dissimilar, Class::Dissimilar) => self.tp += 1,
            (Class::Dissimilar, Class::Similar) => self.fn_ += 1,
            (Class::Similar, Class::Dissimilar) => self.fp += 1,
            (Class::Similar, Class::Similar) => self.tn += 1,
        }
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// Recall on dissimilar samples.
    pub fn recall_pos(&self) -> Result<f64, EvalError> {
        if self.positives() == 0 {
            return Err(EvalError::EmptyClass(Class::Dissimilar));
        }
        Ok(self.tp as f64 / self.positives() as f64)
    }

    /// Recall on similar samples.
    pub fn recall_neg(&self) -> Result<f64, EvalError> {
        if self.negatives() == 0 {
            return Err(EvalError::EmptyClass(Class::Similar));
        }
        Ok(self.tn as f64 / self.negatives() as f64)
    }
}

pub fn confusion(predictions: &[Class], truths: &[PairTag]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truths.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&p, t)) in predictions.iter().zip(truths).enumerate() {
        let truth = t.class().ok_or(EvalError::UnknownTruth(i))?;
        cm.record(p, truth);
    }
    Ok(cm)
}

/// `sqrt(TP/(TP+FN) * TN/(TN+FP))`
pub fn g_mean(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    Ok((cm.recall_pos()? * cm.recall_neg()?).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub recall_pos: f64,
    pub recall_neg: f64,
    pub g_mean: f64,
    /// Dissimilar/similar ratio of the training set behind the evaluated model.
    pub class_structure: ClassRatio,
}

impl EvalReport {
    pub fn new(confusion: ConfusionMatrix, class_structure: ClassRatio) -> Result<Self, EvalError> {
        let recall_pos = confusion.recall_pos()?;
        let recall_neg = confusion.recall_neg()?;
        Ok(Self {
            confusion,
            recall_pos,
            recall_neg,
            g_mean: (recall_pos * recall_neg).sqrt(),
            class_structure,
        })
    }

    pub fn csv(&self) -> String {
        let cm = &self.confusion;
        format!(
            "class_structure,tp,fn,fp,tn,recall_pos,recall_neg,g_mean\n{},{},{},{},{},{},{},{}\n",
            self.class_structure.to_decimal_string(),
            cm.tp,
            cm.fn_,
            cm.fp,
            cm.tn,
            self.recall_pos,
            self.recall_neg,
            self.g_mean
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub class_structure: ClassRatio,
    pub mean_g_mean: f64,
    pub count: usize,
}

/// Averages G-mean over reports sharing exactly the same class structure.
///
/// Rows come out sorted by class structure. Within a group the values are
/// summed in sorted order, so the result does not depend on input order.
pub fn grouped_assessment(reports: &[EvalReport]) -> Vec<GroupRow> {
    let mut groups: BTreeMap<ClassRatio, Vec<f64>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.class_structure).or_default().push(r.g_mean);
    }
    groups
        .into_iter()
        .map(|(class_structure, mut values)| {
            values.sort_by(f64::total_cmp);
            GroupRow {
                class_structure,
                mean_g_mean: values.iter().sum::<f64>() / values.len() as f64,
                count: values.len(),
            }
        })
        .collect()
}

/// CSV with header `class_structure,mean_gmean,n_sets`.
pub fn grouped_csv(rows: &[GroupRow]) -> String {
    let mut out = String::from("class_structure,mean_gmean,n_sets\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.class_structure.to_decimal_string(),
            r.mean_g_mean,
            r.count
        ));
    }
    out
}

/// Channels whose share of dissimilar-predicted pairs reaches `threshold`.
///
/// `pair_predictions` is keyed by `(a, b)` with `a < b` and must cover every
/// pair of the shot.
pub fn flag_incorrect_channels(
    shot: &Shot,
    pair_predictions: &HashMap<(usize, usize), Class>,
    threshold: f64,
) -> Result<BTreeSet<usize>, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let n = shot.n_channels();
    let mut dissimilar = vec![0usize; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let p = pair_predictions
                .get(&(a, b))
                .ok_or_else(|| EvalError::MissingPair {
                    shot_id: shot.shot_id.clone(),
                    a,
                    b,
                })?;
            if *p == Class::Dissimilar {
                dissimilar[a] += 1;
                dissimilar[b] += 1;
            }
        }
    }
    let partners = n.saturating_sub(1).max(1) as f64;
    Ok(dissimilar
        .iter()
        .enumerate()
        .filter(|(_, &d)| d as f64 / partners >= threshold)
        .map(|(c, _)| c)
        .collect())
}
