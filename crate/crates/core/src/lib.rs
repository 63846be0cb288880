//! Data cleaning for multi-channel diagnostics by classifying the similarity
//! of channel pairs.
//!
//! Each shot of an `N`-channel system is turned into `C(N, 2)` pair samples
//! tagged similar (both channels correct) or dissimilar (at least one
//! incorrect). A linear SVM trained on symmetric pair features separates the
//! two, and per-channel verdicts are recovered from the pair predictions.
//! Pairing usually moves the class ratio of the training set closer to one;
//! [`class_structure`] quantifies that exactly.

use std::path::PathBuf;

use thiserror::Error;

pub mod class_structure;
pub mod data_model;
pub mod evaluation;
pub mod pairing;
pub mod pipeline;
pub mod svm_smo;

pub use class_structure::{ClassRatio, ClassStructureReport, Rational, StructureSpec};
pub use data_model::{ChannelTrace, Label, Shot, SynthConfig};
pub use evaluation::{ConfusionMatrix, EvalReport, GroupRow};
pub use pairing::{FeatureConfig, PairSample, PairTag};
pub use pipeline::{CleaningModel, SweepConfig, SweepOutcome};
pub use svm_smo::{Class, SvmModel, TrainConfig};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Structure(#[from] class_structure::StructureError),
    #[error(transparent)]
    Data(#[from] data_model::DataError),
    #[error(transparent)]
    Svm(#[from] svm_smo::SvmError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed model")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// True for failures reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Data(data_model::DataError::Io { .. })
        )
    }
}
