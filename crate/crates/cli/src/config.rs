use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Deserialize;

use tdgs_core::{FeatureConfig, TrainConfig};

/// Flags shared by every subcommand. A `--config` JSON file may supply any of
/// them under the same (kebab-case) names; flags given on the command line win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Input dataset (JSON).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output file (dataset, CSV, depending on the command).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model file to write (train) or read (eval, clean).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Optional CSV report file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Samples per channel trace.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Faulty channels per shot, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub faults: Option<Vec<usize>>,
    /// Sample interval in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub penalty_c: Option<f64>,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    #[arg(long)]
    pub max_passes: Option<usize>,

    /// Append resampled |z(a) - z(b)| to the pair features.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub append_diff: Option<bool>,
    #[arg(long)]
    pub resample_len: Option<usize>,

    /// Share of a channel's pairs that must be dissimilar to flag it.
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Pool dataset the sweep draws training subsets from.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Use only the first N shots of the pool.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Shots per training subset.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Validation dataset for the sweep.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Largest number of subsets to enumerate before sampling.
    #[arg(long)]
    pub cap: Option<usize>,

    /// Incorrect-channel fractions for `curves`, comma separated (0.25 or 1/4).
    #[arg(long, value_delimiter = ',')]
    pub q_grid: Option<Vec<String>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    /// Loads `--config` (if any) and lays the command-line flags over it.
    pub fn resolve(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let mut base = load_config_file(&path)?;
        let top = self;
        overlay!(base, top;
            dataset, out, model, report, channels, shots, samples, faults, dt, seed,
            penalty_c, kkt_tol, max_passes, append_diff, resample_len, threshold,
            pool, pool_size, subset, validation, cap, q_grid,
        );
        base.config = Some(path);
        Ok(base)
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            penalty_c: self.penalty_c.unwrap_or(d.penalty_c),
            kkt_tol: self.kkt_tol.unwrap_or(d.kkt_tol),
            max_passes: self.max_passes.unwrap_or(d.max_passes),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        let d = FeatureConfig::default();
        FeatureConfig {
            append_diff: self.append_diff.unwrap_or(d.append_diff),
            resample_len: self.resample_len.unwrap_or(d.resample_len),
        }
    }
}

fn load_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| crate::UsageError(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{ "channels": 8, "seed": 3, "faults": [1, 2], "penalty-c": 5.0 }"#,
        )
        .unwrap();
        let cli = RunConfig {
            config: Some(path),
            seed: Some(9),
            ..RunConfig::default()
        };
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.channels, Some(8));
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.faults, Some(vec![1, 2]));
        assert_eq!(cfg.train_config().penalty_c, 5.0);
        assert_eq!(cfg.train_config().seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{ "chanels": 8 }"#).unwrap();
        let cli = RunConfig {
            config: Some(path),
            ..RunConfig::default()
        };
        assert!(cli.resolve().is_err());
    }
}
