//! Soft-margin linear SVM trained with sequential minimal optimization.
//!
//! Features are z-scored with training statistics that travel with the model.
//! Because the kernel is linear, the solver keeps the primal weight vector
//! `w = sum(alpha_i * y_i * x_i)` up to date and evaluates every error term
//! through it instead of caching a kernel matrix.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Multiplier changes at or below this size count as "no change".
const MIN_ALPHA_STEP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("training set is empty")]
    Empty,
    #[error("training set contains only {0} samples; both classes are required")]
    SingleClass(Class),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} features and {1} labels")]
    LengthMismatch(usize, usize),
    #[error("non-finite feature value in sample {0}")]
    NonFinite(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Binary class of a channel pair. Dissimilar is the positive class (+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Dissimilar,
    Similar,
}

impl Class {
    pub fn sign(self) -> f64 {
        match self {
            Class::Dissimilar => 1.0,
            Class::Similar => -1.0,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Dissimilar => "dissimilar",
            Class::Similar => "similar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub penalty_c: f64,
    pub kkt_tol: f64,
    /// Consecutive full passes without a multiplier change before stopping.
    pub max_passes: usize,
    /// Hard cap on outer-loop sweeps.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            penalty_c: 20.0,
            kkt_tol: 1e-3,
            max_passes: 50,
            max_sweeps: 100_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), SvmError> {
        if !(self.penalty_c.is_finite() && self.penalty_c > 0.0) {
            return Err(SvmError::InvalidConfig(format!(
                "penalty_c must be positive, got {}",
                self.penalty_c
            )));
        }
        if !(self.kkt_tol.is_finite() && self.kkt_tol > 0.0) {
            return Err(SvmError::InvalidConfig(format!(
                "kkt_tol must be positive, got {}",
                self.kkt_tol
            )));
        }
        if self.max_passes == 0 {
            return Err(SvmError::InvalidConfig(
                "max_passes must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    /// Population standard deviation, replaced by 1 for constant features.
    pub stddev: f64,
}

impl FeatureScale {
    fn fit(column: impl Iterator<Item = f64> + Clone, n: usize) -> Self {
        let mean = column.clone().sum::<f64>() / n as f64;
        let var = column.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        FeatureScale {
            mean,
            stddev: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.stddev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Weights over standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Nonzero multipliers as `(training index, alpha)`.
    pub alphas: Vec<(usize, f64)>,
    pub standardization: Vec<FeatureScale>,
    pub config: TrainConfig,
}

/// Solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub sweeps: usize,
    pub updates: usize,
    pub converged: bool,
    pub dual_objective: f64,
    /// Largest KKT violation over the training set at the returned solution.
    pub max_kkt_violation: f64,
    /// Dual objective after each accepted pair update.
    pub objective_trace: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.standardization)
            .map(|(v, s)| s.apply(*v))
            .collect())
    }

    /// `w . standardize(x) + b`
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, SvmError> {
        let z = self.standardize(x)?;
        Ok(dot(&self.weights, &z) + self.bias)
    }

    /// Sign of the decision value; a zero score is classified dissimilar.
    pub fn predict(&self, x: &[f64]) -> Result<Class, SvmError> {
        Ok(if self.decision_value(x)? >= 0.0 {
            Class::Dissimilar
        } else {
            Class::Similar
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Solver<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>,
    alpha: Vec<f64>,
    w: Vec<f64>,
    b: f64,
    c: f64,
    tol: f64,
    rng: ChaCha8Rng,
    updates: usize,
    objective: f64,
    trace: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn error(&self, i: usize) -> f64 {
        dot(&self.w, &self.x[i]) + self.b - self.y[i]
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    /// Clamps to `[0, C]`, absorbing rounding residue next to either bound.
    fn snap(&self, a: f64) -> f64 {
        let eps = 1e-12 * self.c;
        if a < eps {
            0.0
        } else if a > self.c - eps {
            self.c
        } else {
            a
        }
    }

    fn dual_objective(&self) -> f64 {
        self.alpha.iter().sum::<f64>() - 0.5 * dot(&self.w, &self.w)
    }

    fn take_step(&mut self, i1: usize, i2: usize, e2: f64) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let e1 = self.error(i1);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        } else {
            ((a1 + a2 - self.c).max(0.0), (a1 + a2).min(self.c))
        };
        if hi - lo <= 0.0 {
            return false;
        }
        let (x1, x2) = (&self.x[i1], &self.x[i2]);
        let k11 = dot(x1, x1);
        let k22 = dot(x2, x2);
        let k12 = dot(x1, x2);
        let eta = k11 + k22 - 2.0 * k12;
        // Objective gain along the constraint line as a function of the alpha2 step.
        let slope = y2 * (e1 - e2);
        let gain = |step: f64| slope * step - 0.5 * eta * step * step;

        let a2_new = if eta > 1e-12 {
            (a2 + slope / eta).clamp(lo, hi)
        } else {
            let (g_lo, g_hi) = (gain(lo - a2), gain(hi - a2));
            if g_lo > g_hi + 1e-12 {
                lo
            } else if g_hi > g_lo + 1e-12 {
                hi
            } else {
                a2
            }
        };
        if (a2_new - a2).abs() <= MIN_ALPHA_STEP {
            return false;
        }
        let a2_new = self.snap(a2_new);
        let a1_new = self.snap(a1 + s * (a2 - a2_new));
        let d1 = y1 * (a1_new - a1);
        let d2 = y2 * (a2_new - a2);

        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        self.b = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };

        for ((w, p), q) in self.w.iter_mut().zip(x1).zip(x2) {
            *w += d1 * p + d2 * q;
        }
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.updates += 1;

        let objective = self.dual_objective();
        debug_assert!(
            objective >= self.objective - 1e-9 * (1.0 + self.objective.abs()),
            "dual objective decreased: {} -> {}",
            self.objective,
            objective
        );
        self.objective = objective;
        self.trace.push(objective);
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let e2 = self.error(i2);
        let r2 = e2 * self.y[i2];
        let a2 = self.alpha[i2];
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }
        let n = self.alpha.len();
        let free: Vec<usize> = (0..n).filter(|&i| self.is_free(i)).collect();

        // largest |E1 - E2| among free multipliers
        if free.len() > 1 {
            let mut best = None;
            let mut best_gap = -1.0;
            for &i in &free {
                let gap = (self.error(i) - e2).abs();
                if gap > best_gap {
                    best_gap = gap;
                    best = Some(i);
                }
            }
            if let Some(i1) = best {
                if self.take_step(i1, i2, e2) {
                    return true;
                }
            }
        }
        if !free.is_empty() {
            let start = self.rng.gen_range(0..free.len());
            for k in 0..free.len() {
                let i1 = free[(start + k) % free.len()];
                if self.take_step(i1, i2, e2) {
                    return true;
                }
            }
        }
        let start = self.rng.gen_range(0..n);
        for k in 0..n {
            let i1 = (start + k) % n;
            if self.take_step(i1, i2, e2) {
                return true;
            }
        }
        false
    }

    /// Recomputes `w` from the multipliers and refits the bias.
    fn finalize(&mut self) {
        let dim = self.w.len();
        let mut w = vec![0.0; dim];
        for (i, &a) in self.alpha.iter().enumerate() {
            if a > 0.0 {
                for (wk, xk) in w.iter_mut().zip(&self.x[i]) {
                    *wk += a * self.y[i] * xk;
                }
            }
        }
        self.w = w;

        let n = self.alpha.len();
        let free: Vec<usize> = (0..n).filter(|&i| self.is_free(i)).collect();
        if !free.is_empty() {
            let sum: f64 = free
                .iter()
                .map(|&i| self.y[i] - dot(&self.w, &self.x[i]))
                .sum();
            self.b = sum / free.len() as f64;
        } else {
            // every multiplier at a bound: b lies in the interval allowed by the KKT conditions
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..n {
                let g = self.y[i] - dot(&self.w, &self.x[i]);
                let at_zero = self.alpha[i] <= 0.0;
                // alpha = 0 needs y*f >= 1; alpha = C needs y*f <= 1
                if (self.y[i] > 0.0) == at_zero {
                    lo = lo.max(g);
                } else {
                    hi = hi.min(g);
                }
            }
            self.b = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => self.b,
            };
        }
        self.objective = self.dual_objective();
    }

    fn max_kkt_violation(&self) -> f64 {
        (0..self.alpha.len())
            .map(|i| {
                let m = self.y[i] * (dot(&self.w, &self.x[i]) + self.b);
                let a = self.alpha[i];
                if a <= 0.0 {
                    (1.0 - m).max(0.0)
                } else if a >= self.c {
                    (m - 1.0).max(0.0)
                } else {
                    (m - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Trains on `(features[i], labels[i])` pairs.
pub fn train<V: AsRef<[f64]>>(
    features: &[V],
    labels: &[Class],
    config: &TrainConfig,
) -> Result<SvmModel, SvmError> {
    train_with_report(features, labels, config).map(|(m, _)| m)
}

pub fn train_with_report<V: AsRef<[f64]>>(
    features: &[V],
    labels: &[Class],
    config: &TrainConfig,
) -> Result<(SvmModel, TrainReport), SvmError> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(SvmError::LengthMismatch(features.len(), labels.len()));
    }
    let n = features.len();
    if n == 0 {
        return Err(SvmError::Empty);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(SvmError::SingleClass(labels[0]));
    }
    let dim = features[0].as_ref().len();
    for (i, f) in features.iter().enumerate() {
        let f = f.as_ref();
        if f.len() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite(i));
        }
    }

    let standardization: Vec<FeatureScale> = (0..dim)
        .map(|k| FeatureScale::fit(features.iter().map(move |f| f.as_ref()[k]), n))
        .collect();
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            f.as_ref()
                .iter()
                .zip(&standardization)
                .map(|(v, s)| s.apply(*v))
                .collect()
        })
        .collect();

    let mut solver = Solver {
        x: &x,
        y: labels.iter().map(|l| l.sign()).collect(),
        alpha: vec![0.0; n],
        w: vec![0.0; dim],
        b: 0.0,
        c: config.penalty_c,
        tol: config.kkt_tol,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        updates: 0,
        objective: 0.0,
        trace: Vec::new(),
    };

    let mut examine_all = true;
    let mut quiet_passes = 0;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut changed = 0usize;
        if examine_all {
            for i in 0..n {
                changed += solver.examine(i) as usize;
            }
            if changed == 0 {
                quiet_passes += 1;
                if quiet_passes >= config.max_passes {
                    converged = true;
                    break;
                }
            } else {
                quiet_passes = 0;
            }
        } else {
            for i in 0..n {
                if solver.is_free(i) {
                    changed += solver.examine(i) as usize;
                }
            }
        }
        if examine_all {
            examine_all = changed == 0;
        } else if changed == 0 {
            examine_all = true;
        }
    }
    solver.finalize();

    let report = TrainReport {
        sweeps,
        updates: solver.updates,
        converged,
        dual_objective: solver.objective,
        max_kkt_violation: solver.max_kkt_violation(),
        objective_trace: std::mem::take(&mut solver.trace),
    };
    let model = SvmModel {
        weights: solver.w,
        bias: solver.b,
        alphas: solver
            .alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| (i, a))
            .collect(),
        standardization,
        config: *config,
    };
    Ok((model, report))
}
