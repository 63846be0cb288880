//! Exact sample-count calculus for pairwise similarity training sets.
//!
//! A shot of an `N`-channel system yields `C(N, 2)` channel pairs. A pair is
//! *similar* when both channels are correct and *dissimilar* otherwise, so a
//! shot with `k` incorrect channels contributes `C(N - k, 2)` similar pairs.
//! All counts are integers and all ratios are exact rationals; floats only
//! appear when a ratio is rendered for output.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational used for class ratios and grid values.
pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("need at least 2 channels, got {0}")]
    TooFewChannels(usize),
    #[error("need at least one shot")]
    NoShots,
    #[error("shot {shot}: {incorrect} incorrect channels exceeds channel count {n_channels}")]
    TooManyIncorrect {
        shot: usize,
        incorrect: usize,
        n_channels: usize,
    },
    #[error("grid value {q} is outside [0, 1]")]
    QOutOfRange { q: String },
    #[error("grid value {q} times {n_channels} channels is not an integer channel count")]
    InfeasibleQ { q: String, n_channels: usize },
    #[error("cannot parse ratio {0:?}")]
    BadRatio(String),
}

/// `C(m, 2)`, zero for `m < 2`.
pub fn pairs_of(m: usize) -> u64 {
    let m = m as u64;
    m * m.saturating_sub(1) / 2
}

/// Channel count and per-shot incorrect-channel counts of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSpec {
    n_channels: usize,
    incorrect_per_shot: Vec<usize>,
}

impl StructureSpec {
    pub fn new(n_channels: usize, incorrect_per_shot: Vec<usize>) -> Result<Self, StructureError> {
        if n_channels < 2 {
            return Err(StructureError::TooFewChannels(n_channels));
        }
        if incorrect_per_shot.is_empty() {
            return Err(StructureError::NoShots);
        }
        if let Some((shot, &incorrect)) = incorrect_per_shot
            .iter()
            .enumerate()
            .find(|(_, &k)| k > n_channels)
        {
            return Err(StructureError::TooManyIncorrect {
                shot,
                incorrect,
                n_channels,
            });
        }
        Ok(Self {
            n_channels,
            incorrect_per_shot,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_shots(&self) -> usize {
        self.incorrect_per_shot.len()
    }

    pub fn incorrect_per_shot(&self) -> &[usize] {
        &self.incorrect_per_shot
    }

    /// Fraction of incorrect channels in shot `i` (`k_i / N`).
    pub fn error_rate(&self, shot: usize) -> Rational {
        Rational::new(self.incorrect_per_shot[shot] as i64, self.n_channels as i64)
    }
}

/// A class ratio `numerator / denominator`, infinite when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassRatio {
    Finite(Rational),
    Infinite,
}

impl ClassRatio {
    pub fn from_counts(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            ClassRatio::Infinite
        } else {
            ClassRatio::Finite(Rational::new(numerator as i64, denominator as i64))
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ClassRatio::Infinite)
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            ClassRatio::Finite(r) => Some(*r),
            ClassRatio::Infinite => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ClassRatio::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            ClassRatio::Infinite => f64::INFINITY,
        }
    }

    /// Exact `|self - 1|`, infinite for an infinite ratio.
    pub fn distance_from_one(&self) -> ClassRatio {
        match self {
            ClassRatio::Finite(r) => {
                let d = *r - Rational::from_integer(1);
                ClassRatio::Finite(if d < Rational::from_integer(0) { -d } else { d })
            }
            ClassRatio::Infinite => ClassRatio::Infinite,
        }
    }

    /// Decimal rendering used in CSV output; `inf` for infinite ratios.
    pub fn to_decimal_string(&self) -> String {
        match self {
            ClassRatio::Finite(_) => format!("{}", self.to_f64()),
            ClassRatio::Infinite => "inf".to_string(),
        }
    }
}

impl PartialOrd for ClassRatio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ClassRatio {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ClassRatio::Finite(a), ClassRatio::Finite(b)) => a.cmp(b),
            (ClassRatio::Finite(_), ClassRatio::Infinite) => Ordering::Less,
            (ClassRatio::Infinite, ClassRatio::Finite(_)) => Ordering::Greater,
            (ClassRatio::Infinite, ClassRatio::Infinite) => Ordering::Equal,
        }
    }
}

/// Exact form: `a/b`, `a`, or `inf`.
impl fmt::Display for ClassRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassRatio::Finite(r) => write!(f, "{r}"),
            ClassRatio::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for ClassRatio {
    type Err = StructureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(ClassRatio::Infinite);
        }
        parse_rational(t).map(ClassRatio::Finite)
    }
}

impl Serialize for ClassRatio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassRatio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses `a/b`, an integer, or a finite decimal such as `0.25` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, StructureError> {
    let bad = || StructureError::BadRatio(s.to_string());
    let t = s.trim();
    if t.contains('/') {
        return Rational::from_str(t).map_err(|_| bad());
    }
    let (negative, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if (int_part.is_empty() && frac_part.is_empty())
        || !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
        || frac_part.len() > 15
    {
        return Err(bad());
    }
    let denom = 10i64.pow(frac_part.len() as u32);
    let int_val: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let frac_val: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().map_err(|_| bad())?
    };
    let numer = int_val
        .checked_mul(denom)
        .and_then(|v| v.checked_add(frac_val))
        .ok_or_else(bad)?;
    let r = Rational::new(numer, denom);
    Ok(if negative { -r } else { r })
}

/// Summary of how pairing reshapes the class balance of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStructureReport {
    pub total_pairs: u64,
    pub similar: u64,
    pub dissimilar: u64,
    /// dissimilar / similar
    pub tdgs_ratio: ClassRatio,
    /// incorrect / correct channel sequences
    pub raw_ratio: ClassRatio,
    pub balanced_improved: bool,
}

pub fn total_pairs(spec: &StructureSpec) -> u64 {
    spec.n_shots() as u64 * pairs_of(spec.n_channels)
}

pub fn similar_count(spec: &StructureSpec) -> u64 {
    spec.incorrect_per_shot
        .iter()
        .map(|&k| pairs_of(spec.n_channels - k))
        .sum()
}

pub fn dissimilar_count(spec: &StructureSpec) -> u64 {
    total_pairs(spec) - similar_count(spec)
}

/// Whether pairing moves the class ratio at least as close to 1 as the raw ratio was.
///
/// Ties count as improved. An infinite ratio only satisfies the test when the
/// other side is infinite too.
pub fn is_balance_improved(tdgs_ratio: ClassRatio, raw_ratio: ClassRatio) -> bool {
    match (
        tdgs_ratio.distance_from_one(),
        raw_ratio.distance_from_one(),
    ) {
        (ClassRatio::Finite(lhs), ClassRatio::Finite(rhs)) => lhs <= rhs,
        (ClassRatio::Infinite, ClassRatio::Infinite) => true,
        _ => false,
    }
}

pub fn class_ratios(spec: &StructureSpec) -> ClassStructureReport {
    let total = total_pairs(spec);
    let similar = similar_count(spec);
    let dissimilar = total - similar;
    let incorrect: u64 = spec.incorrect_per_shot.iter().map(|&k| k as u64).sum();
    let correct: u64 = spec
        .incorrect_per_shot
        .iter()
        .map(|&k| (spec.n_channels - k) as u64)
        .sum();
    let tdgs_ratio = ClassRatio::from_counts(dissimilar, similar);
    let raw_ratio = ClassRatio::from_counts(incorrect, correct);
    ClassStructureReport {
        total_pairs: total,
        similar,
        dissimilar,
        tdgs_ratio,
        raw_ratio,
        balanced_improved: is_balance_improved(tdgs_ratio, raw_ratio),
    }
}

/// One point of a class-structure transformation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurvePoint {
    pub q: Rational,
    pub raw_ratio: ClassRatio,
    pub tdgs_ratio: ClassRatio,
}

/// Single-shot `(raw_ratio, tdgs_ratio)` points for each incorrect-fraction `q`.
///
/// Every `q` must lie in `[0, 1]` and `q * n_channels` must be a whole channel
/// count. Output is sorted by `q`.
pub fn transformation_curve(
    n_channels: usize,
    q_grid: &[Rational],
) -> Result<Vec<CurvePoint>, StructureError> {
    if n_channels < 2 {
        return Err(StructureError::TooFewChannels(n_channels));
    }
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);
    let mut points = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        if q < zero || q > one {
            return Err(StructureError::QOutOfRange { q: q.to_string() });
        }
        let k = q * Rational::from_integer(n_channels as i64);
        if !k.is_integer() {
            return Err(StructureError::InfeasibleQ {
                q: q.to_string(),
                n_channels,
            });
        }
        let spec = StructureSpec::new(n_channels, vec![k.to_integer() as usize])?;
        let report = class_ratios(&spec);
        points.push(CurvePoint {
            q,
            raw_ratio: report.raw_ratio,
            tdgs_ratio: report.tdgs_ratio,
        });
    }
    points.sort_by_key(|p| p.q);
    Ok(points)
}

/// Renders curve points as CSV with header `q,raw_ratio,tdgs_ratio`.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("q,raw_ratio,tdgs_ratio\n");
    for p in points {
        let q = *p.q.numer() as f64 / *p.q.denom() as f64;
        out.push_str(&format!(
            "{},{},{}\n",
            q,
            p.raw_ratio.to_decimal_string(),
            p.tdgs_ratio.to_decimal_string()
        ));
    }
    out
}
