//! Closed-form accuracy and cost model of a cascade detector.
//!
//! Level-0 chunk labels are independent Bernoulli(`p`) draws and every
//! level's classifier is conditionally independent of the others given the
//! true labels. A chunk at level `k >= 1` is positive iff any of its level-0
//! descendants is, so with `q = 1 - p` and `m = 2^dim` a level-`k` chunk is
//! negative with probability `q^(m^k)`.
//!
//! For two levels, with `(β0, α0)` and `(β1, α1)` the level-0 and level-1
//! rates:
//!
//! ```text
//! tpr   = β1·β0
//! fpr   = q^(m-1)·(α1·α0) + (1 - q^(m-1))·(β1·α0)
//! calls = β1 + q^m·(α1 - β1)        (level-0 calls per level-0 chunk)
//! ```
//!
//! More levels are handled by folding top-down: the composite detector
//! formed by levels `L..=k+1` plays the role of the level-1 detector over
//! level-`k` chunks, which have prevalence `1 - q^(m^k)`. The fold is exact
//! under the independence assumptions above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest spatial dimension the closed forms accept (`2^dim` must fit an
/// `i32` exponent).
const MAX_MODEL_DIM: usize = 16;

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::domain(format!(
            "{name} must be a probability in [0, 1], got {value}"
        )));
    }
    Ok(())
}

/// True and false positive rates of one level's chunk classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub tpr: f64,
    pub fpr: f64,
}

impl DetectorProfile {
    pub fn new(tpr: f64, fpr: f64) -> Result<Self> {
        let profile = Self { tpr, fpr };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("tpr", self.tpr)?;
        check_probability("fpr", self.fpr)
    }

    /// A classifier that flags everything. Putting it at every level above 0
    /// turns a cascade into a single-level detector.
    pub fn pass_through() -> Self {
        Self { tpr: 1.0, fpr: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub dim: usize,
    pub prevalence: f64,
    /// Index 0 is the finest level.
    pub profiles: Vec<DetectorProfile>,
}

impl CascadeModel {
    pub fn new(dim: usize, prevalence: f64, profiles: Vec<DetectorProfile>) -> Result<Self> {
        let model = Self {
            dim,
            prevalence,
            profiles,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_MODEL_DIM {
            return Err(Error::domain(format!(
                "dim must be in 1..={MAX_MODEL_DIM}, got {}",
                self.dim
            )));
        }
        check_probability("prevalence", self.prevalence)?;
        if self.profiles.is_empty() {
            return Err(Error::domain("a cascade model needs at least one level"));
        }
        for (level, p) in self.profiles.iter().enumerate() {
            check_probability(&format!("tpr of level {level}"), p.tpr)?;
            check_probability(&format!("fpr of level {level}"), p.fpr)?;
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.profiles.len()
    }

    pub fn branching(&self) -> usize {
        1 << self.dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeMetrics {
    pub tpr: f64,
    pub fpr: f64,
    /// `None` when no chunk is ever predicted positive (e.g. `p = 0` and
    /// `fpr = 0`): the ratio is undefined, not zero.
    pub precision: Option<f64>,
    /// Expected classifier calls at each level divided by the number of
    /// level-0 chunks. Index 0 is the finest level.
    pub expected_calls_per_l0_chunk: Vec<f64>,
}

impl CascadeMetrics {
    pub fn sensitivity(&self) -> f64 {
        self.tpr
    }

    pub fn specificity(&self) -> f64 {
        1.0 - self.fpr
    }

    /// Expected calls to any classifier, per level-0 chunk.
    pub fn total_calls_per_l0_chunk(&self) -> f64 {
        self.expected_calls_per_l0_chunk.iter().sum()
    }
}

/// Exponents of `(1 - p)` in the false positive rate and call formulas:
/// `(2^dim - 1, 2^dim)`. For `dim = 3` these are 7 and 8.
pub fn occupancy_exponents(dim: usize) -> (u32, u32) {
    let m = 1u32 << dim;
    (m - 1, m)
}

/// Bayes-rule precision, `None` when nothing is predicted positive.
pub fn precision(prevalence: f64, tpr: f64, fpr: f64) -> Option<f64> {
    let hits = prevalence * tpr;
    let denom = hits + (1.0 - prevalence) * fpr;
    (denom > 0.0).then(|| hits / denom)
}

pub fn single_level_metrics(profile: DetectorProfile, prevalence: f64) -> Result<CascadeMetrics> {
    profile.validate()?;
    check_probability("prevalence", prevalence)?;
    Ok(CascadeMetrics {
        tpr: profile.tpr,
        fpr: profile.fpr,
        precision: precision(prevalence, profile.tpr, profile.fpr),
        expected_calls_per_l0_chunk: vec![1.0],
    })
}

pub fn two_level_metrics(model: &CascadeModel) -> Result<CascadeMetrics> {
    if model.levels() != 2 {
        return Err(Error::domain(format!(
            "two-level metrics need exactly 2 profiles, got {}",
            model.levels()
        )));
    }
    fold_metrics(model)
}

pub fn multi_level_metrics(model: &CascadeModel) -> Result<CascadeMetrics> {
    if model.levels() < 2 {
        return Err(Error::domain(format!(
            "a cascade needs at least 2 profiles, got {}",
            model.levels()
        )));
    }
    fold_metrics(model)
}

fn fold_metrics(model: &CascadeModel) -> Result<CascadeMetrics> {
    model.validate()?;
    let levels = model.levels();
    let top = levels - 1;
    let m = model.branching() as i32;
    let (sibling_exp, _) = occupancy_exponents(model.dim);

    // neg[k]: probability a level-k chunk has no positive level-0 descendant.
    let mut neg = Vec::with_capacity(levels);
    neg.push(1.0 - model.prevalence);
    for k in 1..levels {
        let below: f64 = neg[k - 1];
        neg.push(below.powi(m));
    }

    let mut calls = vec![0.0; levels];
    // Powers of two, so these scalings are exact.
    calls[top] = 0.5f64.powi((model.dim * top) as i32);

    let mut tpr = model.profiles[top].tpr;
    let mut fpr = model.profiles[top].fpr;
    for k in (0..top).rev() {
        let flagged = tpr + neg[k + 1] * (fpr - tpr);
        calls[k] = flagged * 0.5f64.powi((model.dim * k) as i32);

        let lower = model.profiles[k];
        let siblings_negative = neg[k].powi(sibling_exp as i32);
        // s·(A·α) + (1 - s)·(B·α), factored so that A = B is exact.
        fpr = lower.fpr * (tpr + siblings_negative * (fpr - tpr));
        tpr *= lower.tpr;
    }

    Ok(CascadeMetrics {
        tpr,
        fpr,
        precision: precision(model.prevalence, tpr, fpr),
        expected_calls_per_l0_chunk: calls,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    Prevalence,
    Tpr(usize),
    Fpr(usize),
    /// Sweeps `1 - fpr` of a level.
    Specificity(usize),
}

impl SweepParameter {
    /// Column label, e.g. `p`, `tpr1`, `specificity1`.
    pub fn label(&self) -> String {
        match self {
            SweepParameter::Prevalence => "p".to_string(),
            SweepParameter::Tpr(k) => format!("tpr{k}"),
            SweepParameter::Fpr(k) => format!("fpr{k}"),
            SweepParameter::Specificity(k) => format!("specificity{k}"),
        }
    }

    pub fn apply(&self, model: &mut CascadeModel, value: f64) -> Result<()> {
        let level = match *self {
            SweepParameter::Prevalence => {
                model.prevalence = value;
                return Ok(());
            }
            SweepParameter::Tpr(k) | SweepParameter::Fpr(k) | SweepParameter::Specificity(k) => k,
        };
        let profile = model.profiles.get_mut(level).ok_or_else(|| {
            Error::domain(format!("sweep level {level} is not in the model"))
        })?;
        match self {
            SweepParameter::Tpr(_) => profile.tpr = value,
            SweepParameter::Fpr(_) => profile.fpr = value,
            _ => profile.fpr = 1.0 - value,
        }
        Ok(())
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "p" || s == "prevalence" {
            return Ok(SweepParameter::Prevalence);
        }
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::domain(format!("unknown sweep parameter {s:?}")))?;
        let (name, level) = s.split_at(split);
        let level: usize = level
            .parse()
            .map_err(|_| Error::domain(format!("bad level in sweep parameter {s:?}")))?;
        match name {
            "tpr" | "beta" => Ok(SweepParameter::Tpr(level)),
            "fpr" | "alpha" => Ok(SweepParameter::Fpr(level)),
            "specificity" | "spec" => Ok(SweepParameter::Specificity(level)),
            _ => Err(Error::domain(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub cascade: CascadeMetrics,
    pub single_level: CascadeMetrics,
}

/// Evaluates cascade and single-level metrics at each grid value, in the
/// order given.
pub fn sweep(model: &CascadeModel, parameter: SweepParameter, grid: &[f64]) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&value| {
            check_probability(&format!("sweep value for {}", parameter.label()), value)?;
            let mut varied = model.clone();
            parameter.apply(&mut varied, value)?;
            Ok(SweepRow {
                value,
                cascade: multi_level_metrics(&varied)?,
                single_level: single_level_metrics(varied.profiles[0], varied.prevalence)?,
            })
        })
        .collect()
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            (0..points)
                .map(|i| if i == points - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}
