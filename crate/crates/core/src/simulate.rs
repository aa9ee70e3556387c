//! Monte Carlo and exact-enumeration checks of the cascade model.
//!
//! Each trial samples a Bernoulli label world over the level-0 chunks, draws
//! one uniform per chunk per level, and runs the real cascade engine with
//! stochastic classifiers that flag a chunk with probability `tpr` or `fpr`
//! depending on its true label. Trial `t` uses random stream `t` of the
//! master seed and tallies are integer sums, so results are bit-identical
//! however trials are spread over threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{self, ChunkClassifier, ChunkKey, ChunkSource, EngineOptions};
use crate::error::{Error, Result};
use crate::pyramid::PyramidSpec;
use crate::rng;
use crate::stats::{CascadeModel, DetectorProfile};

/// Largest level-0 chunk count [`exhaustive_small_world`] will enumerate.
pub const MAX_EXHAUSTIVE_CHUNKS: usize = 16;

/// Trials per work unit handed to the thread pool.
const TRIAL_BLOCK: u64 = 4096;

/// Ground-truth labels of one sampled world.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkWorld {
    spec: PyramidSpec,
    /// `labels[k][c]`: whether chunk `c` of level `k` contains a positive
    /// level-0 chunk. Level 0 holds the sampled labels.
    labels: Vec<Vec<bool>>,
}

impl ChunkWorld {
    /// Builds a world from level-0 labels, OR-reducing them up the pyramid.
    pub fn from_l0_labels(spec: &PyramidSpec, l0: Vec<bool>) -> Result<Self> {
        if l0.len() != spec.n_l0() {
            return Err(Error::domain(format!(
                "expected {} level-0 labels, got {}",
                spec.n_l0(),
                l0.len()
            )));
        }
        let mut labels = vec![l0];
        for level in 1..spec.levels() {
            let mut up = vec![false; spec.chunk_count(level)?];
            for (c, parent) in spec.parent_map(level - 1).into_iter().enumerate() {
                up[parent] |= labels[level - 1][c];
            }
            labels.push(up);
        }
        Ok(Self {
            spec: spec.clone(),
            labels,
        })
    }

    pub fn spec(&self) -> &PyramidSpec {
        &self.spec
    }

    pub fn l0_labels(&self) -> &[bool] {
        &self.labels[0]
    }

    pub fn labels(&self, level: usize) -> &[bool] {
        &self.labels[level]
    }
}

fn sample_world_from(spec: &PyramidSpec, p: f64, rng: &mut rng::StreamRng) -> Result<ChunkWorld> {
    let l0 = (0..spec.n_l0()).map(|_| rng::uniform(rng) < p).collect();
    ChunkWorld::from_l0_labels(spec, l0)
}

/// Samples independent Bernoulli(`p`) level-0 labels from stream 0 of `seed`.
pub fn sample_world(spec: &PyramidSpec, p: f64, seed: u64) -> Result<ChunkWorld> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must be in [0, 1], got {p}")));
    }
    sample_world_from(spec, p, &mut rng::stream(seed, 0))
}

/// A stochastic classifier's decision for one chunk given its true label
/// and a uniform draw in `[0, 1)`.
#[inline]
pub fn stochastic_detector_decision(label: bool, profile: DetectorProfile, draw: f64) -> bool {
    if label {
        draw < profile.tpr
    } else {
        draw < profile.fpr
    }
}

/// Chunk payload in a simulated trial: the true label and the classifier's
/// pre-drawn uniform for that chunk.
type SimChunk = (bool, f64);

struct TrialSource<'a> {
    world: &'a ChunkWorld,
    draws: &'a [Vec<f64>],
}

impl ChunkSource for TrialSource<'_> {
    type Chunk = SimChunk;

    fn load(&self, key: ChunkKey<'_>) -> Result<SimChunk> {
        Ok((
            self.world.labels[key.level][key.linear],
            self.draws[key.level][key.linear],
        ))
    }
}

struct StochasticClassifier {
    level: usize,
    profile: DetectorProfile,
}

impl ChunkClassifier<SimChunk> for StochasticClassifier {
    fn level(&self) -> usize {
        self.level
    }

    fn classify(&self, &(label, draw): &SimChunk) -> bool {
        stochastic_detector_decision(label, self.profile, draw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl SimEstimate {
    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: u64,
    /// Pooled ratio estimates; `None` when the denominator never occurred.
    pub tpr: Option<SimEstimate>,
    pub fpr: Option<SimEstimate>,
    pub precision: Option<SimEstimate>,
    /// Calls per level divided by the level-0 chunk count.
    pub calls_per_l0_chunk: Vec<SimEstimate>,
}

impl SimReport {
    /// `(name, estimate)` pairs in a fixed order: `tpr`, `fpr`, `precision`,
    /// then `calls_level_<k>` from level 0 up.
    pub fn metrics(&self) -> Vec<(String, Option<SimEstimate>)> {
        let mut out = vec![
            ("tpr".to_string(), self.tpr),
            ("fpr".to_string(), self.fpr),
            ("precision".to_string(), self.precision),
        ];
        for (k, est) in self.calls_per_l0_chunk.iter().enumerate() {
            out.push((format!("calls_level_{k}"), Some(*est)));
        }
        out
    }
}

/// Sums of per-trial counts and their products, enough for pooled ratio
/// estimates with delta-method standard errors.
#[derive(Clone, Debug, Default, PartialEq)]
struct RatioTally {
    num: u64,
    den: u64,
    num_sq: u128,
    den_sq: u128,
    cross: u128,
}

impl RatioTally {
    fn add(&mut self, num: u64, den: u64) {
        self.num += num;
        self.den += den;
        self.num_sq += (num as u128) * (num as u128);
        self.den_sq += (den as u128) * (den as u128);
        self.cross += (num as u128) * (den as u128);
    }

    fn merge(&mut self, o: &RatioTally) {
        self.num += o.num;
        self.den += o.den;
        self.num_sq += o.num_sq;
        self.den_sq += o.den_sq;
        self.cross += o.cross;
    }

    fn estimate(&self, trials: u64) -> Option<SimEstimate> {
        if self.den == 0 {
            return None;
        }
        let t = trials as f64;
        let ratio = self.num as f64 / self.den as f64;
        let resid = self.num_sq as f64 - 2.0 * ratio * self.cross as f64
            + ratio * ratio * self.den_sq as f64;
        let var = resid.max(0.0) / (t - 1.0).max(1.0);
        let mean_den = self.den as f64 / t;
        Some(SimEstimate {
            mean: ratio,
            std_error: (var / t).sqrt() / mean_den,
            trials,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Tally {
    trials: u64,
    tpr: RatioTally,
    fpr: RatioTally,
    precision: RatioTally,
    calls: Vec<u64>,
    calls_sq: Vec<u128>,
}

impl Tally {
    fn new(levels: usize) -> Self {
        Self {
            calls: vec![0; levels],
            calls_sq: vec![0; levels],
            ..Default::default()
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        self.trials += o.trials;
        self.tpr.merge(&o.tpr);
        self.fpr.merge(&o.fpr);
        self.precision.merge(&o.precision);
        for k in 0..self.calls.len() {
            self.calls[k] += o.calls[k];
            self.calls_sq[k] += o.calls_sq[k];
        }
        self
    }

    fn report(&self, n: usize) -> SimReport {
        let t = self.trials as f64;
        let calls_per_l0_chunk = self
            .calls
            .iter()
            .zip(&self.calls_sq)
            .map(|(&sum, &sq)| {
                let mean = sum as f64 / t;
                let var = (sq as f64 - sum as f64 * mean).max(0.0) / (t - 1.0).max(1.0);
                SimEstimate {
                    mean: sum as f64 / (t * n as f64),
                    std_error: (var / t).sqrt() / n as f64,
                    trials: self.trials,
                }
            })
            .collect();
        SimReport {
            trials: self.trials,
            tpr: self.tpr.estimate(self.trials),
            fpr: self.fpr.estimate(self.trials),
            precision: self.precision.estimate(self.trials),
            calls_per_l0_chunk,
        }
    }
}

fn check_model_spec(model: &CascadeModel, spec: &PyramidSpec) -> Result<()> {
    model.validate()?;
    if model.levels() != spec.levels() {
        return Err(Error::domain(format!(
            "model has {} levels but the pyramid has {}",
            model.levels(),
            spec.levels()
        )));
    }
    if model.dim != spec.dim() {
        return Err(Error::domain(format!(
            "model is {}-dimensional but the pyramid is {}-dimensional",
            model.dim,
            spec.dim()
        )));
    }
    Ok(())
}

fn run_trial(
    model: &CascadeModel,
    spec: &PyramidSpec,
    classifiers: &[&dyn ChunkClassifier<SimChunk>],
    seed: u64,
    trial: u64,
    tally: &mut Tally,
) -> Result<()> {
    let mut rng = rng::stream(seed, trial);
    let world = sample_world_from(spec, model.prevalence, &mut rng)?;
    let draws: Vec<Vec<f64>> = (0..spec.levels())
        .map(|k| {
            let count = spec.chunk_count(k).expect("level in range");
            (0..count).map(|_| rng::uniform(&mut rng)).collect()
        })
        .collect();
    let source = TrialSource {
        world: &world,
        draws: &draws,
    };
    let report = cascade::run_cascade(classifiers, &source, spec, &EngineOptions::default())?;

    let (mut tp, mut pos, mut fp, mut neg) = (0u64, 0u64, 0u64, 0u64);
    for (&pred, &label) in report.predictions.iter().zip(world.l0_labels()) {
        if label {
            pos += 1;
            tp += pred as u64;
        } else {
            neg += 1;
            fp += pred as u64;
        }
    }
    tally.trials += 1;
    tally.tpr.add(tp, pos);
    tally.fpr.add(fp, neg);
    tally.precision.add(tp, tp + fp);
    for (k, &c) in report.calls_per_level.iter().enumerate() {
        tally.calls[k] += c;
        tally.calls_sq[k] += (c as u128) * (c as u128);
    }
    Ok(())
}

/// Runs `trials` independent cascade trials on the rayon pool.
pub fn run_trials(model: &CascadeModel, spec: &PyramidSpec, trials: u64, seed: u64) -> Result<SimReport> {
    run_trials_with(model, spec, trials, seed, true)
}

/// As [`run_trials`], optionally confined to the calling thread. The result
/// is identical either way.
pub fn run_trials_with(
    model: &CascadeModel,
    spec: &PyramidSpec,
    trials: u64,
    seed: u64,
    parallel: bool,
) -> Result<SimReport> {
    check_model_spec(model, spec)?;
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    let classifiers: Vec<StochasticClassifier> = model
        .profiles
        .iter()
        .enumerate()
        .map(|(level, &profile)| StochasticClassifier { level, profile })
        .collect();
    let refs: Vec<&dyn ChunkClassifier<SimChunk>> = classifiers
        .iter()
        .map(|c| c as &dyn ChunkClassifier<SimChunk>)
        .collect();

    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let run_block = |b: u64| -> Result<Tally> {
        let mut tally = Tally::new(spec.levels());
        for trial in b * TRIAL_BLOCK..((b + 1) * TRIAL_BLOCK).min(trials) {
            run_trial(model, spec, &refs, seed, trial, &mut tally)?;
        }
        Ok(tally)
    };
    let tallies: Vec<Tally> = if parallel {
        (0..blocks).into_par_iter().map(run_block).collect::<Result<_>>()?
    } else {
        (0..blocks).map(run_block).collect::<Result<_>>()?
    };
    let total = tallies
        .into_iter()
        .fold(Tally::new(spec.levels()), Tally::merge);
    Ok(total.report(spec.n_l0()))
}

/// Exact metrics from enumerating every label pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactMetrics {
    /// `None` when no chunk can be positive (`p = 0`).
    pub tpr: Option<f64>,
    /// `None` when no chunk can be negative (`p = 1`).
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub expected_calls_per_l0_chunk: Vec<f64>,
}

/// Sums over all `2^n` level-0 label patterns, weighting each by
/// `p^k (1-p)^(n-k)`, with detector randomness marginalized per chunk: a
/// chunk is reached with the product of its ancestors' flag probabilities.
/// Has no sampling error; used as the ground-truth oracle for the closed
/// forms.
pub fn exhaustive_small_world(model: &CascadeModel, spec: &PyramidSpec) -> Result<ExactMetrics> {
    check_model_spec(model, spec)?;
    let n = spec.n_l0();
    if n > MAX_EXHAUSTIVE_CHUNKS {
        return Err(Error::domain(format!(
            "{n} level-0 chunks is too many to enumerate (max {MAX_EXHAUSTIVE_CHUNKS})"
        )));
    }
    let levels = spec.levels();
    let top = spec.top_level();
    let m = spec.branching() as f64;
    let p = model.prevalence;
    let q = 1.0 - p;
    let counts: Vec<usize> = (0..levels).map(|k| spec.chunk_count(k)).collect::<Result<_>>()?;
    let parents: Vec<Vec<usize>> = (0..top).map(|k| spec.parent_map(k)).collect();

    let (mut tp, mut fp, mut pos, mut neg) = (0.0, 0.0, 0.0, 0.0);
    let mut calls = vec![0.0; levels];
    let mut labels: Vec<Vec<bool>> = counts.iter().map(|&c| vec![false; c]).collect();
    let mut reach: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();

    for pattern in 0u32..(1u32 << n) {
        let k = pattern.count_ones() as i32;
        let weight = p.powi(k) * q.powi(n as i32 - k);
        if weight == 0.0 {
            continue;
        }
        for (c, label) in labels[0].iter_mut().enumerate() {
            *label = pattern >> c & 1 == 1;
        }
        for level in 1..levels {
            let (below, above) = labels.split_at_mut(level);
            above[0].iter_mut().for_each(|l| *l = false);
            for (c, &parent) in parents[level - 1].iter().enumerate() {
                above[0][parent] |= below[level - 1][c];
            }
        }
        // reach[k][c]: probability chunk c and all its ancestors are flagged.
        for level in (0..levels).rev() {
            let profile = model.profiles[level];
            for c in 0..counts[level] {
                let flag = if labels[level][c] { profile.tpr } else { profile.fpr };
                let above = if level == top {
                    1.0
                } else {
                    reach[level + 1][parents[level][c]]
                };
                reach[level][c] = flag * above;
            }
        }
        for c in 0..n {
            if labels[0][c] {
                pos += weight;
                tp += weight * reach[0][c];
            } else {
                neg += weight;
                fp += weight * reach[0][c];
            }
        }
        for level in 0..top {
            let flagged: f64 = reach[level + 1].iter().sum();
            calls[level] += weight * m * flagged;
        }
        calls[top] += weight * counts[top] as f64;
    }

    let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
    Ok(ExactMetrics {
        tpr: ratio(tp, pos),
        fpr: ratio(fp, neg),
        precision: ratio(tp, tp + fp),
        expected_calls_per_l0_chunk: calls.into_iter().map(|c| c / n as f64).collect(),
    })
}
