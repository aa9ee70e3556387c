//! Execution engine for single-level and cascade inference over a chunk
//! pyramid.
//!
//! A cascade classifies every top-level chunk, then descends one level at a
//! time: the `2^dim` children of each positive chunk are passed to the next
//! classifier down. A level-0 chunk ends up positive only if it and every
//! ancestor were classified positive; unvisited level-0 chunks are negative.
//! Chunks within a level are visited in ascending linear index order.
//!
//! `wall_clock_seconds` covers classification only. Chunk loading is done in
//! batches outside the timed region.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyramid::{ChunkIndex, PyramidSpec};

/// What the timer in a [`RunReport`] measures.
pub const TIMING_SCOPE: &str = "classification-only";

/// Binary classifier for the chunks of one pyramid level.
pub trait ChunkClassifier<C: ?Sized>: Sync {
    fn level(&self) -> usize;

    fn classify(&self, chunk: &C) -> bool;

    /// Whether the engine may call `classify` from several threads at once.
    fn concurrent_safe(&self) -> bool {
        false
    }
}

/// Address of a chunk handed to a [`ChunkSource`].
#[derive(Clone, Copy, Debug)]
pub struct ChunkKey<'a> {
    pub level: usize,
    /// Row-major position within the level.
    pub linear: usize,
    pub spec: &'a PyramidSpec,
}

impl ChunkKey<'_> {
    pub fn index(&self) -> ChunkIndex {
        self.spec
            .index_from_linear(self.level, self.linear)
            .expect("engine only issues in-range keys")
    }
}

/// Chunked array access keyed by chunk address.
pub trait ChunkSource: Sync {
    type Chunk: Send + Sync;

    fn load(&self, key: ChunkKey<'_>) -> Result<Self::Chunk>;
}

#[derive(Clone, Debug)]
pub struct EngineOptions {
    /// Load chunks (and classify them, where the classifier allows it) on
    /// the rayon pool. Predictions and call counts do not depend on this.
    pub parallel: bool,
    /// Chunks loaded per batch.
    pub batch_size: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            parallel: false,
            batch_size: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    SingleLevel,
    Cascade,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    /// Final prediction per level-0 chunk, by linear index.
    pub predictions: Vec<bool>,
    /// Classifier calls per level, index 0 finest.
    pub calls_per_level: Vec<u64>,
    /// Positive classifier outputs per level.
    pub positives_per_level: Vec<u64>,
    pub wall_clock_seconds: f64,
    pub timing_scope: String,
}

impl RunReport {
    /// Calls per level from the top down, joined with `:`; for two levels
    /// this is the familiar `L1:L0` form.
    pub fn call_string(&self) -> String {
        self.calls_per_level
            .iter()
            .rev()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(":")
    }

    pub fn positive_count(&self) -> usize {
        self.predictions.iter().filter(|&&p| p).count()
    }
}

fn classify_frontier<S: ChunkSource>(
    level: usize,
    frontier: &[usize],
    classifier: &dyn ChunkClassifier<S::Chunk>,
    source: &S,
    spec: &PyramidSpec,
    opts: &EngineOptions,
    elapsed: &mut Duration,
) -> Result<Vec<bool>> {
    let mut decisions = Vec::with_capacity(frontier.len());
    for batch in frontier.chunks(opts.batch_size.max(1)) {
        let key = |linear: usize| ChunkKey {
            level,
            linear,
            spec,
        };
        let chunks: Vec<S::Chunk> = if opts.parallel {
            batch.par_iter().map(|&l| source.load(key(l))).collect::<Result<_>>()?
        } else {
            batch.iter().map(|&l| source.load(key(l))).collect::<Result<_>>()?
        };
        let start = Instant::now();
        if opts.parallel && classifier.concurrent_safe() {
            let out: Vec<bool> = chunks.par_iter().map(|c| classifier.classify(c)).collect();
            decisions.extend(out);
        } else {
            decisions.extend(chunks.iter().map(|c| classifier.classify(c)));
        }
        *elapsed += start.elapsed();
    }
    Ok(decisions)
}

fn check_classifier_level<C: ?Sized>(classifier: &dyn ChunkClassifier<C>, level: usize) -> Result<()> {
    if classifier.level() != level {
        return Err(Error::domain(format!(
            "classifier serves level {} but was supplied for level {level}",
            classifier.level()
        )));
    }
    Ok(())
}

/// Classifies every level-0 chunk.
pub fn run_single_level<S: ChunkSource>(
    classifier: &dyn ChunkClassifier<S::Chunk>,
    source: &S,
    spec: &PyramidSpec,
    opts: &EngineOptions,
) -> Result<RunReport> {
    check_classifier_level(classifier, 0)?;
    let n = spec.n_l0();
    let frontier: Vec<usize> = (0..n).collect();
    let mut elapsed = Duration::ZERO;
    let predictions = classify_frontier(0, &frontier, classifier, source, spec, opts, &mut elapsed)?;
    let mut calls_per_level = vec![0; spec.levels()];
    let mut positives_per_level = vec![0; spec.levels()];
    calls_per_level[0] = n as u64;
    positives_per_level[0] = predictions.iter().filter(|&&p| p).count() as u64;
    Ok(RunReport {
        mode: RunMode::SingleLevel,
        predictions,
        calls_per_level,
        positives_per_level,
        wall_clock_seconds: elapsed.as_secs_f64(),
        timing_scope: TIMING_SCOPE.to_string(),
    })
}

/// Runs the cascade with `classifiers[k]` serving level `k`.
pub fn run_cascade<S: ChunkSource>(
    classifiers: &[&dyn ChunkClassifier<S::Chunk>],
    source: &S,
    spec: &PyramidSpec,
    opts: &EngineOptions,
) -> Result<RunReport> {
    if classifiers.len() != spec.levels() {
        return Err(Error::domain(format!(
            "{} classifiers supplied for a {}-level pyramid",
            classifiers.len(),
            spec.levels()
        )));
    }
    for (level, c) in classifiers.iter().enumerate() {
        check_classifier_level(*c, level)?;
    }

    let levels = spec.levels();
    let top = spec.top_level();
    let mut calls_per_level = vec![0u64; levels];
    let mut positives_per_level = vec![0u64; levels];
    let mut predictions = vec![false; spec.n_l0()];
    let mut elapsed = Duration::ZERO;

    let mut frontier: Vec<usize> = (0..spec.chunk_count(top)?).collect();
    for level in (0..levels).rev() {
        let decisions = classify_frontier(
            level,
            &frontier,
            classifiers[level],
            source,
            spec,
            opts,
            &mut elapsed,
        )?;
        calls_per_level[level] = frontier.len() as u64;
        let positives = frontier
            .iter()
            .zip(&decisions)
            .filter_map(|(&c, &d)| d.then_some(c));
        if level == 0 {
            for c in positives {
                predictions[c] = true;
                positives_per_level[0] += 1;
            }
        } else {
            let mut next = Vec::new();
            for c in positives {
                spec.child_linears(level, c, &mut next);
                positives_per_level[level] += 1;
            }
            next.sort_unstable();
            frontier = next;
        }
    }

    Ok(RunReport {
        mode: RunMode::Cascade,
        predictions,
        calls_per_level,
        positives_per_level,
        wall_clock_seconds: elapsed.as_secs_f64(),
        timing_scope: TIMING_SCOPE.to_string(),
    })
}

/// Recall and precision of `predictions` against `truth`; `None` where the
/// denominator is zero.
pub fn recall_precision(predictions: &[bool], truth: &[bool]) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut pos, mut pred) = (0usize, 0usize, 0usize);
    for (&p, &t) in predictions.iter().zip(truth) {
        tp += (p && t) as usize;
        pos += t as usize;
        pred += p as usize;
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (ratio(tp, pos), ratio(tp, pred))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: RunMode,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub calls: String,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn new(report: &RunReport, truth: &[bool]) -> Self {
        let (recall, precision) = recall_precision(&report.predictions, truth);
        Self {
            mode: report.mode,
            recall,
            precision,
            calls: report.call_string(),
            wall_clock_seconds: report.wall_clock_seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub a: RunSummary,
    pub b: RunSummary,
    /// Fraction of level-0 chunks on which the two runs agree.
    pub agreement: f64,
}

impl ComparisonRow {
    /// Agreement to two decimals; any nonzero disagreement under 1% is shown
    /// as `>0.99`.
    pub fn agreement_label(&self) -> String {
        format_agreement(self.agreement)
    }
}

pub fn format_agreement(agreement: f64) -> String {
    if agreement >= 1.0 {
        "1.00".to_string()
    } else if 1.0 - agreement < 0.01 {
        ">0.99".to_string()
    } else {
        format!("{agreement:.2}")
    }
}

pub fn compare_runs(a: &RunReport, b: &RunReport, ground_truth: &[bool]) -> Result<ComparisonRow> {
    let n = ground_truth.len();
    if a.predictions.len() != n || b.predictions.len() != n {
        return Err(Error::domain(format!(
            "prediction lengths {} and {} do not match ground truth length {n}",
            a.predictions.len(),
            b.predictions.len()
        )));
    }
    let same = a
        .predictions
        .iter()
        .zip(&b.predictions)
        .filter(|(x, y)| x == y)
        .count();
    Ok(ComparisonRow {
        a: RunSummary::new(a, ground_truth),
        b: RunSummary::new(b, ground_truth),
        agreement: if n == 0 { 1.0 } else { same as f64 / n as f64 },
    })
}

/// In-memory chunk source over per-level arrays of chunk payloads, indexed
/// by linear chunk index.
pub struct VecSource<T> {
    levels: Vec<Vec<T>>,
}

impl<T: Clone + Send + Sync> VecSource<T> {
    pub fn new(spec: &PyramidSpec, levels: Vec<Vec<T>>) -> Result<Self> {
        if levels.len() != spec.levels() {
            return Err(Error::domain("one payload array per level is required"));
        }
        for (k, payloads) in levels.iter().enumerate() {
            if payloads.len() != spec.chunk_count(k)? {
                return Err(Error::domain(format!(
                    "level {k} has {} payloads, expected {}",
                    payloads.len(),
                    spec.chunk_count(k)?
                )));
            }
        }
        Ok(Self { levels })
    }
}

impl<T: Clone + Send + Sync> ChunkSource for VecSource<T> {
    type Chunk = T;

    fn load(&self, key: ChunkKey<'_>) -> Result<T> {
        Ok(self.levels[key.level][key.linear].clone())
    }
}

/// Classifier backed by a closure.
pub struct FnClassifier<F> {
    level: usize,
    concurrent: bool,
    f: F,
}

impl<F> FnClassifier<F> {
    pub fn new(level: usize, f: F) -> Self {
        Self {
            level,
            concurrent: false,
            f,
        }
    }

    pub fn concurrent(mut self) -> Self {
        self.concurrent = true;
        self
    }
}

impl<C: ?Sized, F: Fn(&C) -> bool + Sync> ChunkClassifier<C> for FnClassifier<F> {
    fn level(&self) -> usize {
        self.level
    }

    fn classify(&self, chunk: &C) -> bool {
        (self.f)(chunk)
    }

    fn concurrent_safe(&self) -> bool {
        self.concurrent
    }
}
