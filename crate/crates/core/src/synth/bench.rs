use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{
    compare_runs, format_agreement, recall_precision, run_cascade, run_single_level, ChunkClassifier,
    EngineOptions, RunMode, RunReport, TIMING_SCOPE,
};
use crate::error::{Error, Result};
use crate::image::{next_coords, strides_of, NdImage};
use crate::pyramid::PyramidSpec;
use crate::rng;
use crate::stats::{multi_level_metrics, CascadeModel};
use crate::store::{ChunkStore, DType, StoreManifest};

use super::classifier::{calibrate_level, measure_rates, MeasuredRates, ThresholdClassifier};
use super::components::{area_filter, connected_components, Connectivity};
use super::detect::{detection_metrics, DetectionScore};
use super::scene::{generate_scene, LabeledPyramid, SynthSceneConfig};

/// Where the upper-level area filter acts, recorded in every report.
pub const AREA_FILTER_PLACEMENT: &str = "upper-level area filters act on each classifier's own chunk mask before the descent decision";

const CALIBRATION_TAG: u64 = 0xca1b;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scene: SynthSceneConfig,
    /// Minimum component area per level, finest first. Level 0's value is
    /// also used when turning the final mask into object detections.
    pub min_area_px: Vec<usize>,
    pub connectivity: Connectivity,
    /// Defaults to the object radius.
    pub match_radius_px: Option<f64>,
    pub parallel: bool,
}

impl BenchConfig {
    /// A sparse 3-D scene: 16^3 level-0 chunks of 8^3 pixels, two levels,
    /// p = 0.05.
    pub fn sparse_3d(seed: u64) -> Self {
        Self {
            scene: SynthSceneConfig {
                spec: PyramidSpec::new(3, 2, vec![16, 16, 16]).expect("valid grid"),
                pixels_per_chunk_axis: 8,
                object_prevalence: 0.05,
                object_radius_px: 3.0,
                foreground_intensity: 1.0,
                background_intensity: 0.0,
                noise_std: 0.25,
                seed,
            },
            min_area_px: vec![8, 2],
            connectivity: Connectivity::Full,
            match_radius_px: None,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        let levels = self.scene.spec.levels();
        if levels < 2 {
            return Err(Error::domain("the benchmark needs at least two levels"));
        }
        if self.min_area_px.len() != levels {
            return Err(Error::domain(format!(
                "{} area thresholds given for {levels} levels",
                self.min_area_px.len()
            )));
        }
        if let Some(r) = self.match_radius_px {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::domain(format!("match radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn calibration_seed(&self) -> u64 {
        rng::derive_seed(self.scene.seed, CALIBRATION_TAG)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: RunMode,
    pub chunk_recall: Option<f64>,
    pub chunk_precision: Option<f64>,
    pub objects: DetectionScore,
    pub calls_per_level: Vec<u64>,
    pub positives_per_level: Vec<u64>,
    pub calls: String,
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub classifier: ThresholdClassifier,
    pub calibration: MeasuredRates,
    /// The same classifier scored on the benchmark scene.
    pub test: MeasuredRates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub calibration_seed: u64,
    pub n_l0_chunks: usize,
    pub l0_positive_chunks: usize,
    pub objects: usize,
    pub levels: Vec<LevelReport>,
    pub single_level: BenchRow,
    pub cascade: BenchRow,
    pub agreement: f64,
    pub agreement_label: String,
    /// Expected calls per level from the closed-form model fed with the
    /// calibrated rates and the configured prevalence.
    pub predicted_calls_per_level: Vec<f64>,
    pub area_filter_placement: String,
    pub timing_scope: String,
}

impl BenchReport {
    /// Cascade level-0 calls as a fraction of the single-level run's.
    pub fn l0_call_fraction(&self) -> f64 {
        self.cascade.calls_per_level[0] as f64 / self.single_level.calls_per_level[0] as f64
    }

    pub fn strip_timing(&mut self) {
        self.single_level.wall_clock_seconds = None;
        self.cascade.wall_clock_seconds = None;
    }
}

/// Builds the level-0 detection mask: hot pixels inside predicted chunks.
fn detection_mask(scene: &LabeledPyramid, predictions: &[bool], threshold: f64) -> Vec<bool> {
    let image = &scene.images[0];
    let grid = scene.spec.l0_chunks_per_axis();
    let grid_strides = strides_of(grid);
    let mut coords = vec![0usize; image.dim()];
    let mut mask = vec![false; image.len()];
    for (m, &v) in mask.iter_mut().zip(image.data()) {
        let chunk: usize = coords
            .iter()
            .zip(&scene.chunk_shape)
            .zip(&grid_strides)
            .map(|((c, s), g)| (c / s) * g)
            .sum();
        *m = predictions[chunk] && v >= threshold;
        next_coords(&mut coords, image.shape());
    }
    mask
}

/// Object centroids detected by a run: connected components of the hot
/// pixels in positive chunks, area-filtered.
pub fn object_detections(
    scene: &LabeledPyramid,
    predictions: &[bool],
    threshold: f64,
    min_area_px: usize,
    connectivity: Connectivity,
) -> Result<Vec<Vec<f64>>> {
    let mask = detection_mask(scene, predictions, threshold);
    let comps = connected_components(&mask, scene.images[0].shape(), connectivity)?;
    Ok(area_filter(comps, min_area_px)
        .into_iter()
        .map(|c| c.centroid)
        .collect())
}

fn bench_row(
    cfg: &BenchConfig,
    scene: &LabeledPyramid,
    report: &RunReport,
    l0: &ThresholdClassifier,
) -> Result<BenchRow> {
    let (chunk_recall, chunk_precision) = recall_precision(&report.predictions, &scene.l0_chunk_labels);
    let detections = object_detections(
        scene,
        &report.predictions,
        l0.threshold,
        cfg.min_area_px[0],
        cfg.connectivity,
    )?;
    let radius = cfg.match_radius_px.unwrap_or(cfg.scene.object_radius_px);
    Ok(BenchRow {
        mode: report.mode,
        chunk_recall,
        chunk_precision,
        objects: detection_metrics(&detections, &scene.object_centroids, radius)?,
        calls_per_level: report.calls_per_level.clone(),
        positives_per_level: report.positives_per_level.clone(),
        calls: report.call_string(),
        wall_clock_seconds: Some(report.wall_clock_seconds),
    })
}

/// Generates the benchmark scene and a calibration scene on a sibling seed,
/// calibrates one threshold classifier per level, and runs the single-level
/// and cascade engines on the benchmark scene.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let scene = generate_scene(&cfg.scene)?;
    let calibration_scene = generate_scene(&cfg.scene.with_seed(cfg.calibration_seed()))?;
    run_bench_on(cfg, &scene, &calibration_scene)
}

pub fn run_bench_on(
    cfg: &BenchConfig,
    scene: &LabeledPyramid,
    calibration_scene: &LabeledPyramid,
) -> Result<BenchReport> {
    cfg.validate()?;
    let spec = &cfg.scene.spec;
    let threshold = cfg.scene.midpoint_threshold();
    let mut levels = Vec::new();
    for level in 0..spec.levels() {
        let cal = calibrate_level(
            calibration_scene,
            level,
            threshold,
            cfg.min_area_px[level],
            cfg.connectivity,
        )?;
        levels.push(LevelReport {
            level,
            test: measure_rates(scene, &cal.classifier)?,
            classifier: cal.classifier,
            calibration: cal.measured,
        });
    }

    let opts = EngineOptions {
        parallel: cfg.parallel,
        ..EngineOptions::default()
    };
    let source = scene.source();
    let l0 = &levels[0].classifier;
    let single = run_single_level(l0, &source, spec, &opts)?;
    let classifiers: Vec<&dyn ChunkClassifier<NdImage>> = levels
        .iter()
        .map(|l| &l.classifier as &dyn ChunkClassifier<NdImage>)
        .collect();
    let cascade = run_cascade(&classifiers, &source, spec, &opts)?;

    let model = CascadeModel::new(
        spec.dim(),
        cfg.scene.object_prevalence,
        levels.iter().map(|l| l.calibration.profile()).collect(),
    )?;
    let n = spec.n_l0() as f64;
    let predicted_calls_per_level = multi_level_metrics(&model)?
        .expected_calls_per_l0_chunk
        .iter()
        .map(|c| c * n)
        .collect();

    let comparison = compare_runs(&single, &cascade, &scene.l0_chunk_labels)?;
    Ok(BenchReport {
        seed: cfg.scene.seed,
        calibration_seed: cfg.calibration_seed(),
        n_l0_chunks: spec.n_l0(),
        l0_positive_chunks: scene.l0_chunk_labels.iter().filter(|&&l| l).count(),
        objects: scene.object_centroids.len(),
        single_level: bench_row(cfg, scene, &single, l0)?,
        cascade: bench_row(cfg, scene, &cascade, l0)?,
        agreement: comparison.agreement,
        agreement_label: format_agreement(comparison.agreement),
        levels,
        predicted_calls_per_level,
        area_filter_placement: AREA_FILTER_PLACEMENT.to_string(),
        timing_scope: TIMING_SCOPE.to_string(),
    })
}

/// Writes every level of `scene` to a chunk directory.
pub fn export_scene(scene: &LabeledPyramid, root: impl AsRef<Path>, dtype: DType) -> Result<ChunkStore> {
    let store = ChunkStore::create(
        root,
        StoreManifest::new(&scene.spec, scene.chunk_shape.clone(), dtype),
    )?;
    store.write_pyramid(&scene.source())?;
    Ok(store)
}
