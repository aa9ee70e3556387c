//! Synthetic scenes, threshold classifiers and the end-to-end benchmark.

mod bench;
mod classifier;
mod components;
mod detect;
mod scene;

pub use bench::{
    export_scene, object_detections, run_bench, run_bench_on, BenchConfig, BenchReport, BenchRow,
    LevelReport, AREA_FILTER_PLACEMENT,
};
pub use classifier::{
    calibrate_level, measure_rates, threshold_chunk_classifier, LevelCalibration, MeasuredRates,
    ThresholdClassifier,
};
pub use components::{area_filter, connected_components, Component, Connectivity};
pub use detect::{detection_metrics, DetectionScore};
pub use scene::{generate_scene, LabeledPyramid, SynthSceneConfig};
