use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pyramid::{PyramidSpec, MAX_DIM};
use crate::stats::{CascadeModel, DetectorProfile, SweepParameter};
use crate::synth::{BenchConfig, Connectivity, SynthSceneConfig};

use super::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything a run can be configured with. Every field has a default, so
/// an empty file is valid; command-line flags override the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub pyramid: PyramidSection,
    pub simulate: SimulateSection,
    pub sweep: SweepSection,
    pub bench: BenchSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    pub prevalence: f64,
    /// Per-level true positive rates, level 0 first.
    pub tpr: Vec<f64>,
    /// Per-level false positive rates, level 0 first.
    pub fpr: Vec<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            dim: 3,
            prevalence: 0.1,
            tpr: vec![0.85, 0.8],
            fpr: vec![0.05, 0.1],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidSection {
    /// Level-0 grid for `simulate`; defaults to a single top-level chunk.
    pub l0_chunks_per_axis: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub trials: u64,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `p`, `tpr<k>`, `fpr<k>` or `specificity<k>`. Unset runs the three
    /// default sweeps over `p`, `tpr1` and `specificity1`.
    pub parameter: Option<String>,
    /// Explicit grid; overrides `start`/`stop`/`points`.
    pub grid: Option<Vec<f64>>,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            parameter: None,
            grid: None,
            start: 0.0,
            stop: 1.0,
            points: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub seed: u64,
    pub levels: usize,
    pub l0_chunks_per_axis: Vec<usize>,
    pub pixels_per_chunk_axis: usize,
    pub object_prevalence: f64,
    pub object_radius_px: f64,
    pub foreground_intensity: f64,
    pub background_intensity: f64,
    pub noise_std: f64,
    /// Per level, finest first.
    pub min_area_px: Vec<usize>,
    pub connectivity: Connectivity,
    pub match_radius_px: Option<f64>,
    /// Also write the benchmark scene as a chunk directory here.
    pub export_dir: Option<PathBuf>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            seed: 0,
            levels: 2,
            l0_chunks_per_axis: vec![16, 16, 16],
            pixels_per_chunk_axis: 8,
            object_prevalence: 0.05,
            object_radius_px: 3.0,
            foreground_intensity: 1.0,
            background_intensity: 0.0,
            noise_std: 0.25,
            min_area_px: vec![8, 2],
            connectivity: Connectivity::Face,
            match_radius_px: None,
            export_dir: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Format,
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn check_probability(field: &str, value: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(field_err(field, format!("must be a probability in [0, 1], got {value}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| field_err("--config", format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| field_err("--config", e.to_string()))
    }

    pub fn cascade_model(&self) -> Result<CascadeModel, CliError> {
        let m = &self.model;
        if !(1..=MAX_DIM).contains(&m.dim) {
            return Err(field_err("model.dim", format!("must be in 1..={MAX_DIM}, got {}", m.dim)));
        }
        check_probability("model.prevalence", m.prevalence)?;
        if m.tpr.len() < 2 {
            return Err(field_err("model.tpr", "needs one rate per level, at least two levels"));
        }
        if m.fpr.len() != m.tpr.len() {
            return Err(field_err(
                "model.fpr",
                format!("has {} entries but model.tpr has {}", m.fpr.len(), m.tpr.len()),
            ));
        }
        for (name, rates) in [("tpr", &m.tpr), ("fpr", &m.fpr)] {
            for (k, &v) in rates.iter().enumerate() {
                check_probability(&format!("model.{name}[{k}]"), v)?;
            }
        }
        let profiles = m
            .tpr
            .iter()
            .zip(&m.fpr)
            .map(|(&tpr, &fpr)| DetectorProfile { tpr, fpr })
            .collect();
        CascadeModel::new(m.dim, m.prevalence, profiles).map_err(|e| field_err("model", e.to_string()))
    }

    pub fn simulation_spec(&self, model: &CascadeModel) -> Result<PyramidSpec, CliError> {
        let spec = match &self.pyramid.l0_chunks_per_axis {
            Some(axes) => PyramidSpec::new(model.dim, model.levels(), axes.clone()),
            None => PyramidSpec::single_root(model.dim, model.levels()),
        };
        spec.map_err(|e| field_err("pyramid.l0_chunks_per_axis", e.to_string()))
    }

    pub fn sweep_parameter(&self) -> Result<Option<SweepParameter>, CliError> {
        self.sweep
            .parameter
            .as_deref()
            .map(|s| s.parse().map_err(|e: crate::Error| field_err("sweep.parameter", e.to_string())))
            .transpose()
    }

    pub fn sweep_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        let grid = match &s.grid {
            Some(g) => g.clone(),
            None => {
                check_probability("sweep.start", s.start)?;
                check_probability("sweep.stop", s.stop)?;
                if s.points == 0 {
                    return Err(field_err("sweep.points", "must be at least 1"));
                }
                crate::stats::linspace(s.start, s.stop, s.points)
            }
        };
        if grid.is_empty() {
            return Err(field_err("sweep.grid", "must not be empty"));
        }
        for (i, &v) in grid.iter().enumerate() {
            check_probability(&format!("sweep.grid[{i}]"), v)?;
        }
        Ok(grid)
    }

    pub fn bench_config(&self, parallel: bool) -> Result<BenchConfig, CliError> {
        let b = &self.bench;
        let dim = b.l0_chunks_per_axis.len();
        let spec = PyramidSpec::new(dim, b.levels, b.l0_chunks_per_axis.clone())
            .map_err(|e| field_err("bench.l0_chunks_per_axis", e.to_string()))?;
        if b.levels < 2 {
            return Err(field_err("bench.levels", "must be at least 2"));
        }
        if b.pixels_per_chunk_axis == 0 {
            return Err(field_err("bench.pixels_per_chunk_axis", "must be at least 1"));
        }
        check_probability("bench.object_prevalence", b.object_prevalence)?;
        if !(b.object_radius_px > 0.0 && b.object_radius_px < b.pixels_per_chunk_axis as f64) {
            return Err(field_err(
                "bench.object_radius_px",
                format!("must be in (0, {}), got {}", b.pixels_per_chunk_axis, b.object_radius_px),
            ));
        }
        if b.foreground_intensity.is_nan() || b.background_intensity.is_nan() || b.foreground_intensity <= b.background_intensity {
            return Err(field_err(
                "bench.foreground_intensity",
                "must exceed bench.background_intensity",
            ));
        }
        if !(b.noise_std >= 0.0 && b.noise_std.is_finite()) {
            return Err(field_err("bench.noise_std", format!("must be finite and >= 0, got {}", b.noise_std)));
        }
        if b.min_area_px.len() != b.levels {
            return Err(field_err(
                "bench.min_area_px",
                format!("needs {} entries, one per level", b.levels),
            ));
        }
        if let Some(r) = b.match_radius_px {
            if r.is_nan() || r <= 0.0 {
                return Err(field_err("bench.match_radius_px", format!("must be positive, got {r}")));
            }
        }
        let cfg = BenchConfig {
            scene: SynthSceneConfig {
                spec,
                pixels_per_chunk_axis: b.pixels_per_chunk_axis,
                object_prevalence: b.object_prevalence,
                object_radius_px: b.object_radius_px,
                foreground_intensity: b.foreground_intensity,
                background_intensity: b.background_intensity,
                noise_std: b.noise_std,
                seed: b.seed,
            },
            min_area_px: b.min_area_px.clone(),
            connectivity: b.connectivity,
            match_radius_px: b.match_radius_px,
            parallel,
        };
        cfg.validate().map_err(|e| field_err("bench", e.to_string()))?;
        Ok(cfg)
    }
}
