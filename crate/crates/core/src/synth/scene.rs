use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{next_coords, strides_of, NdImage};
use crate::pyramid::PyramidSpec;
use crate::rng;
use crate::simulate::ChunkWorld;
use crate::store::ImagePyramidSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSceneConfig {
    pub spec: PyramidSpec,
    pub pixels_per_chunk_axis: usize,
    /// Probability that a level-0 chunk holds an object.
    pub object_prevalence: f64,
    pub object_radius_px: f64,
    pub foreground_intensity: f64,
    pub background_intensity: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pixels_per_chunk_axis == 0 {
            return Err(Error::domain("pixels_per_chunk_axis must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.object_prevalence) {
            return Err(Error::domain(format!(
                "object_prevalence must be in [0, 1], got {}",
                self.object_prevalence
            )));
        }
        if !(self.object_radius_px > 0.0 && self.object_radius_px < self.pixels_per_chunk_axis as f64) {
            return Err(Error::domain(format!(
                "object_radius_px must be in (0, {}), got {}",
                self.pixels_per_chunk_axis, self.object_radius_px
            )));
        }
        // Written so that NaN fails too.
        if self.foreground_intensity.is_nan() || self.background_intensity.is_nan() || self.foreground_intensity <= self.background_intensity {
            return Err(Error::domain(
                "foreground_intensity must exceed background_intensity",
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::domain(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    pub fn chunk_shape(&self) -> Vec<usize> {
        vec![self.pixels_per_chunk_axis; self.spec.dim()]
    }

    /// Intensity halfway between background and foreground.
    pub fn midpoint_threshold(&self) -> f64 {
        0.5 * (self.foreground_intensity + self.background_intensity)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// A rendered scene with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPyramid {
    pub spec: PyramidSpec,
    pub chunk_shape: Vec<usize>,
    /// `images[k]` is level `k`; each level halves every axis of the one
    /// below by mean-pooling.
    pub images: Vec<NdImage>,
    /// Level-0 chunks containing an object centroid.
    pub l0_chunk_labels: Vec<bool>,
    /// Object pixels at level-0 resolution, row-major.
    pub segmentation_mask: Vec<bool>,
    /// Object centres in level-0 pixel-index coordinates.
    pub object_centroids: Vec<Vec<f64>>,
}

impl LabeledPyramid {
    pub fn source(&self) -> ImagePyramidSource<'_> {
        ImagePyramidSource::new(&self.spec, &self.images, self.chunk_shape.clone())
            .expect("generated pyramids are consistent")
    }

    pub fn world(&self) -> ChunkWorld {
        ChunkWorld::from_l0_labels(&self.spec, self.l0_chunk_labels.clone())
            .expect("generated labels match the grid")
    }
}

/// Renders one hard-edged ball per occupied level-0 chunk, adds Gaussian
/// noise, and builds the upper levels by 2x mean-pooling.
///
/// A chunk is occupied with probability `object_prevalence`, independently;
/// the ball centre is uniform over the chunk. Pixel `i` covers
/// `[i - 0.5, i + 0.5)` on each axis and is foreground if its centre is
/// within the radius (the pixel holding the centre always is). Balls may
/// spill into neighbouring chunks; labels follow the centre only.
pub fn generate_scene(cfg: &SynthSceneConfig) -> Result<LabeledPyramid> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let d = spec.dim();
    let ppc = cfg.pixels_per_chunk_axis;
    let shape: Vec<usize> = spec.l0_chunks_per_axis().iter().map(|c| c * ppc).collect();
    let strides = strides_of(&shape);
    let n = spec.n_l0();

    let mut place = rng::stream(cfg.seed, 0);
    let mut labels = vec![false; n];
    let mut centroids = Vec::new();
    for (linear, label) in labels.iter_mut().enumerate() {
        if rng::uniform(&mut place) >= cfg.object_prevalence {
            continue;
        }
        *label = true;
        let idx = spec.index_from_linear(0, linear)?;
        let centre: Vec<f64> = idx
            .coords
            .iter()
            .map(|&c| (c * ppc) as f64 - 0.5 + rng::uniform(&mut place) * ppc as f64)
            .collect();
        centroids.push(centre);
    }

    let mut mask = vec![false; shape.iter().product()];
    let r = cfg.object_radius_px;
    for centre in &centroids {
        let lo: Vec<usize> = centre.iter().map(|&c| (c - r).ceil().max(0.0) as usize).collect();
        let hi: Vec<usize> = centre
            .iter()
            .zip(&shape)
            .map(|(&c, &s)| ((c + r).floor() as usize).min(s - 1))
            .collect();
        let extent: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| h + 1 - l).collect();
        let mut off = vec![0usize; d];
        loop {
            let dist2: f64 = (0..d)
                .map(|a| {
                    let delta = (lo[a] + off[a]) as f64 - centre[a];
                    delta * delta
                })
                .sum();
            if dist2 <= r * r {
                let o: usize = (0..d).map(|a| (lo[a] + off[a]) * strides[a]).sum();
                mask[o] = true;
            }
            if !next_coords(&mut off, &extent) {
                break;
            }
        }
        let own: usize = (0..d)
            .map(|a| ((centre[a] + 0.5).floor() as usize).min(shape[a] - 1) * strides[a])
            .sum();
        mask[own] = true;
    }

    let mut data: Vec<f64> = mask
        .iter()
        .map(|&m| if m { cfg.foreground_intensity } else { cfg.background_intensity })
        .collect();
    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::domain(e.to_string()))?;
        let mut noise = rng::stream(cfg.seed, 1);
        data.iter_mut().for_each(|v| *v += normal.sample(&mut noise));
    }

    let mut images = vec![NdImage::new(shape, data)?];
    for _ in 1..spec.levels() {
        let next = images.last().expect("non-empty").mean_pool2()?;
        images.push(next);
    }

    Ok(LabeledPyramid {
        spec: spec.clone(),
        chunk_shape: cfg.chunk_shape(),
        images,
        l0_chunk_labels: labels,
        segmentation_mask: mask,
        object_centroids: centroids,
    })
}
