use serde::{Deserialize, Serialize};

use crate::cascade::ChunkClassifier;
use crate::error::{Error, Result};
use crate::image::NdImage;
use crate::stats::DetectorProfile;

use super::components::{area_filter, connected_components, Connectivity};
use super::scene::LabeledPyramid;

/// Fires when enough pixels of a chunk reach `threshold`.
///
/// With `min_area_px > 0` the hot pixels are first grouped into connected
/// components and those smaller than `min_area_px` are discarded, so only
/// pixels of surviving components count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub level: usize,
    pub threshold: f64,
    pub min_hot_pixels: usize,
    pub min_area_px: usize,
    pub connectivity: Connectivity,
}

/// A level-0 threshold classifier without area filtering.
pub fn threshold_chunk_classifier(threshold: f64, min_hot_pixels: usize) -> ThresholdClassifier {
    ThresholdClassifier {
        level: 0,
        threshold,
        min_hot_pixels,
        min_area_px: 0,
        connectivity: Connectivity::Full,
    }
}

impl ThresholdClassifier {
    pub fn at_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn with_area_filter(mut self, min_area_px: usize, connectivity: Connectivity) -> Self {
        self.min_area_px = min_area_px;
        self.connectivity = connectivity;
        self
    }

    pub fn hot_mask(&self, chunk: &NdImage) -> Vec<bool> {
        chunk.data().iter().map(|&v| v >= self.threshold).collect()
    }

    /// Hot pixels that survive the area filter.
    pub fn hot_count(&self, chunk: &NdImage) -> usize {
        let mask = self.hot_mask(chunk);
        if self.min_area_px == 0 {
            return mask.iter().filter(|&&m| m).count();
        }
        let comps = connected_components(&mask, chunk.shape(), self.connectivity)
            .expect("mask is built from the chunk");
        area_filter(comps, self.min_area_px)
            .iter()
            .map(|c| c.area)
            .sum()
    }
}

impl ChunkClassifier<NdImage> for ThresholdClassifier {
    fn level(&self) -> usize {
        self.level
    }

    fn classify(&self, chunk: &NdImage) -> bool {
        self.hot_count(chunk) >= self.min_hot_pixels
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Empirical rates of a chunk classifier against known labels. A rate is
/// `None` when its class is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRates {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl MeasuredRates {
    fn from_counts(hits: usize, positives: usize, false_alarms: usize, negatives: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            tpr: ratio(hits, positives),
            fpr: ratio(false_alarms, negatives),
            positives,
            negatives,
        }
    }

    /// The rates as a model profile. A missing TPR is taken as 1 and a
    /// missing FPR as 0, which is what a detector with no evidence against
    /// it would be assumed to do.
    pub fn profile(&self) -> DetectorProfile {
        DetectorProfile {
            tpr: self.tpr.unwrap_or(1.0),
            fpr: self.fpr.unwrap_or(0.0),
        }
    }
}

fn level_hot_counts(scene: &LabeledPyramid, classifier: &ThresholdClassifier) -> Result<Vec<usize>> {
    let level = classifier.level;
    if level >= scene.spec.levels() {
        return Err(Error::domain(format!(
            "level {level} outside a {}-level pyramid",
            scene.spec.levels()
        )));
    }
    let source = scene.source();
    (0..scene.spec.chunk_count(level)?)
        .map(|linear| {
            let idx = scene.spec.index_from_linear(level, linear)?;
            Ok(classifier.hot_count(&source.chunk(&idx)?))
        })
        .collect()
}

/// TPR and FPR of `classifier` on its level of `scene`.
pub fn measure_rates(scene: &LabeledPyramid, classifier: &ThresholdClassifier) -> Result<MeasuredRates> {
    let counts = level_hot_counts(scene, classifier)?;
    let world = scene.world();
    let labels = world.labels(classifier.level);
    let (mut hits, mut pos, mut alarms, mut neg) = (0, 0, 0, 0);
    for (&count, &label) in counts.iter().zip(labels) {
        let fired = count >= classifier.min_hot_pixels;
        if label {
            pos += 1;
            hits += fired as usize;
        } else {
            neg += 1;
            alarms += fired as usize;
        }
    }
    Ok(MeasuredRates::from_counts(hits, pos, alarms, neg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCalibration {
    pub classifier: ThresholdClassifier,
    /// Rates on the calibration scene at the chosen `min_hot_pixels`.
    pub measured: MeasuredRates,
}

/// Picks `min_hot_pixels` for a threshold classifier on `scene` by
/// maximising `tpr - fpr`; ties go to the smallest count. A missing rate
/// contributes zero to the objective.
pub fn calibrate_level(
    scene: &LabeledPyramid,
    level: usize,
    threshold: f64,
    min_area_px: usize,
    connectivity: Connectivity,
) -> Result<LevelCalibration> {
    let mut classifier = threshold_chunk_classifier(threshold, 1)
        .at_level(level)
        .with_area_filter(min_area_px, connectivity);
    let counts = level_hot_counts(scene, &classifier)?;
    let world = scene.world();
    let labels = world.labels(level);

    let mut pos_counts: Vec<usize> = Vec::new();
    let mut neg_counts: Vec<usize> = Vec::new();
    for (&c, &l) in counts.iter().zip(labels) {
        if l {
            pos_counts.push(c)
        } else {
            neg_counts.push(c)
        }
    }
    pos_counts.sort_unstable();
    neg_counts.sort_unstable();
    let at_least = |sorted: &[usize], h: usize| sorted.len() - sorted.partition_point(|&c| c < h);

    // Only observed counts (and one past the largest) can change the rates.
    let mut candidates: Vec<usize> = counts.iter().map(|&c| c.max(1)).collect();
    candidates.push(counts.iter().copied().max().unwrap_or(0) + 1);
    candidates.sort_unstable();
    candidates.dedup();

    let mut best = (f64::NEG_INFINITY, 1usize);
    for &h in &candidates {
        let rates = MeasuredRates::from_counts(
            at_least(&pos_counts, h),
            pos_counts.len(),
            at_least(&neg_counts, h),
            neg_counts.len(),
        );
        let j = rates.tpr.unwrap_or(0.0) - rates.fpr.unwrap_or(0.0);
        if j > best.0 {
            best = (j, h);
        }
    }
    classifier.min_hot_pixels = best.1;
    let h = best.1;
    let measured = MeasuredRates::from_counts(
        at_least(&pos_counts, h),
        pos_counts.len(),
        at_least(&neg_counts, h),
        neg_counts.len(),
    );
    Ok(LevelCalibration { classifier, measured })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::PyramidSpec;
    use crate::synth::scene::{generate_scene, SynthSceneConfig};

    fn image(values: &[f64]) -> NdImage {
        NdImage::new(vec![values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn threshold_extremes() {
        let chunk = image(&[0.1, 0.0, 0.2, 1.0]);
        assert!(threshold_chunk_classifier(-1.0, 4).classify(&chunk));
        assert!(!threshold_chunk_classifier(1.5, 1).classify(&chunk));
        assert!(threshold_chunk_classifier(0.15, 2).classify(&chunk));
        assert!(!threshold_chunk_classifier(0.15, 3).classify(&chunk));
        assert!(threshold_chunk_classifier(5.0, 0).classify(&chunk));
    }

    #[test]
    fn area_filter_drops_specks() {
        let chunk = image(&[1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let plain = threshold_chunk_classifier(0.5, 1);
        assert_eq!(plain.hot_count(&chunk), 5);
        let filtered = plain.clone().with_area_filter(2, Connectivity::Face);
        assert_eq!(filtered.hot_count(&chunk), 3);
        assert_eq!(plain.with_area_filter(4, Connectivity::Face).hot_count(&chunk), 0);
    }

    fn scene_config(seed: u64) -> SynthSceneConfig {
        SynthSceneConfig {
            spec: PyramidSpec::new(2, 2, vec![16, 16]).unwrap(),
            pixels_per_chunk_axis: 8,
            object_prevalence: 0.1,
            object_radius_px: 2.5,
            foreground_intensity: 1.0,
            background_intensity: 0.0,
            noise_std: 0.25,
            seed,
        }
    }

    #[test]
    fn calibration_separates_classes() {
        let cfg = scene_config(3);
        let scene = generate_scene(&cfg).unwrap();
        for level in 0..2 {
            let cal = calibrate_level(&scene, level, cfg.midpoint_threshold(), 0, Connectivity::Full).unwrap();
            let m = cal.measured;
            assert!(m.tpr.unwrap() > 0.9, "level {level}: {m:?}");
            assert!(m.fpr.unwrap() < 0.1, "level {level}: {m:?}");
            let again = measure_rates(&scene, &cal.classifier).unwrap();
            assert_eq!(again, m);
        }
    }

    #[test]
    fn calibration_without_positives() {
        let mut cfg = scene_config(5);
        cfg.object_prevalence = 0.0;
        let scene = generate_scene(&cfg).unwrap();
        let cal = calibrate_level(&scene, 1, cfg.midpoint_threshold(), 0, Connectivity::Full).unwrap();
        assert_eq!(cal.measured.tpr, None);
        assert_eq!(cal.measured.fpr, Some(0.0));
        assert_eq!(cal.measured.profile(), DetectorProfile { tpr: 1.0, fpr: 0.0 });
    }

    #[test]
    fn bad_level() {
        let scene = generate_scene(&scene_config(1)).unwrap();
        let c = threshold_chunk_classifier(0.5, 1).at_level(2);
        assert!(measure_rates(&scene, &c).is_err());
    }
}
