use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub matched: usize,
    pub detections: usize,
    pub truths: usize,
    /// `None` with no ground truth.
    pub recall: Option<f64>,
    /// `None` with no detections.
    pub precision: Option<f64>,
}

/// Matches detections to ground-truth centroids one-to-one, greedily by
/// ascending distance, accepting pairs no farther apart than
/// `match_radius_px`. Equal distances are broken by detection index, then
/// truth index.
pub fn detection_metrics(
    detections: &[Vec<f64>],
    ground_truth: &[Vec<f64>],
    match_radius_px: f64,
) -> Result<DetectionScore> {
    if match_radius_px.is_nan() || match_radius_px <= 0.0 {
        return Err(Error::domain(format!(
            "match radius must be positive, got {match_radius_px}"
        )));
    }
    let r2 = match_radius_px * match_radius_px;
    let mut pairs = Vec::new();
    for (i, det) in detections.iter().enumerate() {
        for (j, truth) in ground_truth.iter().enumerate() {
            if det.len() != truth.len() {
                return Err(Error::domain(format!(
                    "detection {i} has {} coordinates, truth {j} has {}",
                    det.len(),
                    truth.len()
                )));
            }
            let d2: f64 = det.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r2 {
                pairs.push((d2, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut det_used = vec![false; detections.len()];
    let mut truth_used = vec![false; ground_truth.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            matched += 1;
        }
    }
    let ratio = |den: usize| (den > 0).then(|| matched as f64 / den as f64);
    Ok(DetectionScore {
        matched,
        detections: detections.len(),
        truths: ground_truth.len(),
        recall: ratio(ground_truth.len()),
        precision: ratio(detections.len()),
    })
}
