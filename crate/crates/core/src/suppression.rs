//! Confidence filtering and greedy non-maximum suppression.

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::model::Detection;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsConfig {
    /// A candidate is dropped when its IoU with a kept box reaches this value.
    pub iou_threshold: f64,
    /// Suppress across class labels (a car box can remove a truck box).
    pub interclass: bool,
    /// Detections with lower confidence are discarded before suppression.
    pub min_confidence: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.3,
            interclass: true,
            min_confidence: 0.0,
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "nms iou_threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "nms min_confidence {} outside [0, 1]",
                self.min_confidence
            )));
        }
        Ok(())
    }
}

fn check_single_frame(detections: &[Detection]) -> Result<()> {
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.frame != first.frame) {
            return Err(Error::MixedFrames {
                first: first.frame,
                other: other.frame,
            });
        }
    }
    Ok(())
}

/// Indices of confident detections sorted by descending confidence, ties in
/// input order.
fn candidate_order(detections: &[Detection], cfg: &NmsConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len())
        .filter(|&i| detections[i].confidence >= cfg.min_confidence)
        .collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence));
    order
}

/// Greedy NMS over one frame. Survivors are returned in descending
/// confidence order.
///
/// Kept boxes are indexed by their left edge so each candidate is only
/// compared against kept boxes whose horizontal extent can overlap it.
pub fn nms(detections: &[Detection], cfg: &NmsConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    check_single_frame(detections)?;

    // (left, index) kept sorted by left edge
    let mut by_left: Vec<(f64, usize)> = Vec::new();
    let mut max_width = 0.0f64;
    let mut kept = Vec::new();
    for i in candidate_order(detections, cfg) {
        let cand = &detections[i];
        let lo = cand.bbox.left() - max_width;
        let hi = cand.bbox.right();
        let start = by_left.partition_point(|&(l, _)| l <= lo);
        let suppressed = by_left[start..]
            .iter()
            .take_while(|&&(l, _)| l < hi)
            .map(|&(_, k)| &detections[k])
            .filter(|k| cfg.interclass || k.class_id == cand.class_id)
            .any(|k| iou(&k.bbox, &cand.bbox) >= cfg.iou_threshold);
        if suppressed {
            continue;
        }
        let pos = by_left.partition_point(|&(l, _)| l <= cand.bbox.left());
        by_left.insert(pos, (cand.bbox.left(), i));
        max_width = max_width.max(cand.bbox.width());
        kept.push(cand.clone());
    }
    Ok(kept)
}

/// Reference greedy NMS: every candidate is compared with every kept box.
pub fn nms_bruteforce(detections: &[Detection], cfg: &NmsConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    check_single_frame(detections)?;
    let mut kept: Vec<Detection> = Vec::new();
    for i in candidate_order(detections, cfg) {
        let cand = &detections[i];
        let mut keep = true;
        for k in &kept {
            if (cfg.interclass || k.class_id == cand.class_id) && iou(&k.bbox, &cand.bbox) >= cfg.iou_threshold {
                keep = false;
                break;
            }
        }
        if keep {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}
