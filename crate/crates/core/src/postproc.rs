//! Detection scoring and class-agnostic mask NMS.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::identity::PROB_TOL;
use crate::mask::Mask;

pub const DEFAULT_IOU_THRESH: f64 = 0.5;

/// A single proposal from a detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: Mask,
    /// `(x0, y0, x1, y1)` in pixels, inclusive.
    pub bbox: (usize, usize, usize, usize),
    pub class_probs: Vec<f64>,
    /// Probabilities over the `N + 1` ID columns.
    pub id_probs: Vec<f64>,
    pub score: f64,
}

impl Detection {
    /// Checks the detector contract for a frame with `pixels` pixels,
    /// `categories` classes and identity capacity `n_ids`.
    pub fn validate(&self, pixels: usize, categories: usize, n_ids: usize) -> Result<()> {
        let bad = |msg: alloc::string::String| Error::Config(msg);
        if self.mask.len() != pixels {
            return Err(bad(format!("mask has {} pixels, frame has {pixels}", self.mask.len())));
        }
        if self.class_probs.len() != categories {
            return Err(bad(format!(
                "{} class probabilities for {categories} categories",
                self.class_probs.len()
            )));
        }
        if self.id_probs.len() != n_ids + 1 {
            return Err(bad(format!(
                "{} ID probabilities for {} ID columns",
                self.id_probs.len(),
                n_ids + 1
            )));
        }
        for (name, v) in [("class", &self.class_probs), ("id", &self.id_probs)] {
            let sum: f64 = v.iter().sum();
            if v.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                return Err(bad(format!("{name} probabilities sum to {sum}")));
            }
        }
        let (x0, y0, x1, y1) = self.bbox;
        if x0 > x1 || y0 > y1 {
            return Err(bad(format!("inverted box {:?}", self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(bad(format!("score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }
}

/// Mean of the top class probability and the top non-background ID
/// probability (the new-instance column counts, background does not).
pub fn combined_score(d: &Detection) -> f64 {
    let cls = d.class_probs.iter().copied().fold(0.0, f64::max);
    let n = d.id_probs.len().saturating_sub(1);
    let id = d.id_probs[..n].iter().copied().fold(0.0, f64::max);
    (cls + id) / 2.0
}

/// `|a ∧ b| / |a ∨ b|`, zero when both are empty.
pub fn mask_iou(a: &Mask, b: &Mask) -> f64 {
    let union = a.union(b);
    if union == 0 {
        return 0.0;
    }
    a.intersection(b) as f64 / union as f64
}

/// Greedy NMS over masks ignoring class labels. Detections are visited by
/// descending [`combined_score`] (ties by index) and kept when their IoU with
/// every kept detection is at most `iou_thresh`. Returns kept indices in
/// visiting order.
pub fn class_agnostic_nms(dets: &[Detection], iou_thresh: f64) -> Vec<usize> {
    let scores: Vec<f64> = dets.iter().map(combined_score).collect();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| mask_iou(&dets[i].mask, &dets[k].mask) <= iou_thresh)
        {
            kept.push(i);
        }
    }
    kept
}
