//! ID losses (focal and cross-entropy), their logit gradients, the reduced
//! total loss, and ground-truth ID labelling of training sequences.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathkit::softmax;

/// Probabilities are clamped to at least this before taking logs.
pub const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams {
            alpha: 0.25,
            lambda: 2.0,
        }
    }
}

impl FocalParams {
    /// The parameters under which focal loss reduces to cross-entropy.
    pub const CROSS_ENTROPY: FocalParams = FocalParams {
        alpha: 1.0,
        lambda: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(alloc::format!(
                "focal parameters out of range: alpha={} lambda={}",
                self.alpha, self.lambda
            )));
        }
        Ok(())
    }
}

/// Which ID loss a trainer optimises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdLoss {
    Focal(FocalParams),
    CrossEntropy,
}

impl IdLoss {
    pub fn loss(&self, probs: &[f64], target: usize) -> Result<f64> {
        match self {
            IdLoss::Focal(fp) => focal_id_loss(probs, target, fp),
            IdLoss::CrossEntropy => ce_id_loss(probs, target),
        }
    }

    /// Gradient with respect to the logits that produced `probs`.
    pub fn grad_from_probs(&self, probs: &[f64], target: usize) -> Vec<f64> {
        match self {
            IdLoss::Focal(fp) => focal_grad_from_probs(probs, target, fp),
            IdLoss::CrossEntropy => ce_grad_from_probs(probs, target),
        }
    }
}

fn check_target(probs: &[f64], target: usize) -> Result<()> {
    if target >= probs.len() {
        return Err(Error::InvalidId {
            id: target,
            limit: probs.len(),
        });
    }
    Ok(())
}

/// `-α (1 - p)^λ ln p` with `p = probs[target]` clamped to `1e-12`.
pub fn focal_id_loss(probs: &[f64], target: usize, fp: &FocalParams) -> Result<f64> {
    check_target(probs, target)?;
    let p = probs[target].max(P_FLOOR);
    Ok(-fp.alpha * libm::pow(1.0 - p, fp.lambda) * libm::log(p))
}

/// `-ln p` with `p = probs[target]` clamped to `1e-12`.
pub fn ce_id_loss(probs: &[f64], target: usize) -> Result<f64> {
    check_target(probs, target)?;
    Ok(-libm::log(probs[target].max(P_FLOOR)))
}

/// Focal loss of `softmax(logits)`.
pub fn focal_id_loss_logits(logits: &[f64], target: usize, fp: &FocalParams) -> Result<f64> {
    focal_id_loss(&softmax(logits), target, fp)
}

/// Analytic gradient of `focal_id_loss(softmax(logits), target)` with
/// respect to the logits.
pub fn focal_id_grad(logits: &[f64], target: usize, fp: &FocalParams) -> Result<Vec<f64>> {
    check_target(logits, target)?;
    Ok(focal_grad_from_probs(&softmax(logits), target, fp))
}

/// `∂L/∂z_j = k · (δ_tj - p_j)` where
/// `k = α [λ (1-p)^(λ-1) p ln p - (1-p)^λ]` and `p = p_t`.
fn focal_grad_from_probs(probs: &[f64], target: usize, fp: &FocalParams) -> Vec<f64> {
    let p = probs[target];
    let q = 1.0 - p;
    // λ (1-q)^(λ-1) p ln p → 0 as p → 1 for every λ ≥ 0
    let focus = if fp.lambda == 0.0 || q <= 0.0 {
        0.0
    } else {
        fp.lambda * libm::pow(q, fp.lambda - 1.0) * p * libm::log(p.max(P_FLOOR))
    };
    let k = fp.alpha * (focus - libm::pow(q, fp.lambda));
    probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| k * ((if j == target { 1.0 } else { 0.0 }) - pj))
        .collect()
}

fn ce_grad_from_probs(probs: &[f64], target: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| pj - if j == target { 1.0 } else { 0.0 })
        .collect()
}

/// Cross-entropy gradient `softmax(logits) - onehot(target)`.
pub fn ce_id_grad(logits: &[f64], target: usize) -> Result<Vec<f64>> {
    check_target(logits, target)?;
    Ok(ce_grad_from_probs(&softmax(logits), target))
}

/// `L_cls + L_id`; box and mask terms are not modelled and contribute zero.
pub fn total_loss(cls_loss: f64, id_loss: f64) -> f64 {
    cls_loss + id_loss
}

/// Ground-truth ID labels for one training sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLabels {
    pub n_ids: usize,
    /// Per frame, `(annotation identity, label)` in annotation order.
    pub frames: Vec<Vec<(u64, usize)>>,
    /// Annotation identity → assigned ID, in order of first appearance.
    pub ids: Vec<(u64, usize)>,
}

impl SequenceLabels {
    pub fn label(&self, frame: usize, identity: u64) -> Option<usize> {
        self.frames[frame]
            .iter()
            .find(|(a, _)| *a == identity)
            .map(|(_, l)| *l)
    }

    pub fn id_of(&self, identity: u64) -> Option<usize> {
        self.ids.iter().find(|(a, _)| *a == identity).map(|(_, d)| *d)
    }
}

/// Labels each visible instance per frame: the new-instance class `N - 1` in
/// the frame it first appears, its assigned ID afterwards. IDs go out as
/// 0, 1, 2, ... by first appearance, ties broken by annotation order.
///
/// `visible[t]` lists the annotation identities present in frame `t`.
pub fn assign_gt_ids(visible: &[Vec<u64>], n_ids: usize) -> Result<SequenceLabels> {
    if n_ids < 2 {
        return Err(Error::Config(alloc::format!("N must be >= 2 (got {n_ids})")));
    }
    let mut ids: Vec<(u64, usize)> = Vec::new();
    let mut frames = Vec::with_capacity(visible.len());
    for present in visible {
        let mut labels = Vec::with_capacity(present.len());
        for &a in present {
            let label = match ids.iter().find(|(x, _)| *x == a) {
                Some(&(_, d)) => d,
                None => {
                    let d = ids.len();
                    if d >= n_ids - 1 {
                        let mut distinct: Vec<u64> = visible.iter().flatten().copied().collect();
                        distinct.sort_unstable();
                        distinct.dedup();
                        return Err(Error::Capacity {
                            needed: distinct.len(),
                            available: n_ids - 1,
                        });
                    }
                    ids.push((a, d));
                    n_ids - 1
                }
            };
            labels.push((a, label));
        }
        frames.push(labels);
    }
    Ok(SequenceLabels { n_ids, frames, ids })
}

/// One-hot helper used by gradient tests.
pub fn one_hot(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}
