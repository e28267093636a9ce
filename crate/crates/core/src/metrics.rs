//! Video-level evaluation: tube IoU, mAP / AR over IoU thresholds
//! 0.50:0.05:0.95 and identity-switch counting.
//!
//! Matching is greedy by descending confidence; a ground-truth tube matches
//! at most once, only within its own video and category, and only at tube
//! IoU at or above the threshold. AP is the 101-point interpolated area
//! under the precision-recall curve.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::postproc::mask_iou;
use crate::tracker::MaskTube;

/// IoU threshold for a per-frame match when counting ID switches.
pub const SWITCH_IOU: f64 = 0.5;

/// `0.50, 0.55, ..., 0.95`.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar1: f64,
    pub ar10: f64,
    pub id_switches: usize,
    /// `(threshold, AP averaged over categories)`.
    pub per_threshold: Vec<(f64, f64)>,
}

/// Summed per-frame intersection over summed per-frame union.
pub fn tube_iou(pred: &MaskTube, gt: &MaskTube) -> Result<f64> {
    if pred.masks.len() != gt.masks.len() {
        return Err(Error::Length {
            op: "tube_iou(frames)",
            expected: gt.masks.len(),
            found: pred.masks.len(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (a, b) in pred.masks.iter().zip(&gt.masks) {
        if a.len() != b.len() {
            return Err(Error::Length {
                op: "tube_iou(pixels)",
                expected: b.len(),
                found: a.len(),
            });
        }
        inter += a.intersection(b);
        union += a.union(b);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// 101-point interpolated average precision.
fn average_precision(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        if t {
            hits += 1;
        }
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        if let Some(i) = recall.iter().position(|&x| x >= level) {
            sum += precision[i];
        }
    }
    sum / 101.0
}

struct Candidate {
    video: usize,
    tube: usize,
    confidence: f64,
}

/// Greedy confidence-ordered matching of `cands` against GT tubes of one
/// category; returns the TP flag of each candidate in order.
fn match_category(
    cands: &[Candidate],
    gts: &[Vec<MaskTube>],
    category: usize,
    thresh: f64,
    ious: &[Vec<Vec<f64>>],
) -> Vec<bool> {
    let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    cands
        .iter()
        .map(|c| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts[c.video].iter().enumerate() {
                if gt.class != category || taken[c.video][g] {
                    continue;
                }
                let iou = ious[c.video][c.tube][g];
                if iou >= thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[c.video][g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Evaluates predicted against ground-truth tubes, one list per video.
pub fn video_map(preds: &[Vec<MaskTube>], gts: &[Vec<MaskTube>]) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::Length {
            op: "video_map(videos)",
            expected: gts.len(),
            found: preds.len(),
        });
    }
    // ious[v][p][g]
    let mut ious = Vec::with_capacity(gts.len());
    for (pv, gv) in preds.iter().zip(gts) {
        let mut m = Vec::with_capacity(pv.len());
        for p in pv {
            m.push(gv.iter().map(|g| tube_iou(p, g)).collect::<Result<Vec<f64>>>()?);
        }
        ious.push(m);
    }
    let mut categories: Vec<usize> = gts.iter().flatten().map(|t| t.class).collect();
    categories.sort_unstable();
    categories.dedup();
    let thresholds = iou_thresholds();

    let mut ap = vec![vec![0.0; categories.len()]; thresholds.len()];
    let mut ar1 = 0.0;
    let mut ar10 = 0.0;
    for (ci, &cat) in categories.iter().enumerate() {
        let n_gt = gts.iter().flatten().filter(|t| t.class == cat).count();
        let mut cands: Vec<Candidate> = Vec::new();
        // rank of each prediction within its own video and category
        let mut ranked: Vec<(Candidate, usize)> = Vec::new();
        for (v, pv) in preds.iter().enumerate() {
            let mut own: Vec<usize> = (0..pv.len()).filter(|&i| pv[i].class == cat).collect();
            own.sort_by(|&a, &b| pv[b].confidence.total_cmp(&pv[a].confidence).then(a.cmp(&b)));
            for (rank, &i) in own.iter().enumerate() {
                ranked.push((
                    Candidate {
                        video: v,
                        tube: i,
                        confidence: pv[i].confidence,
                    },
                    rank,
                ));
            }
        }
        ranked.sort_by(|a, b| {
            b.0.confidence
                .total_cmp(&a.0.confidence)
                .then(a.0.video.cmp(&b.0.video))
                .then(a.1.cmp(&b.1))
        });
        let ranks: Vec<usize> = ranked.iter().map(|r| r.1).collect();
        cands.extend(ranked.into_iter().map(|r| r.0));

        for (ti, &thr) in thresholds.iter().enumerate() {
            let tp = match_category(&cands, gts, cat, thr, &ious);
            ap[ti][ci] = average_precision(&tp, n_gt);
            for (k, acc) in [(1usize, &mut ar1), (10usize, &mut ar10)] {
                let limited: Vec<Candidate> = cands
                    .iter()
                    .zip(&ranks)
                    .filter(|(_, &r)| r < k)
                    .map(|(c, _)| Candidate {
                        video: c.video,
                        tube: c.tube,
                        confidence: c.confidence,
                    })
                    .collect();
                let hits = match_category(&limited, gts, cat, thr, &ious)
                    .iter()
                    .filter(|&&t| t)
                    .count();
                *acc += hits as f64 / n_gt as f64;
            }
        }
    }

    let per_threshold: Vec<(f64, f64)> = thresholds
        .iter()
        .zip(&ap)
        .map(|(&t, row)| (t, mean(row)))
        .collect();
    let cells = (categories.len() * thresholds.len()).max(1) as f64;
    let mut switches = 0;
    for (pv, gv) in preds.iter().zip(gts) {
        switches += id_switches(pv, gv)?;
    }
    Ok(EvalReport {
        map: per_threshold.iter().map(|x| x.1).sum::<f64>() / thresholds.len() as f64,
        ap50: per_threshold[0].1,
        ap75: per_threshold[5].1,
        ar1: ar1 / cells,
        ar10: ar10 / cells,
        id_switches: switches,
        per_threshold,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// For each GT tube, counts frames whose best-overlapping predicted ID
/// (mask IoU at least 0.5) differs from the previously matched one. Frames
/// without a match do not reset the previous ID.
pub fn id_switches(preds: &[MaskTube], gts: &[MaskTube]) -> Result<usize> {
    let mut total = 0;
    for gt in gts {
        let mut last: Option<usize> = None;
        for (t, gm) in gt.masks.iter().enumerate() {
            if gm.is_blank() {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for p in preds {
                let pm = p.masks.get(t).ok_or(Error::Length {
                    op: "id_switches(frames)",
                    expected: gt.masks.len(),
                    found: p.masks.len(),
                })?;
                if pm.len() != gm.len() {
                    return Err(Error::Length {
                        op: "id_switches(pixels)",
                        expected: gm.len(),
                        found: pm.len(),
                    });
                }
                let iou = mask_iou(pm, gm);
                if iou >= SWITCH_IOU && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((p.id, iou));
                }
            }
            if let Some((id, _)) = best {
                if last.is_some_and(|l| l != id) {
                    total += 1;
                }
                last = Some(id);
            }
        }
    }
    Ok(total)
}
