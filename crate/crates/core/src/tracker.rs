//! The online per-frame pipeline and per-video tube aggregation.
//!
//! Frame order: HAB fusion → detector → scoring → class-agnostic NMS →
//! unique-ID resolution → admission of new instances → ID mask → ID
//! embedding → memory update.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::association::{
    build_memory, hab_forward, pool_tokens, HabConfig, HabParams, MemoryStore,
};
use crate::error::{Error, Result};
use crate::identity::{
    admit_new, build_id_mask, embed, resolve_ids, IdBank, IdMask, IdSlot, IdState,
};
use crate::mask::Mask;
use crate::mathkit::Matrix;
use crate::postproc::{class_agnostic_nms, combined_score, Detection, DEFAULT_IOU_THRESH};

/// Mask-pooled descriptor of one identity, taken from the classification
/// branch of the frame the identity was embedded in.
#[derive(Debug, Clone, PartialEq)]
pub struct IdPrototype {
    pub id: usize,
    pub descriptor: Vec<f64>,
}

/// Mean of the rows of `m` selected by `mask`. Empty masks give zeros.
pub fn mask_pool(m: &Matrix, mask: &Mask) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    let mut n = 0usize;
    for p in mask.indices() {
        for (a, v) in acc.iter_mut().zip(m.row(p)) {
            *a += v;
        }
        n += 1;
    }
    if n > 0 {
        for a in &mut acc {
            *a /= n as f64;
        }
    }
    acc
}

/// Pools `descriptors` over every tracked ID present in `y`, ascending by ID.
pub fn pool_prototypes(descriptors: &Matrix, y: &IdMask) -> Vec<IdPrototype> {
    let tracked = y.n_ids() - 1;
    let mut sums: Vec<(Vec<f64>, usize)> = vec![(vec![0.0; descriptors.cols()], 0); tracked];
    for (p, &id) in y.owners().iter().enumerate() {
        if id < tracked {
            let (s, n) = &mut sums[id];
            for (a, v) in s.iter_mut().zip(descriptors.row(p)) {
                *a += v;
            }
            *n += 1;
        }
    }
    sums.into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(id, (mut s, n))| {
            for a in &mut s {
                *a /= n as f64;
            }
            IdPrototype { id, descriptor: s }
        })
        .collect()
}

/// Memory store plus the identity prototypes of each memorised frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackerMemory {
    pub store: MemoryStore,
    global_protos: Vec<IdPrototype>,
    local_protos: Vec<IdPrototype>,
}

impl TrackerMemory {
    fn push(&mut self, entry: crate::association::MemoryEntry, protos: Vec<IdPrototype>) {
        if self.store.global().is_none() {
            self.global_protos = protos.clone();
        }
        self.store.push(entry);
        self.local_protos = protos;
    }

    /// Prototypes visible under `cfg`: the local one when the local memory is
    /// enabled and holds the ID, otherwise the global one if enabled.
    pub fn prototypes(&self, cfg: &HabConfig) -> Vec<IdPrototype> {
        let mut out: Vec<IdPrototype> = Vec::new();
        if cfg.enable_local {
            out.extend(self.local_protos.iter().cloned());
        }
        if cfg.enable_global {
            for p in &self.global_protos {
                if !out.iter().any(|q| q.id == p.id) {
                    out.push(p.clone());
                }
            }
        }
        out.sort_by_key(|p| p.id);
        out
    }
}

/// Everything a detector sees for one frame.
#[derive(Debug)]
pub struct FrameInput<'a> {
    pub frame_index: usize,
    pub height: usize,
    pub width: usize,
    /// HAB output, `HW x 2C` (`[tracking | classification]`).
    pub fused: &'a Matrix,
    pub prototypes: &'a [IdPrototype],
    pub bank: &'a IdBank,
}

/// Source of per-frame proposals.
pub trait Detector {
    fn detect(&mut self, input: &FrameInput<'_>) -> Result<Vec<Detection>>;
}

impl<F> Detector for F
where
    F: FnMut(&FrameInput<'_>) -> Result<Vec<Detection>>,
{
    fn detect(&mut self, input: &FrameInput<'_>) -> Result<Vec<Detection>> {
        self(input)
    }
}

pub const DEFAULT_MEMORY_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Identity capacity `N`.
    pub n_ids: usize,
    /// Feature channels `C`.
    pub channels: usize,
    pub hab: HabConfig,
    pub iou_thresh: f64,
    /// Memory tokens are features and ID embeddings average-pooled over
    /// `memory_stride x memory_stride` pixel blocks.
    pub memory_stride: usize,
    /// Seeds both the identity bank and the HAB weights.
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            n_ids: 20,
            channels: 16,
            hab: HabConfig::default(),
            iou_thresh: DEFAULT_IOU_THRESH,
            memory_stride: DEFAULT_MEMORY_STRIDE,
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn bank(&self) -> Result<IdBank> {
        IdBank::new(self.n_ids, self.channels, self.seed)
    }

    pub fn params(&self) -> HabParams {
        HabParams::seeded(self.channels, self.seed.wrapping_add(1))
    }
}

/// Per-video tracker state.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub id_state: IdState,
    pub memory: TrackerMemory,
    pub bank: IdBank,
    pub params: HabParams,
    pub config: TrackerConfig,
    pub height: usize,
    pub width: usize,
    pub categories: usize,
}

impl TrackerState {
    pub fn new(config: TrackerConfig, height: usize, width: usize, categories: usize) -> Result<Self> {
        config.hab.validate()?;
        if !(config.iou_thresh > 0.0 && config.iou_thresh < 1.0) {
            return Err(Error::Config(format!(
                "IoU threshold must be in (0, 1), got {}",
                config.iou_thresh
            )));
        }
        if config.memory_stride == 0 {
            return Err(Error::Config("memory stride must be >= 1".into()));
        }
        if categories == 0 {
            return Err(Error::Config("at least one category is required".into()));
        }
        Ok(TrackerState {
            id_state: IdState::new(config.n_ids)?,
            memory: TrackerMemory::default(),
            bank: config.bank()?,
            params: config.params(),
            config,
            height,
            width,
            categories,
        })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInstance {
    pub id: usize,
    pub class_probs: Vec<f64>,
    pub mask: Mask,
    pub score: f64,
}

impl FrameInstance {
    /// Most probable class, lowest index on ties.
    pub fn class_label(&self) -> usize {
        argmax(&self.class_probs)
    }
}

/// Identified instances of one frame, ascending by ID.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: usize,
    pub instances: Vec<FrameInstance>,
}

#[cfg(test)]
pub(crate) fn tests_argmax(v: &[f64]) -> usize {
    argmax(v)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Runs one frame through the pipeline and updates `state` in place.
pub fn process_frame<D: Detector + ?Sized>(
    features: &Matrix,
    state: &mut TrackerState,
    detector: &mut D,
) -> Result<FrameResult> {
    let frame_index = state.id_state.frame_index();
    let pixels = state.pixels();
    let c = state.config.channels;
    if features.shape() != (pixels, c) {
        return Err(Error::Shape {
            op: "process_frame",
            left: features.shape(),
            right: (pixels, c),
        });
    }
    let cfg = state.config.hab;
    let fused = hab_forward(features, &state.memory.store, &state.params, &cfg)?;
    let prototypes = state.memory.prototypes(&cfg);
    let input = FrameInput {
        frame_index,
        height: state.height,
        width: state.width,
        fused: &fused,
        prototypes: &prototypes,
        bank: &state.bank,
    };
    let dets = detector.detect(&input)?;
    for (i, d) in dets.iter().enumerate() {
        d.validate(pixels, state.categories, state.config.n_ids)
            .map_err(|e| Error::Detector {
                frame: frame_index,
                reason: format!("detection {i}: {e}"),
            })?;
    }

    let kept = class_agnostic_nms(&dets, state.config.iou_thresh);
    let kept: Vec<&Detection> = kept.iter().map(|&i| &dets[i]).collect();
    let scores: Vec<f64> = kept.iter().map(|d| combined_score(d)).collect();
    let n1 = state.config.n_ids + 1;
    let mut probs = Vec::with_capacity(kept.len() * n1);
    for d in &kept {
        probs.extend_from_slice(&d.id_probs);
    }
    let probs = Matrix::from_vec(kept.len(), n1, probs)?;
    let resolved = resolve_ids(&probs, &state.id_state)?;
    let (assignment, id_state) = admit_new(resolved, state.id_state, &scores)?;

    let masks: Vec<Mask> = kept.iter().map(|d| d.mask.clone()).collect();
    let y = build_id_mask(&assignment, &masks, &scores, state.config.n_ids, pixels)?;
    let e = embed(&y, &state.bank)?;
    let (h, w, s) = (state.height, state.width, state.config.memory_stride);
    let entry = build_memory(
        &pool_tokens(features, h, w, s)?,
        &pool_tokens(&e, h, w, s)?,
        &state.params,
        frame_index,
    )?;
    let protos = pool_prototypes(&fused.columns(c, 2 * c), &y);
    state.memory.push(entry, protos);
    state.id_state = id_state;
    state.id_state.advance_frame();

    let mut instances: Vec<FrameInstance> = assignment
        .slots
        .iter()
        .enumerate()
        .filter_map(|(i, slot)| match slot {
            IdSlot::Existing(id) => Some(FrameInstance {
                id: *id,
                class_probs: kept[i].class_probs.clone(),
                // pixels lost to a higher-scoring overlap are not reported
                mask: y.mask_of(*id),
                score: scores[i],
            }),
            _ => None,
        })
        .filter(|inst| !inst.mask.is_blank())
        .collect();
    instances.sort_by_key(|inst| inst.id);
    Ok(FrameResult {
        frame_index,
        instances,
    })
}

/// Spatio-temporal mask track of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTube {
    pub id: usize,
    pub class: usize,
    pub confidence: f64,
    /// One mask per frame of the video; blank where the instance is absent.
    pub masks: Vec<Mask>,
}

impl MaskTube {
    pub fn frames(&self) -> usize {
        self.masks.len()
    }

    pub fn is_blank(&self) -> bool {
        self.masks.iter().all(Mask::is_blank)
    }
}

/// Processes frames strictly in order and returns each frame's result.
pub fn run_frames<D: Detector + ?Sized>(
    frames: &[Matrix],
    state: &mut TrackerState,
    detector: &mut D,
) -> Result<Vec<FrameResult>> {
    frames
        .iter()
        .map(|f| process_frame(f, state, detector))
        .collect()
}

/// Aggregates per-frame results into tubes: class is the argmax of the
/// score-weighted mean class distribution, confidence the mean score.
pub fn tubes_from_results(results: &[FrameResult], pixels: usize) -> Vec<MaskTube> {
    let frames = results.len();
    let mut ids: Vec<usize> = results
        .iter()
        .flat_map(|r| r.instances.iter().map(|i| i.id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let mut masks = vec![Mask::empty(pixels); frames];
            let mut weighted: Vec<f64> = Vec::new();
            let mut weight = 0.0;
            let mut score_sum = 0.0;
            let mut count = 0usize;
            for (t, r) in results.iter().enumerate() {
                if let Some(inst) = r.instances.iter().find(|i| i.id == id) {
                    masks[t] = inst.mask.clone();
                    if weighted.is_empty() {
                        weighted = vec![0.0; inst.class_probs.len()];
                    }
                    for (w, p) in weighted.iter_mut().zip(&inst.class_probs) {
                        *w += inst.score * p;
                    }
                    weight += inst.score;
                    score_sum += inst.score;
                    count += 1;
                }
            }
            if weight > 0.0 {
                for w in &mut weighted {
                    *w /= weight;
                }
            }
            MaskTube {
                id,
                class: argmax(&weighted),
                confidence: (score_sum / count as f64).clamp(0.0, 1.0),
                masks,
            }
        })
        .collect()
}

/// Tracks a whole video online and returns its tubes.
pub fn run_video<D: Detector + ?Sized>(
    frames: &[Matrix],
    state: &mut TrackerState,
    detector: &mut D,
) -> Result<Vec<MaskTube>> {
    if frames.is_empty() {
        return Err(Error::Config("a video needs at least one frame".into()));
    }
    let results = run_frames(frames, state, detector)?;
    Ok(tubes_from_results(&results, state.pixels()))
}
