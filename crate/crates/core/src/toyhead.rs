//! A small trainable ID head and the detector built on it.
//!
//! Per pixel, the head reads an identity readout (attention of the pixel's
//! classification-branch feature over the memory prototypes, whose values
//! are identity-bank rows), applies `tanh(x W1 + b1)`, mask-pools the hidden
//! activations and maps them to `N + 1` ID logits with `W2, b2`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::association::classification_branch;
use crate::error::{Error, Result};
use crate::identity::IdBank;
use crate::losses::{assign_gt_ids, IdLoss};
use crate::mask::Mask;
use crate::mathkit::{softmax, Matrix};
use crate::postproc::Detection;
use crate::synthworld::{
    classification_half, gen_video, similarity, smoothed_class_probs, GroundTruth, OracleDetector,
    WorldConfig, NEW_MARGIN, SIMILARITY_TEMPERATURE,
};
use crate::tracker::{
    mask_pool, process_frame, Detector, FrameInput, IdPrototype, TrackerConfig, TrackerState,
};

/// Frames per training window.
pub const WINDOW: usize = 5;

/// Training sequences for the toy problem: sequence `i` uses world seed
/// `seed * 1_000_003 + i` (wrapping).
pub fn toy_sequences(seed: u64, count: usize, channels: usize, n_ids: usize) -> Result<Vec<GroundTruth>> {
    (0..count as u64)
        .map(|i| {
            gen_video(&WorldConfig {
                channels,
                n_ids,
                ..toy_world_config(seed.wrapping_mul(1_000_003).wrapping_add(i))
            })
        })
        .collect()
}

/// The default toy problem: small 5-frame scenes with up to four instances.
/// Frames are 32x32 so a few hundred training steps stay fast.
pub fn toy_world_config(seed: u64) -> WorldConfig {
    WorldConfig {
        height: 32,
        width: 32,
        frames: WINDOW,
        max_instances: 4,
        seed,
        ..WorldConfig::default()
    }
}

/// Identity readout for the pixels of `mask`: a softmax over prototype
/// similarities (plus the new-instance token at the margin) mixing the
/// matching bank rows. One output row per mask pixel, ascending.
pub fn id_readout(cls: &Matrix, mask: &Mask, prototypes: &[IdPrototype], bank: &IdBank) -> Matrix {
    let table = bank.table();
    let c = table.cols();
    let mut rows = Vec::with_capacity(mask.area() * c);
    let mut logits = Vec::with_capacity(prototypes.len() + 1);
    for p in mask.indices() {
        let x = cls.row(p);
        logits.clear();
        logits.extend(
            prototypes
                .iter()
                .map(|pr| similarity(x, &pr.descriptor) * SIMILARITY_TEMPERATURE),
        );
        logits.push(NEW_MARGIN * SIMILARITY_TEMPERATURE);
        let w = softmax(&logits);
        let mut acc = vec![0.0; c];
        let value_rows = prototypes
            .iter()
            .map(|pr| pr.id)
            .chain(core::iter::once(bank.new_class()));
        for (wi, id) in w.iter().zip(value_rows) {
            for (a, v) in acc.iter_mut().zip(table.row(id)) {
                *a += wi * v;
            }
        }
        rows.extend(acc);
    }
    Matrix::from_vec(mask.area(), c, rows).expect("finite readout")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyIdHead {
    /// `C x C`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `C x (N + 1)`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Gradient with the same layout as [`ToyIdHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// One supervised proposal: its per-pixel readout rows and the target ID.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Matrix,
    pub target: usize,
}

impl ToyIdHead {
    /// Weights from a seeded normal scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn new(channels: usize, n_ids: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / libm::sqrt(channels as f64);
        ToyIdHead {
            w1: Matrix::gaussian(channels, channels, s, &mut rng),
            b1: vec![0.0; channels],
            w2: Matrix::gaussian(channels, n_ids + 1, s, &mut rng),
            b2: vec![0.0; n_ids + 1],
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_ids(&self) -> usize {
        self.w2.cols() - 1
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let c = self.channels();
        let mut h = self.b1.clone();
        for (k, &xk) in x.iter().enumerate() {
            for (hj, w) in h.iter_mut().zip(&self.w1.data()[k * c..(k + 1) * c]) {
                *hj += xk * w;
            }
        }
        h.iter_mut().for_each(|v| *v = libm::tanh(*v));
        h
    }

    fn output(&self, pooled: &[f64]) -> Vec<f64> {
        let n1 = self.w2.cols();
        let mut z = self.b2.clone();
        for (k, &hk) in pooled.iter().enumerate() {
            for (zj, w) in z.iter_mut().zip(&self.w2.data()[k * n1..(k + 1) * n1]) {
                *zj += hk * w;
            }
        }
        z
    }

    /// Mask-pooled ID logits for per-pixel inputs (`pixels x C`).
    pub fn logits(&self, inputs: &Matrix) -> Vec<f64> {
        let (pooled, _) = self.pooled_hidden(inputs);
        self.output(&pooled)
    }

    pub fn id_probs(&self, inputs: &Matrix) -> Vec<f64> {
        softmax(&self.logits(inputs))
    }

    fn pooled_hidden(&self, inputs: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
        let c = self.channels();
        let hs: Vec<Vec<f64>> = (0..inputs.rows()).map(|p| self.hidden(inputs.row(p))).collect();
        let mut pooled = vec![0.0; c];
        for h in &hs {
            pooled.iter_mut().zip(h).for_each(|(a, v)| *a += v);
        }
        let n = hs.len().max(1) as f64;
        pooled.iter_mut().for_each(|a| *a /= n);
        (pooled, hs)
    }

    fn zero_grad(&self) -> HeadGrad {
        HeadGrad {
            w1: vec![0.0; self.w1.data().len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.data().len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// Mean loss over `samples` and its gradient.
    pub fn loss_and_grad(&self, samples: &[Sample], loss: &IdLoss) -> Result<(f64, HeadGrad)> {
        let c = self.channels();
        let n1 = self.w2.cols();
        let mut grad = self.zero_grad();
        let mut total = 0.0;
        let scale = 1.0 / samples.len().max(1) as f64;
        for s in samples {
            let (pooled, hs) = self.pooled_hidden(&s.inputs);
            let probs = softmax(&self.output(&pooled));
            total += loss.loss(&probs, s.target)?;
            let g: Vec<f64> = loss
                .grad_from_probs(&probs, s.target)
                .into_iter()
                .map(|v| v * scale)
                .collect();
            for (k, hk) in pooled.iter().enumerate() {
                for (gw, gj) in grad.w2[k * n1..(k + 1) * n1].iter_mut().zip(&g) {
                    *gw += hk * gj;
                }
            }
            grad.b2.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
            let n = hs.len().max(1) as f64;
            let dpooled: Vec<f64> = (0..c)
                .map(|k| {
                    let row = &self.w2.data()[k * n1..(k + 1) * n1];
                    row.iter().zip(&g).map(|(w, gj)| w * gj).sum::<f64>() / n
                })
                .collect();
            for (p, h) in hs.iter().enumerate() {
                let x = s.inputs.row(p);
                for j in 0..c {
                    let dpre = dpooled[j] * (1.0 - h[j] * h[j]);
                    grad.b1[j] += dpre;
                    for (k, &xk) in x.iter().enumerate() {
                        grad.w1[k * c + j] += xk * dpre;
                    }
                }
            }
        }
        Ok((total * scale, grad))
    }

    /// Plain SGD step.
    pub fn apply(&mut self, grad: &HeadGrad, lr: f64) -> Result<()> {
        let step = |w: &[f64], g: &[f64]| -> Vec<f64> {
            w.iter().zip(g).map(|(w, g)| w - lr * g).collect()
        };
        self.w1 = Matrix::from_vec(self.w1.rows(), self.w1.cols(), step(self.w1.data(), &grad.w1))?;
        self.w2 = Matrix::from_vec(self.w2.rows(), self.w2.cols(), step(self.w2.data(), &grad.w2))?;
        self.b1 = step(&self.b1, &grad.b1);
        self.b2 = step(&self.b2, &grad.b2);
        Ok(())
    }
}

fn protos_for(cls: &Matrix, objects: &[(u64, &Mask)], ids: &BTreeMap<u64, usize>) -> Vec<IdPrototype> {
    let mut out: Vec<IdPrototype> = objects
        .iter()
        .map(|(a, m)| IdPrototype {
            id: ids[a],
            descriptor: mask_pool(cls, m),
        })
        .collect();
    out.sort_by_key(|p| p.id);
    out
}

/// Supervised samples for one training window, with prototypes built from
/// ground-truth IDs: local from the previous window frame, global from the
/// first, merged as the tracker does under `cfg.hab`.
pub fn window_samples(gt: &GroundTruth, window: &[usize], cfg: &TrackerConfig) -> Result<Vec<Sample>> {
    let params = cfg.params();
    let bank = cfg.bank()?;
    let visible: Vec<Vec<u64>> = window
        .iter()
        .map(|&t| gt.frames[t].objects.iter().map(|o| o.identity).collect())
        .collect();
    let labels = assign_gt_ids(&visible, cfg.n_ids)?;
    let ids: BTreeMap<u64, usize> = labels.ids.iter().copied().collect();
    let cls: Vec<Matrix> = window
        .iter()
        .map(|&t| classification_branch(&gt.frames[t].features, &params, &cfg.hab))
        .collect::<Result<_>>()?;
    let frame_protos = |k: usize| {
        let objs: Vec<(u64, &Mask)> = gt.frames[window[k]]
            .objects
            .iter()
            .map(|o| (o.identity, &o.mask))
            .collect();
        protos_for(&cls[k], &objs, &ids)
    };
    let global = frame_protos(0);
    let mut samples = Vec::new();
    for k in 0..window.len() {
        let mut protos: Vec<IdPrototype> = Vec::new();
        if k > 0 {
            if cfg.hab.enable_local {
                protos.extend(frame_protos(k - 1));
            }
            if cfg.hab.enable_global {
                for p in &global {
                    if !protos.iter().any(|q| q.id == p.id) {
                        protos.push(p.clone());
                    }
                }
            }
            protos.sort_by_key(|p| p.id);
        }
        for (o, (_, label)) in gt.frames[window[k]].objects.iter().zip(&labels.frames[k]) {
            samples.push(Sample {
                inputs: id_readout(&cls[k], &o.mask, &protos, &bank),
                target: *label,
            });
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: IdLoss,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

/// SGD on the ID loss over randomly sampled 5-frame windows (sorted, drawn
/// without replacement). Each step uses one sequence; sequences are visited
/// in a freshly shuffled order every epoch. Returns
/// the trained head and the per-step mean loss measured before each update.
pub fn train_toy_head(
    mut head: ToyIdHead,
    sequences: &[GroundTruth],
    tracker: &TrackerConfig,
    train: &TrainConfig,
) -> Result<(ToyIdHead, Vec<f64>)> {
    if sequences.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    if let Some(short) = sequences.iter().position(|s| s.frames.len() < WINDOW) {
        return Err(Error::Config(alloc::format!(
            "sequence {short} has fewer than {WINDOW} frames"
        )));
    }
    if let IdLoss::Focal(fp) = &train.loss {
        fp.validate()?;
    }
    if !(train.lr.is_finite() && train.lr >= 0.0) {
        return Err(Error::Config(alloc::format!(
            "learning rate must be finite and >= 0, got {}",
            train.lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut cache: BTreeMap<(usize, Vec<usize>), Vec<Sample>> = BTreeMap::new();
    let mut curve = Vec::with_capacity(train.steps);
    let mut order: Vec<usize> = Vec::new();
    for step in 0..train.steps {
        if order.is_empty() {
            order = (0..sequences.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let s = order.pop().expect("refilled above");
        let frames = sequences[s].frames.len();
        let mut window: Vec<usize> = rand::seq::index::sample(&mut rng, frames, WINDOW).into_vec();
        window.sort_unstable();
        let key = (s, window);
        if !cache.contains_key(&key) {
            let samples = window_samples(&sequences[s], &key.1, tracker)?;
            cache.insert(key.clone(), samples);
        }
        let (loss, grad) = head.loss_and_grad(&cache[&key], &train.loss)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        curve.push(loss);
        head.apply(&grad, train.lr)
            .map_err(|_| Error::Divergence { step })?;
    }
    Ok((head, curve))
}

/// Ground-truth masks and classes with ID probabilities from a trained head.
#[derive(Debug, Clone)]
pub struct HeadDetector<'a> {
    pub gt: &'a GroundTruth,
    pub head: &'a ToyIdHead,
}

impl Detector for HeadDetector<'_> {
    fn detect(&mut self, input: &FrameInput<'_>) -> Result<Vec<Detection>> {
        let frame = self.gt.frames.get(input.frame_index).ok_or_else(|| Error::Detector {
            frame: input.frame_index,
            reason: "no ground truth for this frame".into(),
        })?;
        let cls = classification_half(input.fused);
        Ok(frame
            .objects
            .iter()
            .map(|o| Detection {
                mask: o.mask.clone(),
                bbox: o.bbox,
                class_probs: smoothed_class_probs(o.category, self.gt.categories),
                id_probs: self
                    .head
                    .id_probs(&id_readout(&cls, &o.mask, input.prototypes, input.bank)),
                score: 1.0,
            })
            .collect())
    }
}

/// Which detector [`second_frame_accuracy`] evaluates.
#[derive(Debug, Clone, Copy)]
pub enum Resolver<'a> {
    /// Prototype matching ([`OracleDetector`]).
    Prototype,
    Head(&'a ToyIdHead),
}

/// Share of second-frame instances whose identity is resolved correctly:
/// an instance already present in the first frame must keep its ID, a newly
/// appearing one must receive an ID not used in the first frame. Returns
/// `(correct, total)`.
pub fn second_frame_accuracy(
    videos: &[GroundTruth],
    cfg: &TrackerConfig,
    resolver: Resolver<'_>,
) -> Result<(usize, usize)> {
    let (mut correct, mut total) = (0, 0);
    for gt in videos {
        if gt.frames.len() < 2 {
            continue;
        }
        let mut st = TrackerState::new(*cfg, gt.height, gt.width, gt.categories)?;
        let mut oracle = OracleDetector::new(gt, cfg.n_ids);
        let mut results = Vec::with_capacity(2);
        for t in 0..2 {
            let r = match resolver {
                Resolver::Prototype => process_frame(&gt.frames[t].features, &mut st, &mut oracle)?,
                Resolver::Head(head) => {
                    let mut d = HeadDetector { gt, head };
                    process_frame(&gt.frames[t].features, &mut st, &mut d)?
                }
            };
            results.push(r);
        }
        let id_at = |t: usize, m: &Mask| {
            results[t]
                .instances
                .iter()
                .find(|i| &i.mask == m)
                .map(|i| i.id)
        };
        let first_ids: Vec<usize> = results[0].instances.iter().map(|i| i.id).collect();
        for o in &gt.frames[1].objects {
            total += 1;
            let now = id_at(1, &o.mask);
            let before = gt.frames[0]
                .objects
                .iter()
                .find(|p| p.identity == o.identity)
                .map(|p| id_at(0, &p.mask));
            let ok = match (before, now) {
                (Some(prev), Some(id)) => prev == Some(id),
                (None, Some(id)) => !first_ids.contains(&id),
                (_, None) => false,
            };
            correct += ok as usize;
        }
    }
    Ok((correct, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::FocalParams;

    fn small_world(seed: u64) -> GroundTruth {
        gen_video(&WorldConfig {
            height: 16,
            width: 16,
            frames: 5,
            max_instances: 3,
            channels: 4,
            n_ids: 6,
            seed,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    fn small_cfg() -> TrackerConfig {
        TrackerConfig {
            n_ids: 6,
            channels: 4,
            memory_stride: 4,
            ..TrackerConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let head = ToyIdHead::new(4, 6, 1);
        let seqs = [small_world(1)];
        let train = TrainConfig {
            loss: IdLoss::Focal(FocalParams::default()),
            steps: 5,
            lr: 0.0,
            seed: 0,
        };
        let (out, curve) = train_toy_head(head.clone(), &seqs, &small_cfg(), &train).unwrap();
        assert_eq!(out, head);
        assert!(curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn ce_matches_reduced_focal_bitwise() {
        let head = ToyIdHead::new(4, 6, 2);
        let seqs = [small_world(2), small_world(3)];
        let mut train = TrainConfig {
            loss: IdLoss::CrossEntropy,
            steps: 20,
            lr: 0.1,
            seed: 4,
        };
        let (a, ca) = train_toy_head(head.clone(), &seqs, &small_cfg(), &train).unwrap();
        train.loss = IdLoss::Focal(FocalParams::CROSS_ENTROPY);
        let (b, cb) = train_toy_head(head, &seqs, &small_cfg(), &train).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
    }

    #[test]
    fn short_sequences_rejected() {
        let gt = small_world(1).truncated(3);
        let train = TrainConfig {
            loss: IdLoss::CrossEntropy,
            steps: 1,
            lr: 0.1,
            seed: 0,
        };
        assert!(train_toy_head(ToyIdHead::new(4, 6, 0), &[gt], &small_cfg(), &train).is_err());
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let head = ToyIdHead::new(3, 4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<Sample> = (0..3)
            .map(|i| Sample {
                inputs: Matrix::gaussian(2 + i, 3, 1.0, &mut rng),
                target: i,
            })
            .collect();
        let loss = IdLoss::Focal(FocalParams::default());
        let (_, g) = head.loss_and_grad(&samples, &loss).unwrap();
        let h = 1e-5;
        let eval = |m: &ToyIdHead| m.loss_and_grad(&samples, &loss).unwrap().0;
        let check = |analytic: f64, up: f64, dn: f64| {
            let fd = (up - dn) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-7);
            assert!(rel <= 1e-5, "analytic {analytic} fd {fd}");
        };
        for i in 0..head.w1.data().len() {
            let mut d = head.w1.data().to_vec();
            d[i] += h;
            let up = ToyIdHead { w1: Matrix::from_vec(3, 3, d.clone()).unwrap(), ..head.clone() };
            d[i] -= 2.0 * h;
            let dn = ToyIdHead { w1: Matrix::from_vec(3, 3, d).unwrap(), ..head.clone() };
            check(g.w1[i], eval(&up), eval(&dn));
        }
        for i in 0..head.w2.data().len() {
            let mut d = head.w2.data().to_vec();
            d[i] += h;
            let up = ToyIdHead { w2: Matrix::from_vec(3, 5, d.clone()).unwrap(), ..head.clone() };
            d[i] -= 2.0 * h;
            let dn = ToyIdHead { w2: Matrix::from_vec(3, 5, d).unwrap(), ..head.clone() };
            check(g.w2[i], eval(&up), eval(&dn));
        }
        for i in 0..3 {
            let mut up = head.clone();
            up.b1[i] += h;
            let mut dn = head.clone();
            dn.b1[i] -= h;
            check(g.b1[i], eval(&up), eval(&dn));
        }
        for i in 0..5 {
            let mut up = head.clone();
            up.b2[i] += h;
            let mut dn = head.clone();
            dn.b2[i] -= h;
            check(g.b2[i], eval(&up), eval(&dn));
        }
    }

    #[test]
    fn readout_without_prototypes_is_new_row() {
        let bank = IdBank::new(6, 4, 0).unwrap();
        let cls = Matrix::zeros(4, 4);
        let r = id_readout(&cls, &Mask::from_indices(4, [1, 2]), &[], &bank);
        assert_eq!(r.rows(), 2);
        for p in 0..2 {
            assert_eq!(r.row(p), bank.table().row(5));
        }
    }
}
