//! Hybrid association block: a memory-attention tracking branch over a
//! global (first frame) and a local (previous frame) memory, run in parallel
//! with a per-location classification projector. The two branches are
//! concatenated channel-wise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mathkit::{attention, matmul, Matrix};

/// Projection weights, all `C x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct HabParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_cls: Matrix,
}

impl HabParams {
    /// Standard-normal weights scaled by `1/sqrt(C)`.
    pub fn seeded(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / libm::sqrt(channels as f64);
        HabParams {
            w_q: Matrix::gaussian(channels, channels, s, &mut rng),
            w_k: Matrix::gaussian(channels, channels, s, &mut rng),
            w_v: Matrix::gaussian(channels, channels, s, &mut rng),
            w_cls: Matrix::gaussian(channels, channels, s, &mut rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_q.rows()
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.channels() {
            return Err(Error::Shape {
                op: "hab",
                left: features.shape(),
                right: self.w_q.shape(),
            });
        }
        Ok(())
    }
}

/// Key/value tokens of one memorised frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub keys: Matrix,
    pub values: Matrix,
    pub frame_index: usize,
}

/// Global memory is written once (first frame); local memory always holds the
/// most recent completed frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    global: Option<MemoryEntry>,
    local: Option<MemoryEntry>,
}

impl MemoryStore {
    pub fn global(&self) -> Option<&MemoryEntry> {
        self.global.as_ref()
    }

    pub fn local(&self) -> Option<&MemoryEntry> {
        self.local.as_ref()
    }

    /// Stores a completed frame: it always replaces the local entry and
    /// becomes the global entry only if none exists yet.
    pub fn push(&mut self, entry: MemoryEntry) {
        if self.global.is_none() {
            self.global = Some(entry.clone());
        }
        self.local = Some(entry);
    }
}

/// Which HAB components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HabConfig {
    pub enable_global: bool,
    pub enable_local: bool,
    pub enable_cls: bool,
}

impl Default for HabConfig {
    fn default() -> Self {
        HabConfig {
            enable_global: true,
            enable_local: true,
            enable_cls: true,
        }
    }
}

impl HabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.enable_global || self.enable_local || self.enable_cls) {
            return Err(Error::Config(
                "at least one HAB component must stay enabled".into(),
            ));
        }
        Ok(())
    }
}

/// `keys = features · w_k`, `values = (features + id_embedding) · w_v`.
pub fn build_memory(
    features: &Matrix,
    id_embedding: &Matrix,
    params: &HabParams,
    frame_index: usize,
) -> Result<MemoryEntry> {
    params.check(features)?;
    let summed = features.add(id_embedding)?;
    Ok(MemoryEntry {
        keys: matmul(features, &params.w_k)?,
        values: matmul(&summed, &params.w_v)?,
        frame_index,
    })
}

/// Average-pools an `HW x C` map over `stride x stride` blocks (partial
/// blocks at the right and bottom edges are averaged over what they cover).
/// Blocks are emitted in row-major block order.
pub fn pool_tokens(m: &Matrix, height: usize, width: usize, stride: usize) -> Result<Matrix> {
    if m.rows() != height * width || stride == 0 {
        return Err(Error::Shape {
            op: "pool_tokens",
            left: m.shape(),
            right: (height * width, stride),
        });
    }
    if stride == 1 {
        return Ok(m.clone());
    }
    let bh = height.div_ceil(stride);
    let bw = width.div_ceil(stride);
    let c = m.cols();
    let mut data = alloc::vec![0.0; bh * bw * c];
    let mut counts = alloc::vec![0usize; bh * bw];
    for y in 0..height {
        for x in 0..width {
            let b = (y / stride) * bw + x / stride;
            counts[b] += 1;
            for (acc, v) in data[b * c..(b + 1) * c].iter_mut().zip(m.row(y * width + x)) {
                *acc += v;
            }
        }
    }
    for (b, &n) in counts.iter().enumerate() {
        for acc in &mut data[b * c..(b + 1) * c] {
            *acc /= n as f64;
        }
    }
    Matrix::from_vec(bh * bw, c, data)
}

/// Tracking branch `Q + att(global) + att(local)` with `Q = features · w_q`;
/// a memory term is included only when that memory exists and is enabled.
pub fn tracking_branch(
    features: &Matrix,
    store: &MemoryStore,
    params: &HabParams,
    cfg: &HabConfig,
) -> Result<Matrix> {
    params.check(features)?;
    let mut out = matmul(features, &params.w_q)?;
    let q = out.clone();
    let memories = [
        (cfg.enable_global, store.global()),
        (cfg.enable_local, store.local()),
    ];
    for (enabled, entry) in memories {
        if let (true, Some(mem)) = (enabled, entry) {
            out = out.add(&attention(&q, &mem.keys, &mem.values)?)?;
        }
    }
    Ok(out)
}

/// Classification projector (`features · w_cls`), or the identity when the
/// projector is disabled.
pub fn classification_branch(
    features: &Matrix,
    params: &HabParams,
    cfg: &HabConfig,
) -> Result<Matrix> {
    params.check(features)?;
    if cfg.enable_cls {
        matmul(features, &params.w_cls)
    } else {
        Ok(features.clone())
    }
}

/// Full block output `[tracking | classification]`, `HW x 2C`.
pub fn hab_forward(
    features: &Matrix,
    store: &MemoryStore,
    params: &HabParams,
    cfg: &HabConfig,
) -> Result<Matrix> {
    let track = tracking_branch(features, store, params, cfg)?;
    let cls = classification_branch(features, params, cfg)?;
    track.hcat(&cls)
}
