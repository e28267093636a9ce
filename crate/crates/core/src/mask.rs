//! Binary masks over a flattened row-major pixel grid.

use alloc::vec;
use alloc::vec::Vec;

/// A binary mask of `len` pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(len: usize) -> Self {
        Mask {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    pub fn from_indices(len: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Mask::empty(len);
        for i in idx {
            m.bits[i] = true;
        }
        m
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Indices of set pixels, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn intersection(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn union(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count()
    }

    /// Tight bounding box `(x0, y0, x1, y1)` on a grid of the given width,
    /// inclusive on both ends. `None` for a blank mask.
    pub fn bbox(&self, width: usize) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.indices();
        let first = it.next()?;
        let (mut x0, mut y0) = (first % width, first / width);
        let (mut x1, mut y1) = (x0, y0);
        for i in it {
            let (x, y) = (i % width, i / width);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some((x0, y0, x1, y1))
    }

    /// Run lengths of the flattened mask, starting with the count of leading
    /// zeros and alternating zero/one runs.
    pub fn to_runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0usize;
        for &b in &self.bits {
            if b == current {
                count += 1;
            } else {
                runs.push(count);
                current = b;
                count = 1;
            }
        }
        runs.push(count);
        runs
    }

    /// Inverse of [`Mask::to_runs`]; `None` if the runs do not cover exactly
    /// `len` pixels.
    pub fn from_runs(len: usize, runs: &[usize]) -> Option<Mask> {
        let mut bits = Vec::with_capacity(len);
        let mut value = false;
        for &r in runs {
            if bits.len() + r > len {
                return None;
            }
            bits.extend(core::iter::repeat_n(value, r));
            value = !value;
        }
        (bits.len() == len).then_some(Mask { bits })
    }
}
