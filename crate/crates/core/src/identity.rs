//! Identification: the identity bank, unique-ID resolution by Hungarian
//! matching, new-instance admission and the one-hot ID mask / ID embedding.
//!
//! ID layout for a capacity of `N`: `0..N-1` name tracked instances, `N-1`
//! is the "new instance" class and `N` is background. The bank therefore
//! carries `N + 1` rows.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::mathkit::{matmul, Matrix};

/// Added to every probability before taking `-ln` for the matching cost.
pub const COST_EPS: f64 = 1e-12;

/// Tolerance on probability-row sums.
pub const PROB_TOL: f64 = 1e-6;

/// Fixed embedding table with one row per ID plus background.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBank {
    n_ids: usize,
    table: Matrix,
}

impl IdBank {
    /// Rows drawn from a seeded standard normal scaled by `1/sqrt(channels)`.
    pub fn new(n_ids: usize, channels: usize, seed: u64) -> Result<Self> {
        if n_ids < 2 || channels == 0 {
            return Err(Error::Config(alloc::format!(
                "identity bank needs N >= 2 and C >= 1 (got N={n_ids}, C={channels})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / libm::sqrt(channels as f64);
        Ok(IdBank {
            n_ids,
            table: Matrix::gaussian(n_ids + 1, channels, scale, &mut rng),
        })
    }

    pub fn from_table(table: Matrix) -> Result<Self> {
        if table.rows() < 3 {
            return Err(Error::Config("identity bank table needs at least 3 rows".into()));
        }
        Ok(IdBank {
            n_ids: table.rows() - 1,
            table,
        })
    }

    pub fn n_ids(&self) -> usize {
        self.n_ids
    }

    pub fn channels(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn new_class(&self) -> usize {
        self.n_ids - 1
    }

    pub fn background(&self) -> usize {
        self.n_ids
    }
}

/// Per-video identity lifecycle: capacity `N`, IDs handed out so far `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdState {
    capacity: usize,
    assigned: usize,
    frame_index: usize,
}

impl IdState {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::Config(alloc::format!(
                "identity capacity must be >= 2 (got {capacity})"
            )));
        }
        Ok(IdState {
            capacity,
            assigned: 0,
            frame_index: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn assigned(&self) -> usize {
        self.assigned
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// No further instances can be admitted once `S == N - 1`.
    pub fn is_saturated(&self) -> bool {
        self.assigned >= self.capacity - 1
    }

    pub(crate) fn advance_frame(&mut self) {
        self.frame_index += 1;
    }
}

/// Identity decision for one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdSlot {
    /// A tracked ID in `0..S`.
    Existing(usize),
    /// Needs a fresh ID (only before [`admit_new`]).
    New,
    Background,
    /// A new instance arriving after capacity was exhausted.
    Discarded,
}

impl IdSlot {
    pub fn id(self) -> Option<usize> {
        match self {
            IdSlot::Existing(id) => Some(id),
            _ => None,
        }
    }
}

/// Per-proposal identity decisions for one frame. Existing IDs are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UniqueIdAssignment {
    pub slots: Vec<IdSlot>,
}

impl UniqueIdAssignment {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// True when no existing ID occurs twice.
    pub fn is_unique(&self) -> bool {
        let mut seen: Vec<usize> = self.slots.iter().filter_map(|s| s.id()).collect();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }
}

/// Optimal row-to-column assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `row_to_col[r]` is the column matched to row `r` (`None` only when
    /// the matrix had more rows than columns).
    pub row_to_col: Vec<Option<usize>>,
    /// Sum of matched costs, accumulated in row order.
    pub cost: f64,
}

/// Minimum-cost assignment (Kuhn-Munkres with row/column potentials,
/// shortest augmenting paths, `O(n^2 m)`).
///
/// Every row is matched when `rows <= cols`; otherwise the problem is solved
/// on the transpose and surplus rows stay unmatched. Column scans use strict
/// comparisons in ascending order, so among equal-cost choices the lowest
/// column index wins and rows are inserted in ascending order.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Ok(Assignment {
            row_to_col: vec![None; n],
            cost: 0.0,
        });
    }
    if cost.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "hungarian" });
    }
    if n > m {
        let t = hungarian(&cost.transpose())?;
        let mut row_to_col = vec![None; n];
        for (c, r) in t.row_to_col.iter().enumerate() {
            if let Some(r) = r {
                row_to_col[*r] = Some(c);
            }
        }
        return Ok(finish(cost, row_to_col));
    }

    // 1-based potentials; column 0 is the virtual root of each search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = Some(j - 1);
        }
    }
    Ok(finish(cost, row_to_col))
}

fn finish(cost: &Matrix, row_to_col: Vec<Option<usize>>) -> Assignment {
    let mut total = 0.0;
    for (r, c) in row_to_col.iter().enumerate() {
        if let Some(c) = c {
            total += cost.get(r, *c);
        }
    }
    Assignment {
        row_to_col,
        cost: total,
    }
}

fn check_probability_rows(op: &'static str, probs: &Matrix) -> Result<()> {
    for r in 0..probs.rows() {
        let row = probs.row(r);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::Probability { op, row: r, sum });
        }
    }
    Ok(())
}

/// Column meaning in the matching cost matrix built by [`id_cost_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostColumn {
    Existing(usize),
    New,
    Background,
}

/// Matching cost matrix for `L` proposals: `S` existing-ID columns, then `L`
/// replicated new-instance columns, then `L` replicated background columns.
/// Entry `(i, j)` is `-ln(p_i(j) + 1e-12)`.
pub fn id_cost_matrix(id_probs: &Matrix, assigned: usize) -> (Matrix, Vec<CostColumn>) {
    let l = id_probs.rows();
    let n = id_probs.cols() - 1;
    let mut columns: Vec<CostColumn> = (0..assigned).map(CostColumn::Existing).collect();
    columns.extend(core::iter::repeat_n(CostColumn::New, l));
    columns.extend(core::iter::repeat_n(CostColumn::Background, l));
    let mut data = Vec::with_capacity(l * columns.len());
    for i in 0..l {
        let row = id_probs.row(i);
        for col in &columns {
            let p = match *col {
                CostColumn::Existing(d) => row[d],
                CostColumn::New => row[n - 1],
                CostColumn::Background => row[n],
            };
            data.push(-libm::log(p + COST_EPS));
        }
    }
    let cols = columns.len();
    (Matrix::from_vec(l, cols, data).expect("finite costs"), columns)
}

/// Resolves each proposal to a unique existing ID, the new-instance class or
/// background by minimum-cost matching on `-ln` ID probabilities.
pub fn resolve_ids(id_probs: &Matrix, state: &IdState) -> Result<UniqueIdAssignment> {
    if id_probs.rows() == 0 {
        return Ok(UniqueIdAssignment::default());
    }
    if id_probs.cols() != state.capacity + 1 {
        return Err(Error::Length {
            op: "resolve_ids",
            expected: state.capacity + 1,
            found: id_probs.cols(),
        });
    }
    check_probability_rows("resolve_ids", id_probs)?;
    let (cost, columns) = id_cost_matrix(id_probs, state.assigned);
    let matched = hungarian(&cost)?;
    let slots = matched
        .row_to_col
        .iter()
        .map(|c| match columns[c.expect("rows <= cols")] {
            CostColumn::Existing(d) => IdSlot::Existing(d),
            CostColumn::New => IdSlot::New,
            CostColumn::Background => IdSlot::Background,
        })
        .collect();
    Ok(UniqueIdAssignment { slots })
}

/// Hands out fresh IDs to `New` proposals in descending score order (ties by
/// proposal index). Once `S == N - 1` remaining new proposals are discarded.
pub fn admit_new(
    mut assignment: UniqueIdAssignment,
    mut state: IdState,
    scores: &[f64],
) -> Result<(UniqueIdAssignment, IdState)> {
    if scores.len() != assignment.len() {
        return Err(Error::Length {
            op: "admit_new",
            expected: assignment.len(),
            found: scores.len(),
        });
    }
    let mut fresh: Vec<usize> = (0..assignment.len())
        .filter(|&i| assignment.slots[i] == IdSlot::New)
        .collect();
    fresh.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    for i in fresh {
        assignment.slots[i] = if state.is_saturated() {
            IdSlot::Discarded
        } else {
            let id = state.assigned;
            state.assigned += 1;
            IdSlot::Existing(id)
        };
    }
    Ok((assignment, state))
}

/// One-hot `(N+1) x HW` grid assigning every pixel one ID or background.
#[derive(Debug, Clone, PartialEq)]
pub struct IdMask {
    n_ids: usize,
    owner: Vec<usize>,
    grid: Matrix,
}

impl IdMask {
    /// Every pixel assigned to background.
    pub fn background(n_ids: usize, pixels: usize) -> Self {
        IdMask::from_owner(n_ids, vec![n_ids; pixels])
    }

    /// Builds the grid from a per-pixel owner ID in `0..=n_ids`.
    pub fn from_owner(n_ids: usize, owner: Vec<usize>) -> Self {
        let pixels = owner.len();
        let mut data = vec![0.0; (n_ids + 1) * pixels];
        for (p, &id) in owner.iter().enumerate() {
            data[id * pixels + p] = 1.0;
        }
        let grid = Matrix::from_vec(n_ids + 1, pixels, data).expect("binary grid");
        IdMask { n_ids, owner, grid }
    }

    pub fn n_ids(&self) -> usize {
        self.n_ids
    }

    pub fn pixels(&self) -> usize {
        self.owner.len()
    }

    pub fn grid(&self) -> &Matrix {
        &self.grid
    }

    /// ID (or background `N`) owning pixel `p`.
    pub fn owner(&self, p: usize) -> usize {
        self.owner[p]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    /// Pixels owned by `id`.
    pub fn mask_of(&self, id: usize) -> Mask {
        Mask::from_bits(self.owner.iter().map(|&o| o == id).collect())
    }
}

/// Paints each identified proposal's mask into its ID row; contested pixels go
/// to the highest-scoring proposal (ties to the lower index) and uncovered
/// pixels to background.
pub fn build_id_mask(
    assignment: &UniqueIdAssignment,
    masks: &[Mask],
    scores: &[f64],
    n_ids: usize,
    pixels: usize,
) -> Result<IdMask> {
    if masks.len() != assignment.len() {
        return Err(Error::Length {
            op: "build_id_mask(masks)",
            expected: assignment.len(),
            found: masks.len(),
        });
    }
    if scores.len() != assignment.len() {
        return Err(Error::Length {
            op: "build_id_mask(scores)",
            expected: assignment.len(),
            found: scores.len(),
        });
    }
    let mut owner = vec![n_ids; pixels];
    let mut best = vec![f64::NEG_INFINITY; pixels];
    for (i, slot) in assignment.slots.iter().enumerate() {
        let id = match *slot {
            IdSlot::Existing(id) if id < n_ids - 1 => id,
            IdSlot::Existing(id) => return Err(Error::InvalidId { id, limit: n_ids - 1 }),
            IdSlot::New => {
                return Err(Error::Config(
                    "build_id_mask received an unadmitted NEW proposal".into(),
                ))
            }
            IdSlot::Background | IdSlot::Discarded => continue,
        };
        if masks[i].len() != pixels {
            return Err(Error::Length {
                op: "build_id_mask(mask pixels)",
                expected: pixels,
                found: masks[i].len(),
            });
        }
        for p in masks[i].indices() {
            if scores[i] > best[p] {
                best[p] = scores[i];
                owner[p] = id;
            }
        }
    }
    Ok(IdMask::from_owner(n_ids, owner))
}

/// ID embedding `E = Yᵀ D`: one bank row per pixel.
pub fn embed(y: &IdMask, bank: &IdBank) -> Result<Matrix> {
    if y.n_ids != bank.n_ids {
        return Err(Error::Shape {
            op: "embed",
            left: y.grid.shape(),
            right: bank.table.shape(),
        });
    }
    matmul(&y.grid.transpose(), &bank.table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_force_min(cost: &Matrix) -> f64 {
        fn rec(cost: &Matrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.rows() {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            for c in 0..cost.cols() {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, acc + cost.get(row, c), best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.cols()], 0.0, &mut best);
        best
    }

    #[test]
    fn diagonal_zero_gives_identity() {
        let c = Matrix::from_rows(&[&[0.0, 3.0, 4.0], &[2.0, 0.0, 5.0], &[1.0, 6.0, 0.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn two_by_two() {
        let c = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1)]);
        assert_eq!(a.cost, 2.0);
    }

    #[test]
    fn empty_matrix() {
        let a = hungarian(&Matrix::zeros(0, 0)).unwrap();
        assert!(a.row_to_col.is_empty());
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn ties_prefer_low_columns() {
        let a = hungarian(&Matrix::zeros(3, 5)).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn tall_matrix_leaves_rows_unmatched() {
        let c = Matrix::from_rows(&[&[5.0], &[1.0], &[3.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.row_to_col, vec![None, Some(0), None]);
        assert_eq!(a.cost, 1.0);
    }

    #[test]
    fn random_squares_match_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(5..=7);
            let data = (0..n * n).map(|_| rng.random::<f64>() * 10.0).collect();
            let c = Matrix::from_vec(n, n, data).unwrap();
            assert_eq!(hungarian(&c).unwrap().cost, brute_force_min(&c));
        }
    }

    #[test]
    fn rectangular_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let n = rng.random_range(1..=4);
            let m = rng.random_range(n..=7);
            let data = (0..n * m).map(|_| rng.random_range(0..20) as f64).collect();
            let c = Matrix::from_vec(n, m, data).unwrap();
            let a = hungarian(&c).unwrap();
            assert_eq!(a.cost, brute_force_min(&c));
            let mut cols: Vec<usize> = a.row_to_col.iter().map(|c| c.unwrap()).collect();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(cols.len(), n);
        }
    }

    fn probs_row(n: usize, entries: &[(usize, f64)]) -> Vec<f64> {
        let fixed: f64 = entries.iter().map(|e| e.1).sum();
        let rest = n + 1 - entries.len();
        let mut row = vec![(1.0 - fixed) / rest as f64; n + 1];
        for &(i, p) in entries {
            row[i] = p;
        }
        row
    }

    fn state_with(capacity: usize, assigned: usize) -> IdState {
        IdState {
            capacity,
            assigned,
            frame_index: 0,
        }
    }

    #[test]
    fn argmax_new_class_is_marked_new() {
        let n = 20;
        let row = probs_row(n, &[(n - 1, 0.9)]);
        let probs = Matrix::from_vec(1, n + 1, row).unwrap();
        let a = resolve_ids(&probs, &IdState::new(n).unwrap()).unwrap();
        assert_eq!(a.slots, vec![IdSlot::New]);
    }

    #[test]
    fn no_proposals() {
        let a = resolve_ids(&Matrix::zeros(0, 21), &IdState::new(20).unwrap()).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn contested_existing_id_goes_to_stronger_proposal() {
        let n = 20;
        let mut data = probs_row(n, &[(3, 0.9)]);
        data.extend(probs_row(n, &[(3, 0.6), (n - 1, 0.3)]));
        let probs = Matrix::from_vec(2, n + 1, data).unwrap();
        let state = state_with(n, 5);
        // brute force over the 2 x (5 + 2 + 2) cost matrix
        let (cost, cols) = id_cost_matrix(&probs, 5);
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..cost.cols() {
            for b in 0..cost.cols() {
                if a != b {
                    let c = cost.get(0, a) + cost.get(1, b);
                    if c < best.0 {
                        best = (c, a, b);
                    }
                }
            }
        }
        assert_eq!(cols[best.1], CostColumn::Existing(3));
        assert_eq!(cols[best.2], CostColumn::New);
        let a = resolve_ids(&probs, &state).unwrap();
        assert_eq!(a.slots, vec![IdSlot::Existing(3), IdSlot::New]);
    }

    #[test]
    fn malformed_rows_rejected() {
        let probs = Matrix::from_vec(1, 3, vec![0.5, 0.2, 0.2]).unwrap();
        assert!(matches!(
            resolve_ids(&probs, &IdState::new(2).unwrap()),
            Err(Error::Probability { .. })
        ));
        let probs = Matrix::from_vec(1, 3, vec![1.2, -0.2, 0.0]).unwrap();
        assert!(resolve_ids(&probs, &IdState::new(2).unwrap()).is_err());
        let probs = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        assert!(resolve_ids(&probs, &IdState::new(2).unwrap()).is_err());
    }

    #[test]
    fn first_frame_admission_follows_scores() {
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::New; 3],
        };
        let (asg, st) = admit_new(asg, IdState::new(20).unwrap(), &[0.5, 0.9, 0.7]).unwrap();
        assert_eq!(
            asg.slots,
            vec![IdSlot::Existing(2), IdSlot::Existing(0), IdSlot::Existing(1)]
        );
        assert_eq!(st.assigned(), 3);
    }

    #[test]
    fn saturated_state_discards_new() {
        let st = state_with(5, 4);
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::New],
        };
        let (asg, st2) = admit_new(asg, st, &[0.9]).unwrap();
        assert_eq!(asg.slots, vec![IdSlot::Discarded]);
        assert_eq!(st2, st);
    }

    #[test]
    fn nothing_new_is_identity() {
        let st = state_with(10, 3);
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::Existing(1), IdSlot::Background],
        };
        let (out, st2) = admit_new(asg.clone(), st, &[0.3, 0.2]).unwrap();
        assert_eq!(out, asg);
        assert_eq!(st2, st);
    }

    #[test]
    fn empty_id_mask_is_background() {
        let y = build_id_mask(&UniqueIdAssignment::default(), &[], &[], 4, 6).unwrap();
        for p in 0..6 {
            assert_eq!(y.grid().get(4, p), 1.0);
            for r in 0..4 {
                assert_eq!(y.grid().get(r, p), 0.0);
            }
        }
    }

    #[test]
    fn single_proposal_is_one_hot() {
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::Existing(2)],
        };
        let m = Mask::from_indices(6, [1, 4]);
        let y = build_id_mask(&asg, &[m], &[0.5], 4, 6).unwrap();
        for r in 0..5 {
            assert_eq!(y.grid().get(r, 1), if r == 2 { 1.0 } else { 0.0 });
        }
        assert_eq!(y.owner(0), 4);
    }

    #[test]
    fn overlap_goes_to_higher_score() {
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::Existing(1), IdSlot::Existing(0)],
        };
        let a = Mask::from_indices(8, [0, 1, 2, 3]);
        let b = Mask::from_indices(8, [2, 3, 4, 5]);
        let scores = [0.4, 0.9];
        let y = build_id_mask(&asg, &[a.clone(), b.clone()], &scores, 4, 8).unwrap();
        // per-pixel max-score oracle
        for p in 0..8 {
            let mut want = 4;
            let mut best = f64::NEG_INFINITY;
            for (i, m) in [&a, &b].iter().enumerate() {
                if m.get(p) && scores[i] > best {
                    best = scores[i];
                    want = asg.slots[i].id().unwrap();
                }
            }
            assert_eq!(y.owner(p), want);
        }
        assert_eq!(y.owner(2), 0);
    }

    #[test]
    fn id_mask_rejects_bad_input() {
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::New],
        };
        assert!(build_id_mask(&asg, &[Mask::empty(4)], &[1.0], 4, 4).is_err());
        let asg = UniqueIdAssignment {
            slots: vec![IdSlot::Existing(0)],
        };
        assert!(build_id_mask(&asg, &[], &[], 4, 4).is_err());
    }

    #[test]
    fn embed_selects_bank_rows() {
        let bank = IdBank::new(4, 3, 9).unwrap();
        let mut owner = vec![4; 6];
        owner[2] = 2;
        let y = IdMask::from_owner(4, owner);
        let e = embed(&y, &bank).unwrap();
        assert_eq!(e.row(2), bank.table().row(2));
        let bg = embed(&IdMask::background(4, 6), &bank).unwrap();
        for p in 0..6 {
            assert_eq!(bg.row(p), bank.table().row(4));
        }
    }

    #[test]
    fn embed_matches_loop_product() {
        let bank = IdBank::new(3, 3, 2).unwrap();
        let y = IdMask::from_owner(3, vec![0, 3, 1, 2, 3, 0]);
        let e = embed(&y, &bank).unwrap();
        for p in 0..6 {
            for c in 0..3 {
                let mut s = 0.0;
                for r in 0..4 {
                    s += y.grid().get(r, p) * bank.table().get(r, c);
                }
                assert_eq!(e.get(p, c), s);
            }
        }
        assert!(embed(&y, &IdBank::new(4, 3, 2).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn row_shifts_preserve_assignment(
            seed in any::<u64>(),
            n in 1usize..5,
            extra in 0usize..3,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = n + extra;
            let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(0..50) as f64).collect();
            let c = Matrix::from_vec(n, m, data.clone()).unwrap();
            // -ln(c p) = -ln p - ln c: a per-row constant shift
            let shifts: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
            let shifted: Vec<f64> = data
                .iter()
                .enumerate()
                .map(|(i, v)| v + shifts[i / m])
                .collect();
            let c2 = Matrix::from_vec(n, m, shifted).unwrap();
            let a = hungarian(&c).unwrap();
            let b = hungarian(&c2).unwrap();
            prop_assert_eq!(a.cost + shifts.iter().sum::<f64>(), b.cost);
            prop_assert_eq!(brute_force_min(&c), a.cost);
        }

        #[test]
        fn selection_property(seed in any::<u64>(), hw in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..8);
            let bank = IdBank::new(n, 4, seed).unwrap();
            let owner: Vec<usize> = (0..hw).map(|_| rng.random_range(0..=n)).collect();
            let y = IdMask::from_owner(n, owner.clone());
            let e = embed(&y, &bank).unwrap();
            for p in 0..hw {
                prop_assert_eq!(e.row(p), bank.table().row(owner[p]));
                let col_sum: f64 = (0..=n).map(|r| y.grid().get(r, p)).sum();
                prop_assert_eq!(col_sum, 1.0);
            }
        }
    }
}
