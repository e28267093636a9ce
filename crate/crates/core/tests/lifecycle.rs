use iai_core::identity::{admit_new, resolve_ids, IdSlot, IdState};
use iai_core::mathkit::softmax;
use iai_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probs_matrix(rows: &[Vec<f64>]) -> Matrix {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Matrix::from_rows(&refs).unwrap()
}

/// One ID distribution per proposal, peaked on a random column.
fn random_rows(rng: &mut ChaCha8Rng, n_ids: usize, proposals: usize) -> Vec<Vec<f64>> {
    (0..proposals)
        .map(|_| {
            let peak = rng.random_range(0..=n_ids);
            let logits: Vec<f64> = (0..=n_ids)
                .map(|j| rng.random_range(-2.0..2.0) + if j == peak { 4.0 } else { 0.0 })
                .collect();
            softmax(&logits)
        })
        .collect()
}

#[test]
fn randomized_lifecycle_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for run in 0..200 {
        let n_ids = rng.random_range(2..9);
        let mut state = IdState::new(n_ids).unwrap();
        for _ in 0..rng.random_range(1..10) {
            let proposals = rng.random_range(0..7);
            let rows = random_rows(&mut rng, n_ids, proposals);
            let scores: Vec<f64> = (0..proposals).map(|_| rng.random_range(0.0..1.0)).collect();
            let before = state.assigned();
            let resolved = resolve_ids(&probs_matrix(&rows), &state).unwrap();
            assert!(resolved.is_unique(), "run {run}");
            let (out, next) = admit_new(resolved.clone(), state, &scores).unwrap();
            assert!(out.is_unique(), "run {run}");
            assert!(next.assigned() >= before);
            assert!(next.assigned() < n_ids);
            for (r, o) in resolved.slots.iter().zip(&out.slots) {
                match (r, o) {
                    (IdSlot::New, IdSlot::Existing(id)) => assert!(*id >= before && *id < next.assigned()),
                    (IdSlot::New, IdSlot::Discarded) => assert_eq!(next.assigned(), n_ids - 1),
                    (IdSlot::Existing(a), IdSlot::Existing(b)) => {
                        assert_eq!(a, b);
                        assert!(*a < before);
                    }
                    (a, b) => assert_eq!(a, b),
                }
            }
            state = next;
        }
    }
}

#[test]
fn scripted_saturation() {
    // N = 4: IDs 0..=2, NEW = 3, background = 4
    let new = vec![0.02, 0.02, 0.02, 0.92, 0.02];
    let state = IdState::new(4).unwrap();

    let r = resolve_ids(&probs_matrix(&[new.clone(), new.clone()]), &state).unwrap();
    let (a, state) = admit_new(r, state, &[0.4, 0.7]).unwrap();
    assert_eq!(a.slots, vec![IdSlot::Existing(1), IdSlot::Existing(0)]);
    assert_eq!(state.assigned(), 2);

    let r = resolve_ids(&probs_matrix(&[new.clone(), new.clone()]), &state).unwrap();
    let (a, state) = admit_new(r, state, &[0.8, 0.9]).unwrap();
    assert_eq!(a.slots, vec![IdSlot::Discarded, IdSlot::Existing(2)]);
    assert!(state.is_saturated());

    let old = vec![0.9, 0.025, 0.025, 0.025, 0.025];
    let r = resolve_ids(&probs_matrix(&[new.clone(), old]), &state).unwrap();
    let (a, state) = admit_new(r, state, &[1.0, 0.5]).unwrap();
    assert_eq!(a.slots, vec![IdSlot::Discarded, IdSlot::Existing(0)]);
    assert_eq!(state.assigned(), 3);
}
