use iai_core::losses::{FocalParams, IdLoss};
use iai_core::synthworld::gen_video;
use iai_core::toyhead::{second_frame_accuracy, toy_world_config, train_toy_head, Resolver, ToyIdHead, TrainConfig};
use iai_core::tracker::TrackerConfig;

fn focal(steps: usize) -> TrainConfig {
    TrainConfig {
        loss: IdLoss::Focal(FocalParams::default()),
        steps,
        lr: 0.1,
        seed: 0,
    }
}

#[test]
fn single_sequence_loss_descends() {
    let cfg = TrackerConfig::default();
    let seq = [gen_video(&toy_world_config(7)).unwrap()];
    let head = ToyIdHead::new(cfg.channels, cfg.n_ids, 0);
    let (_, curve) = train_toy_head(head, &seq, &cfg, &focal(500)).unwrap();
    assert_eq!(curve.len(), 500);
    let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    assert!(mean(&curve[450..]) < mean(&curve[..50]));
}

#[test]
fn prototype_resolver_is_perfect_on_toy_data() {
    let cfg = TrackerConfig::default();
    let videos: Vec<_> = (1000..1010).map(|s| gen_video(&toy_world_config(s)).unwrap()).collect();
    let (ok, total) = second_frame_accuracy(&videos, &cfg, Resolver::Prototype).unwrap();
    assert!(total > 0);
    assert_eq!(ok, total);
}

#[test]
fn training_is_deterministic() {
    let cfg = TrackerConfig::default();
    let seqs: Vec<_> = (0..3).map(|s| gen_video(&toy_world_config(s)).unwrap()).collect();
    let head = ToyIdHead::new(cfg.channels, cfg.n_ids, 0);
    let a = train_toy_head(head.clone(), &seqs, &cfg, &focal(30)).unwrap();
    let b = train_toy_head(head, &seqs, &cfg, &focal(30)).unwrap();
    assert_eq!(a, b);
}
