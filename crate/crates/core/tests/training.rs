use fsn_core::encoder::{
    read_checkpoint, train, training_step, write_checkpoint, Adam, EncoderParams, Model, TrainConfig, WeightNetParams,
};
use fsn_core::episodes::{sample_episode, episode_rng, EpisodeShape};
use fsn_core::synthetic::gaussian_clusters;
use fsn_core::{FsnError, HeadConfig, HeadKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(head: HeadConfig, episodes: usize, learning_rate: f64) -> TrainConfig {
    TrainConfig {
        learning_rate,
        episodes,
        shape: EpisodeShape::new(4, 3),
        head,
        seed: 17,
        grad_clip: None,
    }
}

fn model(seed: u64) -> Model {
    Model::new(EncoderParams::init(6, 12, 4, &mut ChaCha8Rng::seed_from_u64(seed)))
}

#[test]
fn centroid_loss_falls_on_a_fixed_separable_episode() {
    let data = gaussian_clusters(3, 10, 6, 4.0, 1).unwrap();
    let cfg = config(HeadConfig::new(HeadKind::Centroid), 1, 1e-2);
    let episode = sample_episode(&data, &cfg.shape, &mut episode_rng(0, 0)).unwrap();
    let mut m = model(2);
    let mut adam = Adam::new(m.param_count());
    let mut losses = Vec::new();
    for _ in 0..50 {
        let (next, loss) = training_step(&m, &mut adam, &episode, &cfg).unwrap();
        losses.push(loss);
        m = next;
    }
    let rises = losses.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    assert!(rises <= 2, "loss rose {rises} times: {losses:?}");
    assert!(losses[49] < 0.5 * losses[0], "{} -> {}", losses[0], losses[49]);
}

#[test]
fn training_is_deterministic() {
    let data = gaussian_clusters(5, 8, 6, 3.0, 4).unwrap();
    let cfg = config(HeadConfig::fsn(2), 12, 1e-3);
    let a = train(model(5), &data, &cfg).unwrap();
    let b = train(model(5), &data, &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.model, b.model);
    assert_eq!(a.losses.len(), 12);
}

#[test]
fn zero_episodes_returns_the_initial_model() {
    let data = gaussian_clusters(2, 3, 6, 3.0, 4).unwrap();
    let start = model(6);
    let out = train(start.clone(), &data, &config(HeadConfig::fsn(2), 0, 1e-3)).unwrap();
    assert!(out.losses.is_empty());
    assert_eq!(out.model, start);
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let data = gaussian_clusters(4, 8, 6, 3.0, 4).unwrap();
    let start = model(7);
    let out = train(start.clone(), &data, &config(HeadConfig::new(HeadKind::Subspace), 5, 0.0)).unwrap();
    assert_eq!(out.model, start);
    assert!(out.losses.iter().all(|l| l.is_finite()));
}

#[test]
fn learned_head_needs_a_weight_network() {
    let data = gaussian_clusters(4, 8, 6, 3.0, 4).unwrap();
    let head = HeadConfig {
        kind: HeadKind::FsnLearned,
        ..HeadConfig::fsn(2)
    };
    let err = train(model(8), &data, &config(head.clone(), 3, 1e-3)).unwrap_err();
    assert!(matches!(err, FsnError::Config(_)));

    let with_net = model(8).with_weight_net(WeightNetParams::init(2, 8, 1, &mut ChaCha8Rng::seed_from_u64(9)));
    let out = train(with_net.clone(), &data, &config(head, 3, 1e-3)).unwrap();
    assert_ne!(out.model.weight_net, with_net.weight_net);
}

#[test]
fn every_head_trains_without_numeric_failure() {
    let data = gaussian_clusters(4, 10, 6, 3.0, 11).unwrap();
    for kind in [HeadKind::Centroid, HeadKind::NearestNeighbor, HeadKind::Simplex, HeadKind::Subspace, HeadKind::Fsn] {
        let head = HeadConfig { kind, ..HeadConfig::fsn(2) };
        let out = train(model(12), &data, &config(head, 4, 1e-3)).unwrap();
        assert!(out.losses.iter().all(|l| l.is_finite()), "{kind:?}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_trained_model() {
    let data = gaussian_clusters(3, 8, 6, 3.0, 13).unwrap();
    let trained = train(model(14), &data, &config(HeadConfig::fsn(1), 3, 1e-2)).unwrap().model;
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &trained, &serde_json::json!({"note": "test"})).unwrap();
    assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), trained);
}
