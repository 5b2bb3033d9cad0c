mod common;

use dara::data::{gen_synthetic, FeatureBank, SynthConfig};
use dara::numerics::Matrix;
use dara::pipeline::{
    adapt, distance_histogram, draw_episode, evaluate, finetune_stage1, finetune_stage2, pretrain_source,
    query_episode, run_episode, Adapted, Model, TrainConfig,
};
use dara::rng;

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        source_classes: 6,
        target_classes: 6,
        items_per_class: 20,
        width: 3,
        height: 3,
        channels: 4,
        seed,
        ..SynthConfig::default()
    }
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        hidden: 12,
        feature_channels: 6,
        pretrain_epochs: 5,
        finetune_epochs: 10,
        episodes: 6,
        queries_per_class: 5,
        query_offset: 1.0,
        ..TrainConfig::default()
    }
}

fn baseline(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        use_recalibration: false,
        use_reprojection_finetune: false,
        use_nda: false,
        ..cfg.clone()
    }
}

fn setup(seed: u64) -> (FeatureBank, Model, TrainConfig) {
    let (source, target, _) = gen_synthetic(&small_synth(seed)).unwrap();
    let cfg = TrainConfig { seed, ..small_cfg() };
    let (model, _) = pretrain_source(&source, &cfg).unwrap();
    (target, model, cfg)
}

#[test]
fn baseline_matches_independent_classifier() {
    let (target, model, cfg) = setup(1);
    let cfg = TrainConfig {
        episodes: 20,
        ..baseline(&cfg)
    };
    for e in 0..cfg.episodes {
        let episode = draw_episode(&target, &cfg, e).unwrap();
        let queries: Vec<Matrix> = episode.query.iter().map(|(m, _)| m.clone()).collect();
        let out = query_episode(&Adapted::frozen(&model), &episode.support, &queries, &cfg).unwrap();
        let (dists, preds) = common::nearest_reconstruction(&model.backbone, &episode.support, &queries, cfg.beta);
        assert_eq!(out.predictions, preds, "episode {e}");
        for (a, b) in out.distances.iter().flatten().zip(dists.iter().flatten()) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "episode {e}: {a} vs {b}");
        }
    }
}

#[test]
fn separable_source_is_learned() {
    let synth = SynthConfig {
        source_classes: 2,
        separation: 3.0,
        noise: 0.5,
        ..small_synth(2)
    };
    let (source, _, _) = gen_synthetic(&synth).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 20,
        ..small_cfg()
    };
    let (_, log) = pretrain_source(&source, &cfg).unwrap();
    let acc = *log.accuracy.last().unwrap();
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    let (target, model, cfg) = setup(3);
    let cfg = TrainConfig {
        stage1_lr: 0.0,
        stage2_lr: 0.0,
        ..cfg
    };
    let episode = draw_episode(&target, &cfg, 0).unwrap();
    let mut r = rng::stream(cfg.seed, 0, rng::FINETUNE);
    let (theta, measure, _) =
        finetune_stage1(&model.backbone, model.measure, &model.gate, &episode.support, &cfg, 5, &mut r).unwrap();
    assert_eq!(theta, model.backbone);
    assert_eq!(measure, model.measure);

    let zero = finetune_stage2(&theta, measure, &model.gate, &episode.support, &cfg, 0, &mut r.clone()).unwrap();
    let some = finetune_stage2(&theta, measure, &model.gate, &episode.support, &cfg, 5, &mut r).unwrap();
    assert_eq!(zero.z, some.z);
    assert_eq!(zero.gate, some.gate);
    assert_eq!(zero.measure, some.measure);
}

#[test]
fn reprojection_starts_from_stacked_support() {
    let (target, model, cfg) = setup(4);
    let cfg = TrainConfig {
        use_recalibration: false,
        use_nda: false,
        ..cfg
    };
    let episode = draw_episode(&target, &cfg, 0).unwrap();
    let mut r = rng::stream(cfg.seed, 0, rng::FINETUNE);
    let s2 = finetune_stage2(&model.backbone, model.measure, &model.gate, &episode.support, &cfg, 0, &mut r).unwrap();
    let rr = episode.support[0][0].rows();
    for (class, z) in episode.support.iter().zip(&s2.z.z) {
        assert_eq!(z.rows(), (cfg.shots - cfg.pseudo_query_shots) * rr);
        let feats = model.backbone.apply_all(class).unwrap();
        for k in 0..z.rows() / rr {
            let block = z.slice_rows(k * rr, rr);
            assert!(feats.iter().any(|f| *f == block), "block {k} is not a support map");
        }
    }
}

#[test]
fn stage2_keeps_backbone_and_lowers_loss() {
    let (target, model, cfg) = setup(5);
    let cfg = TrainConfig {
        stage2_lr: 0.05,
        ..cfg
    };
    let episode = draw_episode(&target, &cfg, 0).unwrap();
    let before = model.backbone.clone();
    let mut r = rng::stream(cfg.seed, 0, rng::FINETUNE);
    let s2 = finetune_stage2(&model.backbone, model.measure, &model.gate, &episode.support, &cfg, 100, &mut r).unwrap();
    assert_eq!(model.backbone, before);
    let head: f64 = s2.log.loss[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = s2.log.loss[90..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "stage-2 loss {head} -> {tail}");

    let shared = TrainConfig {
        shared_finetune: true,
        ..cfg
    };
    let mut r = rng::stream(shared.seed, 0, rng::FINETUNE);
    let adapted = adapt(&model, &episode.support, &shared, &mut r).unwrap();
    assert_eq!(adapted.backbone, model.backbone);
    assert!(adapted.z.is_some());
}

#[test]
fn one_shot_uses_self_reconstruction() {
    let (target, model, cfg) = setup(6);
    let cfg = TrainConfig { shots: 1, ..cfg };
    let episode = draw_episode(&target, &cfg, 0).unwrap();
    let mut r = rng::stream(cfg.seed, 0, rng::FINETUNE);
    let out = run_episode(&model, &episode, &cfg, &mut r).unwrap();
    assert!(out.distances.iter().flatten().all(|d| d.is_finite()));
    assert_eq!(out.predictions.len(), cfg.ways * cfg.queries_per_class);
}

#[test]
fn duplicated_support_item_is_recognised() {
    // C > K*R, so a class pool cannot span the whole feature space
    let (source, target, _) = gen_synthetic(&small_synth(7)).unwrap();
    let cfg = TrainConfig {
        seed: 7,
        hidden: 64,
        feature_channels: 64,
        beta: 1e-9,
        ..baseline(&small_cfg())
    };
    let (model, _) = pretrain_source(&source, &cfg).unwrap();
    let episode = draw_episode(&target, &cfg, 0).unwrap();
    let queries: Vec<Matrix> = (0..cfg.ways).map(|n| episode.support[n][1].clone()).collect();
    let out = query_episode(&Adapted::frozen(&model), &episode.support, &queries, &cfg).unwrap();
    for (n, row) in out.distances.iter().enumerate() {
        assert_eq!(out.predictions[n], n);
        assert!(row[n] <= 1e-6, "distance {}", row[n]);
        assert!((out.probabilities[n].iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn class_blind_bank_is_at_chance() {
    let synth = SynthConfig {
        separation: 0.0,
        ..small_synth(8)
    };
    let (source, target, _) = gen_synthetic(&synth).unwrap();
    let cfg = TrainConfig {
        episodes: 100,
        seed: 8,
        ..baseline(&small_cfg())
    };
    let (model, _) = pretrain_source(&source, &cfg).unwrap();
    let report = evaluate(&target, &model, &cfg, 2).unwrap();
    let chance = 1.0 / cfg.ways as f64;
    assert!((report.mean - chance).abs() <= 0.05, "accuracy {} vs chance {chance}", report.mean);
}

#[test]
fn evaluation_is_deterministic_across_workers() {
    let (target, model, cfg) = setup(9);
    let a = evaluate(&target, &model, &cfg, 1).unwrap();
    let b = evaluate(&target, &model, &cfg, 3).unwrap();
    let c = evaluate(&target, &model, &cfg, 3).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(b.to_json(), c.to_json());
    assert_eq!(a.episodes, cfg.episodes);
}

#[test]
fn histogram_pairs_aligned_and_unaligned_rows() {
    let (target, model, cfg) = setup(10);
    let cfg = TrainConfig { episodes: 3, ..cfg };
    let rows = distance_histogram(&target, &model, &cfg, 2).unwrap();
    let m = cfg.ways * cfg.queries_per_class;
    assert_eq!(rows.len(), 2 * m * cfg.episodes);
    for (i, chunk) in rows.chunks(m).enumerate() {
        assert!(chunk.iter().all(|r| r.episode == i / 2 && r.aligned == (i % 2 == 0)));
        assert!(chunk.iter().all(|r| r.distance.is_finite() && r.distance >= 0.0));
    }
}

#[test]
fn pretraining_is_reproducible() {
    let (source, _, _) = gen_synthetic(&small_synth(11)).unwrap();
    let cfg = TrainConfig { seed: 11, ..small_cfg() };
    let (a, la) = pretrain_source(&source, &cfg).unwrap();
    let (b, lb) = pretrain_source(&source, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}
