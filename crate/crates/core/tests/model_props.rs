mod common;

use common::{fd_check, generic_params, random_points, random_targets, rng};
use evpc::model::{
    count_params_macs, forward, kl_loss, predict, softmax, train, Adam, AdamConfig, ModelConfig, ModelGrads,
    ModelParams, PreparedSample, Tensor2D, TrainConfig,
};
use evpc::events::Skeleton2D;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn tiny() -> ModelConfig {
    ModelConfig {
        in_channels: 5,
        widths: [4, 8, 8, 16],
        joints: 2,
        width: 10,
        height: 10,
        raw_features: false,
    }
}

fn permute(x: &Tensor2D, perm: &[usize]) -> Tensor2D {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&r| x.row(r).to_vec()).collect();
    Tensor2D::from_rows(&rows).unwrap()
}

#[test]
fn finite_difference_matches_backprop() {
    let mut r = rng(11);
    let mut clean = 0;
    for case in 0..20 {
        let p = generic_params(&tiny(), &mut r);
        let x = random_points(&mut r, 8, 5);
        let t = random_targets(&mut r, 2, 10, 10);
        let fd = fd_check(&p, &x, &t, 1e-4, 1e-6);
        assert!(fd.max_error <= 1e-4, "case {case}: {fd:?}");
        if fd.kinks == 0 {
            clean += 1;
        }
    }
    assert!(clean >= 10, "only {clean} kink-free cases");
}

#[test]
fn param_count_matches_layer_enumeration() {
    for cfg in [tiny(), ModelConfig::default(), ModelConfig::default().full_scale()] {
        let mut expected = 0;
        let mut fan_in = cfg.in_channels;
        for w in cfg.widths {
            expected += fan_in * w + w;
            fan_in = w;
        }
        let g = 2 * cfg.widths.iter().sum::<usize>();
        expected += g * cfg.joints * cfg.width + cfg.joints * cfg.width;
        expected += g * cfg.joints * cfg.height + cfg.joints * cfg.height;
        assert_eq!(count_params_macs(&cfg, 1).0, expected);
        assert_eq!(ModelParams::zeros(&cfg).unwrap().len(), expected);
    }
}

#[test]
fn overfits_one_sample() {
    let cfg = tiny();
    let mut r = rng(3);
    let x = random_points(&mut r, 8, 5);
    let t = random_targets(&mut r, 2, 10, 10);
    let mut p = ModelParams::init(&cfg, &mut r).unwrap();
    let loss = |p: &ModelParams| {
        let o = forward(&x, p).unwrap();
        kl_loss(&o.logits_x, &o.logits_y, &t, 1.0).unwrap()
    };
    let first = loss(&p).loss;
    let mut adam = Adam::new(p.len(), AdamConfig::default());
    let mut g = ModelGrads::zeros_like(&p);
    for _ in 0..200 {
        let o = forward(&x, &p).unwrap();
        let kl = kl_loss(&o.logits_x, &o.logits_y, &t, 1.0).unwrap();
        g.fill_zero();
        evpc::model::backward(&o.cache, &p, &kl.grad_x, &kl.grad_y, &mut g).unwrap();
        adam.step(&mut p, &g, 1e-2).unwrap();
    }
    let last = loss(&p).loss;
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny();
    let mut r = rng(9);
    let sample = |r: &mut _| PreparedSample {
        features: random_points(r, 8, 5),
        targets: random_targets(r, 2, 10, 10),
        label: Skeleton2D::new(vec![[3.0, 4.0], [6.0, 2.0]]),
        camera_id: 0,
        window_index: 0,
        pool: None,
    };
    let set: Vec<PreparedSample> = (0..4).map(|_| sample(&mut r)).collect();
    let tc = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let a = train(&set, &set, &cfg, &tc).unwrap();
    let b = train(&set, &set, &cfg, &tc).unwrap();
    assert_eq!(a.params.as_slice(), b.params.as_slice());
    assert_eq!(a.curve, b.curve);
    assert_eq!(predict(&a.params, &set[0].features).unwrap(), predict(&b.params, &set[0].features).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_order_does_not_change_logits(seed in any::<u64>(), n in 1usize..40) {
        let mut r = rng(seed);
        let p = ModelParams::init(&tiny(), &mut r).unwrap();
        let x = random_points(&mut r, n, 5);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let a = forward(&x, &p).unwrap();
        let b = forward(&permute(&x, &perm), &p).unwrap();
        prop_assert_eq!(a.logits_x.data(), b.logits_x.data());
        prop_assert_eq!(a.logits_y.data(), b.logits_y.data());
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = ModelParams::init(&tiny(), &mut r).unwrap();
        let o = forward(&random_points(&mut r, 8, 5), &p).unwrap();
        for logits in [&o.logits_x, &o.logits_y] {
            for j in 0..logits.rows() {
                let s: f64 = softmax(logits.row(j)).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
