use super::*;
use crate::dataset::ExampleMeta;
use rand::{Rng as _, SeedableRng};

fn random_input(n: usize, c: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n * c).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn tiny(encoder: &[usize], local: usize, classifier: &[usize], seg_hidden: &[usize], k: usize) -> NetworkConfig {
    let mut segmenter = seg_hidden.to_vec();
    segmenter.push(k + 1);
    NetworkConfig {
        input_channels: GEOMETRY_CHANNELS,
        encoder: encoder.to_vec(),
        classifier: classifier.to_vec(),
        segmenter,
        keypoints: k,
        local_layer: local,
    }
}

/// Biases drawn too, so ReLU units are not all aligned at the origin.
fn random_weights(cfg: &NetworkConfig, seed: u64) -> Weights<f64> {
    let mut rng = Rng::seed_from_u64(seed);
    let mut w = Weights::<f64>::init(cfg, 1.0, &mut rng).unwrap();
    for t in w.tensors_mut() {
        for x in t.iter_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    w
}

#[test]
fn standard_and_compact_configs_validate() {
    NetworkConfig::standard(40, true).validate().unwrap();
    NetworkConfig::compact(40, false).validate().unwrap();
    let mut bad = NetworkConfig::standard(40, true);
    bad.segmenter.push(7);
    assert!(bad.validate().is_err());
    let mut bad = NetworkConfig::compact(4, true);
    bad.classifier = vec![8, 2];
    assert!(bad.validate().is_err());
}

#[test]
fn duplicated_point_gives_identical_rows() {
    let cfg = NetworkConfig::compact(5, false);
    let w = random_weights(&cfg, 1).cast::<f32>();
    let row: Vec<f32> = vec![0.3, -0.2, 0.5, 0.0, 0.0, 1.0, 0.1];
    let x: Vec<f32> = row.iter().copied().cycle().take(2048 * 7).collect();
    let t = w.forward(&x, 2048).unwrap();
    let k = cfg.classes();
    let first = &t.seg_logits()[..k];
    for r in t.seg_logits().chunks_exact(k) {
        assert_eq!(r, first);
    }
}

#[test]
fn permutation_covariance_is_exact() {
    let cfg = NetworkConfig::compact(6, false);
    let w = random_weights(&cfg, 2).cast::<f32>();
    let mut rng = Rng::seed_from_u64(3);
    let n = 2048;
    let x: Vec<f32> = random_input(n, 7, &mut rng).into_iter().map(|v| v as f32).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut xp = Vec::with_capacity(x.len());
    for &p in &perm {
        xp.extend_from_slice(&x[p * 7..(p + 1) * 7]);
    }
    let a = w.forward(&x, n).unwrap();
    let b = w.forward(&xp, n).unwrap();
    assert_eq!(a.class_prob().to_bits(), b.class_prob().to_bits());
    let k = cfg.classes();
    for (i, &p) in perm.iter().enumerate() {
        assert_eq!(&b.seg_logits()[i * k..(i + 1) * k], &a.seg_logits()[p * k..(p + 1) * k]);
    }
}

use rand::seq::SliceRandom;

#[test]
fn zero_weights_give_even_odds() {
    let cfg = NetworkConfig::compact(3, true);
    let w = Weights::<f32>::zeros(&cfg, 1.0).unwrap();
    let mut rng = Rng::seed_from_u64(4);
    let x: Vec<f32> = random_input(2048, 10, &mut rng).into_iter().map(|v| v as f32).collect();
    assert_eq!(w.forward(&x, 2048).unwrap().class_prob(), 0.5);
    assert_eq!(w.classify(&x, 2048).unwrap(), 0.5);
}

#[test]
fn shape_mismatch_is_a_config_error() {
    let cfg = NetworkConfig::compact(3, false);
    let w = Weights::<f32>::zeros(&cfg, 1.0).unwrap();
    assert!(matches!(w.forward(&[0.0; 20], 3), Err(Error::Config(_))));
}

/// Direct transcription of the loss from probabilities.
fn scalar_loss(prob: f64, logits: &[f64], classes: usize, y: u8, labels: &[u16], wc: f64, ws: f64) -> f64 {
    let clamp = |p: f64| p.max(1e-12).ln();
    let bce = -(y as f64 * clamp(prob) + (1.0 - y as f64) * clamp(1.0 - prob));
    let mut ce = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let denom: f64 = row.iter().map(|z| z.exp()).sum();
        ce -= clamp(row[l as usize].exp() / denom);
    }
    wc * bce + ws * ce / labels.len() as f64
}

#[test]
fn loss_matches_scalar_oracle() {
    let mut rng = Rng::seed_from_u64(5);
    for _ in 0..100 {
        let classes = rng.random_range(2..12);
        let n = rng.random_range(1..40);
        let logits: Vec<f64> = (0..n * classes).map(|_| rng.random_range(-4.0..4.0)).collect();
        let labels: Vec<u16> = (0..n).map(|_| rng.random_range(0..classes) as u16).collect();
        let z: f64 = rng.random_range(-6.0..6.0);
        let y = rng.random_range(0..2u8);
        let wc = rng.random_range(0.0..1.0);
        let got = joint_loss(z, &logits, classes, y, &labels, wc, 1.0 - wc);
        let want = scalar_loss(1.0 / (1.0 + (-z).exp()), &logits, classes, y, &labels, wc, 1.0 - wc);
        assert!((got.total - want).abs() < 1e-12, "{} vs {want}", got.total);
        assert!(got.total >= 0.0);
    }
}

#[test]
fn loss_special_cases() {
    // uniform segmentation over 41 classes
    let logits = vec![0.25; 41 * 5];
    let labels = [0u16, 3, 40, 7, 7];
    let l = joint_loss(0.0, &logits, 41, 1, &labels, 0.15, 0.85);
    assert!((l.segmentation - 41f64.ln()).abs() < 1e-9);
    // confident and correct everywhere
    let mut sharp = vec![-40.0; 41 * 5];
    for (i, &y) in labels.iter().enumerate() {
        sharp[i * 41 + y as usize] = 40.0;
    }
    assert!(joint_loss(40.0, &sharp, 41, 1, &labels, 0.15, 0.85).total < 1e-6);
    // segmentation weight zero leaves the weighted BCE
    let l = joint_loss(-1.3, &logits, 41, 1, &labels, 1.0, 0.0);
    assert!((l.total - l.classification).abs() < 1e-15);
    assert!((l.classification - (1.0 + 1.3f64.exp()).ln()).abs() < 1e-12);
}

fn loss_at(w: &Weights<f64>, x: &[f64], n: usize, y: u8, labels: &[u16], lw: (f64, f64)) -> f64 {
    let t = w.forward(x, n).unwrap();
    joint_loss(t.class_logit(), t.seg_logits(), w.config.classes(), y, labels, lw.0, lw.1).total
}

fn gradient_check(cfg: &NetworkConfig, n: usize, seed: u64) {
    let mut rng = Rng::seed_from_u64(seed);
    let w = random_weights(cfg, seed + 100);
    let x = random_input(n, cfg.input_channels, &mut rng);
    let labels: Vec<u16> = (0..n).map(|_| rng.random_range(0..cfg.classes()) as u16).collect();
    let y = rng.random_range(0..2u8);
    let lw = (0.15, 0.85);
    let (_, grad) = w.loss_and_gradient(&x, n, y, &labels, lw).unwrap();
    assert!(grad.is_finite());
    let h = 1e-4;
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = w.clone();
    for (ti, tensor) in analytic.iter().enumerate() {
        for (k, &a) in tensor.iter().enumerate() {
            let orig = probe.tensors()[ti][k];
            probe.tensors_mut()[ti][k] = orig + h;
            let up = loss_at(&probe, &x, n, y, &labels, lw);
            probe.tensors_mut()[ti][k] = orig - h;
            let down = loss_at(&probe, &x, n, y, &labels, lw);
            probe.tensors_mut()[ti][k] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "tensor {ti} entry {k}: analytic {a} vs numeric {fd}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    gradient_check(&tiny(&[4, 8], 0, &[1], &[], 2), 8, 1);
    gradient_check(&tiny(&[5, 6, 7], 1, &[4, 1], &[5], 3), 10, 2);
    gradient_check(&tiny(&[3, 4, 5, 6], 1, &[3, 1], &[4, 3], 2), 9, 3);
}

#[test]
fn gradient_vanishes_at_a_constructed_minimum() {
    let cfg = tiny(&[4, 6], 0, &[3, 1], &[5], 2);
    let mut w = random_weights(&cfg, 7);
    // outputs saturate on the target classes through the last-layer biases
    let labels = vec![2u16; 8];
    w.classifier.last_mut().unwrap().b[0] = 60.0;
    let seg = w.segmenter.last_mut().unwrap();
    seg.w.fill(0.0);
    seg.b.copy_from_slice(&[-30.0, -30.0, 30.0]);
    let mut rng = Rng::seed_from_u64(8);
    let x = random_input(8, 7, &mut rng);
    let (loss, grad) = w.loss_and_gradient(&x, 8, 1, &labels, (0.15, 0.85)).unwrap();
    assert!(loss.total < 1e-6);
    let norm: f64 = grad.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn non_argmax_points_get_no_pooled_gradient() {
    let cfg = tiny(&[4, 6, 5], 1, &[3, 1], &[4], 2);
    let w = random_weights(&cfg, 9);
    let mut rng = Rng::seed_from_u64(10);
    let n = 12;
    let x = random_input(n, 7, &mut rng);
    let trace = w.forward(&x, n).unwrap();
    let spare = (0..n as u32).find(|r| !trace.pool_argmax().contains(r)).expect("some row never wins");
    // with the segmentation loss off, only the pooled branch carries gradient
    let lw = (1.0, 0.0);
    let labels = vec![0u16; n];
    let (_, full) = w.loss_and_gradient(&x, n, 1, &labels, lw).unwrap();
    let mut x2 = x.clone();
    x2.drain(spare as usize * 7..(spare as usize + 1) * 7);
    let (_, fewer) = w.loss_and_gradient(&x2, n - 1, 1, &labels[1..], lw).unwrap();
    assert_eq!(full, fewer);
}

fn toy_examples(n_points: usize) -> Vec<LabeledExample> {
    let mut rng = Rng::seed_from_u64(11);
    (0..10)
        .map(|e| {
            let class_label = (e % 2) as u8;
            let mut positions = Vec::new();
            let mut seg_labels = Vec::new();
            for _ in 0..n_points {
                let p = [rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0)];
                // positives are flattened; segments split by the sign of x and y
                let p = if class_label == 1 { [p[0], p[1], 0.1 * p[2]] } else { p };
                let s = if class_label == 0 { 0 } else if p[0] < 0.0 { 1 } else if p[1] < 0.0 { 2 } else { 3 };
                positions.push(p);
                seg_labels.push(s);
            }
            LabeledExample {
                normals: vec![[0.0, 0.0, 1.0]; n_points],
                curvatures: vec![0.0; n_points],
                positions,
                colors: None,
                seg_labels,
                class_label,
                meta: ExampleMeta::default(),
            }
        })
        .collect()
}

#[test]
fn training_overfits_a_toy_set() {
    let data = toy_examples(128);
    let cfg = NetworkConfig::compact(3, false);
    let tc = TrainConfig { epochs: 50, batch_size: 1, learning_rate: 0.01, seed: 3, ..Default::default() };
    let mut w = Weights::<f32>::init(&cfg, 1.0, &mut Rng::seed_from_u64(12)).unwrap();
    let initial = mean_loss(&w, &data, &tc).unwrap();
    let log = train(&mut w, &data, &tc, |_| {}).unwrap();
    let fin = mean_loss(&w, &data, &tc).unwrap();
    assert_eq!(log.len(), 50);
    assert!(fin < 0.1 * initial, "{initial} -> {fin}");
}

#[test]
fn training_is_reproducible_and_frozen_at_zero_rate() {
    let data = toy_examples(32);
    let cfg = NetworkConfig::compact(3, false);
    let tc = TrainConfig { epochs: 3, batch_size: 4, seed: 5, ..Default::default() };
    let init = Weights::<f32>::init(&cfg, 1.0, &mut Rng::seed_from_u64(13)).unwrap();
    let (mut a, mut b) = (init.clone(), init.clone());
    let la = train(&mut a, &data, &tc, |_| {}).unwrap();
    let lb = train(&mut b, &data, &tc, |_| {}).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
    let mut frozen = init.clone();
    train(&mut frozen, &data, &TrainConfig { learning_rate: 0.0, ..tc }, |_| {}).unwrap();
    assert_eq!(frozen, init);
}

