mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxfuse_core::daga::{daga_loss, depth_weight, DagaConfig};
use voxfuse_core::fusion::fusion_weights;
use voxfuse_core::metrics::{ConfusionMatrix, OccupancyLabels, VoxelLabel};
use voxfuse_core::prior::{normalize_prompt, LoraAdapter, StubEncoder, TextEncoder};
use voxfuse_core::scenes::{rain_points, RainModel};
use voxfuse_core::tensor::nn::{uniform, ParamStore};
use voxfuse_core::tensor::optim::cosine_lr;
use voxfuse_core::tensor::{LovaszClasses, Tape, Tensor};
use voxfuse_core::voxel::{read_voxf, voxelize, write_voxf, GridSpec, GridVar, Point, PointCloud, VoxelGrid};

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

fn label_strategy(classes: usize, ignore: u32) -> impl Strategy<Value = VoxelLabel> {
    prop_oneof![
        6 => (0..classes as u16).prop_map(VoxelLabel::Class),
        3 => Just(VoxelLabel::Empty),
        ignore => Just(VoxelLabel::Ignore),
    ]
}

fn one_hot(labels: &[usize], c: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[labels.len(), c]);
    for (i, &l) in labels.iter().enumerate() {
        t.set(&[i, l], 1.0);
    }
    t
}

fn lovasz(probs: &Tensor<f64>, labels: &[usize], variant: LovaszClasses) -> f64 {
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone());
    let l = tape.lovasz_softmax(p, labels, None, variant).unwrap();
    tape.value(l).item()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn softmax_rows_are_distributions(data in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_f64(&[3, 4], &data).unwrap());
        let s = tape.softmax(x, 1).unwrap();
        for row in tape.value(s).data().chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn lovasz_is_bounded(seed in 0u64..10_000, n in 1usize..8, c in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = uniform::<f64>(&[n, c], 3.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|i| (seed as usize + i * 7) % c).collect();
        let mut tape = Tape::new();
        let x = tape.constant(logits);
        let p = tape.softmax(x, 1).unwrap();
        let l = tape.lovasz_softmax(p, &labels, None, LovaszClasses::PresentOrPredicted).unwrap();
        let v = tape.value(l).item();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    /// With one-hot probabilities the loss is the mean Jaccard loss over
    /// the included classes.
    #[test]
    fn one_hot_lovasz_is_mean_jaccard_loss(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 1..12),
    ) {
        let gt: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        for variant in [LovaszClasses::Present, LovaszClasses::PresentOrPredicted] {
            let mut sum = 0.0;
            let mut used = 0;
            for c in 0..3 {
                let present = gt.contains(&c);
                let predicted = pred.contains(&c);
                let include = present || (variant == LovaszClasses::PresentOrPredicted && predicted);
                if !include { continue; }
                let tp = gt.iter().zip(&pred).filter(|(g, p)| **g == c && **p == c).count() as u64;
                let fp = gt.iter().zip(&pred).filter(|(g, p)| **g != c && **p == c).count() as u64;
                let fn_ = gt.iter().zip(&pred).filter(|(g, p)| **g == c && **p != c).count() as u64;
                sum += 1.0 - common::iou_from_counts(tp, fp, fn_).unwrap();
                used += 1;
            }
            let got = lovasz(&one_hot(&pred, 3), &gt, variant);
            prop_assert!((got - sum / used as f64).abs() < 1e-12);
        }
    }

    /// Correcting any subset of wrong one-hot predictions never lowers a
    /// present class's IoU, so the loss cannot rise; it strictly falls
    /// when at least one error is fixed.
    #[test]
    fn fixing_errors_lowers_present_class_lovasz(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 1..12),
        mask in prop::collection::vec(any::<bool>(), 12),
    ) {
        let gt: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let mut fixed = pred.clone();
        let mut changed = false;
        for i in 0..gt.len() {
            if mask[i] && fixed[i] != gt[i] {
                fixed[i] = gt[i];
                changed = true;
            }
        }
        let before = lovasz(&one_hot(&pred, 3), &gt, LovaszClasses::Present);
        let after = lovasz(&one_hot(&fixed, 3), &gt, LovaszClasses::Present);
        if changed {
            prop_assert!(after < before);
        } else {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn confusion_merge_is_associative_and_matches_bulk_update(
        gt in prop::collection::vec(label_strategy(4, 1), 24),
        pred in prop::collection::vec(label_strategy(4, 0), 24),
        cuts in (0usize..=24, 0usize..=24),
    ) {
        let (a, b) = (cuts.0.min(cuts.1), cuts.0.max(cuts.1));
        let part = |lo: usize, hi: usize| {
            let g = OccupancyLabels::new([hi - lo, 1, 1], 4, gt[lo..hi].to_vec()).unwrap();
            let mut m = ConfusionMatrix::new(4);
            if hi > lo {
                m.update(&pred[lo..hi], &g).unwrap();
            }
            m
        };
        let (p1, p2, p3) = (part(0, a), part(a, b), part(b, 24));
        let mut left = p1.clone();
        left.merge(&p2).unwrap();
        left.merge(&p3).unwrap();
        let mut right_tail = p2.clone();
        right_tail.merge(&p3).unwrap();
        let mut right = p1.clone();
        right.merge(&right_tail).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(&left, &part(0, 24));
        for c in 0..4 {
            if let Some(iou) = left.iou(c) {
                prop_assert!((0.0..=1.0).contains(&iou));
            }
        }
    }

    #[test]
    fn depth_weight_is_decreasing(slices in 1usize..64, beta in 0.0f64..10.0) {
        prop_assert_eq!(depth_weight(0, slices, beta).unwrap(), 1.0);
        let mut prev = 1.0;
        for d in 0..slices {
            let w = depth_weight(d, slices, beta).unwrap();
            prop_assert!(w > 0.0 && w <= 1.0 && w <= prev);
            prev = w;
        }
    }

    #[test]
    fn fusion_weights_are_a_shift_invariant_distribution(a in -20.0f64..20.0, b in -20.0f64..20.0, alpha in 0.01f64..20.0, shift in -5.0f64..5.0) {
        let w = fusion_weights([a, b], alpha);
        prop_assert!((w.w_cam + w.w_pts - 1.0).abs() < 1e-12);
        prop_assert!(w.w_cam >= 0.0 && w.w_pts >= 0.0);
        let s = fusion_weights([a + shift, b + shift], alpha);
        prop_assert!((s.w_cam - w.w_cam).abs() < 1e-12);
    }

    #[test]
    fn daga_is_symmetric_nonnegative_and_zero_on_equal_inputs(seed in 0u64..10_000, beta in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::new([[0.0, 1.0]; 3], [2, 3, 4], 2).unwrap();
        let a = uniform::<f64>(&spec.feature_shape(), 1.5, &mut rng);
        let b = uniform::<f64>(&spec.feature_shape(), 1.5, &mut rng);
        let cfg = DagaConfig { beta, ..DagaConfig::default() };
        let mut tape = Tape::new();
        let ga = GridVar { spec, var: tape.constant(a) };
        let gb = GridVar { spec, var: tape.constant(b) };
        let ab = daga_loss(&mut tape, ga, gb, &cfg).unwrap().total;
        let ba = daga_loss(&mut tape, gb, ga, &cfg).unwrap().total;
        let aa = daga_loss(&mut tape, ga, ga, &cfg).unwrap().total;
        prop_assert!(tape.value(ab).item() >= 0.0);
        prop_assert_eq!(tape.value(ab).item(), tape.value(ba).item());
        prop_assert_eq!(tape.value(aa).item(), 0.0);
    }

    #[test]
    fn voxelize_ignores_point_order(seed in 0u64..10_000, n in 0usize..40) {
        use rand::{seq::SliceRandom, Rng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::new([[0.0, 2.0]; 3], [2, 2, 2], 2).unwrap();
        let points: Vec<Point> = (0..n)
            .map(|_| Point {
                position: [rng.random_range(-0.5..2.5), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)],
                features: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                label: None,
            })
            .collect();
        let mut shuffled = points.clone();
        shuffled.shuffle(&mut rng);
        let a: VoxelGrid<f64> = voxelize(&PointCloud::new(points).unwrap(), &spec).unwrap();
        let b: VoxelGrid<f64> = voxelize(&PointCloud::new(shuffled).unwrap(), &spec).unwrap();
        prop_assert_eq!(a.features.data(), b.features.data());
    }

    #[test]
    fn voxf_round_trip(seed in 0u64..10_000, c in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::new([[-1.0, 1.0], [0.0, 3.0], [-2.0, 2.0]], [2, 3, 2], c).unwrap();
        let g = VoxelGrid::new(spec, uniform::<f64>(&spec.feature_shape(), 10.0, &mut rng)).unwrap();
        let mut buf = Vec::new();
        write_voxf(&g, &mut buf).unwrap();
        let back: VoxelGrid<f64> = read_voxf(buf.as_slice()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn zero_b_lora_equals_frozen_projection(seed in 0u64..10_000, rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let base = uniform::<f64>(&[4, 5], 1.0, &mut rng);
        let lora = LoraAdapter::new(&mut store, "l", base.clone(), rank, 8.0, &mut rng).unwrap();
        let x = uniform::<f64>(&[3, 5], 1.0, &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = tape.constant(x);
        let y = lora.forward(&mut tape, &bound, xv).unwrap();
        let wt = tape.constant(base);
        let wt = tape.transpose(wt).unwrap();
        let plain = tape.matmul(xv, wt).unwrap();
        prop_assert_eq!(tape.value(y).data(), tape.value(plain).data());
    }

    #[test]
    fn stub_embeddings_are_unit_and_normalization_idempotent(text in "[ A-Za-z,.]{1,40}") {
        let n = normalize_prompt(&text);
        prop_assert_eq!(normalize_prompt(&n), n.clone());
        let enc = StubEncoder { dim: 32, seed: 3 };
        let e = enc.encode(&text).unwrap();
        let norm: f64 = e.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert_eq!(enc.encode(&n).unwrap(), e);
    }

    #[test]
    fn cosine_schedule_is_monotone(total in 1usize..500, base in 1e-6f64..1.0) {
        let mut prev = f64::INFINITY;
        for s in 0..=total {
            let lr = cosine_lr(base, s, total);
            prop_assert!(lr >= 0.0 && lr <= base && lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn rain_only_removes_points(seed in 0u64..10_000, p in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = PointCloud::new((0..50).map(|i| Point { position: [1.0 + i as f64 * 0.1, 0.5, 0.0], features: vec![1.0], label: Some(0) }).collect()).unwrap();
        let out = rain_points(&cloud, [0.0; 3], RainModel { p_drop: p, range_sigma: 0.1 }, &mut rng);
        prop_assert!(out.len() <= cloud.len());
    }
}

#[test]
fn rain_dropout_within_binomial_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let cloud = PointCloud::new((0..n).map(|i| Point { position: [1.0, i as f64 * 1e-3, 0.0], features: vec![1.0], label: None }).collect()).unwrap();
    let out = rain_points(&cloud, [0.0; 3], RainModel { p_drop: 0.5, range_sigma: 0.0 }, &mut rng);
    // mean 5000, σ = √(n·p·(1−p)) = 50
    assert!((out.len() as f64 - 5000.0).abs() <= 150.0, "{}", out.len());
}
