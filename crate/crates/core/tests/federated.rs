use jcdo_core::channel::{dbm_to_watts, DeviceProfile, LinkBudget};
use jcdo_core::compression::{solve_preservation_probs, sparsify, GradientVector};
use jcdo_core::federated::{
    aggregate, local_gradient, make_partition, make_task, PartitionScheme, TaskKind, TaskSpec, TrainingState,
};
use jcdo_core::optimizer::TransmissionPlan;
use jcdo_core::rng::{Purpose, StreamFactory};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn spec(kind: TaskKind, partition: PartitionScheme) -> TaskSpec {
    TaskSpec {
        kind,
        dim: 12,
        samples: 400,
        devices: 5,
        classes: if kind == TaskKind::Quadratic { 4 } else { 2 },
        heterogeneity: 1.0,
        noise: 0.3,
        regularization: 0.1,
        partition,
    }
}

fn profiles(sizes: &[usize]) -> Vec<DeviceProfile> {
    sizes
        .iter()
        .enumerate()
        .map(|(id, &data_size)| DeviceProfile {
            id,
            data_size,
            tx_power: dbm_to_watts(18.0),
            channel_gain_mean: 1e-10,
            cpu_freq: 1e9,
            cpu_cycles_per_batch: 5e6,
            encode_bits: 32,
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn partitions_are_disjoint_covers(
        labels in prop::collection::vec(0usize..5, 20..300),
        devices in 1usize..6,
        shards in 1usize..4,
        seed in any::<u64>(),
    ) {
        let n = labels.len();
        for scheme in [PartitionScheme::Iid, PartitionScheme::ShardSorted { shards_per_device: shards }] {
            let mut rng = StreamFactory::new(seed).global(Purpose::Partition);
            let part = make_partition(&labels, devices, scheme, &mut rng).unwrap();
            prop_assert_eq!(part.devices(), devices);
            let mut seen = vec![false; n];
            for d in 0..devices {
                prop_assert!(part.samples(d).windows(2).all(|w| w[0] < w[1]));
                for &j in part.samples(d) {
                    prop_assert!(!seen[j]);
                    seen[j] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            let sizes = part.data_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            if scheme == PartitionScheme::Iid {
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}

#[test]
fn curvature_constants_bound_the_gradient_map() {
    for kind in [TaskKind::Quadratic, TaskKind::LogisticL2] {
        let (task, _) = make_task(&spec(kind, PartitionScheme::Iid), 3).unwrap();
        let (l, mu) = (task.smoothness, task.strong_convexity);
        assert!(mu > 0.0 && l >= mu, "{kind:?}: l = {l}, mu = {mu}");
        let mut rng = StreamFactory::new(9).stream(Purpose::Oracle, 0, 0);
        let mut draw = |scale: f64| -> Vec<f64> {
            (0..task.dim()).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); scale * z }).collect()
        };
        for _ in 0..100 {
            let (a, b) = (draw(2.0), draw(2.0));
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let gd: Vec<f64> = task.gradient(&a).iter().zip(task.gradient(&b)).map(|(x, y)| x - y).collect();
            let (inner, dd) = (dot(&gd, &d), dot(&d, &d));
            assert!(inner >= mu * dd * (1.0 - 1e-9), "{kind:?}: strong convexity");
            assert!(dot(&gd, &gd) <= l * l * dd * (1.0 + 1e-9), "{kind:?}: smoothness");
            assert!(task.loss_gap(&a) >= -1e-12);
        }
        let g = task.gradient(task.optimum());
        assert!(dot(&g, &g).sqrt() < 1e-8, "{kind:?}: gradient at the optimum {g:?}");
        assert!(task.loss_gap(task.optimum()).abs() < 1e-10);
    }
}

#[test]
fn full_batches_are_exact_and_mini_batches_unbiased() {
    let (task, part) = make_task(&spec(TaskKind::Quadratic, PartitionScheme::ShardSorted { shards_per_device: 2 }), 4).unwrap();
    let w = vec![0.5; task.dim()];
    let size = part.samples(2).len();
    let streams = StreamFactory::new(1);
    let full = local_gradient(&task, &part, 2, &w, size, &mut streams.stream(Purpose::MiniBatch, 2, 0)).unwrap();
    assert_eq!(full.values(), task.subset_gradient(part.samples(2), &w).as_slice());

    let trials = 4000;
    let mut mean = vec![0.0; task.dim()];
    for t in 0..trials {
        let g = local_gradient(&task, &part, 2, &w, 10, &mut streams.stream(Purpose::MiniBatch, 2, t)).unwrap();
        for (m, v) in mean.iter_mut().zip(g.values()) {
            *m += v / trials as f64;
        }
    }
    let err: f64 = mean.iter().zip(full.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 0.05 * full.norm_sq().sqrt(), "mini-batch mean off by {err}");
    assert!(local_gradient(&task, &part, 2, &w, size + 1, &mut streams.stream(Purpose::MiniBatch, 2, 0)).is_err());
    assert!(local_gradient(&task, &part, 2, &w, 0, &mut streams.stream(Purpose::MiniBatch, 2, 0)).is_err());
}

#[test]
fn uncompressed_lossless_aggregate_is_the_data_weighted_mean() {
    let (dim, sizes) = (30, [10usize, 20, 30, 40]);
    let devs = profiles(&sizes);
    let link = LinkBudget::from_dbm_per_hz(1e6, -174.0).unwrap();
    let plan = TransmissionPlan::with_ratios(1, f64::INFINITY, vec![1.0; 4], &devs, &link, dim).unwrap();
    let streams = StreamFactory::new(2);
    let grads: Vec<GradientVector> = (0..4)
        .map(|m| {
            let mut rng = streams.stream(Purpose::Oracle, m, 0);
            GradientVector::new((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
        })
        .collect();
    let updates: Vec<_> = grads
        .iter()
        .enumerate()
        .map(|(m, g)| {
            let p = solve_preservation_probs(g, 1.0).unwrap();
            (m, sparsify(g, &p, 32, &mut streams.stream(Purpose::Sparsify, m as u64, 0)).unwrap())
        })
        .collect();
    let agg = aggregate(&updates, &plan, &devs, dim).unwrap();
    let total: f64 = sizes.iter().sum::<usize>() as f64;
    for i in 0..dim {
        let expected: f64 = grads.iter().zip(&sizes).map(|(g, &d)| d as f64 / total * g.values()[i]).sum();
        assert!((agg.values()[i] - expected).abs() < 1e-12);
    }

    let partial = aggregate(&updates[..2], &plan, &devs, dim).unwrap();
    let expected: f64 = (0..2).map(|m| sizes[m] as f64 / total * grads[m].values()[0]).sum();
    assert!((partial.values()[0] - expected).abs() < 1e-12);

    let stranger = vec![(9, updates[0].1.clone())];
    assert!(aggregate(&stranger, &plan, &devs, dim).is_err());
}

#[test]
fn training_state_checks_the_step_and_tracks_estimators() {
    assert!(TrainingState::new(vec![0.0; 3], 3.0, 1.0, 1.0, 1.0, vec![0.1; 2]).is_err());
    let mut st = TrainingState::new(vec![0.0; 3], 1.0, 1.0, 1.0, 1.0, vec![0.1; 2]).unwrap();
    assert_eq!(st.learning_rate(), 0.5);
    let agg = GradientVector::new(vec![1.0, -2.0, 0.0]).unwrap();
    let raw = [GradientVector::new(vec![3.0, 0.0, 0.0]).unwrap(), GradientVector::new(vec![1.0, 1.0, 1.0]).unwrap()];
    st.apply_update(&agg, &raw).unwrap();
    assert_eq!(st.model, vec![-0.5, 1.0, 0.0]);
    assert_eq!(st.round, 2);
    assert_eq!(st.g_est, 9.0);
    assert!((st.alpha_est[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((st.alpha_est[1] - 1.0).abs() < 1e-15);
    assert!((st.learning_rate() - 1.0 / 3.0).abs() < 1e-15);
    assert!(st.apply_update(&GradientVector::zeros(2), &[]).is_err());
}
