use jcdo_core::compression::{
    approx_variance_coefficient, exact_variance, solve_preservation_probs, sparsify, GradientVector, SparseUpdate,
};
use jcdo_core::rng::{Purpose, StreamFactory};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn gradient() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => -50.0f64..50.0, 1 => Just(0.0)], 1..200)
}

proptest! {
    #[test]
    fn probabilities_meet_the_budget(values in gradient(), r in 0.001f64..1.0) {
        let r = r.max(1.0 / values.len() as f64);
        let g = GradientVector::new(values.clone()).unwrap();
        let nonzero = g.nonzero_count();
        prop_assume!(nonzero > 0);
        let plan = solve_preservation_probs(&g, r).unwrap();
        for (&v, &p) in values.iter().zip(plan.probs()) {
            if v == 0.0 {
                prop_assert_eq!(p, 0.0);
            } else {
                prop_assert!(p > 0.0 && p <= 1.0);
            }
        }
        let s = values.len() as f64;
        let budget = (r * s).min(nonzero as f64);
        prop_assert!((plan.expected_kept() - budget).abs() <= 1e-9 * s);
    }

    #[test]
    fn larger_entries_are_kept_more_often(values in gradient(), r in 0.001f64..1.0) {
        let r = r.max(1.0 / values.len() as f64);
        let g = GradientVector::new(values.clone()).unwrap();
        prop_assume!(g.nonzero_count() > 0);
        let plan = solve_preservation_probs(&g, r).unwrap();
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if a.abs() > b.abs() {
                    prop_assert!(plan.probs()[i] >= plan.probs()[j]);
                }
            }
        }
    }

    #[test]
    fn encoding_is_sorted_and_rescaled(values in gradient(), r in 0.001f64..1.0, seed in any::<u64>(), bits in prop_oneof![Just(16u32), Just(32u32)]) {
        let r = r.max(1.0 / values.len() as f64);
        let g = GradientVector::new(values.clone()).unwrap();
        prop_assume!(g.nonzero_count() > 0);
        let plan = solve_preservation_probs(&g, r).unwrap();
        let mut rng = StreamFactory::new(seed).stream(Purpose::Sparsify, 0, 0);
        let update = sparsify(&g, &plan, bits, &mut rng).unwrap();
        prop_assert!(update.entries().windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert_eq!(update.payload_bits(), u64::from(bits) * update.kept_count() as u64);
        for &(i, v) in update.entries() {
            let i = i as usize;
            prop_assert!(values[i] != 0.0);
            prop_assert_eq!(v, values[i] / plan.probs()[i]);
        }
        let rebuilt = SparseUpdate::from_entries(update.entries().to_vec(), g.dim(), bits).unwrap();
        prop_assert_eq!(rebuilt, update);
    }

    #[test]
    fn variance_falls_as_the_ratio_grows(values in gradient()) {
        let g = GradientVector::new(values).unwrap();
        prop_assume!(g.nonzero_count() > 0);
        let mut last = f64::INFINITY;
        let floor = 1.0 / g.dim() as f64;
        for k in 1..=50 {
            let r = (k as f64 / 50.0).max(floor);
            let v = exact_variance(&g, &solve_preservation_probs(&g, r).unwrap()).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= last * (1.0 + 1e-9) + 1e-12);
            last = v;
        }
        prop_assert!(last.abs() <= 1e-9 * g.norm_sq());
    }

    #[test]
    fn approximate_coefficient_is_clamped(values in gradient(), r in 0.001f64..1.0) {
        let g = GradientVector::new(values).unwrap();
        prop_assume!(g.nonzero_count() > 0);
        let a = g.sparsity_ratio().unwrap();
        prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
        let delta = approx_variance_coefficient(&g, r).unwrap();
        prop_assert!(delta >= 0.0);
        if r >= a {
            prop_assert_eq!(delta, 0.0);
        } else {
            prop_assert!((delta - (a / r - 1.0)).abs() <= 1e-12 * (a / r));
        }
    }
}

#[test]
fn kept_count_concentrates_at_large_dimension() {
    let dim = 100_000;
    let factory = StreamFactory::new(11);
    let mut source = factory.stream(Purpose::Oracle, 0, 0);
    let g = GradientVector::new((0..dim).map(|_| StandardNormal.sample(&mut source)).collect()).unwrap();
    for r in [0.01, 0.1] {
        let plan = solve_preservation_probs(&g, r).unwrap();
        let within = (0..100)
            .filter(|&seed| {
                let kept = plan.sample_kept_count(&mut factory.stream(Purpose::Sparsify, 0, seed));
                (kept as f64 / dim as f64 - r).abs() <= 0.005
            })
            .count();
        assert!(within >= 99, "r = {r}: {within} of 100 within 0.005");
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(GradientVector::new(vec![]).is_err());
    assert!(GradientVector::new(vec![1.0, f64::NAN]).is_err());
    let g = GradientVector::new(vec![1.0, 2.0]).unwrap();
    for r in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(solve_preservation_probs(&g, r).is_err(), "ratio {r}");
    }
    let plan = solve_preservation_probs(&g, 0.5).unwrap();
    let short = GradientVector::new(vec![1.0]).unwrap();
    assert!(exact_variance(&short, &plan).is_err());
    assert!(SparseUpdate::from_entries(vec![(1, 1.0), (0, 1.0)], 2, 32).is_err());
    assert!(SparseUpdate::from_entries(vec![(2, 1.0)], 2, 32).is_err());
}
