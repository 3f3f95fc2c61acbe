use jcdo_core::channel::{
    compute_time, data_rate, dbm_to_watts, draw_channel, make_population, success_probability, upload_time,
    ChannelDraw, DeviceProfile, LinkBudget, PathLossSpec, PopulationSpec,
};
use jcdo_core::compression::{solve_preservation_probs, GradientVector};
use jcdo_core::rng::{Purpose, StreamFactory};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn device() -> impl Strategy<Value = DeviceProfile> {
    (0.0f64..23.0, 0.01f64..0.5, 1e8f64..1e9, prop_oneof![Just(16u32), Just(32u32)]).prop_map(
        |(dbm, km, freq, bits)| DeviceProfile {
            id: 0,
            data_size: 100,
            tx_power: dbm_to_watts(dbm),
            channel_gain_mean: PathLossSpec::default().gain_mean(km),
            cpu_freq: freq,
            cpu_cycles_per_batch: 5e6,
            encode_bits: bits,
        },
    )
}

fn link() -> LinkBudget {
    LinkBudget::from_dbm_per_hz(1e6, -174.0).unwrap()
}

proptest! {
    #[test]
    fn success_falls_with_ratio_and_rises_with_deadline(dev in device(), slack in 1e-3f64..1.0, dim in 1_000usize..1_000_000) {
        let link = link();
        let deadline = compute_time(&dev) + slack;
        let mut last = 1.0;
        for k in 1..=40 {
            let q = success_probability(&dev, &link, k as f64 / 40.0, dim, deadline).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
            prop_assert!(q <= last);
            last = q;
        }
        let mut last = 0.0;
        for k in 1..=40 {
            let q = success_probability(&dev, &link, 0.1, dim, compute_time(&dev) + slack * k as f64 / 10.0).unwrap();
            prop_assert!(q >= last);
            last = q;
        }
    }

    #[test]
    fn rate_grows_with_gain_and_power(dev in device(), gain in 1e-16f64..1e-8, scale in 1.0f64..10.0) {
        let link = link();
        let draw = |g: f64| ChannelDraw { device_id: 0, gain_sq: g, round: 1 };
        let base = data_rate(&dev, &draw(gain), &link);
        prop_assert!(base > 0.0);
        prop_assert!(data_rate(&dev, &draw(gain * scale), &link) >= base);
        let louder = DeviceProfile { tx_power: dev.tx_power * scale, ..dev.clone() };
        prop_assert!(data_rate(&louder, &draw(gain), &link) >= base);
        prop_assert_eq!(data_rate(&dev, &draw(0.0), &link), 0.0);
    }

    #[test]
    fn upload_time_is_bits_over_rate(bits in 0u64..10_000_000, rate in 1.0f64..1e8) {
        let t = upload_time(bits, rate);
        if bits == 0 {
            prop_assert_eq!(t, 0.0);
        } else {
            prop_assert!((t - bits as f64 / rate).abs() <= 1e-15 * t);
            prop_assert!(upload_time(bits, 0.0).is_infinite());
        }
    }
}

#[test]
fn fading_power_is_exponential_with_the_path_loss_mean() {
    let dev = DeviceProfile {
        id: 3,
        data_size: 1,
        tx_power: 1.0,
        channel_gain_mean: 2.5e-11,
        cpu_freq: 1e9,
        cpu_cycles_per_batch: 1.0,
        encode_bits: 32,
    };
    let streams = StreamFactory::new(5);
    let n = 200_000;
    let draws: Vec<f64> = (0..n)
        .map(|t| draw_channel(&dev, t, &mut streams.stream(Purpose::Channel, 3, t)).gain_sq / dev.channel_gain_mean)
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    // Exp(1): mean 1, variance 1, P(x > 1) = 1/e.
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.03, "variance {var}");
    let above = draws.iter().filter(|&&x| x > 1.0).count() as f64 / n as f64;
    assert!((above - (-1.0f64).exp()).abs() < 0.005, "tail {above}");
    assert!(draws.iter().all(|&x| x >= 0.0));
}

#[test]
fn population_stays_in_its_ranges() {
    let spec = PopulationSpec {
        count: 50,
        tx_power_w: dbm_to_watts(18.0),
        cpu_cycles_per_batch: 5e6,
        encode_bits: 32,
        cpu_freq_range_hz: (1e8, 1e9),
        path_loss: PathLossSpec { min_km: 0.01, max_km: 0.5, ..PathLossSpec::default() },
    };
    let profiles = make_population(&spec, &mut StreamFactory::new(2).global(Purpose::Population)).unwrap();
    assert_eq!(profiles.len(), 50);
    let (lo, hi) = (spec.path_loss.gain_mean(0.5), spec.path_loss.gain_mean(0.01));
    for (id, p) in profiles.iter().enumerate() {
        assert_eq!(p.id, id);
        assert!((1e8..=1e9).contains(&p.cpu_freq));
        assert!(p.channel_gain_mean >= lo && p.channel_gain_mean <= hi);
        p.validate().unwrap();
    }
    assert!(make_population(&PopulationSpec { count: 0, ..spec.clone() }, &mut StreamFactory::new(2).global(Purpose::Population)).is_err());
    let inverted = PopulationSpec { cpu_freq_range_hz: (1e9, 1e8), ..spec };
    assert!(make_population(&inverted, &mut StreamFactory::new(2).global(Purpose::Population)).is_err());
}

#[test]
fn deadline_before_computation_is_infeasible() {
    let dev = DeviceProfile {
        id: 0,
        data_size: 1,
        tx_power: 0.1,
        channel_gain_mean: 1e-10,
        cpu_freq: 1e9,
        cpu_cycles_per_batch: 5e6,
        encode_bits: 32,
    };
    assert_eq!(compute_time(&dev), 5e-3);
    assert!(success_probability(&dev, &link(), 0.1, 1000, 5e-3).is_err());
    assert!(success_probability(&dev, &link(), 0.1, 1000, 5.001e-3).is_ok());
}

#[test]
fn simulated_success_approaches_the_analytic_value_as_dimension_grows() {
    let dev = DeviceProfile {
        id: 0,
        data_size: 100,
        tx_power: dbm_to_watts(18.0),
        channel_gain_mean: PathLossSpec::default().gain_mean(0.25),
        cpu_freq: 5e8,
        cpu_cycles_per_batch: 5e6,
        encode_bits: 32,
    };
    let (link, r, target) = (link(), 0.01, 0.9);
    let (seeds, uploads) = (20u64, 1000u64);
    let bits_per_hz = (1.0 - dev.mean_snr(&link) * f64::ln(target)).log2();
    let mut deviation = Vec::new();
    for dim in [1_000usize, 10_000, 100_000] {
        let deadline = compute_time(&dev) + 32.0 * dim as f64 * r / (link.bandwidth * bits_per_hz);
        let q = success_probability(&dev, &link, r, dim, deadline).unwrap();
        let mut total = 0.0;
        for seed in 0..seeds {
            let streams = StreamFactory::new(seed);
            let mut src = streams.stream(Purpose::Oracle, dim as u64, 0);
            let g = GradientVector::new((0..dim).map(|_| StandardNormal.sample(&mut src)).collect()).unwrap();
            let plan = solve_preservation_probs(&g, r).unwrap();
            let delivered = (0..uploads)
                .filter(|&t| {
                    let draw = draw_channel(&dev, t, &mut streams.stream(Purpose::Channel, 0, t));
                    let kept = plan.sample_kept_count(&mut streams.stream(Purpose::Sparsify, 0, t));
                    let t_u = upload_time(kept as u64 * 32, data_rate(&dev, &draw, &link));
                    compute_time(&dev) + t_u <= deadline
                })
                .count();
            total += (delivered as f64 / uploads as f64 - q).abs() / seeds as f64;
        }
        deviation.push(total);
    }
    assert!(deviation[2] <= deviation[0], "{deviation:?}");
}
