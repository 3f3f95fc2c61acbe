use std::f64::consts::LN_2;

use jcdo_core::channel::{dbm_to_watts, PathLossSpec};
use jcdo_core::oracles::{self, LinkFixture};

const NAMES: [(&str, &str); 7] = [
    ("omega", "W(1) as the fixed point of x = exp(-x)"),
    ("bt", "B_t for ten equal devices, chi 10, nu 100, gap 1, eps 0.1"),
    ("path-loss", "log-distance path loss at 0.01, 0.1 and 0.5 km"),
    ("ratio", "ratio minimising -ln(r q) by golden section, closed-form value 0.3"),
    ("link", "success probability and best ratio for a 0.25 km, 0.5 GHz device"),
    ("lambda", "preservation threshold of [3, 1, 1, 1] at budget 2 by bisection"),
    ("deadline", "deadline grid search for three devices"),
];

pub fn print(name: &str) -> Result<(), String> {
    let values: Vec<(&str, f64)> = match name {
        "list" => {
            for (n, about) in NAMES {
                println!("{n:<10} {about}");
            }
            return Ok(());
        }
        "omega" => vec![("W(1)", oracles::omega_fixed_point())],
        "bt" => vec![("B_t", oracles::bt_equal_devices(1.0, 100.0, 10.0, 1.0, 1.0, 1.0, 0.5, 10, 1.0, 0.1))],
        "path-loss" => vec![
            ("PL(0.01 km) dB", oracles::path_loss_db(0.01)),
            ("PL(0.1 km) dB", oracles::path_loss_db(0.1)),
            ("PL(0.5 km) dB", oracles::path_loss_db(0.5)),
        ],
        "ratio" => {
            let fx = LinkFixture {
                tx_power: 1.0,
                gain_mean: 2.0 * LN_2 * 1e-14,
                bandwidth: 1e6,
                noise_psd: 1e-20,
                bits: 32.0,
                dim: 1000.0,
                compute_time: 1e-6,
            };
            vec![("r", fx.ratio_by_search(1e-6 + 0.3 * 32.0 * 1000.0 / 1e6))]
        }
        "link" => {
            let fx = reference_fixture(0.25, 5e8);
            let deadline = fx.compute_time + 0.05;
            vec![
                ("T_C s", fx.compute_time),
                ("T_D s", deadline),
                ("q(r = 0.01)", fx.success(0.01, deadline)),
                ("r*", fx.ratio_by_search(deadline)),
            ]
        }
        "lambda" => vec![("lambda", oracles::preservation_lambda(&[3.0, 1.0, 1.0, 1.0], 2.0).unwrap_or(f64::NAN))],
        "deadline" => {
            let devices = [reference_fixture(0.1, 8e8), reference_fixture(0.3, 4e8), reference_fixture(0.45, 2e8)];
            let weights = [1.0 / 9.0; 3];
            let alpha = [0.6; 3];
            let ratios = [0.05; 3];
            let lo = devices.iter().map(|d| d.compute_time).fold(0.0, f64::max) * (1.0 + 1e-6);
            let (t, v) =
                oracles::grid_argmin(|t| oracles::plan_objective(t, 0.5, &devices, &weights, &alpha, &ratios), lo, 1.0, 10_000);
            vec![("T_D s", t), ("objective", v)]
        }
        other => return Err(format!("unknown oracle {other:?}; try `jcdo oracle list`")),
    };
    for (label, v) in values {
        println!("{label:<16} {v:.12e}");
    }
    Ok(())
}

fn reference_fixture(distance_km: f64, cpu_freq: f64) -> LinkFixture {
    LinkFixture {
        tx_power: dbm_to_watts(18.0),
        gain_mean: PathLossSpec::default().gain_mean(distance_km),
        bandwidth: 1e6,
        noise_psd: dbm_to_watts(-174.0),
        bits: 32.0,
        dim: 1e5,
        compute_time: 5e6 / cpu_freq,
    }
}
