//! Reference computations that reach the same quantities as the main
//! modules by a different route: generic root finding, golden-section and
//! grid search, fixed-point iteration and direct formula evaluation. Used by
//! the test suites and by `jcdo oracle`.

/// Fixed point of `x = exp(-x)`, which is `W(1)`.
pub fn omega_fixed_point() -> f64 {
    let mut x = 0.5f64;
    for _ in 0..10_000 {
        let next = (-x).exp();
        if next == x {
            break;
        }
        // Averaging damps the alternating approach to the fixed point.
        x = 0.5 * (x + next);
    }
    x
}

/// `lambda` solving `sum_i min(|g_i| / lambda, 1) = budget` by bisection.
/// Returns `None` when the budget is at least the number of non-zeros.
pub fn preservation_lambda(g: &[f64], budget: f64) -> Option<f64> {
    let nnz = g.iter().filter(|v| **v != 0.0).count();
    if budget >= nnz as f64 {
        return None;
    }
    let total = |lambda: f64| g.iter().map(|v| (v.abs() / lambda).min(1.0)).sum::<f64>();
    let mut lo = 0.0f64;
    let mut hi = g.iter().map(|v| v.abs()).sum::<f64>() / budget.max(f64::MIN_POSITIVE) * 2.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Minimiser of a unimodal `f` on `[a, b]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `(argmin, min)` of `f` over `n` evenly spaced points spanning `[a, b]`.
pub fn grid_argmin(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (f64, f64) {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| a + step * i as f64)
        .map(|x| (x, f(x)))
        .fold((a, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Plain-number description of one device and its link, detached from the
/// simulator's types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFixture {
    pub tx_power: f64,
    pub gain_mean: f64,
    pub bandwidth: f64,
    pub noise_psd: f64,
    pub bits: f64,
    pub dim: f64,
    pub compute_time: f64,
}

impl LinkFixture {
    fn snr(&self) -> f64 {
        self.tx_power * self.gain_mean / (self.bandwidth * self.noise_psd)
    }

    /// Outage probability complement at `(r, T)` written out directly.
    pub fn success(&self, r: f64, deadline: f64) -> f64 {
        let slack = deadline - self.compute_time;
        if slack <= 0.0 {
            return 0.0;
        }
        let bits_per_hz = self.bits * self.dim * r / (self.bandwidth * slack);
        (-(2f64.powf(bits_per_hz) - 1.0) / self.snr()).exp()
    }

    /// `g(r) = (B N0 / (P sigma^2)) (2^{b S r / (B (T - kappa/f))} - 1) - ln r`,
    /// i.e. `-ln(r q)`.
    pub fn ratio_cost(&self, r: f64, deadline: f64) -> f64 {
        let slack = deadline - self.compute_time;
        let bits_per_hz = self.bits * self.dim * r / (self.bandwidth * slack);
        (2f64.powf(bits_per_hz) - 1.0) / self.snr() - r.ln()
    }

    /// Ratio minimising [`Self::ratio_cost`] on `[1/S, 1]` by golden section.
    /// The search stops at 1000 bits per hertz, past which the cost
    /// overflows and is far above its value at `1/S`.
    pub fn ratio_by_search(&self, deadline: f64) -> f64 {
        let slack = deadline - self.compute_time;
        let lo = 1.0 / self.dim;
        let hi = (1000.0 * self.bandwidth * slack / (self.bits * self.dim)).clamp(lo, 1.0);
        golden_section_min(|r| self.ratio_cost(r, deadline), lo, hi, 1e-12)
    }
}

/// Planning objective `T (B_t + sum_m w_m (max(alpha_m / r_m, 1) / q_m - 1))`
/// evaluated term by term.
pub fn plan_objective(
    deadline: f64,
    bt: f64,
    devices: &[LinkFixture],
    weights: &[f64],
    alpha: &[f64],
    ratios: &[f64],
) -> f64 {
    let mut sum = bt;
    for m in 0..devices.len() {
        let q = devices[m].success(ratios[m], deadline);
        let coefficient = if alpha[m] > ratios[m] { alpha[m] / ratios[m] } else { 1.0 };
        sum += weights[m] * (coefficient / q - 1.0);
    }
    deadline * sum
}

/// Joint `(r, T)` minimiser of the single-device objective over a
/// logarithmic ratio grid on `[1/S, 1]` and a linear deadline grid.
pub fn joint_grid_single(
    dev: &LinkFixture,
    bt: f64,
    weight: f64,
    alpha: f64,
    deadline_range: (f64, f64),
    n: usize,
) -> (f64, f64, f64) {
    joint_grid_window(dev, bt, weight, alpha, deadline_range, ((1.0 / dev.dim).ln(), 0.0), n)
}

/// [`joint_grid_single`] over an `n x n` grid spanning `deadline_range` and
/// `ln_ratio_range`, with the breakpoint `r = alpha` added as an extra
/// ratio column when it lies in range.
pub fn joint_grid_window(
    dev: &LinkFixture,
    bt: f64,
    weight: f64,
    alpha: f64,
    deadline_range: (f64, f64),
    ln_ratio_range: (f64, f64),
    n: usize,
) -> (f64, f64, f64) {
    let (t_lo, t_hi) = deadline_range;
    let (r_lo, r_hi) = ln_ratio_range;
    let mut ratios: Vec<f64> = (0..n).map(|j| (r_lo + (r_hi - r_lo) * j as f64 / (n - 1) as f64).exp()).collect();
    if (r_lo..=r_hi).contains(&alpha.ln()) {
        ratios.push(alpha);
    }
    let mut best = (r_hi.exp(), t_hi, f64::INFINITY);
    for i in 0..n {
        let t = t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64;
        for &r in &ratios {
            let v = plan_objective(t, bt, std::slice::from_ref(dev), &[weight], &[alpha], &[r]);
            if v < best.2 {
                best = (r, t, v);
            }
        }
    }
    best
}

/// `B_t` written out for equal data sizes.
#[allow(clippy::too_many_arguments)]
pub fn bt_equal_devices(
    t: f64,
    nu: f64,
    chi: f64,
    mu: f64,
    ell: f64,
    g: f64,
    sigma_sq: f64,
    devices: usize,
    gap: f64,
    epsilon: f64,
) -> f64 {
    let a = ell * chi * chi / (3.0 * mu * chi - 2.0);
    let share = 1.0 / devices as f64;
    ell * (t + nu) / (mu * a * g) * (gap - mu / ell * epsilon) + devices as f64 * share * share * sigma_sq / g
}

/// Path loss in dB at `distance_km`.
pub fn path_loss_db(distance_km: f64) -> f64 {
    128.1 + 37.6 * distance_km.log10()
}
