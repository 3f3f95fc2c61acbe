//! Per-round transmission planning: compression ratios and upload deadline.
//!
//! The planning objective for one round is
//!
//! ```text
//! J(T, r) = T * (B_t + sum_m w_m * max(alpha_m / (r_m q_m(r_m, T)) - 1, 0))
//! ```
//!
//! with `w_m = d_m^2 / d^2`. For fixed `T` each ratio has a closed-form
//! minimiser; for fixed ratios `J` is convex in `T` and is minimised by
//! bisection on the sign of its derivative. [`transmission_plan`] alternates
//! the two until the deadline settles.

mod baseline;
mod lambert;

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::channel::{compute_time, success_probability, ChannelError, DeviceProfile, LinkBudget};

pub use baseline::{baseline_plan, equal_outage_ratio, Baseline};
pub use lambert::{h, h_inverse, lambert_w, DomainError};

/// Lower clamp on `B_t`.
pub const B_FLOOR: f64 = 1e-6;
/// Plans with any success probability below this are rejected.
pub const Q_FLOOR: f64 = 1e-8;
pub const MAX_ALTERNATIONS: usize = 50;
pub const DEFAULT_ALT_TOLERANCE: f64 = 1e-6;
/// Default deadline cap as a multiple of the slowest computation time.
pub const DEFAULT_CAP_FACTOR: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("no feasible deadline: device {device} needs {compute} s to compute but the cap is {cap} s")]
    NoFeasibleDeadline { device: usize, compute: f64, cap: f64 },
    #[error("device {device}: success probability {q:e} is below the floor {Q_FLOOR:e}")]
    ProbabilityFloor { device: usize, q: f64 },
    #[error("planning objective is not finite at T_D = {deadline} s")]
    NonFinite { deadline: f64 },
    #[error("3 mu chi = {value} must exceed 2 for the convergence bound; raise chi")]
    LearningRateTooSmall { value: f64 },
    #[error("invalid {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("target success probability {0} is not reachable with a positive ratio")]
    InfeasibleTarget(f64),
    #[error("expected {expected} per-device values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("population is empty")]
    EmptyPopulation,
}

/// Inputs that stay fixed while one round's plan is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub b_t: f64,
    /// Per-device estimate of `||g||_1^2 / (S ||g||_2^2)`.
    pub alpha: Vec<f64>,
    /// Estimate of the squared gradient-norm bound.
    pub g: f64,
    pub epsilon: f64,
    pub prev_deadline: Option<f64>,
    pub alt_tolerance: f64,
    /// Upper end of the deadline search; `None` means
    /// [`DEFAULT_CAP_FACTOR`] times the slowest computation time.
    pub deadline_cap: Option<f64>,
}

impl OptimizerState {
    pub fn new(b_t: f64, alpha: Vec<f64>, g: f64, epsilon: f64) -> Result<Self, PlanError> {
        let state = Self {
            b_t,
            alpha,
            g,
            epsilon,
            prev_deadline: None,
            alt_tolerance: DEFAULT_ALT_TOLERANCE,
            deadline_cap: None,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |name, value| Err(PlanError::InvalidParameter { name, value });
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad("G", self.g);
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", self.epsilon);
        }
        if !(self.b_t.is_finite() && self.b_t > 0.0) {
            return bad("B_t", self.b_t);
        }
        if !(self.alt_tolerance > 0.0) {
            return bad("alt_tolerance", self.alt_tolerance);
        }
        if let Some(a) = self.alpha.iter().copied().find(|a| !(*a > 0.0 && *a <= 1.0)) {
            return bad("alpha", a);
        }
        Ok(())
    }

    /// Deadline cap for this population.
    pub fn cap(&self, profiles: &[DeviceProfile]) -> f64 {
        self.deadline_cap
            .unwrap_or_else(|| DEFAULT_CAP_FACTOR * slowest_compute(profiles).map_or(0.0, |(_, t)| t))
    }
}

/// One round's decision.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPlan {
    pub round: u64,
    /// Upload deadline in seconds; infinite when the server waits for every device.
    pub deadline: f64,
    pub ratios: Vec<f64>,
    pub success_probs: Vec<f64>,
    pub objective_value: f64,
    /// Number of ratio/deadline alternations performed.
    pub iterations: usize,
    /// The deadline search ended at the cap with the objective still falling.
    pub at_deadline_cap: bool,
    /// Objective after every half-step of the alternation.
    pub objective_trace: Vec<f64>,
}

impl TransmissionPlan {
    /// Plan with success probabilities evaluated at `(ratios, deadline)`.
    /// An infinite deadline means every upload succeeds.
    pub fn with_ratios(
        round: u64,
        deadline: f64,
        ratios: Vec<f64>,
        profiles: &[DeviceProfile],
        link: &LinkBudget,
        dim: usize,
    ) -> Result<Self, PlanError> {
        check_len(profiles.len(), ratios.len())?;
        let success_probs = if deadline.is_infinite() {
            vec![1.0; profiles.len()]
        } else {
            let probs = profiles
                .iter()
                .zip(&ratios)
                .map(|(dev, &r)| success_probability(dev, link, r, dim, deadline))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some((i, &q)) = probs.iter().enumerate().find(|(_, q)| **q < Q_FLOOR) {
                return Err(PlanError::ProbabilityFloor { device: profiles[i].id, q });
            }
            probs
        };
        Ok(Self {
            round,
            deadline,
            ratios,
            success_probs,
            objective_value: f64::INFINITY,
            iterations: 0,
            at_deadline_cap: false,
            objective_trace: Vec::new(),
        })
    }

    pub fn mean_ratio(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len().max(1) as f64
    }
}

/// Quantities entering `B_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtInputs<'a> {
    pub round: u64,
    pub chi: f64,
    pub nu: f64,
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub sgd_variance: f64,
    pub grad_bound: f64,
    /// `L(w_t) - L(w*)`.
    pub loss_gap: f64,
    pub epsilon: f64,
    pub data_sizes: &'a [usize],
}

/// `B_t = (t+nu)(3 mu chi - 2)/(mu chi^2 G) (gap - (mu/l) eps) + sum_m w_m sigma^2 / G`,
/// clamped below at [`B_FLOOR`].
pub fn compute_bt(inp: &BtInputs<'_>) -> Result<f64, PlanError> {
    let mu = inp.strong_convexity;
    let three_mu_chi = 3.0 * mu * inp.chi;
    if !(three_mu_chi > 2.0) {
        return Err(PlanError::LearningRateTooSmall { value: three_mu_chi });
    }
    if !(inp.grad_bound > 0.0) {
        return Err(PlanError::InvalidParameter { name: "G", value: inp.grad_bound });
    }
    if inp.data_sizes.is_empty() {
        return Err(PlanError::EmptyPopulation);
    }
    let weight_sum: f64 = data_weights(inp.data_sizes).iter().sum();
    let t = inp.round as f64;
    let progress = (t + inp.nu) * (three_mu_chi - 2.0) / (mu * inp.chi * inp.chi * inp.grad_bound)
        * (inp.loss_gap - mu / inp.smoothness * inp.epsilon);
    let noise = weight_sum * inp.sgd_variance / inp.grad_bound;
    let bt = progress + noise;
    if bt.is_nan() {
        return Err(PlanError::InvalidParameter { name: "B_t", value: bt });
    }
    Ok(bt.max(B_FLOOR))
}

/// `w_m = d_m^2 / d^2`.
pub fn data_weights(data_sizes: &[usize]) -> Vec<f64> {
    let total: f64 = data_sizes.iter().map(|&d| d as f64).sum();
    data_sizes.iter().map(|&d| (d as f64 / total).powi(2)).collect()
}

/// Compression ratio minimising `alpha / (r q(r))` at deadline `T_D`:
/// `r* = B (T_D - kappa/f) / (b S) * h^{-1}(P sigma^2 / (B N0 ln 2))`,
/// clamped to `[1/S, 1]`.
pub fn optimal_ratio(dev: &DeviceProfile, link: &LinkBudget, dim: usize, deadline: f64) -> Result<f64, PlanError> {
    if dim == 0 {
        return Err(PlanError::InvalidParameter { name: "dim", value: 0.0 });
    }
    let compute = compute_time(dev);
    let slack = deadline - compute;
    if !(slack > 0.0) {
        return Err(ChannelError::InfeasibleDeadline { device: dev.id, deadline, compute }.into());
    }
    let x = h_inverse(dev.mean_snr(link) / LN_2)?;
    let r = link.bandwidth * slack / (f64::from(dev.encode_bits) * dim as f64) * x;
    Ok(r.clamp(1.0 / dim as f64, 1.0))
}

/// Ratio used by the planner: [`optimal_ratio`] capped at `alpha`. Above
/// `alpha` the approximate compression error `alpha / r - 1` is already
/// clamped at zero, so a larger payload would only lower `q`.
pub fn planned_ratio(
    dev: &DeviceProfile,
    link: &LinkBudget,
    dim: usize,
    deadline: f64,
    alpha: f64,
) -> Result<f64, PlanError> {
    Ok(optimal_ratio(dev, link, dim, deadline)?.min(alpha.max(1.0 / dim as f64)))
}

/// Planning objective at deadline `T_D` for fixed ratios:
/// `T_D (B_t + sum_m w_m ((1 + delta_m) / q_m - 1))` with
/// `delta_m = max(alpha_m / r_m - 1, 0)`.
pub fn deadline_objective(
    deadline: f64,
    ratios: &[f64],
    profiles: &[DeviceProfile],
    link: &LinkBudget,
    state: &OptimizerState,
    dim: usize,
) -> Result<f64, PlanError> {
    check_len(profiles.len(), ratios.len())?;
    check_len(profiles.len(), state.alpha.len())?;
    let sizes: Vec<usize> = profiles.iter().map(|p| p.data_size).collect();
    let weights = data_weights(&sizes);
    let mut penalty = 0.0;
    for (m, dev) in profiles.iter().enumerate() {
        let q = success_probability(dev, link, ratios[m], dim, deadline)?;
        let term = if q > 0.0 { (state.alpha[m] / ratios[m]).max(1.0) / q - 1.0 } else { f64::INFINITY };
        penalty += weights[m] * term;
    }
    Ok(deadline * (state.b_t + penalty))
}

/// Result of the one-dimensional deadline search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineSolution {
    pub deadline: f64,
    pub at_cap: bool,
}

/// Minimises [`deadline_objective`] over `[max_m kappa/f_m (1 + 1e-6), T_max]`
/// by bisection on the sign of a central-difference derivative.
pub fn optimal_deadline(
    ratios: &[f64],
    profiles: &[DeviceProfile],
    link: &LinkBudget,
    state: &OptimizerState,
    dim: usize,
) -> Result<DeadlineSolution, PlanError> {
    let (lo, cap) = bracket(profiles, state)?;
    let objective = |t: f64| -> Result<f64, PlanError> {
        match deadline_objective(t, ratios, profiles, link, state, dim) {
            Ok(v) if v.is_nan() => Err(PlanError::NonFinite { deadline: t }),
            Ok(v) => Ok(v),
            Err(PlanError::Channel(ChannelError::InfeasibleDeadline { .. })) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    // Positive means the objective is increasing at `t`.
    let rising = |t: f64| -> Result<bool, PlanError> {
        let step = 1e-6 * t;
        let (left, right) = (objective(t - step)?, objective(t + step)?);
        Ok(match (left.is_finite(), right.is_finite()) {
            (true, true) => right - left > 0.0,
            (false, true) => false,
            (true, false) => true,
            (false, false) => false,
        })
    };

    if !rising(cap)? {
        return Ok(DeadlineSolution { deadline: cap, at_cap: true });
    }
    if rising(lo)? {
        return Ok(DeadlineSolution { deadline: lo, at_cap: false });
    }
    let (mut a, mut b) = (lo, cap);
    while b - a > 1e-9 * cap {
        let mid = 0.5 * (a + b);
        if rising(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    let deadline = 0.5 * (a + b);
    if !objective(deadline)?.is_finite() {
        return Err(PlanError::NonFinite { deadline });
    }
    Ok(DeadlineSolution { deadline, at_cap: false })
}

/// Alternates [`planned_ratio`] for every device and [`optimal_deadline`]
/// until the deadline moves by less than `state.alt_tolerance` or
/// [`MAX_ALTERNATIONS`] is reached. The returned ratios are the optimal ones
/// for the returned deadline.
pub fn transmission_plan(
    profiles: &[DeviceProfile],
    link: &LinkBudget,
    state: &OptimizerState,
    dim: usize,
    round: u64,
) -> Result<TransmissionPlan, PlanError> {
    state.validate()?;
    let (lo, cap) = bracket(profiles, state)?;
    let ratios_at = |t: f64| -> Result<Vec<f64>, PlanError> {
        profiles.iter().zip(&state.alpha).map(|(dev, &a)| planned_ratio(dev, link, dim, t, a)).collect()
    };
    let objective = |t: f64, r: &[f64]| deadline_objective(t, r, profiles, link, state, dim);

    let mut deadline = state.prev_deadline.unwrap_or(cap / 10.0).clamp(lo, cap);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut at_cap = false;
    loop {
        let before = deadline;
        let ratios = ratios_at(deadline)?;
        let obj_r = objective(deadline, &ratios)?;
        push_monotone(&mut trace, obj_r);
        let solution = optimal_deadline(&ratios, profiles, link, state, dim)?;
        let obj_t = objective(solution.deadline, &ratios)?;
        // Keep the old deadline if the bisection tolerance would cost anything.
        if obj_t <= obj_r {
            deadline = solution.deadline;
            at_cap = solution.at_cap;
        }
        push_monotone(&mut trace, obj_t.min(obj_r));
        iterations += 1;
        if (deadline - before).abs() < state.alt_tolerance || iterations >= MAX_ALTERNATIONS {
            break;
        }
    }

    let ratios = ratios_at(deadline)?;
    let objective_value = objective(deadline, &ratios)?;
    push_monotone(&mut trace, objective_value);
    let mut plan = TransmissionPlan::with_ratios(round, deadline, ratios, profiles, link, dim)?;
    plan.objective_value = objective_value;
    plan.iterations = iterations;
    plan.at_deadline_cap = at_cap;
    plan.objective_trace = trace;
    Ok(plan)
}

fn push_monotone(trace: &mut Vec<f64>, value: f64) {
    if let Some(&last) = trace.last() {
        debug_assert!(
            value <= last + 1e-12 * last.abs(),
            "alternating objective increased from {last} to {value}"
        );
    }
    trace.push(value);
}

/// Feasible deadline interval `[max kappa/f (1 + 1e-6), T_max]`.
fn bracket(profiles: &[DeviceProfile], state: &OptimizerState) -> Result<(f64, f64), PlanError> {
    let (device, compute) = slowest_compute(profiles).ok_or(PlanError::EmptyPopulation)?;
    let cap = state.cap(profiles);
    let lo = compute * (1.0 + 1e-6);
    if !(cap > lo) {
        return Err(PlanError::NoFeasibleDeadline { device, compute, cap });
    }
    Ok((lo, cap))
}

fn slowest_compute(profiles: &[DeviceProfile]) -> Option<(usize, f64)> {
    profiles
        .iter()
        .map(|p| (p.id, compute_time(p)))
        .fold(None, |best, (id, t)| match best {
            Some((_, bt)) if bt >= t => best,
            _ => Some((id, t)),
        })
}

fn check_len(expected: usize, actual: usize) -> Result<(), PlanError> {
    if expected != actual {
        return Err(PlanError::LengthMismatch { expected, actual });
    }
    Ok(())
}
