//! Plans for the comparison schemes.

use serde::{Deserialize, Serialize};

use super::{deadline_objective, optimal_deadline, planned_ratio, OptimizerState, PlanError, TransmissionPlan};
use crate::channel::{compute_time, ChannelError, DeviceProfile, LinkBudget};

/// Comparison schemes and their fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// Full-precision uploads; the round lasts until the slowest device finishes.
    Fedavg,
    /// One ratio for every device and a fixed deadline.
    FixedR { ratio: f64, deadline: f64 },
    /// Optimal per-device ratios at a fixed deadline.
    Co { deadline: f64 },
    /// Optimal deadline for one ratio shared by every device.
    Do { ratio: f64 },
    /// Per-device ratios that equalise the success probability at `target_q`.
    Fedtoe { deadline: f64, target_q: f64 },
}

pub fn baseline_plan(
    kind: Baseline,
    profiles: &[DeviceProfile],
    link: &LinkBudget,
    state: &OptimizerState,
    dim: usize,
    round: u64,
) -> Result<TransmissionPlan, PlanError> {
    if profiles.is_empty() {
        return Err(PlanError::EmptyPopulation);
    }
    let floor = 1.0 / dim as f64;
    let (deadline, ratios, at_cap) = match kind {
        Baseline::Fedavg => {
            return TransmissionPlan::with_ratios(round, f64::INFINITY, vec![1.0; profiles.len()], profiles, link, dim);
        }
        Baseline::FixedR { ratio, deadline } => {
            let r = checked_ratio(ratio)?.max(floor);
            (deadline, vec![r; profiles.len()], false)
        }
        Baseline::Co { deadline } => {
            let ratios = profiles
                .iter()
                .zip(&state.alpha)
                .map(|(dev, &a)| planned_ratio(dev, link, dim, deadline, a))
                .collect::<Result<Vec<_>, _>>()?;
            (deadline, ratios, false)
        }
        Baseline::Do { ratio } => {
            let ratios = vec![checked_ratio(ratio)?.max(floor); profiles.len()];
            let sol = optimal_deadline(&ratios, profiles, link, state, dim)?;
            (sol.deadline, ratios, sol.at_cap)
        }
        Baseline::Fedtoe { deadline, target_q } => {
            let ratios = profiles
                .iter()
                .map(|dev| equal_outage_ratio(dev, link, dim, deadline, target_q))
                .collect::<Result<Vec<_>, _>>()?;
            (deadline, ratios, false)
        }
    };
    let mut plan = TransmissionPlan::with_ratios(round, deadline, ratios, profiles, link, dim)?;
    plan.objective_value = deadline_objective(deadline, &plan.ratios, profiles, link, state, dim)?;
    plan.at_deadline_cap = at_cap;
    Ok(plan)
}

/// Ratio at which the success probability equals `target_q`:
/// `r = B (T_D - kappa/f) / (b S) * log2(1 - (P sigma^2 / (B N0)) ln q)`, clamped to `[1/S, 1]`.
pub fn equal_outage_ratio(
    dev: &DeviceProfile,
    link: &LinkBudget,
    dim: usize,
    deadline: f64,
    target_q: f64,
) -> Result<f64, PlanError> {
    let compute = compute_time(dev);
    let slack = deadline - compute;
    if !(slack > 0.0) {
        return Err(ChannelError::InfeasibleDeadline { device: dev.id, deadline, compute }.into());
    }
    let arg = 1.0 - dev.mean_snr(link) * target_q.ln();
    if !(target_q > 0.0 && arg > 1.0) {
        return Err(PlanError::InfeasibleTarget(target_q));
    }
    let r = link.bandwidth * slack / (f64::from(dev.encode_bits) * dim as f64) * arg.log2();
    Ok(r.clamp(1.0 / dim as f64, 1.0))
}

fn checked_ratio(r: f64) -> Result<f64, PlanError> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(PlanError::InvalidParameter { name: "ratio", value: r });
    }
    Ok(r)
}
