//! Federated training loop pieces: tasks, partitions, aggregation and the
//! global model update.

mod partition;
mod task;

use thiserror::Error;

use crate::channel::DeviceProfile;
use crate::compression::{CompressionError, GradientVector, SparseUpdate};
use crate::optimizer::{BtInputs, TransmissionPlan};

pub use partition::{make_partition, Partition, PartitionScheme};
pub use task::{local_gradient, make_task, LearningTask, TaskKind, TaskSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederatedError {
    #[error("invalid task parameter {name} = {value}")]
    InvalidSpec { name: &'static str, value: f64 },
    #[error("generated data was rank-deficient after {attempts} attempt(s)")]
    Degenerate { attempts: usize },
    #[error("batch size {batch} is not in 1..={available}")]
    BatchSize { batch: usize, available: usize },
    #[error("non-finite value in round {round}")]
    NonFinite { round: u64 },
    #[error("learning rate {eta} at round 1 exceeds 1/(2l) = {limit}")]
    LearningRate { eta: f64, limit: f64 },
    #[error("device {device} has success probability {q} in the plan")]
    InfeasiblePlan { device: usize, q: f64 },
    #[error("update from unknown device {0}")]
    UnknownDevice(usize),
    #[error(transparent)]
    Compression(#[from] CompressionError),
}

/// Server-side training state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub model: Vec<f64>,
    /// Index of the round about to run, starting at 1.
    pub round: u64,
    pub lr_chi: f64,
    pub lr_nu: f64,
    /// Running maximum of `||g_m||^2`.
    pub g_est: f64,
    /// Per-device running maximum of `||g_m||_1^2 / (S ||g_m||_2^2)`.
    pub alpha_est: Vec<f64>,
    pub cumulative_time: f64,
}

impl TrainingState {
    /// Checks that the first step size `chi / (1 + nu)` is at most `1/(2l)`.
    pub fn new(
        model: Vec<f64>,
        lr_chi: f64,
        lr_nu: f64,
        smoothness: f64,
        g_seed: f64,
        alpha_seed: Vec<f64>,
    ) -> Result<Self, FederatedError> {
        let eta = lr_chi / (1.0 + lr_nu);
        let limit = 1.0 / (2.0 * smoothness);
        if !(eta > 0.0 && eta <= limit * (1.0 + 1e-12)) {
            return Err(FederatedError::LearningRate { eta, limit });
        }
        Ok(Self { model, round: 1, lr_chi, lr_nu, g_est: g_seed, alpha_est: alpha_seed, cumulative_time: 0.0 })
    }

    /// `eta_t = chi / (t + nu)`.
    pub fn learning_rate(&self) -> f64 {
        self.lr_chi / (self.round as f64 + self.lr_nu)
    }

    /// `w <- w - eta_t * aggregated`, advance the round and fold this
    /// round's raw local gradients into the running estimators.
    pub fn apply_update(&mut self, aggregated: &GradientVector, raw: &[GradientVector]) -> Result<(), FederatedError> {
        if aggregated.dim() != self.model.len() {
            return Err(CompressionError::DimensionMismatch { expected: self.model.len(), actual: aggregated.dim() }.into());
        }
        let eta = self.learning_rate();
        for (w, g) in self.model.iter_mut().zip(aggregated.values()) {
            *w -= eta * g;
        }
        if self.model.iter().any(|w| !w.is_finite()) {
            return Err(FederatedError::NonFinite { round: self.round });
        }
        for (m, g) in raw.iter().enumerate() {
            self.g_est = self.g_est.max(g.norm_sq());
            if let (Ok(a), Some(slot)) = (g.sparsity_ratio(), self.alpha_est.get_mut(m)) {
                *slot = slot.max(a);
            }
        }
        self.round += 1;
        Ok(())
    }

    /// Inputs for `B_t` at the current round.
    pub fn bt_inputs<'a>(
        &self,
        task: &LearningTask,
        loss_gap: f64,
        epsilon: f64,
        data_sizes: &'a [usize],
    ) -> BtInputs<'a> {
        BtInputs {
            round: self.round,
            chi: self.lr_chi,
            nu: self.lr_nu,
            smoothness: task.smoothness,
            strong_convexity: task.strong_convexity,
            sgd_variance: task.sgd_variance_bound,
            grad_bound: self.g_est,
            loss_gap,
            epsilon,
            data_sizes,
        }
    }
}

/// Inverse-probability-weighted aggregate
/// `sum_{m in K} d_m / (d q_m) * update_m`, where `K` are the devices that
/// delivered.
pub fn aggregate(
    updates: &[(usize, SparseUpdate)],
    plan: &TransmissionPlan,
    profiles: &[DeviceProfile],
    dim: usize,
) -> Result<GradientVector, FederatedError> {
    if let Some((m, &q)) = plan.success_probs.iter().enumerate().find(|(_, q)| !(**q > 0.0 && **q <= 1.0)) {
        return Err(FederatedError::InfeasiblePlan { device: profiles.get(m).map_or(m, |p| p.id), q });
    }
    let total: f64 = profiles.iter().map(|p| p.data_size as f64).sum();
    let mut acc = GradientVector::zeros(dim);
    for (id, update) in updates {
        let m = profiles.iter().position(|p| p.id == *id).ok_or(FederatedError::UnknownDevice(*id))?;
        let weight = profiles[m].data_size as f64 / (total * plan.success_probs[m]);
        update.accumulate_into(weight, &mut acc)?;
    }
    Ok(acc)
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    pub deadline_used: f64,
    pub plan: TransmissionPlan,
    /// Ids of devices whose update arrived in time.
    pub delivered: Vec<usize>,
    pub compute_times: Vec<f64>,
    pub upload_times: Vec<f64>,
    /// Downlink time; always zero.
    pub broadcast_time: f64,
    pub loss: f64,
    pub loss_gap: f64,
    pub elapsed: f64,
    pub cumulative_time: f64,
}
