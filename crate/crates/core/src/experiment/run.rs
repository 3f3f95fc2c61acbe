//! One simulated training run.

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig};
use super::ExperimentError;
use crate::channel::{compute_time, data_rate, draw_channel, make_population, upload_time, DeviceProfile, LinkBudget};
use crate::compression::{solve_preservation_probs, sparsify, GradientVector, SparseUpdate};
use crate::federated::{
    aggregate, local_gradient, make_task, FederatedError, LearningTask, Partition, RoundOutcome, TrainingState,
};
use crate::optimizer::{baseline_plan, compute_bt, transmission_plan, OptimizerState, TransmissionPlan};
use crate::rng::{Purpose, StreamFactory};

/// End-of-run figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub name: String,
    pub scheme: String,
    pub seed: u64,
    pub rounds: u64,
    /// Simulated seconds until the loss gap first reached epsilon; absent
    /// when the run stopped on a budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_to_epsilon: Option<f64>,
    pub final_loss: f64,
    pub final_loss_gap: f64,
    pub total_time: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub outcomes: Vec<RoundOutcome>,
}

/// A config with its task, partition and population materialised.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub task: LearningTask,
    pub partition: Partition,
    pub profiles: Vec<DeviceProfile>,
    pub link: LinkBudget,
    /// State at round 1, with the gradient estimators seeded at the
    /// initial model.
    pub initial: TrainingState,
}

impl Experiment {
    /// Builds the task and population and checks the step-size conditions
    /// against the task constants.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let streams = StreamFactory::new(config.seed);
        let (mut task, partition) = make_task(&config.task, config.seed).map_err(ExperimentError::Setup)?;
        let link = config.population.link_budget()?;
        let mut profiles = if config.population.devices.is_empty() {
            let spec = config.population.population_spec(config.task.devices);
            make_population(&spec, &mut streams.global(Purpose::Population)).map_err(ConfigError::from)?
        } else {
            config.population.devices.clone()
        };
        for (dev, size) in profiles.iter_mut().zip(partition.data_sizes()) {
            dev.data_size = size;
            dev.validate().map_err(ConfigError::from)?;
        }

        let train = &config.training;
        let three_mu_chi = 3.0 * task.strong_convexity * train.chi;
        if !(three_mu_chi > 2.0) {
            return Err(ConfigError::Invalid {
                name: "training.chi",
                reason: format!("3 mu chi = {three_mu_chi} must exceed 2 (mu = {})", task.strong_convexity),
            }
            .into());
        }
        let model = vec![0.0; task.dim()];
        task.calibrate(&partition, &model, train.batch_size, train.calibration_resamples, &streams)
            .map_err(ExperimentError::Setup)?;
        let alpha_seed = (0..partition.devices())
            .map(|m| {
                let full = GradientVector::new(task.subset_gradient(partition.samples(m), &model))
                    .map_err(|e| ExperimentError::Setup(e.into()))?;
                full.sparsity_ratio().map_err(|e| ExperimentError::Setup(e.into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let initial =
            TrainingState::new(model, train.chi, train.nu, task.smoothness, task.grad_norm_bound, alpha_seed)
                .map_err(ExperimentError::Setup)?;
        Ok(Self { config: config.clone(), task, partition, profiles, link, initial })
    }

    /// Runs rounds until the loss gap reaches epsilon or a budget runs out.
    pub fn run(&self) -> Result<RunResult, ExperimentError> {
        self.run_with(|_| {})
    }

    /// [`Experiment::run`], calling `on_round` after every round.
    pub fn run_with<F: FnMut(&RoundOutcome)>(&self, mut on_round: F) -> Result<RunResult, ExperimentError> {
        let cfg = &self.config;
        let train = &cfg.training;
        let streams = StreamFactory::new(cfg.seed);
        let sizes = self.partition.data_sizes();
        let dim = self.task.dim();
        let mut state = self.initial.clone();
        let mut outcomes = Vec::new();
        let mut gap = self.task.loss_gap(&state.model);
        let mut loss = self.task.loss(&state.model);
        let mut prev_deadline = None;
        let mut time_to_epsilon = (gap <= train.epsilon).then_some(0.0);

        while time_to_epsilon.is_none() && state.round <= train.max_rounds && state.cumulative_time < train.max_time {
            let round = state.round;
            let plan = self.plan(&state, gap, prev_deadline, &sizes)?;
            if plan.deadline.is_finite() {
                prev_deadline = Some(plan.deadline);
            }

            let mut delivered = Vec::new();
            let mut updates = Vec::new();
            let mut raw = Vec::with_capacity(self.profiles.len());
            let mut compute_times = Vec::with_capacity(self.profiles.len());
            let mut upload_times = Vec::with_capacity(self.profiles.len());
            for (m, dev) in self.profiles.iter().enumerate() {
                let device = m as u64;
                let t_c = compute_time(dev);
                let draw = draw_channel(dev, round, &mut streams.stream(Purpose::Channel, device, round));
                let rate = data_rate(dev, &draw, &self.link);
                let mut rng = streams.stream(Purpose::MiniBatch, device, round);
                let g = local_gradient(&self.task, &self.partition, m, &state.model, train.batch_size, &mut rng)
                    .map_err(|e| in_round(e, round))?;
                let update = compress(&g, plan.ratios[m], dev.encode_bits, &streams, device, round)
                    .map_err(|e| in_round(e, round))?;
                let t_u = upload_time(update.payload_bits(), rate);
                if !cfg.scheme.uses_deadline() || t_c + t_u <= plan.deadline {
                    delivered.push(dev.id);
                    updates.push((dev.id, update));
                }
                compute_times.push(t_c);
                upload_times.push(t_u);
                raw.push(g);
            }

            let elapsed = if cfg.scheme.uses_deadline() {
                plan.deadline
            } else {
                compute_times.iter().zip(&upload_times).map(|(c, u)| c + u).fold(0.0, f64::max)
            };
            let aggregated = aggregate(&updates, &plan, &self.profiles, dim).map_err(|e| in_round(e, round))?;
            state.apply_update(&aggregated, &raw).map_err(|e| in_round(e, round))?;
            state.cumulative_time += elapsed;
            loss = self.task.loss(&state.model);
            gap = self.task.loss_gap(&state.model);
            if !(loss.is_finite() && gap.is_finite()) {
                return Err(ExperimentError::Numeric { round, detail: format!("loss = {loss}, gap = {gap}") });
            }
            let outcome = RoundOutcome {
                round,
                deadline_used: plan.deadline,
                plan,
                delivered,
                compute_times,
                upload_times,
                broadcast_time: 0.0,
                loss,
                loss_gap: gap,
                elapsed,
                cumulative_time: state.cumulative_time,
            };
            on_round(&outcome);
            outcomes.push(outcome);
            if gap <= train.epsilon {
                time_to_epsilon = Some(state.cumulative_time);
            }
        }

        let summary = RunSummary {
            name: cfg.label(),
            scheme: cfg.scheme.label().to_string(),
            seed: cfg.seed,
            rounds: outcomes.len() as u64,
            time_to_epsilon,
            final_loss: loss,
            final_loss_gap: gap,
            total_time: state.cumulative_time,
        };
        Ok(RunResult { summary, outcomes })
    }

    /// The scheme's plan for the round `state` is about to run.
    pub fn plan(
        &self,
        state: &TrainingState,
        loss_gap: f64,
        prev_deadline: Option<f64>,
        data_sizes: &[usize],
    ) -> Result<TransmissionPlan, ExperimentError> {
        let train = &self.config.training;
        let round = state.round;
        let plan_err = |source| ExperimentError::Plan { round, source };
        let b_t = compute_bt(&state.bt_inputs(&self.task, loss_gap, train.epsilon, data_sizes)).map_err(plan_err)?;
        let mut opt = OptimizerState::new(b_t, state.alpha_est.clone(), state.g_est, train.epsilon).map_err(plan_err)?;
        opt.prev_deadline = prev_deadline;
        opt.alt_tolerance = train.alt_tolerance;
        opt.deadline_cap = train.deadline_cap;
        let dim = self.task.dim();
        match self.config.scheme.baseline() {
            None => transmission_plan(&self.profiles, &self.link, &opt, dim, round),
            Some(kind) => baseline_plan(kind, &self.profiles, &self.link, &opt, dim, round),
        }
        .map_err(plan_err)
    }
}

/// Prepares and runs one experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult, ExperimentError> {
    Experiment::prepare(config)?.run()
}

fn compress(
    g: &GradientVector,
    ratio: f64,
    bits: u32,
    streams: &StreamFactory,
    device: u64,
    round: u64,
) -> Result<SparseUpdate, FederatedError> {
    if g.nonzero_count() == 0 {
        return Ok(SparseUpdate::from_entries(Vec::new(), g.dim(), bits)?);
    }
    let plan = solve_preservation_probs(g, ratio)?;
    Ok(sparsify(g, &plan, bits, &mut streams.stream(Purpose::Sparsify, device, round))?)
}

fn in_round(err: FederatedError, round: u64) -> ExperimentError {
    match err {
        FederatedError::NonFinite { .. } => ExperimentError::Numeric { round, detail: err.to_string() },
        FederatedError::InfeasiblePlan { .. } => ExperimentError::Infeasible { round, source: err },
        other => ExperimentError::Federated { round, source: other },
    }
}
