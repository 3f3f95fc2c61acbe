//! Synthetic strongly convex learning tasks.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::partition::{make_partition, Partition, PartitionScheme};
use super::FederatedError;
use crate::compression::GradientVector;
use crate::rng::{Purpose, SimRng, StreamFactory};

const MAX_ATTEMPTS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Least squares, `f_j(w) = (a_j . w - y_j)^2 / 2`.
    Quadratic,
    /// Binary cross-entropy plus `(reg/2) ||w||^2`.
    LogisticL2,
}

/// Shape of a generated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Model dimension, also the gradient dimension `S`.
    pub dim: usize,
    pub samples: usize,
    pub devices: usize,
    /// Label groups. Quadratic samples in group `k` follow their own
    /// regression vector; logistic tasks always have two.
    #[serde(default = "default_classes")]
    pub classes: usize,
    /// Spread of the per-group regression vectors around a shared one.
    #[serde(default)]
    pub heterogeneity: f64,
    /// Standard deviation of the target noise (quadratic only).
    #[serde(default)]
    pub noise: f64,
    /// L2 weight; sets the strong-convexity constant of logistic tasks.
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    pub partition: PartitionScheme,
}

fn default_classes() -> usize {
    10
}

fn default_regularization() -> f64 {
    0.1
}

/// A dataset together with the constants the convergence analysis needs.
#[derive(Debug, Clone)]
pub struct LearningTask {
    kind: TaskKind,
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    labels: Vec<usize>,
    regularization: f64,
    /// Row-major `A^T A / n` (quadratic only).
    hessian: Vec<f64>,
    optimum: Vec<f64>,
    pub optimum_loss: f64,
    pub smoothness: f64,
    pub strong_convexity: f64,
    /// Bound on `E||g_m - grad L_m||^2`, set by [`LearningTask::calibrate`].
    pub sgd_variance_bound: f64,
    /// Bound on `E||g_m||^2`, set by [`LearningTask::calibrate`].
    pub grad_norm_bound: f64,
}

/// Builds a task and its partition. Rank-deficient draws are regenerated
/// from a fresh stream, up to five times.
pub fn make_task(spec: &TaskSpec, seed: u64) -> Result<(LearningTask, Partition), FederatedError> {
    validate_spec(spec)?;
    let streams = StreamFactory::new(seed);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = streams.stream(Purpose::Task, 0, attempt);
        let task = match spec.kind {
            TaskKind::Quadratic => generate_quadratic(spec, &mut rng),
            TaskKind::LogisticL2 => generate_logistic(spec, &mut rng),
        };
        match task {
            Ok(task) => {
                let mut rng = streams.global(Purpose::Partition);
                let partition = make_partition(&task.labels, spec.devices, spec.partition, &mut rng)?;
                return Ok((task, partition));
            }
            Err(FederatedError::Degenerate { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(FederatedError::Degenerate { attempts: MAX_ATTEMPTS as usize })
}

fn validate_spec(spec: &TaskSpec) -> Result<(), FederatedError> {
    let bad = |name: &'static str, value: f64| Err(FederatedError::InvalidSpec { name, value });
    if spec.dim == 0 {
        return bad("dim", 0.0);
    }
    if spec.devices == 0 || spec.devices > spec.samples {
        return bad("devices", spec.devices as f64);
    }
    if spec.classes == 0 {
        return bad("classes", 0.0);
    }
    if !(spec.heterogeneity >= 0.0 && spec.heterogeneity.is_finite()) {
        return bad("heterogeneity", spec.heterogeneity);
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return bad("noise", spec.noise);
    }
    if spec.kind == TaskKind::LogisticL2 && !(spec.regularization > 0.0 && spec.regularization.is_finite()) {
        return bad("regularization", spec.regularization);
    }
    Ok(())
}

fn normal_vec(rng: &mut SimRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z }).collect()
}

fn generate_quadratic(spec: &TaskSpec, rng: &mut SimRng) -> Result<LearningTask, FederatedError> {
    let (n, p) = (spec.samples, spec.dim);
    let base = normal_vec(rng, p, 1.0);
    let group_vectors: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let shift = normal_vec(rng, p, spec.heterogeneity);
            base.iter().zip(shift).map(|(b, s)| b + s).collect()
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|j| j % spec.classes).collect();
    labels.shuffle(rng);
    let features = normal_vec(rng, n * p, 1.0);
    let targets = (0..n)
        .map(|j| {
            let row = &features[j * p..(j + 1) * p];
            let noise: f64 = StandardNormal.sample(rng);
            dot(row, &group_vectors[labels[j]]) + spec.noise * noise
        })
        .collect();
    LearningTask::quadratic(features, targets, labels, p)
}

fn generate_logistic(spec: &TaskSpec, rng: &mut SimRng) -> Result<LearningTask, FederatedError> {
    let (n, p) = (spec.samples, spec.dim);
    let truth = normal_vec(rng, p, 1.0);
    let scale = 1.0 / (p as f64).sqrt();
    let features = normal_vec(rng, n * p, scale);
    let mut labels = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for j in 0..n {
        let z = dot(&features[j * p..(j + 1) * p], &truth);
        let u: f64 = rand::Rng::random(rng);
        let positive = u < sigmoid(z);
        labels.push(usize::from(positive));
        targets.push(if positive { 1.0 } else { -1.0 });
    }
    LearningTask::logistic(features, targets, labels, p, spec.regularization)
}

impl LearningTask {
    /// Least-squares task `L(w) = (1/2n) sum_j (a_j . w - y_j)^2` over the
    /// given rows. Fails when `A^T A` is numerically singular.
    pub fn quadratic(
        features: Vec<f64>,
        targets: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
    ) -> Result<Self, FederatedError> {
        let n = check_shape(&features, &targets, &labels, dim)?;
        let a = DMatrix::from_row_slice(n, dim, &features);
        let hessian = a.tr_mul(&a) / n as f64;
        let rhs = a.tr_mul(&DVector::from_column_slice(&targets)) / n as f64;
        let eig = hessian.clone().symmetric_eigen();
        let smoothness = eig.eigenvalues.max();
        let strong_convexity = eig.eigenvalues.min();
        if !(strong_convexity > 1e-10 * smoothness) {
            return Err(FederatedError::Degenerate { attempts: 1 });
        }
        let optimum = hessian
            .clone()
            .cholesky()
            .ok_or(FederatedError::Degenerate { attempts: 1 })?
            .solve(&rhs);
        let mut task = Self {
            kind: TaskKind::Quadratic,
            dim,
            features,
            targets,
            labels,
            regularization: 0.0,
            hessian: hessian.transpose().as_slice().to_vec(),
            optimum: optimum.as_slice().to_vec(),
            optimum_loss: 0.0,
            smoothness,
            strong_convexity,
            sgd_variance_bound: 0.0,
            grad_norm_bound: 0.0,
        };
        task.optimum_loss = task.loss_direct(&task.optimum);
        Ok(task)
    }

    /// Regularised logistic regression with targets in `{-1, +1}`.
    pub fn logistic(
        features: Vec<f64>,
        targets: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        regularization: f64,
    ) -> Result<Self, FederatedError> {
        let n = check_shape(&features, &targets, &labels, dim)?;
        let a = DMatrix::from_row_slice(n, dim, &features);
        let gram = a.tr_mul(&a) / n as f64;
        let top = gram.symmetric_eigen().eigenvalues.max();
        let mut task = Self {
            kind: TaskKind::LogisticL2,
            dim,
            features,
            targets,
            labels,
            regularization,
            hessian: Vec::new(),
            optimum: vec![0.0; dim],
            optimum_loss: 0.0,
            smoothness: top / 4.0 + regularization,
            strong_convexity: regularization,
            sgd_variance_bound: 0.0,
            grad_norm_bound: 0.0,
        };
        task.optimum = task.newton_solve(&a)?;
        task.optimum_loss = task.loss(&task.optimum);
        Ok(task)
    }

    fn newton_solve(&self, a: &DMatrix<f64>) -> Result<Vec<f64>, FederatedError> {
        let n = self.samples() as f64;
        let mut w = vec![0.0; self.dim];
        for _ in 0..100 {
            let grad = self.gradient(&w);
            if norm_sq(&grad).sqrt() <= 1e-10 {
                return Ok(w);
            }
            let curvature: Vec<f64> = (0..self.samples())
                .map(|j| {
                    let s = sigmoid(self.margin(j, &w));
                    s * (1.0 - s) / n
                })
                .collect();
            let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, k| a[(i, k)] * curvature[i]);
            let mut h = a.tr_mul(&scaled);
            for k in 0..self.dim {
                h[(k, k)] += self.regularization;
            }
            let step = h
                .cholesky()
                .ok_or(FederatedError::Degenerate { attempts: 1 })?
                .solve(&DVector::from_column_slice(&grad));
            for (wk, sk) in w.iter_mut().zip(step.iter()) {
                *wk -= sk;
            }
        }
        Err(FederatedError::Degenerate { attempts: 1 })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.targets.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    fn margin(&self, j: usize, w: &[f64]) -> f64 {
        let z = dot(self.row(j), w);
        match self.kind {
            TaskKind::Quadratic => z,
            TaskKind::LogisticL2 => self.targets[j] * z,
        }
    }

    fn sample_loss(&self, j: usize, w: &[f64]) -> f64 {
        match self.kind {
            TaskKind::Quadratic => 0.5 * (dot(self.row(j), w) - self.targets[j]).powi(2),
            TaskKind::LogisticL2 => softplus(-self.margin(j, w)),
        }
    }

    /// Adds `scale * grad f_j(w)` to `out`, excluding the regulariser.
    fn add_sample_gradient(&self, j: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let coef = match self.kind {
            TaskKind::Quadratic => dot(self.row(j), w) - self.targets[j],
            TaskKind::LogisticL2 => -self.targets[j] * sigmoid(-self.margin(j, w)),
        };
        for (o, a) in out.iter_mut().zip(self.row(j)) {
            *o += scale * coef * a;
        }
    }

    fn regularizer_loss(&self, w: &[f64]) -> f64 {
        0.5 * self.regularization * norm_sq(w)
    }

    /// Mean loss over `samples`.
    pub fn subset_loss(&self, samples: &[usize], w: &[f64]) -> f64 {
        let data = samples.iter().map(|&j| self.sample_loss(j, w)).sum::<f64>() / samples.len() as f64;
        data + self.regularizer_loss(w)
    }

    /// Mean gradient over `samples`.
    pub fn subset_gradient(&self, samples: &[usize], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let scale = 1.0 / samples.len() as f64;
        for &j in samples {
            self.add_sample_gradient(j, w, scale, &mut out);
        }
        for (o, wk) in out.iter_mut().zip(w) {
            *o += self.regularization * wk;
        }
        out
    }

    fn loss_direct(&self, w: &[f64]) -> f64 {
        let all: Vec<usize> = (0..self.samples()).collect();
        self.subset_loss(&all, w)
    }

    /// Global loss `L(w)`.
    pub fn loss(&self, w: &[f64]) -> f64 {
        match self.kind {
            TaskKind::Quadratic => self.optimum_loss + self.loss_gap(w),
            TaskKind::LogisticL2 => self.loss_direct(w),
        }
    }

    /// `L(w) - L(w*)`. Quadratic tasks use `(w-w*)^T H (w-w*) / 2`, which
    /// does not lose precision near the optimum.
    pub fn loss_gap(&self, w: &[f64]) -> f64 {
        match self.kind {
            TaskKind::Quadratic => {
                let e: Vec<f64> = w.iter().zip(&self.optimum).map(|(a, b)| a - b).collect();
                let p = self.dim;
                let quad: f64 = (0..p).map(|i| e[i] * dot(&self.hessian[i * p..(i + 1) * p], &e)).sum();
                0.5 * quad
            }
            TaskKind::LogisticL2 => self.loss_direct(w) - self.optimum_loss,
        }
    }

    /// Global gradient `grad L(w)`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        match self.kind {
            TaskKind::Quadratic => {
                let e: Vec<f64> = w.iter().zip(&self.optimum).map(|(a, b)| a - b).collect();
                let p = self.dim;
                (0..p).map(|i| dot(&self.hessian[i * p..(i + 1) * p], &e)).collect()
            }
            TaskKind::LogisticL2 => {
                let all: Vec<usize> = (0..self.samples()).collect();
                self.subset_gradient(&all, w)
            }
        }
    }

    /// Estimates the mini-batch noise and gradient-norm bounds at `w` from
    /// `resamples` batches per device, keeping the maximum over devices.
    pub fn calibrate(
        &mut self,
        partition: &Partition,
        w: &[f64],
        batch_size: usize,
        resamples: usize,
        streams: &StreamFactory,
    ) -> Result<(), FederatedError> {
        let mut variance = 0.0f64;
        let mut second_moment = 0.0f64;
        for dev in 0..partition.devices() {
            let full = self.subset_gradient(partition.samples(dev), w);
            let mut rng = streams.stream(Purpose::VarianceProbe, dev as u64, 0);
            let (mut var_sum, mut sq_sum) = (0.0, 0.0);
            for _ in 0..resamples {
                let g = local_gradient(self, partition, dev, w, batch_size, &mut rng)?;
                var_sum += g.values().iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                sq_sum += g.norm_sq();
            }
            variance = variance.max(var_sum / resamples as f64);
            second_moment = second_moment.max(sq_sum / resamples as f64);
        }
        self.sgd_variance_bound = variance;
        self.grad_norm_bound = second_moment;
        Ok(())
    }
}

fn check_shape(features: &[f64], targets: &[f64], labels: &[usize], dim: usize) -> Result<usize, FederatedError> {
    let n = targets.len();
    if dim == 0 || n == 0 || features.len() != n * dim || labels.len() != n {
        return Err(FederatedError::InvalidSpec { name: "data shape", value: features.len() as f64 });
    }
    if features.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(FederatedError::NonFinite { round: 0 });
    }
    Ok(n)
}

/// Mini-batch gradient of device `dev`'s local loss. A batch covering the
/// whole local dataset is the exact local gradient and consumes no randomness.
pub fn local_gradient<R: RngCore + ?Sized>(
    task: &LearningTask,
    partition: &Partition,
    dev: usize,
    w: &[f64],
    batch_size: usize,
    rng: &mut R,
) -> Result<GradientVector, FederatedError> {
    let samples = partition.samples(dev);
    if batch_size == 0 || batch_size > samples.len() {
        return Err(FederatedError::BatchSize { batch: batch_size, available: samples.len() });
    }
    let grad = if batch_size == samples.len() {
        task.subset_gradient(samples, w)
    } else {
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, samples.len(), batch_size)
            .into_iter()
            .map(|i| samples[i])
            .collect();
        picked.sort_unstable();
        task.subset_gradient(&picked, w)
    };
    GradientVector::new(grad).map_err(|_| FederatedError::NonFinite { round: 0 })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}
