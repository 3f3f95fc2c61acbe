//! Unbiased stochastic sparsification.
//!
//! Each coordinate `g_i` is kept with probability `p_i` and rescaled to
//! `g_i / p_i`, so the compressed vector is an unbiased estimate of `g`. The
//! probabilities minimise the compression variance subject to an expected
//! kept fraction `r`, which gives `p_i = min(|g_i| / lambda, 1)`.
//!
//! Kept coordinates travel as `(index, value)` pairs and every pair is
//! charged `b` bits, so the expected payload is `b * r * S`.

use std::cmp::Ordering;

use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressionError {
    #[error("gradient has dimension zero")]
    ZeroDimension,
    #[error("gradient entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("gradient is identically zero")]
    EmptyGradient,
    #[error("invalid compression ratio {ratio} for dimension {dim}: need 0 < r <= 1 and r*S >= 1")]
    InvalidRatio { ratio: f64, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Dense real vector: a local gradient or a densified update.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self, CompressionError> {
        if values.is_empty() {
            return Err(CompressionError::ZeroDimension);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(CompressionError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    /// `||g||_1^2 / (S ||g||_2^2)`, in `[1/S, 1]` for non-zero `g`.
    pub fn sparsity_ratio(&self) -> Result<f64, CompressionError> {
        let l2 = self.norm_sq();
        if l2 == 0.0 {
            return Err(CompressionError::EmptyGradient);
        }
        let l1 = self.l1_norm();
        Ok(l1 * l1 / (self.dim() as f64 * l2))
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, weight: f64, other: &GradientVector) -> Result<(), CompressionError> {
        check_dim(self.dim(), other.dim())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += weight * b;
        }
        Ok(())
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<(), CompressionError> {
    if expected != actual {
        return Err(CompressionError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Preservation probabilities for one gradient at one ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsificationPlan {
    probs: Vec<f64>,
    lambda: f64,
    target_ratio: f64,
}

impl SparsificationPlan {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn target_ratio(&self) -> f64 {
        self.target_ratio
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// Expected number of kept coordinates, `sum p_i`.
    pub fn expected_kept(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Draws only the kept-count of one sparsification, consuming the
    /// random stream exactly as [`sparsify`] would.
    pub fn sample_kept_count<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let mut kept = 0;
        for &p in &self.probs {
            if keep(p, rng) {
                kept += 1;
            }
        }
        kept
    }
}

/// Sparse `(index, value)` encoding of a sparsified gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate {
    entries: Vec<(u32, f64)>,
    dim: usize,
    payload_bits: u64,
}

impl SparseUpdate {
    /// Builds an update from pre-encoded entries. Indices must be strictly
    /// increasing and below `dim`.
    pub fn from_entries(
        entries: Vec<(u32, f64)>,
        dim: usize,
        bits_per_entry: u32,
    ) -> Result<Self, CompressionError> {
        if dim == 0 {
            return Err(CompressionError::ZeroDimension);
        }
        let mut prev: Option<u32> = None;
        for &(i, v) in &entries {
            if (i as usize) >= dim || prev.is_some_and(|p| p >= i) {
                return Err(CompressionError::DimensionMismatch {
                    expected: dim,
                    actual: i as usize,
                });
            }
            if !v.is_finite() {
                return Err(CompressionError::NonFinite { index: i as usize, value: v });
            }
            prev = Some(i);
        }
        let payload_bits = entries.len() as u64 * u64::from(bits_per_entry);
        Ok(Self { entries, dim, payload_bits })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kept_count(&self) -> usize {
        self.entries.len()
    }

    pub fn payload_bits(&self) -> u64 {
        self.payload_bits
    }

    pub fn densify(&self) -> GradientVector {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        GradientVector(out)
    }

    /// `acc += weight * self` without materialising the dense vector.
    pub fn accumulate_into(&self, weight: f64, acc: &mut GradientVector) -> Result<(), CompressionError> {
        check_dim(acc.dim(), self.dim)?;
        for &(i, v) in &self.entries {
            acc.0[i as usize] += weight * v;
        }
        Ok(())
    }
}

/// Variance-minimising preservation probabilities for expected ratio `r`.
///
/// Sorts `|g_i|` in descending order (ties broken by index) and scans the
/// number of saturated entries `j`; the first `j` whose threshold
/// `lambda = sum_{i>j} |g_(i)| / (rS - j)` admits `|g_(j+1)| <= lambda` is
/// the KKT point. Zero entries get `p_i = 0`. When the budget `rS` covers
/// every non-zero entry, all of them are kept with probability one.
pub fn solve_preservation_probs(g: &GradientVector, r: f64) -> Result<SparsificationPlan, CompressionError> {
    let dim = g.dim();
    if !(r > 0.0 && r <= 1.0) || r * (dim as f64) < 1.0 - 1e-12 {
        return Err(CompressionError::InvalidRatio { ratio: r, dim });
    }
    let mut order: Vec<(f64, usize)> = g
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (v.abs(), i))
        .collect();
    if order.is_empty() {
        return Err(CompressionError::EmptyGradient);
    }
    let budget = r * dim as f64;
    let mut probs = vec![0.0; dim];

    if budget >= order.len() as f64 {
        let smallest = order.iter().map(|(a, _)| *a).fold(f64::INFINITY, f64::min);
        for &(_, i) in &order {
            probs[i] = 1.0;
        }
        return Ok(SparsificationPlan { probs, lambda: smallest, target_ratio: r });
    }

    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));

    // tail[j] = sum of |g_(i)| for i >= j (0-based).
    let mut tail = vec![0.0; order.len() + 1];
    for j in (0..order.len()).rev() {
        tail[j] = tail[j + 1] + order[j].0;
    }

    let mut saturated = 0;
    let mut lambda = f64::NAN;
    for (j, &(mag, _)) in order.iter().enumerate() {
        let room = budget - j as f64;
        if room <= 0.0 {
            break;
        }
        let candidate = tail[j] / room;
        if mag <= candidate {
            saturated = j;
            lambda = candidate;
            break;
        }
    }
    debug_assert!(lambda.is_finite() && lambda > 0.0);

    for (k, &(mag, i)) in order.iter().enumerate() {
        probs[i] = if k < saturated { 1.0 } else { (mag / lambda).min(1.0) };
    }
    Ok(SparsificationPlan { probs, lambda, target_ratio: r })
}

#[inline]
fn keep<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        // p * 2^64 as an integer threshold on a uniform u64.
        let threshold = (p * 18_446_744_073_709_551_616.0) as u64;
        rng.next_u64() < threshold
    }
}

/// Applies the Bernoulli mask-and-rescale operator and encodes the result.
///
/// Coordinates with `p_i = 1` and `p_i = 0` consume no randomness.
pub fn sparsify<R: RngCore + ?Sized>(
    g: &GradientVector,
    plan: &SparsificationPlan,
    bits_per_entry: u32,
    rng: &mut R,
) -> Result<SparseUpdate, CompressionError> {
    check_dim(plan.dim(), g.dim())?;
    // Every coordinate is written and the length advanced only when kept,
    // which avoids a data-dependent branch per coordinate.
    let mut entries = vec![(0u32, 0.0); g.dim()];
    let mut kept = 0;
    for (i, (&v, &p)) in g.values().iter().zip(&plan.probs).enumerate() {
        entries[kept] = (i as u32, v / p);
        kept += usize::from(keep(p, rng));
    }
    entries.truncate(kept);
    entries.shrink_to_fit();
    let payload_bits = entries.len() as u64 * u64::from(bits_per_entry);
    Ok(SparseUpdate { entries, dim: g.dim(), payload_bits })
}

/// Exact compression variance `E||S(g) - g||^2 = sum_{p_i<1} g_i^2 (1/p_i - 1)`.
pub fn exact_variance(g: &GradientVector, plan: &SparsificationPlan) -> Result<f64, CompressionError> {
    check_dim(plan.dim(), g.dim())?;
    Ok(g.values()
        .iter()
        .zip(&plan.probs)
        .filter(|(v, p)| **v != 0.0 && **p < 1.0)
        .map(|(v, p)| v * v * (1.0 / p - 1.0))
        .sum())
}

/// Approximate variance coefficient `delta = a/r - 1`, clamped at zero,
/// with `a = ||g||_1^2 / (S ||g||_2^2)`.
pub fn approx_variance_coefficient(g: &GradientVector, r: f64) -> Result<f64, CompressionError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(CompressionError::InvalidRatio { ratio: r, dim: g.dim() });
    }
    let a = g.sparsity_ratio()?;
    Ok((a / r - 1.0).max(0.0))
}
