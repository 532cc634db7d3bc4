//! Noisy iterative hard thresholding (N-IHT).
//!
//! Minimises `L(θ) = (1/2n) ||clip_R(y) - Xθ||²` over s-sparse vectors in the
//! L1 ball of radius `C`. Each of the `M` iterations takes a gradient step,
//! hard-thresholds through [`peel`](crate::peeling::peel) with budget
//! `(ε/M, δ/M)` and sensitivity `ηB/n`, then projects onto the ball.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{clip_vector, project_l1_in_place, DenseVector, DesignMatrix};
use crate::noise::{peeling_noise_scale, LaplaceScale, SeedPath};
use crate::peeling::{peel_with_scale, PrivacyBudget};

/// Whether a fit spends a privacy budget or runs exact hard thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Privacy {
    Private(PrivacyBudget),
    NonPrivate,
}

impl Privacy {
    pub fn budget(&self) -> Option<PrivacyBudget> {
        match self {
            Privacy::Private(b) => Some(*b),
            Privacy::NonPrivate => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NihtConfig {
    /// Sparsity `s` of every iterate.
    pub sparsity: usize,
    /// Number of iterations `M`.
    pub iterations: usize,
    /// Response truncation level `R`.
    pub truncation: f64,
    /// Noise base `B`; the peeling sensitivity is `step * noise_base / n`.
    pub noise_base: f64,
    /// Step size `η`.
    pub step: f64,
    /// L1 projection radius `C`.
    pub radius: f64,
    pub privacy: Privacy,
}

impl NihtConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.sparsity == 0 || self.sparsity > dim {
            return Err(invalid(format!("sparsity {} outside [1, {dim}]", self.sparsity)));
        }
        if self.iterations == 0 {
            return Err(invalid("N-IHT needs at least one iteration"));
        }
        if !(self.truncation >= 0.0) || !self.truncation.is_finite() {
            return Err(invalid(format!("truncation must be finite and >= 0, got {}", self.truncation)));
        }
        if !(self.noise_base >= self.truncation) || !self.noise_base.is_finite() {
            return Err(invalid(format!(
                "noise base {} must be finite and at least the truncation {}",
                self.noise_base, self.truncation
            )));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(invalid(format!("step size must be finite and > 0, got {}", self.step)));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(invalid(format!("projection radius must be finite and > 0, got {}", self.radius)));
        }
        Ok(())
    }

    /// Sensitivity handed to each peeling call for `n` samples: `ηB/n`.
    pub fn peeling_sensitivity(&self, n: usize) -> f64 {
        self.step * self.noise_base / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NihtFitReport {
    pub estimate: DenseVector,
    /// Realised peeling noise total per iteration.
    pub per_iteration_noise: Vec<f64>,
    pub iterations_run: usize,
    /// Sensitivity passed to peeling (zero in non-private mode).
    pub sensitivity: f64,
    /// Laplace scale used by every peeling call.
    pub noise_scale: f64,
}

impl NihtFitReport {
    pub fn total_noise(&self) -> f64 {
        self.per_iteration_noise.iter().sum()
    }
}

/// `(1/n) Xᵀ(Xθ - y)`, the gradient of `(1/2n)||y - Xθ||²`.
pub fn squared_loss_gradient(theta: &DenseVector, x: &DesignMatrix, y_clipped: &[f64]) -> Result<DenseVector> {
    check_shapes(x, y_clipped, theta.len())?;
    let mut grad = vec![0.0; x.cols()];
    gradient_into(theta.as_slice(), x, y_clipped, &mut grad);
    DenseVector::new(grad)
}

fn check_shapes(x: &DesignMatrix, y: &[f64], dim: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(invalid("design matrix has no rows"));
    }
    if y.len() != x.rows() {
        return Err(invalid(format!("{} responses for {} rows", y.len(), x.rows())));
    }
    if dim != x.cols() {
        return Err(invalid(format!("parameter of length {dim} for {} columns", x.cols())));
    }
    Ok(())
}

/// Gradient kernel; only the nonzero coordinates of `theta` enter `Xθ`.
fn gradient_into(theta: &[f64], x: &DesignMatrix, y: &[f64], grad: &mut [f64]) {
    let active: Vec<(usize, f64)> = theta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| (j, *v))
        .collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (row, &yi) in x.iter_rows().zip(y) {
        let fitted: f64 = active.iter().map(|&(j, v)| row[j] * v).sum();
        let residual = fitted - yi;
        if residual != 0.0 {
            for (g, &xij) in grad.iter_mut().zip(row) {
                *g += residual * xij;
            }
        }
    }
    let inv_n = 1.0 / x.rows() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
}

/// Per-coordinate bound on how far one gradient step `η∇L` can move when a
/// single row of the data is replaced: `η · 2 x_max (x_max C + R) / n`.
pub fn provable_gradient_sensitivity(step: f64, x_max: f64, radius: f64, truncation: f64, n: usize) -> f64 {
    step * 2.0 * x_max * (x_max * radius + truncation) / n as f64
}

pub fn niht_fit(
    x: &DesignMatrix,
    y: &[f64],
    cfg: &NihtConfig,
    init: &DenseVector,
    stream: &SeedPath,
) -> Result<NihtFitReport> {
    cfg.validate(x.cols())?;
    check_shapes(x, y, init.len())?;
    if init.l1_norm() > cfg.radius {
        return Err(invalid(format!(
            "initial point has L1 norm {} above the radius {}",
            init.l1_norm(),
            cfg.radius
        )));
    }

    let n = x.rows();
    let (sensitivity, scale) = match cfg.privacy {
        Privacy::Private(budget) => {
            let per_iteration = budget.split(cfg.iterations)?;
            let lambda = cfg.peeling_sensitivity(n);
            (lambda, peeling_noise_scale(lambda, cfg.sparsity, &per_iteration)?)
        }
        Privacy::NonPrivate => (0.0, LaplaceScale::ZERO),
    };

    let y_clipped = clip_vector(y, cfg.truncation);
    let mut theta = init.as_slice().to_vec();
    let mut grad = vec![0.0; x.cols()];
    let mut per_iteration_noise = Vec::with_capacity(cfg.iterations);

    for m in 0..cfg.iterations {
        gradient_into(&theta, x, &y_clipped, &mut grad);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.step * g;
        }
        if let Some(j) = theta.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("iterate diverged at iteration {m}, coordinate {j}")));
        }
        let peeled = peel_with_scale(&theta, cfg.sparsity, scale, &stream.child("iter", m as u64));
        per_iteration_noise.push(peeled.noise_magnitude);
        theta = peeled.vector.into_vec();
        project_l1_in_place(&mut theta, cfg.radius);
    }

    Ok(NihtFitReport {
        estimate: DenseVector::new(theta)?,
        per_iteration_noise,
        iterations_run: cfg.iterations,
        sensitivity,
        noise_scale: scale.xi(),
    })
}
