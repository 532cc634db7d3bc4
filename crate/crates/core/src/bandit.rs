//! Sparse linear contextual bandit simulator.
//!
//! Each step draws one context per arm from an AR(1) Gaussian design
//! (`Σ_ij = φ^|i-j|`), clamped coordinatewise to `[-x_max, x_max]`. Pulling an
//! arm returns `⟨x_arm, β*⟩ + N(0, σ²)` and the noiseless regret against the
//! best arm on the same slate.

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{dot, DenseVector};
use crate::noise::SeedPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    arms: usize,
    s_star: usize,
    beta_star: DenseVector,
    x_max: f64,
    b_max: f64,
    ar_phi: f64,
    noise_sigma: f64,
}

impl BanditInstance {
    pub fn new(
        arms: usize,
        beta_star: DenseVector,
        x_max: f64,
        b_max: f64,
        ar_phi: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if arms < 2 {
            return Err(invalid(format!("need at least two arms, got {arms}")));
        }
        if beta_star.is_empty() {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(invalid(format!("x_max must be finite and > 0, got {x_max}")));
        }
        if !(b_max > 0.0) || !b_max.is_finite() {
            return Err(invalid(format!("b_max must be finite and > 0, got {b_max}")));
        }
        if beta_star.l1_norm() > b_max * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "||beta*||_1 = {} exceeds b_max = {b_max}",
                beta_star.l1_norm()
            )));
        }
        if !(ar_phi > -1.0 && ar_phi < 1.0) {
            return Err(invalid(format!("AR parameter must lie in (-1, 1), got {ar_phi}")));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(invalid(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
        }
        Ok(Self {
            arms,
            s_star: beta_star.l0_norm(),
            beta_star,
            x_max,
            b_max,
            ar_phi,
            noise_sigma,
        })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn dim(&self) -> usize {
        self.beta_star.len()
    }

    pub fn s_star(&self) -> usize {
        self.s_star
    }

    pub fn beta_star(&self) -> &DenseVector {
        &self.beta_star
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    pub fn ar_phi(&self) -> f64 {
        self.ar_phi
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Noiseless mean reward of every arm on `slate`.
    pub fn mean_rewards(&self, slate: &ContextSlate) -> Vec<f64> {
        slate.contexts.iter().map(|x| self.beta_star.dot(x)).collect()
    }
}

/// One context per arm for a single time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSlate {
    contexts: Vec<Vec<f64>>,
}

impl ContextSlate {
    pub fn new(contexts: Vec<Vec<f64>>) -> Result<Self> {
        let d = contexts.first().map_or(0, Vec::len);
        if d == 0 || contexts.iter().any(|c| c.len() != d) {
            return Err(invalid("slate contexts must share a positive dimension"));
        }
        if contexts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("slate has a non-finite coordinate"));
        }
        Ok(Self { contexts })
    }

    pub fn arms(&self) -> usize {
        self.contexts.len()
    }

    pub fn context(&self, arm: usize) -> &[f64] {
        &self.contexts[arm]
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub chosen_arm: usize,
    pub reward: f64,
    pub instant_regret: f64,
}

/// β* with `s_star` entries of `±magnitude` at uniformly random positions.
pub fn make_beta_star(d: usize, s_star: usize, magnitude: f64, stream: &SeedPath) -> Result<DenseVector> {
    if s_star == 0 || s_star > d {
        return Err(invalid(format!("true sparsity {s_star} outside [1, {d}]")));
    }
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(invalid(format!("magnitude must be finite and > 0, got {magnitude}")));
    }
    let mut rng = stream.stream();
    let positions = sample_indices(rng.rng(), d, s_star);
    let mut beta = vec![0.0; d];
    for j in positions {
        beta[j] = if rng.coin() { magnitude } else { -magnitude };
    }
    DenseVector::new(beta)
}

/// Independent AR(1) contexts for every arm: `z_1 = g_1`,
/// `z_j = φ z_{j-1} + sqrt(1 - φ²) g_j`, then clamped to `±x_max`.
pub fn sample_slate(inst: &BanditInstance, stream: &SeedPath) -> ContextSlate {
    let mut rng = stream.stream();
    let phi = inst.ar_phi;
    let innovation = (1.0 - phi * phi).sqrt();
    let contexts = (0..inst.arms)
        .map(|_| {
            let mut prev = 0.0;
            (0..inst.dim())
                .map(|j| {
                    let g = rng.standard_normal();
                    let z = if j == 0 { g } else { phi * prev + innovation * g };
                    prev = z;
                    z.clamp(-inst.x_max, inst.x_max)
                })
                .collect()
        })
        .collect();
    ContextSlate { contexts }
}

pub fn pull(inst: &BanditInstance, slate: &ContextSlate, arm: usize, stream: &SeedPath) -> Result<StepOutcome> {
    if arm >= slate.arms() {
        return Err(invalid(format!("arm {arm} out of range for {} arms", slate.arms())));
    }
    if slate.context(0).len() != inst.dim() {
        return Err(invalid("slate dimension does not match the instance"));
    }
    let means = inst.mean_rewards(slate);
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let noise = if inst.noise_sigma > 0.0 {
        inst.noise_sigma * stream.stream().standard_normal()
    } else {
        0.0
    };
    Ok(StepOutcome {
        chosen_arm: arm,
        reward: means[arm] + noise,
        instant_regret: (best - means[arm]).max(0.0),
    })
}

/// Lag-1 autocorrelation of contexts pooled over a sequence of slates.
pub fn pooled_lag_one_correlation(slates: &[ContextSlate]) -> f64 {
    let (mut sxy, mut sxx, mut count) = (0.0, 0.0, 0usize);
    for ctx in slates.iter().flat_map(|s| s.contexts()) {
        sxx += dot(ctx, ctx);
        sxy += ctx.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
        count += ctx.len();
    }
    let pairs = count - slates.iter().map(ContextSlate::arms).sum::<usize>();
    (sxy / pairs as f64) / (sxx / count as f64)
}
