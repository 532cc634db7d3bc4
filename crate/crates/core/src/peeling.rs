//! Private top-s selection by peeling.
//!
//! Each of `s` rounds draws a fresh Laplace vector over all `d` coordinates
//! and picks the not-yet-selected index maximising `|v_j| + w_j`. The
//! selected entries of `v` are then released with another fresh Laplace
//! perturbation on the support. When `||v(D) - v(D')||_inf <= lambda` for
//! every pair of neighbouring datasets, one call is (ε, δ)-DP.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{DenseVector, SparseSupport};
use crate::noise::{peeling_noise_scale, LaplaceScale, SeedPath};

/// An (ε, δ) pair with ε > 0 and 0 <= δ < 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be finite and > 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The even share `(ε/parts, δ/parts)` spent by one of `parts` sequential steps.
    pub fn split(&self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(invalid("cannot split a budget into zero parts"));
        }
        Self::new(self.epsilon / parts as f64, self.delta / parts as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeelResult {
    /// `v` on the selected support plus release noise, zero elsewhere.
    pub vector: DenseVector,
    pub support: SparseSupport,
    /// `sum_i ||w_i||_inf^2 + ||w~_S||_2^2` for this call.
    pub noise_magnitude: f64,
}

pub fn peel(
    v: &DenseVector,
    s: usize,
    budget: &PrivacyBudget,
    lambda: f64,
    stream: &SeedPath,
) -> Result<PeelResult> {
    if s == 0 || s > v.len() {
        return Err(invalid(format!("sparsity {s} outside [1, {}]", v.len())));
    }
    let scale = peeling_noise_scale(lambda, s, budget)?;
    Ok(peel_with_scale(v.as_slice(), s, scale, stream))
}

/// Peeling at an explicit Laplace scale; a zero scale is exact top-s.
pub(crate) fn peel_with_scale(v: &[f64], s: usize, scale: LaplaceScale, stream: &SeedPath) -> PeelResult {
    let d = v.len();
    debug_assert!(s >= 1 && s <= d);
    let noisy = !scale.is_zero();
    let mut rng = stream.stream();
    let mut taken = vec![false; d];
    let mut chosen = Vec::with_capacity(s);
    let mut noise_magnitude = 0.0;

    for _ in 0..s {
        let mut best: Option<(usize, f64)> = None;
        let mut w_inf = 0.0f64;
        for j in 0..d {
            let w = if noisy { rng.laplace(scale) } else { 0.0 };
            w_inf = w_inf.max(w.abs());
            if taken[j] {
                continue;
            }
            let score = v[j].abs() + w;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let (j, _) = best.expect("s <= d leaves a free coordinate");
        taken[j] = true;
        chosen.push(j);
        noise_magnitude += w_inf * w_inf;
    }

    chosen.sort_unstable();
    let mut out = vec![0.0; d];
    for &j in &chosen {
        let w = if noisy { rng.laplace(scale) } else { 0.0 };
        noise_magnitude += w * w;
        out[j] = v[j] + w;
    }

    PeelResult {
        vector: DenseVector::from_finite(out),
        support: SparseSupport::new(chosen).expect("sorted distinct indices"),
        noise_magnitude,
    }
}
