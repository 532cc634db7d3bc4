//! Reproducible noise streams.
//!
//! A [`SeedPath`] names a stream by a root seed and a sequence of
//! `(label, index)` segments, e.g. `root / cell:3 / refit:7 / iter:12`. The
//! path is hashed with SHA-256 into the key of a ChaCha counter-based
//! generator, so any stream can be rebuilt from its name alone without
//! touching shared state. Streams on distinct paths are independent.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::peeling::PrivacyBudget;

const DOMAIN_TAG: &[u8] = b"fliphat/seed-path/v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPath {
    root: u64,
    path: Vec<(String, u64)>,
}

impl SeedPath {
    pub fn new(root: u64) -> Self {
        Self { root, path: Vec::new() }
    }

    /// Extends the path by one segment.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((label.to_owned(), index));
        Self { root: self.root, path }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn segments(&self) -> &[(String, u64)] {
        &self.path
    }

    fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN_TAG);
        h.update(self.root.to_le_bytes());
        for (label, index) in &self.path {
            // Length prefix keeps ("ab", ..) and ("a", ..)("b", ..) apart.
            h.update((label.len() as u64).to_le_bytes());
            h.update(label.as_bytes());
            h.update(index.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Fresh generator positioned at the start of this path's stream.
    pub fn stream(&self) -> NoiseStream {
        NoiseStream { rng: ChaCha12Rng::from_seed(self.key()) }
    }
}

impl fmt::Display for SeedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)?;
        for (label, index) in &self.path {
            write!(f, "/{label}:{index}")?;
        }
        Ok(())
    }
}

/// Scale `xi` of a centred Laplace law; zero is the point mass at 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub const ZERO: LaplaceScale = LaplaceScale(0.0);

    pub fn new(xi: f64) -> Result<Self> {
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(invalid(format!("Laplace scale must be finite and >= 0, got {xi}")));
        }
        Ok(Self(xi))
    }

    pub fn xi(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

/// Laplace scale used by peeling: `lambda * 2 * sqrt(3 s ln(1/delta)) / epsilon`.
pub fn peeling_noise_scale(lambda: f64, s: usize, budget: &PrivacyBudget) -> Result<LaplaceScale> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("sensitivity must be finite and >= 0, got {lambda}")));
    }
    if s == 0 {
        return Err(invalid("sparsity must be at least 1"));
    }
    if lambda == 0.0 {
        return Ok(LaplaceScale::ZERO);
    }
    if budget.delta() == 0.0 {
        return Err(Error::UnsupportedBudget(
            "peeling needs delta > 0 when the sensitivity is positive".into(),
        ));
    }
    let xi = lambda * 2.0 * (3.0 * s as f64 * (1.0 / budget.delta()).ln()).sqrt() / budget.epsilon();
    LaplaceScale::new(xi)
}

/// Sequential sampler over one named stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

impl NoiseStream {
    /// Uniform on the open interval (-1/2, 1/2).
    fn centred_uniform(&mut self) -> f64 {
        let k = self.rng.random::<u64>() >> 11;
        (k as f64 + 0.5) / (1u64 << 53) as f64 - 0.5
    }

    /// One Laplace draw by inverting the CDF: `-xi sign(u) ln(1 - 2|u|)`.
    pub fn laplace(&mut self, scale: LaplaceScale) -> f64 {
        let u = self.centred_uniform();
        -scale.xi() * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

pub fn sample_laplace(scale: LaplaceScale, stream: &SeedPath, count: usize) -> Vec<f64> {
    if scale.is_zero() {
        return vec![0.0; count];
    }
    let mut s = stream.stream();
    (0..count).map(|_| s.laplace(scale)).collect()
}

pub fn sample_gaussian(mean: f64, stddev: f64, stream: &SeedPath, count: usize) -> Result<Vec<f64>> {
    if !(stddev >= 0.0) || !stddev.is_finite() || !mean.is_finite() {
        return Err(invalid(format!("bad Gaussian parameters mean={mean} stddev={stddev}")));
    }
    if stddev == 0.0 {
        return Ok(vec![mean; count]);
    }
    let mut s = stream.stream();
    Ok((0..count).map(|_| mean + stddev * s.standard_normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    fn variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn scale_closed_form() {
        // Evaluated independently as 0.1 * sqrt(4 * 3 * 5 * ln 100).
        let xi = peeling_noise_scale(0.1, 5, &budget(1.0, 0.01)).unwrap().xi();
        assert!((xi - 1.662_258_136_269_11).abs() < 1e-12, "{xi}");
        let xi = peeling_noise_scale(1.0, 1, &budget(2.0, (-3.0f64).exp())).unwrap().xi();
        assert!((xi - 3.0).abs() < 1e-12, "{xi}");
        assert_eq!(peeling_noise_scale(0.0, 3, &budget(1.0, 0.1)).unwrap(), LaplaceScale::ZERO);
    }

    #[test]
    fn zero_delta_needs_zero_sensitivity() {
        assert!(matches!(
            peeling_noise_scale(0.5, 2, &budget(1.0, 0.0)),
            Err(Error::UnsupportedBudget(_))
        ));
        assert!(peeling_noise_scale(0.0, 2, &budget(1.0, 0.0)).unwrap().is_zero());
        assert!(peeling_noise_scale(-1.0, 2, &budget(1.0, 0.1)).is_err());
    }

    #[test]
    fn scale_is_homogeneous_in_sensitivity() {
        let b = budget(0.7, 0.003);
        let base = peeling_noise_scale(0.37, 4, &b).unwrap().xi();
        for k in [0.5, 2.0, 13.0] {
            let scaled = peeling_noise_scale(k * 0.37, 4, &b).unwrap().xi();
            assert!((scaled - k * base).abs() <= 1e-12 * scaled);
        }
    }

    #[test]
    fn degenerate_samplers() {
        let p = SeedPath::new(1);
        assert_eq!(sample_laplace(LaplaceScale::ZERO, &p, 4), vec![0.0; 4]);
        assert_eq!(sample_gaussian(0.0, 0.0, &p, 3).unwrap(), vec![0.0; 3]);
        assert!(sample_gaussian(0.0, -1.0, &p, 3).is_err());
    }

    #[test]
    fn samplers_are_deterministic() {
        let p = SeedPath::new(99).child("rep", 3).child("iter", 0);
        let xi = LaplaceScale::new(1.0).unwrap();
        assert_eq!(sample_laplace(xi, &p, 8), sample_laplace(xi, &p, 8));
        assert_eq!(sample_gaussian(0.0, 1.0, &p, 8).unwrap(), sample_gaussian(0.0, 1.0, &p, 8).unwrap());
        assert_ne!(sample_laplace(xi, &p, 8), sample_laplace(xi, &p.child("x", 0), 8));
    }

    #[test]
    fn path_segments_are_unambiguous() {
        let a = SeedPath::new(0).child("ab", 1);
        let b = SeedPath::new(0).child("a", 1).child("b", 1);
        let c = SeedPath::new(1).child("ab", 1);
        assert_ne!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
        assert_eq!(a.to_string(), "0/ab:1");
    }

    #[test]
    fn laplace_variance_and_tail() {
        let xi = 1.0;
        let xs = sample_laplace(LaplaceScale::new(xi).unwrap(), &SeedPath::new(7), 1_000_000);
        let var = variance(&xs);
        assert!((var / 2.0 - 1.0).abs() < 0.02, "var={var}");
        let tail = xs.iter().filter(|x| x.abs() > xi * 10f64.ln()).count() as f64 / xs.len() as f64;
        assert!((tail - 0.1).abs() < 0.02, "tail={tail}");
    }

    #[test]
    fn gaussian_variance() {
        let xs = sample_gaussian(0.0, 1.0, &SeedPath::new(8), 1_000_000).unwrap();
        let var = variance(&xs);
        assert!((var - 1.0).abs() < 0.02, "var={var}");
    }

    #[test]
    fn distinct_paths_are_uncorrelated() {
        let root = SeedPath::new(2024);
        let a = sample_gaussian(0.0, 1.0, &root.child("slate", 1), 100_000).unwrap();
        let b = sample_gaussian(0.0, 1.0, &root.child("slate", 2), 100_000).unwrap();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let corr = cov / (variance(&a) * variance(&b)).sqrt();
        assert!(corr.abs() < 0.01, "corr={corr}");
    }
}
