//! Dimension × privacy sweeps with independent repetitions.
//!
//! Cell `(d, ε, rep)` runs the policy on streams rooted at
//! `root / d / rep` for the environment and `root / d / eps / rep` for the
//! policy, so every privacy level of a repetition faces the same β*,
//! contexts and reward noise. Cells share no mutable state and results are
//! stored in cell order, which makes the sweep independent of scheduling.

use rayon::prelude::*;
use serde::Serialize;

use fliphat_core::bandit::{make_beta_star, BanditInstance};
use fliphat_core::math::DenseVector;
use fliphat_core::niht::Privacy;
use fliphat_core::noise::SeedPath;
use fliphat_core::peeling::PrivacyBudget;
use fliphat_core::policy::{run_fliphat_with, FliphatConfig, RegretTrace, RunStreams};

use crate::config::{EpsilonSetting, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellKey {
    pub dim: usize,
    pub epsilon: EpsilonSetting,
    pub repetition: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub key: CellKey,
    pub final_regret: f64,
    /// Human-readable name of the cell's policy stream.
    pub seed_path: String,
    pub trace: RegretTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub dim: usize,
    pub epsilon: EpsilonSetting,
    pub mean_regret: f64,
    /// Sample standard deviation (zero for a single repetition).
    pub stddev: f64,
    /// `1.96 · stddev / sqrt(repetitions)`.
    pub ci95_halfwidth: f64,
    pub repetitions: usize,
}

impl Aggregate {
    pub fn lower(&self) -> f64 {
        self.mean_regret - self.ci95_halfwidth
    }

    pub fn upper(&self) -> f64 {
        self.mean_regret + self.ci95_halfwidth
    }

    pub fn from_values(dim: usize, epsilon: EpsilonSetting, values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            dim,
            epsilon,
            mean_regret: mean,
            stddev,
            ci95_halfwidth: 1.96 * stddev / (n as f64).sqrt(),
            repetitions: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    /// Ordered by dimension, then ε, then repetition, as listed in the config.
    pub cells: Vec<CellRun>,
    /// Ordered by dimension, then ε.
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn aggregate(&self, dim: usize, epsilon: EpsilonSetting) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.dim == dim && a.epsilon == epsilon)
    }

    pub fn runs(&self, dim: usize, epsilon: EpsilonSetting) -> impl Iterator<Item = &CellRun> {
        self.cells.iter().filter(move |c| c.key.dim == dim && c.key.epsilon == epsilon)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("cell d={dim} eps={epsilon} rep={repetition}: {source}")]
    Cell {
        dim: usize,
        epsilon: EpsilonSetting,
        repetition: usize,
        #[source]
        source: fliphat_core::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for &dim in &cfg.dimensions {
        for &epsilon in &cfg.epsilons {
            for repetition in 0..cfg.repetitions {
                keys.push(CellKey { dim, epsilon, repetition });
            }
        }
    }
    keys
}

/// Stream driving the environment of repetition `rep` at dimension `dim`.
pub fn environment_path(cfg: &ExperimentConfig, dim: usize, rep: usize) -> SeedPath {
    SeedPath::new(cfg.root_seed).child("d", dim as u64).child("rep", rep as u64)
}

pub fn policy_path(cfg: &ExperimentConfig, key: &CellKey) -> SeedPath {
    SeedPath::new(cfg.root_seed)
        .child("d", key.dim as u64)
        .child("eps", key.epsilon.seed_index())
        .child("rep", key.repetition as u64)
}

pub fn build_instance(cfg: &ExperimentConfig, dim: usize, rep: usize) -> fliphat_core::Result<BanditInstance> {
    let magnitude = cfg.beta_magnitude();
    let beta = if magnitude == 0.0 {
        DenseVector::zeros(dim)
    } else {
        make_beta_star(dim, cfg.s_star, magnitude, &environment_path(cfg, dim, rep).child("beta", 0))?
    };
    // b_max is the exact L1 norm of β*, or 1 for the null parameter.
    let b_max = if beta.l1_norm() > 0.0 { beta.l1_norm() } else { 1.0 };
    BanditInstance::new(cfg.arms, beta, cfg.x_max, b_max, cfg.ar_phi, cfg.noise_sigma)
}

pub fn policy_config(cfg: &ExperimentConfig, inst: &BanditInstance, epsilon: EpsilonSetting) -> fliphat_core::Result<FliphatConfig> {
    let privacy = match epsilon {
        EpsilonSetting::Private(e) if !cfg.non_private => Privacy::Private(PrivacyBudget::new(e, cfg.delta)?),
        _ => Privacy::NonPrivate,
    };
    let mut pc = FliphatConfig::for_instance(inst, privacy);
    pc.sparsity = cfg.sparsity();
    pc.kappa_bar = cfg.kappa_bar();
    pc.kappa_under = cfg.kappa_under();
    pc.step = 1.0 / (2.0 * pc.kappa_bar);
    pc.m_max = cfg.m_max;
    Ok(pc)
}

pub fn run_cell(cfg: &ExperimentConfig, key: &CellKey) -> Result<CellRun, SweepError> {
    let wrap = |source| SweepError::Cell {
        dim: key.dim,
        epsilon: key.epsilon,
        repetition: key.repetition,
        source,
    };
    let inst = build_instance(cfg, key.dim, key.repetition).map_err(wrap)?;
    let pc = policy_config(cfg, &inst, key.epsilon).map_err(wrap)?;
    let streams = RunStreams {
        environment: environment_path(cfg, key.dim, key.repetition).child("env", 0),
        policy: policy_path(cfg, key),
    };
    let trace = run_fliphat_with(&inst, &pc, cfg.horizon, &streams, |_, r| r).map_err(wrap)?;
    Ok(CellRun {
        key: *key,
        final_regret: trace.final_regret(),
        seed_path: format!("{}/d:{}/eps:{}/rep:{}", cfg.root_seed, key.dim, key.epsilon, key.repetition),
        trace,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, SweepError> {
    let keys = cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build()?;
    let runs: Vec<CellRun> = pool.install(|| keys.par_iter().map(|k| run_cell(cfg, k)).collect::<Result<_, _>>())?;
    let aggregates = aggregate(cfg, &runs);
    Ok(SweepResult { config: cfg.clone(), cells: runs, aggregates })
}

fn aggregate(cfg: &ExperimentConfig, runs: &[CellRun]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &dim in &cfg.dimensions {
        for &epsilon in &cfg.epsilons {
            let values: Vec<f64> = runs
                .iter()
                .filter(|c| c.key.dim == dim && c.key.epsilon == epsilon)
                .map(|c| c.final_regret)
                .collect();
            out.push(Aggregate::from_values(dim, epsilon, &values));
        }
    }
    out
}
