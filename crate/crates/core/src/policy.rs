//! The FLIPHAT policy.
//!
//! Time is split into doubling episodes: episode `ℓ` covers steps
//! `[2^ℓ, 2^(ℓ+1))`. Episode 0 is the single step `t = 1`, played on a
//! uniformly random arm. At the start of every later episode the policy
//! refits β̂ with N-IHT on the data of the previous episode only, throws that
//! data away, and plays greedily against β̂ until the episode ends.

use serde::{Deserialize, Serialize};

use crate::bandit::{pull, sample_slate, BanditInstance, ContextSlate};
use crate::error::{invalid, Result};
use crate::ledger::{LedgerEntry, PrivacyLedger};
use crate::math::{dot, DenseVector, DesignMatrix};
use crate::niht::{niht_fit, NihtConfig, Privacy};
use crate::noise::SeedPath;

/// Mechanism id used for every refit in the ledger.
pub const REFIT_MECHANISM: &str = "n-iht";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSchedule {
    pub episode: u32,
    pub start: u64,
    pub length: u64,
}

impl EpisodeSchedule {
    pub fn new(episode: u32) -> Result<Self> {
        if episode > 62 {
            return Err(invalid(format!("episode index {episode} too large")));
        }
        let start = 1u64 << episode;
        Ok(Self { episode, start, length: start })
    }

    /// One past the last step of the episode.
    pub fn end(&self) -> u64 {
        self.start + self.length
    }
}

/// Index `ℓ` of the episode containing step `t`, i.e. `2^ℓ <= t < 2^(ℓ+1)`.
pub fn episode_of(t: u64) -> Result<u32> {
    if t == 0 {
        return Err(invalid("time steps start at 1"));
    }
    Ok(63 - t.leading_zeros())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FliphatConfig {
    pub sparsity: usize,
    pub privacy: Privacy,
    pub step: f64,
    pub radius: f64,
    pub kappa_bar: f64,
    pub kappa_under: f64,
    /// Cap on the number of N-IHT iterations per refit.
    pub m_max: usize,
    /// Noise level σ used in the truncation schedule.
    pub sigma_hint: f64,
}

impl FliphatConfig {
    /// Defaults for an instance: `s = s*`, `κ̄ = max(1, ln K)`, `κ̲ = 1/K`,
    /// `η = 1/(2κ̄)`, `C = b_max`, `M_max = 50` and `σ` taken from the
    /// environment.
    pub fn for_instance(inst: &BanditInstance, privacy: Privacy) -> Self {
        let k = inst.arms() as f64;
        let kappa_bar = k.ln().max(1.0);
        Self {
            sparsity: inst.s_star().max(1),
            privacy,
            step: 1.0 / (2.0 * kappa_bar),
            radius: inst.b_max(),
            kappa_bar,
            kappa_under: 1.0 / k,
            m_max: 50,
            sigma_hint: inst.noise_sigma(),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_bar / self.kappa_under
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.sparsity == 0 || self.sparsity > dim {
            return Err(invalid(format!("sparsity {} outside [1, {dim}]", self.sparsity)));
        }
        if !(self.kappa_bar > 0.0 && self.kappa_under > 0.0) || !self.kappa().is_finite() {
            return Err(invalid("curvature bounds must be positive"));
        }
        if self.kappa() < 1.0 {
            return Err(invalid(format!("condition number {} below 1", self.kappa())));
        }
        if self.m_max == 0 {
            return Err(invalid("iteration cap must be at least 1"));
        }
        if !(self.sigma_hint >= 0.0) || !self.sigma_hint.is_finite() {
            return Err(invalid(format!("sigma hint must be finite and >= 0, got {}", self.sigma_hint)));
        }
        if !(self.step > 0.0) || !(self.radius > 0.0) {
            return Err(invalid("step size and radius must be positive"));
        }
        Ok(())
    }
}

/// `ceil(28 κ ln(max(e, b_max² N_{ℓ-1})))` before the cap is applied.
pub fn uncapped_iterations(episode: u32, cfg: &FliphatConfig, b_max: f64) -> Result<u64> {
    if episode == 0 {
        return Err(invalid("episode 0 has no refit"));
    }
    let previous = EpisodeSchedule::new(episode - 1)?.length as f64;
    let arg = (b_max * b_max * previous).max(std::f64::consts::E);
    Ok((28.0 * cfg.kappa() * arg.ln()).ceil() as u64)
}

/// N-IHT parameters for the refit opening episode `ℓ >= 1`.
pub fn schedule_params(episode: u32, cfg: &FliphatConfig, x_max: f64, b_max: f64) -> Result<NihtConfig> {
    let uncapped = uncapped_iterations(episode, cfg, b_max)?;
    let previous = EpisodeSchedule::new(episode - 1)?.length as f64;
    let truncation = x_max * b_max + cfg.sigma_hint * (2.0 * previous.ln()).sqrt();
    Ok(NihtConfig {
        sparsity: cfg.sparsity,
        iterations: uncapped.min(cfg.m_max as u64) as usize,
        truncation,
        noise_base: truncation + x_max * b_max,
        step: cfg.step,
        radius: cfg.radius,
        privacy: cfg.privacy,
    })
}

/// Greedy arm under `beta_hat`, ties to the lowest arm index.
pub fn select_action(slate: &ContextSlate, beta_hat: &DenseVector) -> usize {
    assert_eq!(slate.context(0).len(), beta_hat.len(), "dimension mismatch");
    let mut best = (0, f64::NEG_INFINITY);
    for (arm, x) in slate.contexts().iter().enumerate() {
        let score = dot(x, beta_hat.as_slice());
        if score > best.1 {
            best = (arm, score);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFit {
    pub episode: u32,
    pub estimate: DenseVector,
    /// Sum over iterations of the realised peeling noise.
    pub total_noise: f64,
    pub iterations: usize,
    pub uncapped_iterations: u64,
    pub noise_scale: f64,
}

impl EpisodeFit {
    pub fn capped(&self) -> bool {
        self.uncapped_iterations > self.iterations as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub per_step_regret: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub actions: Vec<usize>,
    /// Rewards as stored by the policy.
    pub rewards: Vec<f64>,
    /// First time step of every episode reached.
    pub episode_starts: Vec<u64>,
    /// One fit per refit, in episode order starting at episode 1.
    pub fits: Vec<EpisodeFit>,
    pub ledger: PrivacyLedger,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.per_step_regret.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn estimate(&self, episode: u32) -> Option<&DenseVector> {
        self.fits.iter().find(|f| f.episode == episode).map(|f| &f.estimate)
    }

    /// True if any refit's iteration count was cut by the cap.
    pub fn cap_bound(&self) -> bool {
        self.fits.iter().any(EpisodeFit::capped)
    }
}

/// Named streams for the environment (contexts, reward noise) and the
/// policy (exploration, refits). Keeping them apart lets different policies
/// face the same contexts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunStreams {
    pub environment: SeedPath,
    pub policy: SeedPath,
}

impl RunStreams {
    pub fn from_root(stream: &SeedPath) -> Self {
        Self { environment: stream.child("env", 0), policy: stream.child("policy", 0) }
    }
}

pub fn run_fliphat(inst: &BanditInstance, cfg: &FliphatConfig, horizon: u64, stream: &SeedPath) -> Result<RegretTrace> {
    run_fliphat_with(inst, cfg, horizon, &RunStreams::from_root(stream), |_, r| r)
}

/// Runs the policy, passing every observed reward through `observe(t, r)`
/// before it is stored. Replaying with an altered `observe` is how single
/// records are perturbed.
pub fn run_fliphat_with(
    inst: &BanditInstance,
    cfg: &FliphatConfig,
    horizon: u64,
    streams: &RunStreams,
    mut observe: impl FnMut(u64, f64) -> f64,
) -> Result<RegretTrace> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let d = inst.dim();
    cfg.validate(d)?;

    let cap = horizon as usize;
    let mut trace = RegretTrace {
        per_step_regret: Vec::with_capacity(cap),
        cumulative: Vec::with_capacity(cap),
        actions: Vec::with_capacity(cap),
        rewards: Vec::with_capacity(cap),
        episode_starts: vec![1],
        fits: Vec::new(),
        ledger: PrivacyLedger::new(),
    };
    let mut x_buf = DesignMatrix::with_capacity(d, 1)?;
    let mut y_buf: Vec<f64> = Vec::with_capacity(1);
    let mut beta_hat: Option<DenseVector> = None;
    let mut current = 0u32;
    let mut total = 0.0;

    for t in 1..=horizon {
        let episode = episode_of(t)?;
        if episode != current {
            let fit = refit(inst, cfg, episode, &x_buf, &y_buf, &streams.policy)?;
            if let Privacy::Private(budget) = cfg.privacy {
                let prev = EpisodeSchedule::new(episode - 1)?;
                trace.ledger.record(LedgerEntry::new(
                    REFIT_MECHANISM,
                    prev.start,
                    prev.end(),
                    budget,
                    fit.iterations,
                ))?;
            }
            beta_hat = Some(fit.estimate.clone());
            trace.fits.push(fit);
            trace.episode_starts.push(t);

            // Forget: the next fit only sees this episode's data.
            let rows = EpisodeSchedule::new(episode)?.length.min(horizon - t + 1) as usize;
            x_buf = DesignMatrix::with_capacity(d, rows)?;
            y_buf = Vec::with_capacity(rows);
            current = episode;
        }

        let slate = sample_slate(inst, &streams.environment.child("slate", t));
        let arm = match &beta_hat {
            Some(beta) => select_action(&slate, beta),
            None => streams.policy.child("explore", t).stream().index(inst.arms()),
        };
        let outcome = pull(inst, &slate, arm, &streams.environment.child("reward", t))?;
        let stored = observe(t, outcome.reward);

        x_buf.push_row(slate.context(arm))?;
        y_buf.push(stored);
        total += outcome.instant_regret;
        trace.per_step_regret.push(outcome.instant_regret);
        trace.cumulative.push(total);
        trace.actions.push(arm);
        trace.rewards.push(stored);
    }
    Ok(trace)
}

fn refit(
    inst: &BanditInstance,
    cfg: &FliphatConfig,
    episode: u32,
    x: &DesignMatrix,
    y: &[f64],
    policy: &SeedPath,
) -> Result<EpisodeFit> {
    let ncfg = schedule_params(episode, cfg, inst.x_max(), inst.b_max())?;
    let report = niht_fit(x, y, &ncfg, &DenseVector::zeros(inst.dim()), &policy.child("refit", episode as u64))?;
    Ok(EpisodeFit {
        episode,
        total_noise: report.total_noise(),
        iterations: report.iterations_run,
        uncapped_iterations: uncapped_iterations(episode, cfg, inst.b_max())?,
        noise_scale: report.noise_scale,
        estimate: report.estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::make_beta_star;
    use crate::peeling::PrivacyBudget;

    fn small_instance(seed: u64, beta_zero: bool) -> BanditInstance {
        let beta = if beta_zero {
            DenseVector::zeros(20)
        } else {
            make_beta_star(20, 3, 1.0 / 3f64.sqrt(), &SeedPath::new(seed)).unwrap()
        };
        let b_max = beta.l1_norm().max(1.0);
        BanditInstance::new(2, beta, 10.0, b_max, 0.3, 0.0).unwrap()
    }

    #[test]
    fn episode_index_examples() {
        assert_eq!(episode_of(1).unwrap(), 0);
        assert_eq!(episode_of(5).unwrap(), 2);
        assert_eq!(episode_of(1024).unwrap(), 10);
        assert!(episode_of(0).is_err());
        for l in 1..40 {
            let start = EpisodeSchedule::new(l).unwrap().start;
            assert_eq!(episode_of(start).unwrap(), l);
            assert_eq!(episode_of(start - 1).unwrap(), l - 1);
        }
    }

    fn reference_config(privacy: Privacy) -> FliphatConfig {
        FliphatConfig {
            sparsity: 10,
            privacy,
            step: 0.5,
            radius: 10f64.sqrt(),
            kappa_bar: 1.0,
            kappa_under: 1.0 / 3.0,
            m_max: 50,
            sigma_hint: 0.316,
        }
    }

    #[test]
    fn schedule_first_refit_has_no_noise_term() {
        let cfg = reference_config(Privacy::NonPrivate);
        let n = schedule_params(1, &cfg, 10.0, 10f64.sqrt()).unwrap();
        assert_eq!(n.truncation, 10.0 * 10f64.sqrt());
        assert_eq!(n.noise_base, 2.0 * 10.0 * 10f64.sqrt());
        assert!(schedule_params(0, &cfg, 10.0, 1.0).is_err());
    }

    #[test]
    fn schedule_closed_form_at_episode_eleven() {
        // Formula oracle: R = 10 sqrt(10) + 0.316 sqrt(2 ln 1024) = 32.799338583578454,
        // uncapped M = ceil(28 * 3 * ln(10 * 1024)) = 776.
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let cfg = reference_config(Privacy::Private(budget));
        let n = schedule_params(11, &cfg, 10.0, 10f64.sqrt()).unwrap();
        assert!((n.truncation - 32.799_338_583_578_454).abs() < 1e-9);
        assert!((n.noise_base - n.truncation - 10.0 * 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(uncapped_iterations(11, &cfg, 10f64.sqrt()).unwrap(), 776);
        assert_eq!(n.iterations, 50);
        assert_eq!(n.privacy, Privacy::Private(budget));
    }

    #[test]
    fn schedule_propagates_non_private_flag() {
        let private = reference_config(Privacy::Private(PrivacyBudget::new(1.0, 0.01).unwrap()));
        let public = reference_config(Privacy::NonPrivate);
        let a = schedule_params(4, &private, 10.0, 2.0).unwrap();
        let b = schedule_params(4, &public, 10.0, 2.0).unwrap();
        assert_eq!(NihtConfig { privacy: Privacy::NonPrivate, ..a }, b);
    }

    #[test]
    fn select_action_examples() {
        let slate = ContextSlate::new(vec![vec![1.0, 5.0], vec![3.0, -1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(select_action(&slate, &DenseVector::zeros(2)), 0);
        assert_eq!(select_action(&slate, &DenseVector::new(vec![1.0, 0.0]).unwrap()), 1);
        let beta = DenseVector::new(vec![0.3, 0.7]).unwrap();
        let base = select_action(&slate, &beta);
        for k in [1e-6, 0.5, 3.0, 1e6] {
            let scaled = DenseVector::new(vec![0.3 * k, 0.7 * k]).unwrap();
            assert_eq!(select_action(&slate, &scaled), base);
        }
    }

    #[test]
    fn single_step_run_has_no_refit() {
        let inst = small_instance(1, false);
        let cfg = FliphatConfig::for_instance(&inst, Privacy::NonPrivate);
        let trace = run_fliphat(&inst, &cfg, 1, &SeedPath::new(3)).unwrap();
        assert_eq!(trace.horizon(), 1);
        assert!(trace.fits.is_empty());
        assert!(trace.ledger.entries().is_empty());
        assert!(trace.actions[0] < 2);
        assert!(run_fliphat(&inst, &cfg, 0, &SeedPath::new(3)).is_err());
    }

    #[test]
    fn null_parameter_has_zero_regret() {
        let inst = small_instance(2, true);
        let mut cfg = FliphatConfig::for_instance(&inst, Privacy::Private(PrivacyBudget::new(1.0, 0.01).unwrap()));
        cfg.sparsity = 3;
        for seed in 0..3 {
            let trace = run_fliphat(&inst, &cfg, 300, &SeedPath::new(seed)).unwrap();
            assert_eq!(trace.final_regret(), 0.0);
        }
    }

    #[test]
    fn trace_bookkeeping() {
        let inst = small_instance(4, false);
        let budget = PrivacyBudget::new(2.0, 0.01).unwrap();
        let cfg = FliphatConfig::for_instance(&inst, Privacy::Private(budget));
        let trace = run_fliphat(&inst, &cfg, 100, &SeedPath::new(5)).unwrap();
        assert_eq!(trace.episode_starts, vec![1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(trace.fits.len(), 6);
        assert!(trace.per_step_regret.iter().all(|r| *r >= 0.0));
        assert!(trace.cumulative.windows(2).all(|w| w[0] <= w[1]));
        let sum: f64 = trace.per_step_regret.iter().sum();
        assert!((trace.final_regret() - sum).abs() <= 1e-9 * sum.max(1.0));
        // Episode 6 ([64, 128)) is truncated at 100 and never refit on.
        assert_eq!(trace.ledger.entries().len(), 6);
        assert_eq!(trace.ledger.per_user_budget(80).epsilon, 0.0);
        assert_eq!(trace.ledger.per_user_budget(1).epsilon, 2.0);
        for (fit, entry) in trace.fits.iter().zip(trace.ledger.entries()) {
            assert_eq!(fit.iterations, entry.iterations);
            assert!(fit.estimate.l0_norm() <= cfg.sparsity);
        }
    }
}
