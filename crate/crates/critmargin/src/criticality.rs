//! Estimation of true criticality: the expected drop in discounted return
//! when the policy's actions are replaced by uniform-random actions for `n`
//! consecutive steps.
//!
//! The estimator replays a snapshot, follows the perturbed policy for a
//! finite horizon per trial, and keeps adding trials until a Student-t
//! half-width on the mean reward reduction falls below the sampling-error
//! target. An exact enumeration oracle over all `|A|^n` perturbation
//! prefixes is provided for small instances.
//!
//! # Alternative definitions considered
//!
//! Several other ways to define criticality were weighed and rejected;
//! they are recorded here because downstream semantics depend on the
//! choice:
//!
//! - **Baseline under an optimal policy** instead of the agent's own
//!   policy. Cleaner in theory (criticality becomes a property of the
//!   state alone) but needs a near-optimal policy, which is the hard
//!   problem in the first place.
//! - **Variance of the perturbed return** rather than the mean drop.
//!   Variance conflates symmetric spread with harm: a state where random
//!   actions sometimes help and sometimes hurt can score higher than one
//!   where they reliably cost a large amount.
//! - **Worst-action perturbation** (replace the chosen action with the
//!   policy's least-preferred one). When the policy misranks actions, its
//!   "worst" pick may be harmless, hiding exactly the false negatives this
//!   toolkit is meant to expose.
//! - **Undiscounted totals.** The agent optimizes the discounted return,
//!   so judging deviations on a different objective would punish it for
//!   trade-offs it was trained to make.
//!
//! None of these are implemented; the mean discounted-reward drop under
//! uniform-random perturbation is the definition used throughout.

use rand::Rng;

use crate::agents::Policy;
use crate::envs::{ActionId, Env, EnvSnapshot};
use crate::error::{Error, Result};
use crate::seeds;
use crate::stats::{t_quantile_two_sided, z_quantile_one_sided, Confidence};

/// Rollout truncation. `horizon_steps` is the smallest h with
/// `gamma^h <= eps_horizon_target`, so the discounted tail beyond the
/// horizon contributes at most the target relative error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonConfig {
    gamma: f64,
    eps_horizon_target: f64,
    horizon_steps: u32,
}

impl HorizonConfig {
    pub fn new(gamma: f64, eps_horizon_target: f64) -> Result<Self> {
        let horizon_steps = select_horizon(gamma, eps_horizon_target)?;
        Ok(HorizonConfig {
            gamma,
            eps_horizon_target,
            horizon_steps,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eps_horizon_target(&self) -> f64 {
        self.eps_horizon_target
    }

    pub fn horizon_steps(&self) -> u32 {
        self.horizon_steps
    }

    /// Same gamma and error target, but a manually extended horizon.
    /// Useful for checking horizon soundness; never shortens.
    pub fn with_extended_horizon(mut self, horizon_steps: u32) -> Self {
        self.horizon_steps = self.horizon_steps.max(horizon_steps);
        self
    }
}

/// Adaptive-sampling control for the trial loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub eps_sampling_target: f64,
    pub alpha: Confidence,
    pub n_min: u32,
    pub n_max: u32,
    /// Trials used for the unperturbed baseline. The built-in environments
    /// are deterministic, so 1 is exact; raise it for stochastic
    /// environments where the baseline itself needs averaging.
    pub baseline_trials: u32,
}

impl SamplingConfig {
    pub fn new(eps_sampling_target: f64, alpha: Confidence, n_min: u32, n_max: u32) -> Result<Self> {
        if eps_sampling_target.is_nan() || eps_sampling_target <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sampling error target must be positive, got {eps_sampling_target}"
            )));
        }
        if n_min < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_min must be at least 2 (a standard deviation needs two samples), got {n_min}"
            )));
        }
        if n_max < n_min {
            return Err(Error::InvalidArgument(format!(
                "n_max ({n_max}) must be at least n_min ({n_min})"
            )));
        }
        Ok(SamplingConfig {
            eps_sampling_target,
            alpha,
            n_min,
            n_max,
            baseline_trials: 1,
        })
    }

    pub fn with_baseline_trials(mut self, trials: u32) -> Self {
        self.baseline_trials = trials.max(1);
        self
    }
}

/// Output of the trial-based criticality estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalityEstimate {
    /// Mean reward reduction across trials (reward units).
    pub value: f64,
    /// Number of trials performed (0 for the n = 0 identity).
    pub trials: u32,
    /// Bessel-corrected standard deviation of the per-trial reductions.
    pub trial_stdev: f64,
    /// `t_alpha(trials - 1) * trial_stdev / sqrt(trials)` at the final
    /// trial count.
    pub half_width: f64,
    /// Whether the half-width reached the sampling-error target before the
    /// trial cap.
    pub converged: bool,
}

/// Smallest horizon h (at least 1) with `gamma^h <= eps_hat`; the ceiling of
/// the base-gamma logarithm, guarded against floating-point rounding.
pub fn select_horizon(gamma: f64, eps_hat: f64) -> Result<u32> {
    const MAX_HORIZON: i64 = 100_000_000;
    for (name, v) in [("gamma", gamma), ("eps_hat", eps_hat)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie in the open interval (0, 1), got {v}"
            )));
        }
    }
    let mut h = (eps_hat.ln() / gamma.ln()).ceil().max(1.0) as i64;
    if h > MAX_HORIZON {
        return Err(Error::InvalidArgument(format!(
            "horizon for gamma {gamma} at error target {eps_hat} exceeds {MAX_HORIZON} steps"
        )));
    }
    while gamma.powi(h as i32) > eps_hat {
        h += 1;
    }
    while h > 1 && gamma.powi(h as i32 - 1) <= eps_hat {
        h -= 1;
    }
    Ok(h as u32)
}

/// Discounted return of one rollout from `snapshot`, following the policy
/// except at the first `perturb_n` steps, which draw uniformly over all
/// actions. Truncated at the horizon or at episode termination.
fn rollout_return(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    horizon: &HorizonConfig,
    perturb_n: u32,
    rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<f64> {
    env.load_state(snapshot)?;
    let mut rng = rng;
    let action_count = env.action_count();
    let gamma = horizon.gamma();
    let mut discount = 1.0;
    let mut total = 0.0;
    for k in 0..horizon.horizon_steps() {
        if env.is_terminal() {
            break;
        }
        let action = if k < perturb_n {
            let r = rng
                .as_deref_mut()
                .expect("perturbed rollout requires an rng");
            ActionId(r.random_range(0..action_count))
        } else {
            policy.act(env.observation())
        };
        let outcome = env.step(action)?;
        total += discount * outcome.reward;
        discount *= gamma;
    }
    Ok(total)
}

/// Rollout of an explicit action prefix, then the policy, used by the exact
/// oracle.
fn prefix_return(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    horizon: &HorizonConfig,
    prefix: &[u8],
) -> Result<f64> {
    env.load_state(snapshot)?;
    let gamma = horizon.gamma();
    let mut discount = 1.0;
    let mut total = 0.0;
    for k in 0..horizon.horizon_steps() {
        if env.is_terminal() {
            break;
        }
        let action = match prefix.get(k as usize) {
            Some(&a) => ActionId(a),
            None => policy.act(env.observation()),
        };
        let outcome = env.step(action)?;
        total += discount * outcome.reward;
        discount *= gamma;
    }
    Ok(total)
}

/// Discounted return when the policy is followed unperturbed from
/// `snapshot` for the horizon (averaged over `baseline_trials` when the
/// caller opts into stochastic-environment handling; identical trials
/// otherwise).
pub fn unperturbed_return(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    horizon: &HorizonConfig,
) -> Result<f64> {
    rollout_return(env, policy, snapshot, horizon, 0, None)
}

fn baseline_return(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    horizon: &HorizonConfig,
    sampling: &SamplingConfig,
) -> Result<f64> {
    let trials = sampling.baseline_trials.max(1);
    let mut total = 0.0;
    for _ in 0..trials {
        total += unperturbed_return(env, policy, snapshot, horizon)?;
    }
    Ok(total / f64::from(trials))
}

/// Estimates true criticality for `n` perturbed steps from `snapshot`,
/// computing the unperturbed baseline itself. See
/// [`estimate_with_baseline`] for the trial loop contract.
pub fn estimate_true_criticality(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    n: u32,
    horizon: &HorizonConfig,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<CriticalityEstimate> {
    if n == 0 {
        return Ok(zero_perturbation_estimate());
    }
    let baseline = baseline_return(env, policy, snapshot, horizon, sampling)?;
    estimate_with_baseline(env, policy, snapshot, n, baseline, horizon, sampling, seed)
}

fn zero_perturbation_estimate() -> CriticalityEstimate {
    // Perturbing zero actions cannot change the return.
    CriticalityEstimate {
        value: 0.0,
        trials: 0,
        trial_stdev: 0.0,
        half_width: 0.0,
        converged: true,
    }
}

/// Trial loop with a precomputed baseline, so callers evaluating several
/// perturbation sizes from one snapshot pay for the baseline only once.
///
/// Each trial draws its random actions from a dedicated stream derived from
/// (seed, trial index), so results do not depend on scheduling. After every
/// trial beyond `n_min` the loop stops as soon as
/// `t_alpha(N-1) * stdev / sqrt(N) <= eps_sampling_target`; hitting `n_max`
/// first reports `converged = false` rather than an error.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with_baseline(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    n: u32,
    baseline: f64,
    horizon: &HorizonConfig,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<CriticalityEstimate> {
    if n == 0 {
        return Ok(zero_perturbation_estimate());
    }
    let eps = sampling.eps_sampling_target;
    // t_alpha(dof) is bounded below by the two-sided normal quantile, which
    // gives a cheap necessary condition before the exact t lookup.
    let z_floor = z_quantile_one_sided(Confidence::new(
        0.5 + sampling.alpha.value() / 2.0,
    )?);

    let mut count = 0u32;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut converged = false;

    while count < sampling.n_max {
        let trial = count;
        let mut rng = seeds::rng(&[seeds::STREAM_TRIAL, seed, u64::from(trial)]);
        let perturbed = rollout_return(env, policy, snapshot, horizon, n, Some(&mut rng))?;
        let delta = baseline - perturbed;

        count += 1;
        let d = delta - mean;
        mean += d / f64::from(count);
        m2 += d * (delta - mean);

        if count >= sampling.n_min {
            let stdev = (m2 / f64::from(count - 1)).max(0.0).sqrt();
            let scale = stdev / f64::from(count).sqrt();
            if z_floor * scale <= eps {
                let t = t_quantile_two_sided(sampling.alpha, u64::from(count - 1))?;
                if t * scale <= eps {
                    converged = true;
                    break;
                }
            }
        }
    }

    let trial_stdev = if count >= 2 {
        (m2 / f64::from(count - 1)).max(0.0).sqrt()
    } else {
        0.0
    };
    let half_width = if count >= 2 {
        t_quantile_two_sided(sampling.alpha, u64::from(count - 1))? * trial_stdev
            / f64::from(count).sqrt()
    } else {
        0.0
    };

    Ok(CriticalityEstimate {
        value: mean,
        trials: count,
        trial_stdev,
        half_width,
        converged,
    })
}

/// Exact true criticality by enumerating all `|A|^n` equally likely
/// perturbation prefixes. Intended as a test oracle; guarded so it is only
/// usable on small instances.
pub fn exact_true_criticality_oracle(
    env: &mut Env,
    policy: &dyn Policy,
    snapshot: &EnvSnapshot,
    n: u32,
    horizon: &HorizonConfig,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let actions = u64::from(env.action_count());
    let mut branches: u64 = 1;
    for _ in 0..n {
        branches = branches.saturating_mul(actions);
        if branches > 100_000 {
            return Err(Error::Capacity(format!(
                "oracle would enumerate more than 1e5 perturbed action prefixes \
                 ({actions}^{n})"
            )));
        }
    }
    let baseline = unperturbed_return(env, policy, snapshot, horizon)?;
    let mut prefix = vec![0u8; n as usize];
    let mut total = 0.0;
    for branch in 0..branches {
        let mut b = branch;
        for slot in prefix.iter_mut() {
            *slot = (b % actions) as u8;
            b /= actions;
        }
        total += prefix_return(env, policy, snapshot, horizon, &prefix)?;
    }
    Ok(baseline - total / branches as f64)
}
