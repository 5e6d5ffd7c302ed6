//! Generation of (proxy, true-criticality) data tuples.
//!
//! Each episode contributes one tuple: the proxy metric at a selected time
//! step plus a criticality estimate for every perturbation size in the
//! configured set. Time steps are chosen either uniformly over the episode
//! (the natural visitation distribution) or to maximize spread over proxy
//! values seen so far (uniform-in-proxy mode).
//!
//! Episode rollouts and per-size estimates run in parallel; the
//! uniform-mode selection history is sequential by definition, so
//! selections are made in episode order after the rollouts land. Output is
//! a pure function of the seed regardless of worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{proxy_score_gap, Policy};
use crate::criticality::{
    estimate_with_baseline, unperturbed_return, HorizonConfig, SamplingConfig,
};
use crate::envs::{make_env, ActionId, EnvSnapshot, EnvSpec, Observation};
use crate::error::{Error, Result};
use crate::seeds;

/// One recorded step of a rollout. The snapshot captures the state *before*
/// the action, so criticality can be estimated from this exact moment.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub observation: Observation,
    pub action: ActionId,
    pub reward: f64,
    pub proxy: f64,
    pub snapshot: EnvSnapshot,
}

/// Full rollout of one episode under the deployment policy.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub failure: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs one episode to completion under the policy, recording observation,
/// action, reward, proxy value, and a pre-action snapshot at every step.
pub fn run_episode(spec: &EnvSpec, policy: &dyn Policy, episode_seed: u64) -> Result<EpisodeTrace> {
    let mut env = make_env(spec)?;
    env.reset(episode_seed);
    let mut steps = Vec::new();
    let mut failure = false;
    while !env.is_terminal() {
        let snapshot = env.save_state();
        let observation = env.observation();
        let proxy = proxy_score_gap(&policy.scores(observation))?;
        let action = policy.act(observation);
        let outcome = env.step(action)?;
        failure = outcome.failure;
        steps.push(TraceStep {
            observation,
            action,
            reward: outcome.reward,
            proxy,
            snapshot,
        });
    }
    Ok(EpisodeTrace { steps, failure })
}

// ---------------------------------------------------------------------------
// Tuples
// ---------------------------------------------------------------------------

/// Which time-step selection rule produced a tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Natural,
    Uniform,
}

/// Criticality-estimate summary stored per perturbation size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerNStats {
    pub c_star: f64,
    pub trials: u32,
    pub stdev: f64,
    pub converged: bool,
}

/// One (proxy, criticality-per-n) record. The proxy metric does not depend
/// on the perturbation size, so a single value is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTuple {
    pub episode_id: u64,
    pub t: usize,
    pub mode: SampleMode,
    pub proxy: f64,
    pub per_n: BTreeMap<u32, PerNStats>,
}

/// Settings for one data-collection run.
#[derive(Debug, Clone)]
pub struct CollectionConfig {
    /// Perturbation sizes, strictly ascending.
    pub s_set: Vec<u32>,
    pub episodes_natural: u32,
    pub episodes_uniform: u32,
    /// Trailing steps of each episode excluded from selection; must cover
    /// the largest perturbation size.
    pub exclude_tail_steps: usize,
    pub horizon: HorizonConfig,
    pub sampling: SamplingConfig,
    pub seed: u64,
}

impl CollectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_set.is_empty() {
            return Err(Error::Config("s_set must not be empty".into()));
        }
        if self.s_set[0] == 0 {
            return Err(Error::Config("perturbation sizes must be positive".into()));
        }
        if !self.s_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "s_set must be strictly ascending, got {:?}",
                self.s_set
            )));
        }
        let max_n = *self.s_set.last().unwrap() as usize;
        if self.exclude_tail_steps < max_n {
            return Err(Error::Config(format!(
                "exclude_tail_steps ({}) must cover max(s_set) ({max_n})",
                self.exclude_tail_steps
            )));
        }
        Ok(())
    }
}

/// Simulation-cost summary of a collection run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CollectStats {
    pub episodes_run: u32,
    pub episodes_skipped: u32,
    pub tuples_emitted: usize,
    pub total_trials: u64,
    pub total_env_steps: u64,
}

/// Picks the eligible step whose proxy value is farthest (by minimum
/// absolute difference) from every previously selected proxy value. With no
/// history, picks uniformly at random; exact ties are broken uniformly at
/// random.
pub fn select_timestep_uniform(
    eligible_proxies: &[f64],
    prior_proxies: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if eligible_proxies.is_empty() {
        return Err(Error::Collection(
            "no eligible time steps after tail exclusion".into(),
        ));
    }
    if prior_proxies.is_empty() {
        return Ok(rng.random_range(0..eligible_proxies.len()));
    }
    let scores: Vec<f64> = eligible_proxies
        .iter()
        .map(|p| {
            prior_proxies
                .iter()
                .map(|q| (p - q).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    Ok(ties[rng.random_range(0..ties.len())])
}

struct SelectedEpisode {
    episode_id: u64,
    mode: SampleMode,
    t: usize,
    proxy: f64,
    snapshot: EnvSnapshot,
}

/// Runs the full data-collection procedure: natural-mode episodes first,
/// then uniform-mode episodes with their own selection history. Episodes
/// whose rollout is shorter than `exclude_tail_steps + 1` are skipped with
/// a logged warning and do not count toward either episode budget.
pub fn collect_tuples(
    spec: &EnvSpec,
    policy: &dyn Policy,
    config: &CollectionConfig,
) -> Result<(Vec<DataTuple>, CollectStats)> {
    config.validate()?;
    let mut stats = CollectStats::default();
    let mut selected = Vec::new();

    for (mode, episodes, stream) in [
        (SampleMode::Natural, config.episodes_natural, seeds::STREAM_NATURAL),
        (SampleMode::Uniform, config.episodes_uniform, seeds::STREAM_UNIFORM),
    ] {
        // Rollouts are independent; run them in parallel, in index order.
        let traces: Vec<EpisodeTrace> = (0..episodes)
            .into_par_iter()
            .map(|i| run_episode(spec, policy, seeds::mix(&[stream, config.seed, u64::from(i)])))
            .collect::<Result<_>>()?;

        // Selection conditions on prior selections (uniform mode), so it
        // walks the episodes sequentially.
        let mut history: Vec<f64> = Vec::new();
        for (i, trace) in traces.iter().enumerate() {
            stats.episodes_run += 1;
            stats.total_env_steps += trace.len() as u64;
            let episode_id = match mode {
                SampleMode::Natural => i as u64,
                SampleMode::Uniform => u64::from(config.episodes_natural) + i as u64,
            };
            let eligible = trace.len().saturating_sub(config.exclude_tail_steps);
            if eligible == 0 {
                log::warn!(
                    "episode {episode_id} ({mode:?}) has {} steps, fewer than \
                     exclude_tail_steps + 1 = {}; skipped",
                    trace.len(),
                    config.exclude_tail_steps + 1
                );
                stats.episodes_skipped += 1;
                continue;
            }
            let mut rng = seeds::rng(&[
                seeds::STREAM_SELECT,
                config.seed,
                stream,
                episode_id,
            ]);
            let t = match mode {
                SampleMode::Natural => rng.random_range(0..eligible),
                SampleMode::Uniform => {
                    let proxies: Vec<f64> =
                        trace.steps[..eligible].iter().map(|s| s.proxy).collect();
                    let t = select_timestep_uniform(&proxies, &history, &mut rng)?;
                    history.push(proxies[t]);
                    t
                }
            };
            selected.push(SelectedEpisode {
                episode_id,
                mode,
                t,
                proxy: trace.steps[t].proxy,
                snapshot: trace.steps[t].snapshot.clone(),
            });
        }
    }

    // One baseline per selected episode, shared across perturbation sizes.
    let baselines: Vec<(f64, u64)> = selected
        .par_iter()
        .map(|sel| {
            let mut env = make_env(spec)?;
            let b = unperturbed_return(&mut env, policy, &sel.snapshot, &config.horizon)?;
            Ok((b, env.lifetime_steps()))
        })
        .collect::<Result<_>>()?;

    // Per-(episode, n) estimates, flattened for maximum parallelism.
    let jobs: Vec<(usize, u32)> = selected
        .iter()
        .enumerate()
        .flat_map(|(idx, _)| config.s_set.iter().map(move |&n| (idx, n)))
        .collect();
    let estimates: Vec<(PerNStats, u64)> = jobs
        .par_iter()
        .map(|&(idx, n)| {
            let sel = &selected[idx];
            let mut env = make_env(spec)?;
            let est = estimate_with_baseline(
                &mut env,
                policy,
                &sel.snapshot,
                n,
                baselines[idx].0,
                &config.horizon,
                &config.sampling,
                seeds::mix(&[
                    seeds::STREAM_ESTIMATE,
                    config.seed,
                    sel.episode_id,
                    u64::from(n),
                ]),
            )?;
            Ok((
                PerNStats {
                    c_star: est.value,
                    trials: est.trials,
                    stdev: est.trial_stdev,
                    converged: est.converged,
                },
                env.lifetime_steps(),
            ))
        })
        .collect::<Result<_>>()?;

    stats.total_env_steps += baselines.iter().map(|(_, s)| s).sum::<u64>();

    let mut tuples: Vec<DataTuple> = selected
        .iter()
        .map(|sel| DataTuple {
            episode_id: sel.episode_id,
            t: sel.t,
            mode: sel.mode,
            proxy: sel.proxy,
            per_n: BTreeMap::new(),
        })
        .collect();
    for ((idx, n), (per_n, steps)) in jobs.iter().zip(estimates) {
        stats.total_trials += u64::from(per_n.trials);
        stats.total_env_steps += steps;
        tuples[*idx].per_n.insert(*n, per_n);
        log::debug!(
            "episode {} n={} trials={} converged={}",
            tuples[*idx].episode_id,
            n,
            per_n.trials,
            per_n.converged
        );
    }
    for tuple in &tuples {
        log::info!(
            "episode {} t={} mode={:?} proxy={:.6} trials={}",
            tuple.episode_id,
            tuple.t,
            tuple.mode,
            tuple.proxy,
            tuple.per_n.values().map(|p| u64::from(p.trials)).sum::<u64>()
        );
    }
    stats.tuples_emitted = tuples.len();
    Ok((tuples, stats))
}

// ---------------------------------------------------------------------------
// Persistence (JSON lines)
// ---------------------------------------------------------------------------

/// Writes tuples as UTF-8 JSON lines, one object per tuple.
pub fn write_tuples(tuples: &[DataTuple], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for tuple in tuples {
        let line = serde_json::to_string(tuple)
            .map_err(|e| Error::Collection(format!("serializing tuple: {e}")))?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines tuple file. Unknown fields are ignored for forward
/// compatibility; a malformed line fails with its 1-based line number.
pub fn read_tuples(path: &Path) -> Result<Vec<DataTuple>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut tuples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tuple: DataTuple = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        tuples.push(tuple);
    }
    Ok(tuples)
}
