//! Tabular policies and the per-action score gap used as the real-time
//! proxy metric.
//!
//! Deployment policies are deterministic (greedy argmax with ties broken by
//! lowest action id); the criticality machinery needs the unperturbed
//! trajectory to be reproducible.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{make_env, ActionId, EnvSpec, Observation};
use crate::error::{Error, Result};
use crate::seeds;

const QTABLE_FILE_VERSION: u32 = 1;
const DIVERGENCE_LIMIT: f64 = 1e6;

/// How per-action scores should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    QValues,
    LogProbs,
}

/// Per-action scores for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
}

/// Difference between the best and worst per-action score. The same formula
/// serves both Q values and log probabilities, and it is invariant under a
/// constant shift of all scores.
pub fn proxy_score_gap(output: &PolicyOutput) -> Result<f64> {
    if output.scores.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "proxy gap needs at least 2 scores, got {}",
            output.scores.len()
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in &output.scores {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok(hi - lo)
}

/// A deployable action-selection rule with inspectable per-action scores.
pub trait Policy: Sync {
    fn act(&self, obs: Observation) -> ActionId;
    fn scores(&self, obs: Observation) -> PolicyOutput;
    fn action_count(&self) -> u8;
}

// ---------------------------------------------------------------------------
// Q table
// ---------------------------------------------------------------------------

/// Dense state-action value table. Every (state, action) pair of the
/// environment exists, initialized to 0, which keeps greedy tie-breaking
/// well defined even for untrained tables.
#[derive(Debug, Clone)]
pub struct QTable {
    spec: EnvSpec,
    gamma: f64,
    action_count: u8,
    state_count: u64,
    /// State-major layout: `values[state * action_count + action]`.
    values: Vec<f64>,
}

impl QTable {
    pub fn zeroed(spec: &EnvSpec, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        let env = make_env(spec)?;
        let action_count = env.action_count();
        let state_count = env.state_count();
        Ok(QTable {
            spec: spec.clone(),
            gamma,
            action_count,
            state_count,
            values: vec![0.0; (state_count * u64::from(action_count)) as usize],
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn action_count(&self) -> u8 {
        self.action_count
    }

    fn index(&self, obs: Observation, action: ActionId) -> usize {
        debug_assert!(obs.0 < self.state_count);
        (obs.0 * u64::from(self.action_count) + u64::from(action.0)) as usize
    }

    pub fn get(&self, obs: Observation, action: ActionId) -> f64 {
        self.values[self.index(obs, action)]
    }

    pub fn set(&mut self, obs: Observation, action: ActionId, value: f64) {
        let i = self.index(obs, action);
        self.values[i] = value;
    }

    pub fn row(&self, obs: Observation) -> &[f64] {
        let start = (obs.0 * u64::from(self.action_count)) as usize;
        &self.values[start..start + usize::from(self.action_count)]
    }

    /// Greedy action; ties go to the lowest action id.
    pub fn argmax_action(&self, obs: Observation) -> ActionId {
        let row = self.row(obs);
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = i;
            }
        }
        ActionId(best as u8)
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    // -- persistence --------------------------------------------------------

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = QTableFile {
            version: QTABLE_FILE_VERSION,
            env_spec: self.spec.clone(),
            gamma: self.gamma,
            entries: (0..self.state_count)
                .flat_map(|s| {
                    (0..self.action_count).map(move |a| {
                        (
                            s,
                            a,
                            self.values[(s * u64::from(self.action_count) + u64::from(a)) as usize],
                        )
                    })
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::Config(format!("serializing q-table: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: QTableFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("parsing q-table {}: {e}", path.display())))?;
        if doc.version != QTABLE_FILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported q-table file version {}",
                doc.version
            )));
        }
        let mut table = QTable::zeroed(&doc.env_spec, doc.gamma)?;
        for (state, action, value) in doc.entries {
            if state >= table.state_count || action >= table.action_count {
                return Err(Error::Config(format!(
                    "q-table entry ({state}, {action}) out of range for {}",
                    doc.env_spec
                )));
            }
            table.set(Observation(state), ActionId(action), value);
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct QTableFile {
    version: u32,
    env_spec: EnvSpec,
    gamma: f64,
    entries: Vec<(u64, u8, f64)>,
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Linear exploration decay across training episodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
        }
    }
}

impl EpsilonSchedule {
    fn at(&self, episode: u32, total: u32) -> f64 {
        if total <= 1 {
            return self.start;
        }
        let f = f64::from(episode) / f64::from(total - 1);
        self.start + (self.end - self.start) * f
    }
}

/// Standard one-step Q-learning with epsilon-greedy exploration.
/// Deterministic given the seed.
pub fn train_q_learning(
    spec: &EnvSpec,
    episodes: u32,
    learning_rate: f64,
    gamma: f64,
    exploration: EpsilonSchedule,
    seed: u64,
) -> Result<QTable> {
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must lie in (0, 1], got {learning_rate}"
        )));
    }
    let mut table = QTable::zeroed(spec, gamma)?;
    let mut env = make_env(spec)?;
    let action_count = env.action_count();
    let mut rng = seeds::rng(&[seeds::STREAM_TRAIN, seed]);

    for episode in 0..episodes {
        let eps = exploration.at(episode, episodes);
        env.reset(seeds::mix(&[seeds::STREAM_TRAIN, seed, u64::from(episode)]));
        while !env.is_terminal() {
            let obs = env.observation();
            let action = if rng.random::<f64>() < eps {
                ActionId(rng.random_range(0..action_count))
            } else {
                table.argmax_action(obs)
            };
            let outcome = env.step(action)?;
            let future = if outcome.terminal {
                0.0
            } else {
                let row = table.row(outcome.observation);
                row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let old = table.get(obs, action);
            let new = old + learning_rate * (outcome.reward + gamma * future - old);
            table.set(obs, action, new);
            if !new.is_finite() || new.abs() > DIVERGENCE_LIMIT {
                return Err(Error::TrainingFailure(format!(
                    "q value {new} at state {} action {} exceeded {DIVERGENCE_LIMIT} \
                     (episode {episode}, lr {learning_rate}, gamma {gamma})",
                    obs.0, action.0
                )));
            }
        }
    }
    Ok(table)
}

/// Mean undiscounted return of a policy over seeded evaluation episodes.
pub fn evaluate_policy(
    spec: &EnvSpec,
    policy: &dyn Policy,
    episodes: u32,
    seed: u64,
) -> Result<f64> {
    let mut env = make_env(spec)?;
    let mut total = 0.0;
    for episode in 0..episodes {
        env.reset(seeds::mix(&[seeds::STREAM_EVAL, seed, u64::from(episode)]));
        while !env.is_terminal() {
            let outcome = env.step(policy.act(env.observation()))?;
            total += outcome.reward;
        }
    }
    Ok(total / f64::from(episodes.max(1)))
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// Greedy policy over a Q table, with the argmax precomputed per state so
/// action selection in simulation loops is a single array read.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    action_count: u8,
    actions: Vec<u8>,
    rows: Vec<f64>,
}

pub fn greedy_policy(q: &QTable) -> GreedyPolicy {
    let actions = (0..q.state_count)
        .map(|s| q.argmax_action(Observation(s)).0)
        .collect();
    GreedyPolicy {
        action_count: q.action_count,
        actions,
        rows: q.values.clone(),
    }
}

impl Policy for GreedyPolicy {
    fn act(&self, obs: Observation) -> ActionId {
        ActionId(self.actions[obs.0 as usize])
    }

    fn scores(&self, obs: Observation) -> PolicyOutput {
        let start = (obs.0 * u64::from(self.action_count)) as usize;
        PolicyOutput {
            scores: self.rows[start..start + usize::from(self.action_count)].to_vec(),
            kind: ScoreKind::QValues,
        }
    }

    fn action_count(&self) -> u8 {
        self.action_count
    }
}

/// Softmax scoring over temperature-scaled Q values. Scores are log
/// probabilities; deployment still picks the argmax so trajectories stay
/// reproducible.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    action_count: u8,
    actions: Vec<u8>,
    log_probs: Vec<f64>,
}

pub fn softmax_policy(q: &QTable, temperature: f64) -> Result<SoftmaxPolicy> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let mut log_probs = Vec::with_capacity(q.values.len());
    for s in 0..q.state_count {
        let row = q.row(Observation(s));
        let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max
            + scaled
                .iter()
                .map(|v| (v - max).exp())
                .sum::<f64>()
                .ln();
        log_probs.extend(scaled.iter().map(|v| v - log_sum));
    }
    let actions = (0..q.state_count)
        .map(|s| q.argmax_action(Observation(s)).0)
        .collect();
    Ok(SoftmaxPolicy {
        action_count: q.action_count,
        actions,
        log_probs,
    })
}

impl Policy for SoftmaxPolicy {
    fn act(&self, obs: Observation) -> ActionId {
        ActionId(self.actions[obs.0 as usize])
    }

    fn scores(&self, obs: Observation) -> PolicyOutput {
        let start = (obs.0 * u64::from(self.action_count)) as usize;
        PolicyOutput {
            scores: self.log_probs[start..start + usize::from(self.action_count)].to_vec(),
            kind: ScoreKind::LogProbs,
        }
    }

    fn action_count(&self) -> u8 {
        self.action_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_spec(length: u32) -> EnvSpec {
        EnvSpec::LineWorld { length }
    }

    /// Value iteration on the 5-state corridor; the optimal policy moves
    /// right from every interior state.
    #[test]
    fn line_world_training_matches_value_iteration() {
        let table = train_q_learning(
            &line_spec(4),
            500,
            0.5,
            0.9,
            EpsilonSchedule::default(),
            7,
        )
        .unwrap();
        for state in 1..4u64 {
            assert_eq!(
                table.argmax_action(Observation(state)),
                ActionId(1),
                "state {state} should move right"
            );
        }
        let policy = greedy_policy(&table);
        let ret = evaluate_policy(&line_spec(4), &policy, 100, 3).unwrap();
        assert_eq!(ret, 1.0);
    }

    #[test]
    fn grid_cliff_training_reaches_goal_near_optimally() {
        let spec = EnvSpec::GridCliff { rows: 4, cols: 12 };
        let table = train_q_learning(&spec, 5_000, 0.1, 0.99, EpsilonSchedule::default(), 11)
            .unwrap();
        let policy = greedy_policy(&table);
        let ret = evaluate_policy(&spec, &policy, 100, 5).unwrap();
        // Shortest-path return is -13; allow learned detours.
        assert!(ret >= -20.0, "mean return {ret} worse than -20");
    }

    #[test]
    fn zero_episode_training_yields_zero_table() {
        let table = train_q_learning(
            &line_spec(4),
            0,
            0.5,
            0.9,
            EpsilonSchedule::default(),
            1,
        )
        .unwrap();
        assert!(table.values.iter().all(|&v| v == 0.0));
        // Greedy stays well defined through tie-breaking.
        assert_eq!(table.argmax_action(Observation(2)), ActionId(0));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let spec = EnvSpec::GridCliff { rows: 3, cols: 4 };
        let a = train_q_learning(&spec, 300, 0.2, 0.95, EpsilonSchedule::default(), 42).unwrap();
        let b = train_q_learning(&spec, 300, 0.2, 0.95, EpsilonSchedule::default(), 42).unwrap();
        assert_eq!(a.values.len(), b.values.len());
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn greedy_argmax_and_scores_agree() {
        let mut table = QTable::zeroed(&line_spec(4), 0.9).unwrap();
        table.set(Observation(2), ActionId(0), 1.0);
        table.set(Observation(2), ActionId(1), 3.0);
        let policy = greedy_policy(&table);
        assert_eq!(policy.act(Observation(2)), ActionId(1));
        let out = policy.scores(Observation(2));
        assert_eq!(out.kind, ScoreKind::QValues);
        assert_eq!(out.scores, vec![1.0, 3.0]);
    }

    #[test]
    fn softmax_log_probs_normalize() {
        let spec = EnvSpec::GridCliff { rows: 2, cols: 3 };
        let mut table = QTable::zeroed(&spec, 0.9).unwrap();
        table.set(Observation(0), ActionId(0), 1.0);
        table.set(Observation(0), ActionId(1), 3.0);
        table.set(Observation(0), ActionId(2), 2.0);
        let policy = softmax_policy(&table, 1.0).unwrap();
        for s in 0..6u64 {
            let out = policy.scores(Observation(s));
            assert_eq!(out.kind, ScoreKind::LogProbs);
            let total: f64 = out.scores.iter().map(|l| l.exp()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            assert!(out.scores.iter().all(|&l| l <= 0.0));
        }
        // Hand-evaluated softmax over [1, 3, 2, 0].
        let out = policy.scores(Observation(0));
        let z = 1f64.exp() + 3f64.exp() + 2f64.exp() + 1.0;
        assert_abs_diff_eq!(out.scores[1], (3f64.exp() / z).ln(), epsilon = 1e-9);
        assert_eq!(policy.act(Observation(0)), ActionId(1));
    }

    #[test]
    fn softmax_of_uniform_values_is_uniform() {
        let table = QTable::zeroed(&line_spec(2), 0.9).unwrap();
        let policy = softmax_policy(&table, 1.0).unwrap();
        let out = policy.scores(Observation(1));
        assert_abs_diff_eq!(out.scores[0], 0.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(out.scores[1], 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn proxy_gap_cases() {
        let q = PolicyOutput {
            scores: vec![1.0, 3.0, 2.0],
            kind: ScoreKind::QValues,
        };
        assert_eq!(proxy_score_gap(&q).unwrap(), 2.0);

        let lp = PolicyOutput {
            scores: vec![0.5f64.ln(), 0.5f64.ln()],
            kind: ScoreKind::LogProbs,
        };
        assert_eq!(proxy_score_gap(&lp).unwrap(), 0.0);

        let shifted = PolicyOutput {
            scores: q.scores.iter().map(|s| s + 17.25).collect(),
            kind: ScoreKind::QValues,
        };
        assert_abs_diff_eq!(
            proxy_score_gap(&shifted).unwrap(),
            proxy_score_gap(&q).unwrap(),
            epsilon = 1e-12
        );

        let short = PolicyOutput {
            scores: vec![1.0],
            kind: ScoreKind::QValues,
        };
        assert!(proxy_score_gap(&short).is_err());
    }

    #[test]
    fn qtable_file_round_trip() {
        let spec = EnvSpec::GridCliff { rows: 3, cols: 4 };
        let table = train_q_learning(&spec, 200, 0.2, 0.95, EpsilonSchedule::default(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        table.save(&path).unwrap();
        let loaded = QTable::load(&path).unwrap();
        assert_eq!(loaded.spec(), table.spec());
        assert_eq!(loaded.gamma(), table.gamma());
        for (a, b) in table.values.iter().zip(&loaded.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn act_matches_argmax_over_visited_states() {
        let spec = EnvSpec::GridCliff { rows: 4, cols: 12 };
        let table =
            train_q_learning(&spec, 2_000, 0.1, 0.99, EpsilonSchedule::default(), 21).unwrap();
        let policy = greedy_policy(&table);
        let mut env = make_env(&spec).unwrap();
        for seed in 0..100u64 {
            env.reset(seed);
            let mut guard = 0;
            while !env.is_terminal() && guard < 300 {
                let obs = env.observation();
                let out = policy.scores(obs);
                let best = out
                    .scores
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(out.scores[usize::from(policy.act(obs).0)], best);
                env.step(policy.act(obs)).unwrap();
                guard += 1;
            }
        }
    }
}
