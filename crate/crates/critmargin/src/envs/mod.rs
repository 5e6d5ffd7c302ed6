//! Deterministic, snapshot-capable environments.
//!
//! All three built-in worlds share two properties the criticality estimator
//! depends on: transitions are a pure function of the current state and
//! action, and the full simulation state round-trips through a byte
//! snapshot, so any time step can be replayed arbitrarily often.

pub mod grid_cliff;
pub mod line_world;
pub mod mini_paddle;

pub use grid_cliff::GridCliff;
pub use line_world::LineWorld;
pub use mini_paddle::MiniPaddle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque discrete state identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation(pub u64);

/// Index into an environment's action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub u8);

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    /// Terminal due to a catastrophic event (cliff fall, missed ball).
    /// Always implies `terminal`.
    pub failure: bool,
}

/// Constructor parameters for the built-in environments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    LineWorld { length: u32 },
    GridCliff { rows: u32, cols: u32 },
    MiniPaddle { width: u32, height: u32, balls: u32 },
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::LineWorld { length } => write!(f, "line_world({length})"),
            EnvSpec::GridCliff { rows, cols } => write!(f, "grid_cliff({rows},{cols})"),
            EnvSpec::MiniPaddle {
                width,
                height,
                balls,
            } => write!(f, "mini_paddle({width},{height},{balls})"),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    /// Parses the compact form used on the command line, e.g.
    /// `line_world(4)`, `grid_cliff(4,12)`, `mini_paddle(8,6,5)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Config(format!("malformed env spec `{s}`")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Config(format!("malformed env spec `{s}`")))?;
        let nums: Vec<u32> = args
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("bad env dimension `{a}` in `{s}`")))
            })
            .collect::<Result<_>>()?;
        let spec = match (name.trim(), nums.as_slice()) {
            ("line_world", [length]) => EnvSpec::LineWorld { length: *length },
            ("grid_cliff", [rows, cols]) => EnvSpec::GridCliff {
                rows: *rows,
                cols: *cols,
            },
            ("mini_paddle", [width, height, balls]) => EnvSpec::MiniPaddle {
                width: *width,
                height: *height,
                balls: *balls,
            },
            (other, _) => {
                return Err(Error::Config(format!(
                    "unknown environment `{other}` or wrong arity in `{s}`"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            EnvSpec::LineWorld { length } => *length > 0,
            EnvSpec::GridCliff { rows, cols } => *rows > 0 && *cols > 0,
            EnvSpec::MiniPaddle {
                width,
                height,
                balls,
            } => *width > 0 && *height > 0 && *balls > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "environment dimensions must be positive: {self}"
            )))
        }
    }

}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

const SNAPSHOT_FORMAT: u16 = 1;

/// Serialized environment state. Layout: a 2-byte little-endian format tag,
/// a 1-byte environment kind, a 4-byte little-endian payload length, then
/// the payload (constructor parameters followed by mutable state, all
/// fixed-width little-endian).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSnapshot(Vec<u8>);

impl EnvSnapshot {
    pub(crate) fn encode(kind: u8, payload: &[u8]) -> Self {
        let mut bytes = Vec::with_capacity(7 + payload.len());
        bytes.extend_from_slice(&SNAPSHOT_FORMAT.to_le_bytes());
        bytes.push(kind);
        bytes.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        bytes.extend_from_slice(payload);
        EnvSnapshot(bytes)
    }

    pub(crate) fn payload(&self, expect_kind: u8) -> Result<&[u8]> {
        if self.0.len() < 7 {
            return Err(Error::SnapshotFormat("snapshot truncated".into()));
        }
        let version = u16::from_le_bytes([self.0[0], self.0[1]]);
        if version != SNAPSHOT_FORMAT {
            return Err(Error::SnapshotFormat(format!(
                "unsupported snapshot format {version}"
            )));
        }
        if self.0[2] != expect_kind {
            return Err(Error::SnapshotFormat(format!(
                "snapshot kind {} does not match environment kind {expect_kind}",
                self.0[2]
            )));
        }
        let len = u32::from_le_bytes([self.0[3], self.0[4], self.0[5], self.0[6]]) as usize;
        if self.0.len() != 7 + len {
            return Err(Error::SnapshotFormat("snapshot length mismatch".into()));
        }
        Ok(&self.0[7..])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        EnvSnapshot(bytes)
    }
}

pub(crate) struct PayloadWriter(Vec<u8>);

impl PayloadWriter {
    pub fn new() -> Self {
        PayloadWriter(Vec::new())
    }
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub(crate) struct PayloadReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        PayloadReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::SnapshotFormat("snapshot payload truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    pub fn finish(self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::SnapshotFormat("trailing snapshot bytes".into()))
        }
    }
}

// ---------------------------------------------------------------------------
// Environment handle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum EnvKind {
    Line(LineWorld),
    Cliff(GridCliff),
    Paddle(MiniPaddle),
}

/// A concrete environment instance. Handles are single-threaded; clone one
/// (or rebuild from the spec) to run trajectories in parallel.
#[derive(Debug, Clone)]
pub struct Env {
    kind: EnvKind,
    lifetime_steps: u64,
}

/// Builds an environment in its initial state.
pub fn make_env(spec: &EnvSpec) -> Result<Env> {
    spec.validate()?;
    let kind = match spec {
        EnvSpec::LineWorld { length } => EnvKind::Line(LineWorld::new(*length)),
        EnvSpec::GridCliff { rows, cols } => EnvKind::Cliff(GridCliff::new(*rows, *cols)),
        EnvSpec::MiniPaddle {
            width,
            height,
            balls,
        } => EnvKind::Paddle(MiniPaddle::new(*width, *height, *balls)),
    };
    Ok(Env {
        kind,
        lifetime_steps: 0,
    })
}

impl Env {
    pub fn spec(&self) -> EnvSpec {
        match &self.kind {
            EnvKind::Line(e) => e.spec(),
            EnvKind::Cliff(e) => e.spec(),
            EnvKind::Paddle(e) => e.spec(),
        }
    }

    pub fn action_count(&self) -> u8 {
        match &self.kind {
            EnvKind::Line(_) => 2,
            EnvKind::Cliff(_) => 4,
            EnvKind::Paddle(_) => 3,
        }
    }

    /// Number of distinct observation ids this environment can emit.
    pub fn state_count(&self) -> u64 {
        match &self.kind {
            EnvKind::Line(e) => e.state_count(),
            EnvKind::Cliff(e) => e.state_count(),
            EnvKind::Paddle(e) => e.state_count(),
        }
    }

    /// Total transitions simulated by this handle since construction.
    /// Diagnostics only; not part of snapshots.
    pub fn lifetime_steps(&self) -> u64 {
        self.lifetime_steps
    }

    pub fn observation(&self) -> Observation {
        match &self.kind {
            EnvKind::Line(e) => e.observation(),
            EnvKind::Cliff(e) => e.observation(),
            EnvKind::Paddle(e) => e.observation(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        match &self.kind {
            EnvKind::Line(e) => e.is_terminal(),
            EnvKind::Cliff(e) => e.is_terminal(),
            EnvKind::Paddle(e) => e.is_terminal(),
        }
    }

    /// Restores the initial state. The seed only affects content drawn at
    /// reset time (the paddle world's ball sequence); the grid worlds ignore
    /// it.
    pub fn reset(&mut self, seed: u64) {
        match &mut self.kind {
            EnvKind::Line(e) => e.reset(),
            EnvKind::Cliff(e) => e.reset(),
            EnvKind::Paddle(e) => e.reset(seed),
        }
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.is_terminal() {
            return Err(Error::EnvUsage(
                "step called on a terminal environment".into(),
            ));
        }
        if action.0 >= self.action_count() {
            return Err(Error::EnvUsage(format!(
                "action {} out of range (action count {})",
                action.0,
                self.action_count()
            )));
        }
        self.lifetime_steps += 1;
        let outcome = match &mut self.kind {
            EnvKind::Line(e) => e.step(action),
            EnvKind::Cliff(e) => e.step(action),
            EnvKind::Paddle(e) => e.step(action),
        };
        debug_assert!(!outcome.failure || outcome.terminal);
        Ok(outcome)
    }

    pub fn save_state(&self) -> EnvSnapshot {
        match &self.kind {
            EnvKind::Line(e) => e.save_state(),
            EnvKind::Cliff(e) => e.save_state(),
            EnvKind::Paddle(e) => e.save_state(),
        }
    }

    pub fn load_state(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        match &mut self.kind {
            EnvKind::Line(e) => e.load_state(snapshot),
            EnvKind::Cliff(e) => e.load_state(snapshot),
            EnvKind::Paddle(e) => e.load_state(snapshot),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rollout(env: &mut Env, rng: &mut impl Rng, max_steps: usize) -> Vec<StepOutcome> {
        let mut out = Vec::new();
        for _ in 0..max_steps {
            if env.is_terminal() {
                break;
            }
            let a = ActionId(rng.random_range(0..env.action_count()));
            out.push(env.step(a).unwrap());
        }
        out
    }

    #[test]
    fn spec_round_trips_through_strings() {
        for s in ["line_world(4)", "grid_cliff(4,12)", "mini_paddle(8,6,5)"] {
            let spec: EnvSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("maze(3)".parse::<EnvSpec>().is_err());
        assert!("grid_cliff(0,12)".parse::<EnvSpec>().is_err());
        assert!("grid_cliff(4)".parse::<EnvSpec>().is_err());
    }

    #[test]
    fn action_counts_match_spec() {
        assert_eq!(
            make_env(&"line_world(4)".parse().unwrap())
                .unwrap()
                .action_count(),
            2
        );
        assert_eq!(
            make_env(&"grid_cliff(4,12)".parse().unwrap())
                .unwrap()
                .action_count(),
            4
        );
        assert_eq!(
            make_env(&"mini_paddle(8,6,5)".parse().unwrap())
                .unwrap()
                .action_count(),
            3
        );
    }

    #[test]
    fn snapshot_replay_is_bitwise_identical() {
        for spec_str in ["line_world(6)", "grid_cliff(4,6)", "mini_paddle(8,6,5)"] {
            let spec: EnvSpec = spec_str.parse().unwrap();
            for round in 0..100u64 {
                let mut env = make_env(&spec).unwrap();
                env.reset(round);
                // Walk a few random steps in, then snapshot.
                let mut rng = crate::seeds::rng(&[99, round]);
                let _ = random_rollout(&mut env, &mut rng, (round % 7) as usize);
                if env.is_terminal() {
                    continue;
                }
                let snap = env.save_state();

                let mut rng_a = crate::seeds::rng(&[7, round]);
                let actions: Vec<ActionId> = (0..12)
                    .map(|_| ActionId(rng_a.random_range(0..env.action_count())))
                    .collect();

                let run = |env: &mut Env| -> Vec<StepOutcome> {
                    let mut out = Vec::new();
                    for &a in &actions {
                        if env.is_terminal() {
                            break;
                        }
                        out.push(env.step(a).unwrap());
                    }
                    out
                };

                env.load_state(&snap).unwrap();
                let first = run(&mut env);

                // Replay from the same snapshot in a fresh handle.
                let mut env2 = make_env(&spec).unwrap();
                env2.load_state(&snap).unwrap();
                let second = run(&mut env2);
                assert_eq!(first.len(), second.len(), "{spec_str} round {round}");
                for (a, b) in first.iter().zip(&second) {
                    assert_eq!(a.observation, b.observation);
                    assert_eq!(a.reward.to_bits(), b.reward.to_bits());
                    assert_eq!(a.terminal, b.terminal);
                    assert_eq!(a.failure, b.failure);
                }
            }
        }
    }

    #[test]
    fn failure_implies_terminal_everywhere() {
        for spec_str in ["line_world(4)", "grid_cliff(3,4)", "mini_paddle(5,4,3)"] {
            let spec: EnvSpec = spec_str.parse().unwrap();
            for seed in 0..50u64 {
                let mut env = make_env(&spec).unwrap();
                env.reset(seed);
                let mut rng = crate::seeds::rng(&[3, seed]);
                for outcome in random_rollout(&mut env, &mut rng, 500) {
                    if outcome.failure {
                        assert!(outcome.terminal);
                    }
                }
            }
        }
    }

    #[test]
    fn cross_environment_snapshot_is_rejected() {
        let cliff = make_env(&"grid_cliff(4,12)".parse().unwrap()).unwrap();
        let mut line = make_env(&"line_world(4)".parse().unwrap()).unwrap();
        let snap = cliff.save_state();
        assert!(matches!(
            line.load_state(&snap),
            Err(Error::SnapshotFormat(_))
        ));
        // Same kind, different parameters.
        let mut cliff_small = make_env(&"grid_cliff(3,4)".parse().unwrap()).unwrap();
        assert!(matches!(
            cliff_small.load_state(&snap),
            Err(Error::SnapshotFormat(_))
        ));
    }

    #[test]
    fn step_after_terminal_is_a_usage_error() {
        let mut env = make_env(&"line_world(2)".parse().unwrap()).unwrap();
        env.reset(0);
        let out = env.step(ActionId(1)).unwrap();
        assert!(out.terminal);
        assert!(matches!(env.step(ActionId(1)), Err(Error::EnvUsage(_))));
    }
}
