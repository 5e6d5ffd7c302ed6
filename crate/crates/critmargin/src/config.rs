//! Run configuration: one JSON document drives the whole
//! train / collect / fit / validate pipeline. Defaults mirror the
//! pipeline constants the toolkit was calibrated with (gamma 0.99, horizon
//! error target 0.01, sampling error target 0.2 at 95% confidence,
//! perturbation sizes 1..32, 500 episodes per sampling mode, 5% top-proxy
//! filtering, 32 excluded tail steps).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collect::CollectionConfig;
use crate::criticality::{HorizonConfig, SamplingConfig};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::stats::Confidence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Greedy,
    Softmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_policy_kind")]
    pub kind: PolicyKind,
    /// Softmax temperature; ignored for greedy scoring.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Optional pre-trained table; commands that need a policy fall back to
    /// this when no explicit table path is given on the command line.
    #[serde(default)]
    pub table_path: Option<PathBuf>,
}

fn default_policy_kind() -> PolicyKind {
    PolicyKind::Greedy
}

fn default_temperature() -> f64 {
    1.0
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: default_policy_kind(),
            temperature: default_temperature(),
            table_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_training_episodes")]
    pub episodes: u32,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epsilon_start")]
    pub epsilon_start: f64,
    #[serde(default = "default_epsilon_end")]
    pub epsilon_end: f64,
}

fn default_training_episodes() -> u32 {
    5_000
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_epsilon_start() -> f64 {
    1.0
}
fn default_epsilon_end() -> f64 {
    0.05
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            episodes: default_training_episodes(),
            learning_rate: default_learning_rate(),
            epsilon_start: default_epsilon_start(),
            epsilon_end: default_epsilon_end(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_proximity_episodes")]
    pub proximity_episodes: u32,
    #[serde(default = "default_zetas")]
    pub zetas: Vec<f64>,
    #[serde(default = "default_offsets")]
    pub offsets: Vec<u32>,
    #[serde(default = "default_top_fraction")]
    pub top_fraction: f64,
    /// Acceptable range for the estimated percentile error, `[low, high]`.
    #[serde(default = "default_coverage_band")]
    pub coverage_band: (f64, f64),
}

fn default_train_fraction() -> f64 {
    0.8
}
fn default_proximity_episodes() -> u32 {
    100
}
fn default_zetas() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn default_offsets() -> Vec<u32> {
    vec![1, 2, 4]
}
fn default_top_fraction() -> f64 {
    0.05
}
fn default_coverage_band() -> (f64, f64) {
    (-0.06, 0.04)
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            train_fraction: default_train_fraction(),
            proximity_episodes: default_proximity_episodes(),
            zetas: default_zetas(),
            offsets: default_offsets(),
            top_fraction: default_top_fraction(),
            coverage_band: default_coverage_band(),
        }
    }
}

/// Everything a pipeline run needs, with seeded reproducibility. Unknown
/// keys are rejected so misspelled settings fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Discount factor shared by training, the horizon rule, and rollouts.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_eps_horizon")]
    pub eps_horizon: f64,
    #[serde(default = "default_eps_sampling")]
    pub eps_sampling: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_s_set")]
    pub s_set: Vec<u32>,
    #[serde(default = "default_mode_episodes")]
    pub episodes_natural: u32,
    #[serde(default = "default_mode_episodes")]
    pub episodes_uniform: u32,
    #[serde(default = "default_filter_fraction")]
    pub filter_fraction: f64,
    #[serde(default = "default_exclude_tail")]
    pub exclude_tail_steps: usize,
    #[serde(default = "default_n_min")]
    pub n_min: u32,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default)]
    pub seed: u64,
    /// Parallel worker threads; 0 uses all cores. Outputs are identical
    /// for any setting.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub validation: ValidationConfig,
}

fn default_gamma() -> f64 {
    0.99
}
fn default_eps_horizon() -> f64 {
    0.01
}
fn default_eps_sampling() -> f64 {
    0.2
}
fn default_alpha() -> f64 {
    0.95
}
fn default_beta() -> f64 {
    0.95
}
fn default_s_set() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 32]
}
fn default_mode_episodes() -> u32 {
    500
}
fn default_filter_fraction() -> f64 {
    0.05
}
fn default_exclude_tail() -> usize {
    32
}
fn default_n_min() -> u32 {
    10
}
fn default_n_max() -> u32 {
    1_000
}

impl RunConfig {
    pub fn new(env: EnvSpec) -> Self {
        let doc = serde_json::json!({ "env": env });
        serde_json::from_value(doc).expect("defaults are well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        for (field, value) in [
            ("gamma", self.gamma),
            ("eps_horizon", self.eps_horizon),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::Config(format!(
                    "{field} must lie in (0, 1), got {value}"
                )));
            }
        }
        if self.eps_sampling.is_nan() || self.eps_sampling <= 0.0 {
            return Err(Error::Config(format!(
                "eps_sampling must be positive, got {}",
                self.eps_sampling
            )));
        }
        if !(self.filter_fraction >= 0.0 && self.filter_fraction < 1.0) {
            return Err(Error::Config(format!(
                "filter_fraction must lie in [0, 1), got {}",
                self.filter_fraction
            )));
        }
        if self.s_set.is_empty() || self.s_set[0] == 0 {
            return Err(Error::Config(
                "s_set must be a non-empty list of positive sizes".into(),
            ));
        }
        if !self.s_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "s_set must be strictly ascending, got {:?}",
                self.s_set
            )));
        }
        if self.exclude_tail_steps < *self.s_set.last().unwrap() as usize {
            return Err(Error::Config(format!(
                "exclude_tail_steps ({}) must be at least max(s_set) ({})",
                self.exclude_tail_steps,
                self.s_set.last().unwrap()
            )));
        }
        if self.n_min < 2 || self.n_max < self.n_min {
            return Err(Error::Config(format!(
                "trial bounds must satisfy 2 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if !(self.training.learning_rate > 0.0 && self.training.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "training.learning_rate must lie in (0, 1], got {}",
                self.training.learning_rate
            )));
        }
        if !(self.validation.train_fraction > 0.0 && self.validation.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation.train_fraction must lie in (0, 1), got {}",
                self.validation.train_fraction
            )));
        }
        if self.policy.temperature.is_nan() || self.policy.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "policy.temperature must be positive, got {}",
                self.policy.temperature
            )));
        }
        Ok(())
    }

    pub fn alpha_confidence(&self) -> Result<Confidence> {
        Confidence::new(self.alpha)
    }

    pub fn beta_confidence(&self) -> Result<Confidence> {
        Confidence::new(self.beta)
    }

    pub fn horizon(&self) -> Result<HorizonConfig> {
        HorizonConfig::new(self.gamma, self.eps_horizon)
    }

    pub fn sampling(&self) -> Result<SamplingConfig> {
        SamplingConfig::new(
            self.eps_sampling,
            self.alpha_confidence()?,
            self.n_min,
            self.n_max,
        )
    }

    pub fn collection(&self) -> Result<CollectionConfig> {
        let config = CollectionConfig {
            s_set: self.s_set.clone(),
            episodes_natural: self.episodes_natural,
            episodes_uniform: self.episodes_uniform,
            exclude_tail_steps: self.exclude_tail_steps,
            horizon: self.horizon()?,
            sampling: self.sampling()?,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// Stable FNV-1a digest of the canonical JSON form, recorded as table
    /// provenance. Execution settings (worker count) are excluded so
    /// artifacts stay byte-identical across machines.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
        format!("{hash:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_pipeline_constants() {
        let config = RunConfig::new(EnvSpec::GridCliff { rows: 4, cols: 12 });
        assert_eq!(config.gamma, 0.99);
        assert_eq!(config.eps_horizon, 0.01);
        assert_eq!(config.eps_sampling, 0.2);
        assert_eq!(config.alpha, 0.95);
        assert_eq!(config.beta, 0.95);
        assert_eq!(config.s_set, vec![1, 2, 4, 8, 16, 32]);
        assert_eq!(config.episodes_natural, 500);
        assert_eq!(config.episodes_uniform, 500);
        assert_eq!(config.filter_fraction, 0.05);
        assert_eq!(config.exclude_tail_steps, 32);
        assert_eq!(config.n_min, 10);
        assert_eq!(config.horizon().unwrap().horizon_steps(), 459);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"env": {"name": "line_world", "length": 4}, "bogus": 1}"#;
        let parsed: std::result::Result<RunConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn cross_field_consistency_is_enforced() {
        let mut config = RunConfig::new(EnvSpec::LineWorld { length: 4 });
        config.s_set = vec![1, 2, 64];
        config.exclude_tail_steps = 32;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("exclude_tail_steps"));

        let mut config = RunConfig::new(EnvSpec::LineWorld { length: 4 });
        config.s_set = vec![2, 1];
        assert!(config.validate().is_err());

        let mut config = RunConfig::new(EnvSpec::LineWorld { length: 4 });
        config.gamma = 1.2;
        assert!(config.validate().is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = RunConfig::new(EnvSpec::LineWorld { length: 4 });
        let b = RunConfig::new(EnvSpec::LineWorld { length: 4 });
        assert_eq!(a.digest(), b.digest());
        let mut c = RunConfig::new(EnvSpec::LineWorld { length: 4 });
        c.seed = 99;
        assert_ne!(a.digest(), c.digest());
    }
}
