//! critmargin — criticality estimation and probabilistic safety margins
//! for tabular reinforcement-learning agents.
//!
//! The toolkit measures how much an agent's expected discounted reward
//! drops when its policy is overridden by uniform-random actions for `n`
//! consecutive steps (*true criticality*), binds that ground truth to a
//! cheap real-time *proxy* metric (the spread of per-action scores) with a
//! 2d kernel density estimate, and compiles the resulting percentile
//! curves into *safety-margin* lookup tables: given a proxy reading and a
//! reward-loss tolerance, how many consecutive mistakes can be afforded
//! with high confidence. Coverage of those guarantees is validated
//! empirically.
//!
//! ## Start with the examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example train_policy        # tabular Q-learning
//! cargo run --release --example estimate_criticality # trial estimates vs. exact enumeration
//! cargo run --release --example collect_tuples      # natural + uniform-in-proxy sampling
//! cargo run --release --example fit_margins         # KDE, percentile curves, margin table
//! cargo run --release --example query_margins       # margin lookups across proxy and tolerance
//! cargo run --release --example validate_coverage   # held-out percentile coverage
//! cargo run --release --example failure_proximity   # margins shortly before failures
//! cargo run --release --example error_bounds        # effective sample size and error bounds
//! cargo run --release --example full_pipeline       # end to end, with file artifacts
//! ```
//!
//! The same pipeline is scriptable through the thin `critmargin` binary
//! (`train`, `collect`, `fit`, `margin`, `validate`, `report`).
//!
//! ## Module map
//!
//! - [`stats`]: quantiles, dispersion, bandwidths, percentile-error bounds.
//! - [`envs`]: deterministic snapshot-capable toy environments.
//! - [`agents`]: Q-tables, training, greedy/softmax policies, proxy metric.
//! - [`criticality`]: trial-based true-criticality estimation plus the
//!   exact enumeration oracle.
//! - [`collect`]: episode rollouts and data-tuple generation.
//! - [`margins`]: density fitting, percentile curves, margin tables,
//!   exports.
//! - [`validate`]: coverage cross-validation, failure proximity, gap error.
//! - [`config`] / [`pipeline`]: the JSON run configuration and the
//!   orchestrated steps behind the CLI.

pub mod agents;
pub mod collect;
pub mod config;
pub mod criticality;
pub mod envs;
pub mod error;
pub mod margins;
pub mod pipeline;
pub mod seeds;
pub mod stats;
pub mod validate;

pub use config::RunConfig;
pub use error::{Error, Result};
