//! Conformity experiments on multimodal agents.
//!
//! Procedural visual stimuli are shown with scripted confederate replies; the
//! agent's two-token answer distribution gives `p_wrong(N)` curves whose area
//! summarizes conformity. The numerical core in [`metrics`] and [`stats`] is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`.

pub mod agents;
pub mod metrics;
pub mod promptkit;
pub mod report;
pub mod runner;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod stimgen;

pub use agents::{Agent, AgentError, EvalRequest, RemoteAgent, SyntheticAgent, SyntheticAgentParams, TokenScores};
pub use metrics::{aggregate_curve, auc, delta_score, two_token_probs, DeltaLabel, TrialRecord};
pub use promptkit::{assemble, Condition, RenderedPrompt};
pub use runner::{run_experiment, AnalysisReport, Experiment, RunConfig, RunOptions, RunnerError};
pub use scalar::Scalar;
pub use stats::{min_max_normalize, one_sample_t, ols, spearman, Tail};
pub use stimgen::{generate, DifficultyLadder, Label, Stimulus, TaskKind};

pub type Curve = metrics::ConformityCurve<f64>;
pub type Delta = metrics::DeltaScore<f64>;
pub type Spearman = stats::SpearmanResult<f64>;
pub type Regression = stats::RegressionResult<f64>;
pub type TTest = stats::TTestResult<f64>;
pub type Normalized = stats::NormalizedSeries<f64>;
