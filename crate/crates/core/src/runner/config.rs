use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, EndpointSettings, RemoteAgent, SyntheticAgent, SyntheticAgentParams};
use crate::promptkit::{IdentityKind, DEFAULT_ROLE, STRENGTH_ROLES};
use crate::seed::hex_digest;
use crate::stimgen::{DifficultyLadder, TaskKind};

use super::RunnerError;

/// Which agent answers the trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    Synthetic(SyntheticAgentParams),
    Remote(EndpointSettings),
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec::Synthetic(SyntheticAgentParams::default())
    }
}

impl AgentSpec {
    pub fn build(&self, keep_raw: bool) -> Result<Box<dyn Agent>, RunnerError> {
        match self {
            AgentSpec::Synthetic(p) => Ok(Box::new(SyntheticAgent::new(p.clone())?)),
            AgentSpec::Remote(settings) => {
                let cfg = settings.to_config(keep_raw);
                if cfg.api_key.expose().is_empty() {
                    eprintln!(
                        "warning: {} is unset; sending requests without an API key",
                        settings.api_key_env
                    );
                }
                Ok(Box::new(RemoteAgent::new(cfg)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    GroupSize,
    Unanimity,
    DifficultyPerformance,
    Normative,
    Strength,
    Identity,
    ProximitySpatial,
    ProximityTemporal,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::GroupSize,
        Experiment::Unanimity,
        Experiment::DifficultyPerformance,
        Experiment::Normative,
        Experiment::Strength,
        Experiment::Identity,
        Experiment::ProximitySpatial,
        Experiment::ProximityTemporal,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Experiment::GroupSize => "group_size",
            Experiment::Unanimity => "unanimity",
            Experiment::DifficultyPerformance => "difficulty_performance",
            Experiment::Normative => "normative",
            Experiment::Strength => "strength",
            Experiment::Identity => "identity",
            Experiment::ProximitySpatial => "proximity_spatial",
            Experiment::ProximityTemporal => "proximity_temporal",
        }
    }

    /// Whether the experiment draws from the calibrated pool.
    pub fn uses_calibrated_pool(self) -> bool {
        self != Experiment::DifficultyPerformance
    }
}

/// A run configuration, read from JSON. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    pub agent: AgentSpec,
    pub experiment: Experiment,
    pub n_grid: Vec<u32>,
    pub trials_per_n: u32,
    pub pool_size: usize,
    pub baseline_epsilon: f64,
    pub wrong_fractions: Vec<f64>,
    pub roles: Vec<String>,
    pub identity_kinds: Vec<IdentityKind>,
    pub normative_pairs: usize,
    /// Images per level in the difficulty experiment.
    pub difficulty_per_level: u32,
    /// Trials per N for each image in the difficulty experiment; defaults to `trials_per_n`.
    pub difficulty_trials_per_n: Option<u32>,
    /// Ladder override for calibration and the difficulty pool.
    pub ladder: Option<DifficultyLadder>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub candidate_budget: usize,
    /// Minimum fraction of successful trials per grid point for analysis.
    pub min_success_rate: f64,
    pub keep_raw: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::LineJudgment,
            agent: AgentSpec::default(),
            experiment: Experiment::GroupSize,
            n_grid: (0..=10).collect(),
            trials_per_n: 64,
            pool_size: 100,
            baseline_epsilon: 1e-3,
            wrong_fractions: vec![1.0, 0.8, 0.5],
            roles: STRENGTH_ROLES.iter().map(|r| r.to_string()).collect(),
            identity_kinds: vec![IdentityKind::Nationality, IdentityKind::Ethnicity, IdentityKind::Minimal],
            normative_pairs: 100,
            difficulty_per_level: 50,
            difficulty_trials_per_n: None,
            ladder: None,
            master_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            parallelism: 4,
            candidate_budget: 2000,
            min_success_rate: 0.9,
            keep_raw: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, RunnerError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if self.trials_per_n == 0 || self.difficulty_trials_per_n == Some(0) {
            return bad("trials per N must be at least 1".into());
        }
        if !(self.baseline_epsilon > 0.0 && self.baseline_epsilon < 0.5) {
            return bad(format!("baseline_epsilon {} outside (0, 0.5)", self.baseline_epsilon));
        }
        if self.n_grid.len() < 2 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_grid needs at least two strictly increasing values".into());
        }
        if self.pool_size == 0 || self.candidate_budget < self.pool_size {
            return bad("need pool_size >= 1 and candidate_budget >= pool_size".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if !(self.min_success_rate > 0.0 && self.min_success_rate <= 1.0) {
            return bad("min_success_rate outside (0, 1]".into());
        }
        if self.wrong_fractions.is_empty() || self.wrong_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("wrong_fractions must be a non-empty list in [0, 1]".into());
        }
        if self.roles.is_empty() || self.roles.iter().any(|r| r.trim().is_empty()) {
            return bad("roles must be non-empty strings".into());
        }
        if self.identity_kinds.is_empty() || self.identity_kinds.contains(&IdentityKind::None) {
            return bad("identity_kinds must list nationality, ethnicity or minimal".into());
        }
        if self.normative_pairs < 2 {
            return bad("normative_pairs must be at least 2".into());
        }
        if self.experiment == Experiment::DifficultyPerformance && self.n_grid[0] != 0 {
            return bad("the difficulty experiment needs N = 0 first in n_grid".into());
        }
        if self.difficulty_per_level == 0 {
            return bad("difficulty_per_level must be at least 1".into());
        }
        if let Some(ladder) = &self.ladder {
            if ladder.task != self.task {
                return bad("ladder task differs from run task".into());
            }
            ladder.validate()?;
        }
        if let AgentSpec::Synthetic(params) = &self.agent {
            params.validate()?;
            let mut needed: Vec<&str> = vec![DEFAULT_ROLE];
            if self.experiment == Experiment::Strength {
                needed.extend(self.roles.iter().map(String::as_str));
            }
            if let Some(role) = needed.iter().find(|r| !params.strength_weights.contains_key(**r)) {
                return bad(format!("synthetic agent has no strength weight for role {role:?}"));
            }
        }
        Ok(())
    }

    pub fn ladder(&self) -> DifficultyLadder {
        self.ladder.clone().unwrap_or_else(|| DifficultyLadder::default_for(self.task))
    }

    pub fn difficulty_trials(&self) -> u32 {
        self.difficulty_trials_per_n.unwrap_or(self.trials_per_n)
    }

    /// Digest of every field that affects results; `output_dir` and
    /// `parallelism` are excluded.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.parallelism = 0;
        hex_digest(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    /// Digest of the fields that determine the calibrated pool.
    pub fn pool_digest(&self) -> String {
        let key = serde_json::json!({
            "task": self.task,
            "agent": self.agent,
            "pool_size": self.pool_size,
            "baseline_epsilon": self.baseline_epsilon,
            "candidate_budget": self.candidate_budget,
            "ladder": self.ladder(),
            "master_seed": self.master_seed,
            "experiment_pool": if self.experiment.uses_calibrated_pool() {
                "calibrated".to_string()
            } else {
                format!("ladder-{}", self.difficulty_per_level)
            },
        });
        hex_digest(key.to_string().as_bytes())
    }

    pub fn trial_log_path(&self) -> PathBuf {
        self.output_dir.join("trials.jsonl")
    }

    pub fn state_path(&self) -> PathBuf {
        self.output_dir.join("state.json")
    }

    pub fn pool_dir(&self) -> PathBuf {
        self.output_dir.join("pool")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.output_dir.join("analysis")
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.output_dir.join("figures")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_json_round_trip() {
        let cfg = RunConfig::from_json(r#"{"task": "dots_estimation", "experiment": "strength"}"#).unwrap();
        assert_eq!(cfg.trials_per_n, 64);
        assert_eq!(cfg.pool_size, 100);
        assert_eq!(cfg.n_grid, (0..=10).collect::<Vec<_>>());
        assert_eq!(cfg.roles.len(), 6);
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn remote_agent_parses() {
        let cfg = RunConfig::from_json(
            r#"{"agent": {"kind": "remote", "base_url": "http://x/v1", "model_name": "m"}}"#,
        )
        .unwrap();
        match cfg.agent {
            AgentSpec::Remote(s) => assert_eq!(s.top_logprobs_k, 20),
            _ => panic!("expected remote"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            r#"{"trials_per_n": 0}"#,
            r#"{"baseline_epsilon": 0.5}"#,
            r#"{"n_grid": [0, 2, 1]}"#,
            r#"{"unknown_field": 1}"#,
            r#"{"experiment": "strength", "roles": ["wizards"]}"#,
            r#"{"candidate_budget": 10}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(RunnerError::Config(_))), "{text}");
        }
    }

    #[test]
    fn digest_ignores_plumbing_fields() {
        let a = RunConfig::default();
        let b = RunConfig { output_dir: "elsewhere".into(), parallelism: 16, ..a.clone() };
        assert_eq!(a.digest(), b.digest());
        let c = RunConfig { master_seed: 1, ..a.clone() };
        assert_ne!(a.digest(), c.digest());
    }
}
