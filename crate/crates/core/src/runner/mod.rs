//! Calibration and experiment sweeps with a resumable trial log.

mod analysis;
mod config;
mod exec;
mod log;
mod pool;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, EvalRequest, ImageHandle};
use crate::metrics::{MetricsError, TrialMeta, TrialRecord};
use crate::promptkit::{
    assemble, sample_replies, Condition, IdentityKind, IdentityPools, PromptError, ProximityAxis,
    Visibility,
};
use crate::seed::{derive_seed, hex_digest, rng_from_seed};
use crate::stats::StatsError;
use crate::stimgen::StimError;

pub use analysis::{
    analyze, analyze_with_pool, AnalysisReport, DeltaSummary, DifficultyAnalysis, ImageRow, LevelMean,
    NamedCurve, PointQuality, DIFFICULTY_VAR, PERFORMANCE_VAR, SIMPLICITY_VAR,
};
pub use config::{AgentSpec, Experiment, RunConfig};
pub use exec::{evaluate_with_retry, par_map};
pub use log::{read_log, repair_log, FailedTrial, LogContents, LogEntry, LogWriter, RunState};
pub use pool::{
    build_difficulty_pool, calibrate_pool, load_or_calibrate, CandidateOutcome, PoolEntry, PoolKind,
    PoolSummary, StimulusPool,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run directory belongs to a different configuration (state {found}, config {expected}); use a fresh output_dir")]
    ConfigMismatch { expected: String, found: String },
    #[error(
        "calibration failed: {accepted}/{needed} stimuli accepted after {evaluated} candidates \
         (acceptance rate {rate:.4}); use an easier ladder or a larger candidate budget"
    )]
    Calibration { accepted: usize, needed: usize, evaluated: usize, rate: f64 },
    #[error("agent transport failure: {0}")]
    Transport(String),
    #[error("data quality: {0}")]
    DataQuality(String),
    #[error("corrupt run artifact: {0}")]
    CorruptLog(String),
    #[error("no stimulus pool in {0}; run `calibrate` or `run` first")]
    MissingPool(PathBuf),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Stim(#[from] StimError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl RunnerError {
    /// Process exit code: 2 config, 3 calibration, 4 transport, 5 data quality.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_)
            | RunnerError::ConfigMismatch { .. }
            | RunnerError::Stim(_)
            | RunnerError::Prompt(_) => 2,
            RunnerError::Agent(e) if e.is_transient() => 4,
            RunnerError::Agent(_) => 2,
            RunnerError::Calibration { .. } => 3,
            RunnerError::Transport(_) => 4,
            RunnerError::DataQuality(_)
            | RunnerError::CorruptLog(_)
            | RunnerError::MissingPool(_)
            | RunnerError::Metrics(_)
            | RunnerError::Stats(_) => 5,
            RunnerError::Io { .. } => 1,
        }
    }
}

/// How a sweep picks the stimulus of each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StimulusChoice {
    /// Uniform draw from the pool per trial index, shared across N and
    /// across sweeps with the same seed group.
    Sampled,
    Fixed(usize),
}

/// One curve's worth of trials: every N in the grid times `trials_per_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub label: String,
    /// Sweeps sharing a seed group share stimuli and reply seeds.
    pub seed_group: String,
    /// Condition at N = 1; the runner substitutes each grid value.
    pub template: Condition,
    pub trials_per_n: u32,
    pub stimulus: StimulusChoice,
}

impl Sweep {
    fn sampled(name: String, label: String, seed_group: &str, template: Condition, trials: u32) -> Self {
        Self {
            name,
            label,
            seed_group: seed_group.to_string(),
            template,
            trials_per_n: trials,
            stimulus: StimulusChoice::Sampled,
        }
    }

    pub fn condition_at(&self, n: u32) -> Condition {
        if n == 0 {
            Condition::baseline()
        } else {
            Condition { n_confederates: n, ..self.template.clone() }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrial {
    pub key: String,
    pub sweep: usize,
    pub trial_index: u32,
    pub n: u32,
    pub stimulus: usize,
    pub condition: Condition,
    pub reply_seed: u64,
}

pub fn trial_key(sweep: &str, stimulus_id: &str, cond: &Condition, n: u32, reply_seed: u64) -> String {
    let key = serde_json::json!([sweep, stimulus_id, cond.canonical(), n, reply_seed]);
    hex_digest(key.to_string().as_bytes())
}

fn fraction_label(f: f64) -> String {
    format!("{}% wrong", (f * 100.0).round())
}

pub fn group_size_sweeps(cfg: &RunConfig) -> Vec<Sweep> {
    vec![Sweep::sampled(
        "group_size".into(),
        "all wrong".into(),
        "group_size",
        Condition::group_size(1),
        cfg.trials_per_n,
    )]
}

pub fn unanimity_sweeps(cfg: &RunConfig) -> Vec<Sweep> {
    cfg.wrong_fractions
        .iter()
        .map(|&f| {
            Sweep::sampled(
                format!("unanimity/{f}"),
                fraction_label(f),
                "unanimity",
                Condition::unanimity(1, f),
                cfg.trials_per_n,
            )
        })
        .collect()
}

/// Pair `p` uses visibility paraphrase `p % 10` and reply-seed group `p / 10`.
pub fn normative_sweeps(cfg: &RunConfig) -> Vec<Sweep> {
    let paraphrases = crate::promptkit::public_sentences().len();
    let mut out = Vec::with_capacity(cfg.normative_pairs * 2);
    for p in 0..cfg.normative_pairs {
        let group = format!("normative-{}", p / paraphrases);
        for (vis, tag) in [(Visibility::Public, "public"), (Visibility::Private, "private")] {
            out.push(Sweep::sampled(
                format!("normative/{p:03}/{tag}"),
                tag.into(),
                &group,
                Condition::normative(1, vis, Some(p % paraphrases)),
                cfg.trials_per_n,
            ));
        }
    }
    out
}

pub fn strength_sweeps(cfg: &RunConfig) -> Vec<Sweep> {
    cfg.roles
        .iter()
        .map(|role| {
            Sweep::sampled(
                format!("strength/{role}"),
                role.clone(),
                "strength",
                Condition::strength(1, role),
                cfg.trials_per_n,
            )
        })
        .collect()
}

pub fn identity_sweeps(cfg: &RunConfig, kinds: &[IdentityKind]) -> Vec<Sweep> {
    let mut out = Vec::new();
    for &kind in kinds {
        let group = format!("identity-{}", kind.slug());
        for (same, tag) in [(true, "same"), (false, "different")] {
            out.push(Sweep::sampled(
                format!("identity/{}/{tag}", kind.slug()),
                format!("{} {tag}", kind.slug()),
                &group,
                Condition::identity(1, kind, same),
                cfg.trials_per_n,
            ));
        }
    }
    out
}

pub fn proximity_sweeps(cfg: &RunConfig, axis: ProximityAxis) -> Vec<Sweep> {
    let slug = match axis {
        ProximityAxis::Spatial => "spatial",
        ProximityAxis::Temporal => "temporal",
        ProximityAxis::None => "none",
    };
    let group = format!("proximity-{slug}");
    [(true, "near"), (false, "distant")]
        .into_iter()
        .map(|(near, tag)| {
            Sweep::sampled(
                format!("proximity/{slug}/{tag}"),
                format!("{slug} {tag}"),
                &group,
                Condition::proximity(1, axis, near),
                cfg.trials_per_n,
            )
        })
        .collect()
}

/// One all-wrong sweep per pool image.
pub fn difficulty_sweeps(cfg: &RunConfig, pool: &StimulusPool) -> Vec<Sweep> {
    pool.entries
        .iter()
        .enumerate()
        .map(|(i, e)| Sweep {
            name: format!("difficulty/{}", e.stimulus.id),
            label: format!("level {}", e.stimulus.level),
            seed_group: "difficulty".into(),
            template: Condition::group_size(1),
            trials_per_n: cfg.difficulty_trials(),
            stimulus: StimulusChoice::Fixed(i),
        })
        .collect()
}

pub fn sweeps_for(cfg: &RunConfig, pool: &StimulusPool) -> Vec<Sweep> {
    match cfg.experiment {
        Experiment::GroupSize => group_size_sweeps(cfg),
        Experiment::Unanimity => unanimity_sweeps(cfg),
        Experiment::DifficultyPerformance => difficulty_sweeps(cfg, pool),
        Experiment::Normative => normative_sweeps(cfg),
        Experiment::Strength => strength_sweeps(cfg),
        Experiment::Identity => identity_sweeps(cfg, &cfg.identity_kinds),
        Experiment::ProximitySpatial => proximity_sweeps(cfg, ProximityAxis::Spatial),
        Experiment::ProximityTemporal => proximity_sweeps(cfg, ProximityAxis::Temporal),
    }
}

/// Expands sweeps into trials. Seeds depend only on the master seed, the
/// seed group, N and the trial index.
pub fn plan_trials(cfg: &RunConfig, pool: &StimulusPool, sweeps: &[Sweep]) -> Vec<PlannedTrial> {
    let mut out = Vec::new();
    for (si, sweep) in sweeps.iter().enumerate() {
        for t in 0..sweep.trials_per_n {
            let stimulus = match sweep.stimulus {
                StimulusChoice::Fixed(i) => i,
                StimulusChoice::Sampled => {
                    let seed = derive_seed(cfg.master_seed, &["draw", &sweep.seed_group, &t.to_string()]);
                    rng_from_seed(seed).random_range(0..pool.len())
                }
            };
            for &n in &cfg.n_grid {
                let reply_seed = derive_seed(
                    cfg.master_seed,
                    &["reply", &sweep.seed_group, &n.to_string(), &t.to_string()],
                );
                let condition = sweep.condition_at(n);
                let key = trial_key(&sweep.name, &pool.entries[stimulus].stimulus.id, &condition, n, reply_seed);
                out.push(PlannedTrial { key, sweep: si, trial_index: t, n, stimulus, condition, reply_seed });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop after this many new trials (simulates an interruption).
    pub max_new_trials: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub planned: usize,
    pub already_complete: usize,
    pub executed: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub agent_calls: usize,
    /// Bytes of a partial trailing log line dropped on resume.
    pub repaired_bytes: usize,
    pub remaining: usize,
}

fn execute_trial(
    cfg: &RunConfig,
    agent: &dyn Agent,
    pool: &StimulusPool,
    pools: &IdentityPools,
    sweeps: &[Sweep],
    trial: &PlannedTrial,
) -> (LogEntry, u32) {
    let entry = &pool.entries[trial.stimulus];
    let stim = &entry.stimulus;
    let sweep = &sweeps[trial.sweep];
    let fail = |error: String, transient: bool, attempts: u32| {
        LogEntry::Failed(FailedTrial {
            trial_key: trial.key.clone(),
            sweep: sweep.name.clone(),
            trial_index: trial.trial_index,
            n: trial.n,
            stimulus_id: stim.id.clone(),
            error,
            transient,
            attempts,
            timestamp: exec::timestamp(),
        })
    };
    let replies = sample_replies(trial.reply_seed, &trial.condition, stim.correct_label);
    let prompt = match assemble(cfg.task, &trial.condition, &replies, trial.reply_seed, Some(pools)) {
        Ok(p) => p,
        Err(e) => return (fail(e.to_string(), false, 0), 0),
    };
    let reply_digest = hex_digest(prompt.segments.reply_lines.join("\n").as_bytes());
    let req = EvalRequest {
        correlation_id: trial.key.clone(),
        stimulus_id: stim.id.clone(),
        image: ImageHandle::File(pool.image_path(trial.stimulus)),
        prompt,
        correct_label: stim.correct_label,
        condition: trial.condition.clone(),
        difficulty_norm: stim.difficulty_norm,
    };
    let (result, attempts) = evaluate_with_retry(agent, &req);
    let scores = match result {
        Ok(s) => s,
        Err(e) => return (fail(e.to_string(), e.is_transient(), attempts), attempts),
    };
    let meta = TrialMeta {
        trial_key: trial.key.clone(),
        sweep: sweep.name.clone(),
        trial_index: trial.trial_index,
        stimulus_id: stim.id.clone(),
        condition: trial.condition.clone(),
        reply_seed: trial.reply_seed,
        reply_digest,
        correct_label: stim.correct_label,
        difficulty_norm: stim.difficulty_norm,
    };
    match TrialRecord::from_scores(meta, scores, attempts, exec::timestamp()) {
        Ok(r) => (LogEntry::Ok(Box::new(r)), attempts),
        Err(e) => (fail(e.to_string(), false, attempts), attempts),
    }
}

/// Checks the run state against `cfg`, creating it on first use.
pub fn ensure_state(cfg: &RunConfig, planned: usize) -> Result<RunState, RunnerError> {
    let digest = cfg.digest();
    if let Some(state) = RunState::load(&cfg.state_path())? {
        if state.config_digest != digest {
            return Err(RunnerError::ConfigMismatch { expected: digest, found: state.config_digest });
        }
        return Ok(state);
    }
    if cfg.trial_log_path().exists() {
        return Err(RunnerError::CorruptLog(format!(
            "{} exists without {}",
            cfg.trial_log_path().display(),
            cfg.state_path().display()
        )));
    }
    let state = RunState {
        config_digest: digest,
        experiment: cfg.experiment.slug().into(),
        task: cfg.task.slug().into(),
        planned_trials: planned,
        trial_log: "trials.jsonl".into(),
    };
    state.save(&cfg.state_path())?;
    Ok(state)
}

/// Refuses early when the directory holds a run of another configuration.
pub fn check_state(cfg: &RunConfig) -> Result<(), RunnerError> {
    match RunState::load(&cfg.state_path())? {
        Some(s) if s.config_digest != cfg.digest() => {
            Err(RunnerError::ConfigMismatch { expected: cfg.digest(), found: s.config_digest })
        }
        _ => Ok(()),
    }
}

/// Runs the pending trials of `sweeps`, appending to the trial log.
pub fn execute_sweeps(
    cfg: &RunConfig,
    agent: &dyn Agent,
    pool: &StimulusPool,
    sweeps: &[Sweep],
    opts: RunOptions,
) -> Result<RunSummary, RunnerError> {
    let plan = plan_trials(cfg, pool, sweeps);
    ensure_state(cfg, plan.len())?;
    let log_path = cfg.trial_log_path();
    let contents = repair_log(&log_path)?;
    let done = contents.completed_keys();
    let mut pending: Vec<&PlannedTrial> = plan.iter().filter(|t| !done.contains(&t.key)).collect();
    let already_complete = plan.len() - pending.len();
    let total_pending = pending.len();
    if let Some(limit) = opts.max_new_trials {
        pending.truncate(limit);
    }

    let pools = IdentityPools::default();
    let mut writer = LogWriter::open(&log_path)?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(LogEntry, u32)>();
    let mut summary = RunSummary {
        planned: plan.len(),
        already_complete,
        repaired_bytes: contents.truncated_bytes,
        ..Default::default()
    };
    let mut write_error = None;
    thread::scope(|s| {
        for _ in 0..cfg.parallelism.clamp(1, pending.len().max(1)) {
            let tx = tx.clone();
            let (next, pending, pools) = (&next, &pending, &pools);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(trial) = pending.get(i) else { break };
                let out = execute_trial(cfg, agent, pool, pools, sweeps, trial);
                if tx.send(out).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (entry, calls) in rx {
            if write_error.is_some() {
                continue;
            }
            summary.executed += 1;
            summary.agent_calls += calls as usize;
            match entry {
                LogEntry::Ok(_) => summary.succeeded += 1,
                LogEntry::Failed(_) => summary.failed += 1,
            }
            if let Err(e) = writer.append(&entry) {
                write_error = Some(e);
                // Stop handing out work; in-flight trials drain into the void.
                next.store(usize::MAX / 2, Ordering::Relaxed);
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    summary.remaining = total_pending - summary.succeeded;
    Ok(summary)
}

/// Loads or builds the pool the experiment needs.
pub fn prepare_pool(cfg: &RunConfig, agent: &dyn Agent) -> Result<StimulusPool, RunnerError> {
    if cfg.experiment.uses_calibrated_pool() {
        load_or_calibrate(cfg, agent)
    } else {
        build_difficulty_pool(cfg)
    }
}

/// Calibrates (or reuses) the pool and runs the configured experiment.
pub fn run_experiment(cfg: &RunConfig, agent: &dyn Agent, opts: RunOptions) -> Result<RunSummary, RunnerError> {
    cfg.validate()?;
    check_state(cfg)?;
    let pool = prepare_pool(cfg, agent)?;
    let sweeps = sweeps_for(cfg, &pool);
    execute_sweeps(cfg, agent, &pool, &sweeps, opts)
}

pub fn run_group_size(cfg: &RunConfig, agent: &dyn Agent, pool: &StimulusPool) -> Result<RunSummary, RunnerError> {
    execute_sweeps(cfg, agent, pool, &group_size_sweeps(cfg), RunOptions::default())
}

pub fn run_unanimity(cfg: &RunConfig, agent: &dyn Agent, pool: &StimulusPool) -> Result<RunSummary, RunnerError> {
    execute_sweeps(cfg, agent, pool, &unanimity_sweeps(cfg), RunOptions::default())
}

pub fn run_difficulty_performance(cfg: &RunConfig, agent: &dyn Agent) -> Result<RunSummary, RunnerError> {
    let pool = build_difficulty_pool(cfg)?;
    execute_sweeps(cfg, agent, &pool, &difficulty_sweeps(cfg, &pool), RunOptions::default())
}

pub fn run_normative(cfg: &RunConfig, agent: &dyn Agent, pool: &StimulusPool) -> Result<RunSummary, RunnerError> {
    execute_sweeps(cfg, agent, pool, &normative_sweeps(cfg), RunOptions::default())
}

pub fn run_strength(cfg: &RunConfig, agent: &dyn Agent, pool: &StimulusPool) -> Result<RunSummary, RunnerError> {
    execute_sweeps(cfg, agent, pool, &strength_sweeps(cfg), RunOptions::default())
}

pub fn run_identity(
    cfg: &RunConfig,
    agent: &dyn Agent,
    pool: &StimulusPool,
    kind: IdentityKind,
) -> Result<RunSummary, RunnerError> {
    execute_sweeps(cfg, agent, pool, &identity_sweeps(cfg, &[kind]), RunOptions::default())
}

pub fn run_proximity(
    cfg: &RunConfig,
    agent: &dyn Agent,
    pool: &StimulusPool,
    axis: ProximityAxis,
) -> Result<RunSummary, RunnerError> {
    execute_sweeps(cfg, agent, pool, &proximity_sweeps(cfg, axis), RunOptions::default())
}

/// Keys of planned trials, for budget and completeness checks.
pub fn planned_keys(plan: &[PlannedTrial]) -> HashSet<&str> {
    plan.iter().map(|t| t.key.as_str()).collect()
}
