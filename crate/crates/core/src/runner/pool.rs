//! Stimulus pools: the baseline-calibrated pool and the full difficulty ladder.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, EvalRequest, ImageHandle};
use crate::metrics::two_token_probs;
use crate::promptkit::{assemble, Condition};
use crate::stimgen::{
    build_pool, encode_png, generate, pool_seed, Label, ManifestRow, LEVELS,
};

use super::config::RunConfig;
use super::exec::{evaluate_with_retry, par_map};
use super::log::write_atomic;
use super::RunnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub stimulus: ManifestRow,
    /// `p_correct` at N = 0 measured during calibration.
    pub baseline_p_correct: Option<f64>,
    /// Raw correct-token score at N = 0 measured during calibration.
    pub baseline_logit_correct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Calibrated,
    Ladder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub digest: String,
    pub kind: PoolKind,
    pub size: usize,
    pub candidates_evaluated: usize,
    pub acceptance_rate: Option<f64>,
    pub baseline_epsilon: f64,
    pub candidate_budget: usize,
}

/// Outcome of one calibration candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub index: usize,
    pub stimulus_id: String,
    pub level: u8,
    pub p_correct: f64,
    pub logit_correct: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct StimulusPool {
    pub dir: PathBuf,
    pub summary: PoolSummary,
    pub entries: Vec<PoolEntry>,
}

impl StimulusPool {
    pub fn image_path(&self, index: usize) -> PathBuf {
        self.dir.join(&self.entries[index].stimulus.image_path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn write(&self) -> Result<(), RunnerError> {
        let mut lines = String::new();
        for e in &self.entries {
            lines.push_str(&serde_json::to_string(e).expect("pool entry serializes"));
            lines.push('\n');
        }
        write_atomic(&self.dir.join("pool.jsonl"), lines.as_bytes())?;
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        write_atomic(&self.dir.join("pool.json"), summary.as_bytes())
    }

    /// Loads a pool previously written to `dir`.
    pub fn load(dir: &Path) -> Result<Self, RunnerError> {
        let summary_path = dir.join("pool.json");
        let text = fs::read_to_string(&summary_path).map_err(|_| RunnerError::MissingPool(dir.to_path_buf()))?;
        let summary: PoolSummary = serde_json::from_str(&text)
            .map_err(|e| RunnerError::CorruptLog(format!("{}: {e}", summary_path.display())))?;
        let entries_path = dir.join("pool.jsonl");
        let text = fs::read_to_string(&entries_path)
            .map_err(|source| RunnerError::Io { path: entries_path.clone(), source })?;
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l)
                    .map_err(|e| RunnerError::CorruptLog(format!("{}: {e}", entries_path.display())))
            })
            .collect::<Result<Vec<PoolEntry>, _>>()?;
        if entries.len() != summary.size {
            return Err(RunnerError::CorruptLog(format!(
                "{} lists {} stimuli, summary says {}",
                entries_path.display(),
                entries.len(),
                summary.size
            )));
        }
        Ok(Self { dir: dir.to_path_buf(), summary, entries })
    }

    fn load_matching(dir: &Path, digest: &str) -> Option<Self> {
        Self::load(dir).ok().filter(|p| p.summary.digest == digest)
    }
}

/// Baseline evaluation of one stimulus: `(p_correct, logit_correct)`.
fn baseline_scores(
    cfg: &RunConfig,
    agent: &dyn Agent,
    stimulus_id: &str,
    correct_label: Label,
    difficulty_norm: f64,
    seed: u64,
    image: ImageHandle,
) -> Result<(f64, f64), RunnerError> {
    let cond = Condition::baseline();
    let prompt = assemble(cfg.task, &cond, &[], seed, None)?;
    let req = EvalRequest {
        correlation_id: format!("calibrate/{stimulus_id}"),
        stimulus_id: stimulus_id.to_string(),
        image,
        prompt,
        correct_label,
        condition: cond,
        difficulty_norm,
    };
    let (scores, _) = evaluate_with_retry(agent, &req);
    let scores = scores.map_err(|e| RunnerError::Transport(format!("calibrating {stimulus_id}: {e}")))?;
    let (p_a, p_b) = two_token_probs(scores.score_a, scores.score_b)?;
    let p_correct = if correct_label == Label::A { p_a } else { p_b };
    Ok((p_correct, scores.score_of(correct_label)))
}

/// Evaluates candidates at N = 0 in index order and keeps the first
/// `pool_size` with `p_correct >= 1 - baseline_epsilon`.
pub fn calibrate_pool(cfg: &RunConfig, agent: &dyn Agent) -> Result<StimulusPool, RunnerError> {
    let ladder = cfg.ladder();
    let dir = cfg.pool_dir();
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|source| RunnerError::Io { path: image_dir.clone(), source })?;
    let threshold = 1.0 - cfg.baseline_epsilon;

    let mut entries: Vec<PoolEntry> = Vec::with_capacity(cfg.pool_size);
    let mut outcomes: Vec<CandidateOutcome> = Vec::new();
    let mut evaluated = 0usize;
    while entries.len() < cfg.pool_size && evaluated < cfg.candidate_budget {
        let needed = cfg.pool_size - entries.len();
        let chunk = needed.max(cfg.parallelism).min(cfg.candidate_budget - evaluated);
        let indices: Vec<usize> = (evaluated..evaluated + chunk).collect();
        let results = par_map(&indices, cfg.parallelism, |&index| {
            let level = (index % LEVELS) as u8;
            let seed = pool_seed(cfg.master_seed, cfg.task, level, index as u32);
            let stim = generate(cfg.task, seed, level, &ladder)?;
            let png = Arc::new(encode_png(&stim.image)?);
            let (p_correct, logit) = baseline_scores(
                cfg,
                agent,
                &stim.id,
                stim.correct_label,
                stim.difficulty_norm,
                seed,
                ImageHandle::Png(png.clone()),
            )?;
            let rel = format!("images/{}.png", stim.id);
            if p_correct >= threshold {
                let path = dir.join(&rel);
                fs::write(&path, png.as_slice()).map_err(|source| RunnerError::Io { path, source })?;
            }
            Ok::<_, RunnerError>((index, stim.manifest_row(rel), p_correct, logit))
        });
        for result in results {
            let (index, row, p_correct, logit) = result?;
            let accepted = p_correct >= threshold && entries.len() < cfg.pool_size;
            if p_correct >= threshold && !accepted {
                let _ = fs::remove_file(dir.join(&row.image_path));
            }
            outcomes.push(CandidateOutcome {
                index,
                stimulus_id: row.id.clone(),
                level: row.level,
                p_correct,
                logit_correct: logit,
                accepted,
            });
            if accepted {
                entries.push(PoolEntry {
                    stimulus: row,
                    baseline_p_correct: Some(p_correct),
                    baseline_logit_correct: Some(logit),
                });
            }
        }
        evaluated += chunk;
    }

    let accepted_total = outcomes.iter().filter(|o| o.accepted).count();
    let useful = outcomes.iter().filter(|o| o.p_correct >= threshold).count();
    let rate = useful as f64 / evaluated.max(1) as f64;
    let mut lines = String::new();
    for o in &outcomes {
        lines.push_str(&serde_json::to_string(o).expect("outcome serializes"));
        lines.push('\n');
    }
    write_atomic(&dir.join("calibration.jsonl"), lines.as_bytes())?;
    if accepted_total < cfg.pool_size {
        return Err(RunnerError::Calibration {
            accepted: accepted_total,
            needed: cfg.pool_size,
            evaluated,
            rate,
        });
    }
    let pool = StimulusPool {
        dir,
        summary: PoolSummary {
            digest: cfg.pool_digest(),
            kind: PoolKind::Calibrated,
            size: entries.len(),
            candidates_evaluated: evaluated,
            acceptance_rate: Some(rate),
            baseline_epsilon: cfg.baseline_epsilon,
            candidate_budget: cfg.candidate_budget,
        },
        entries,
    };
    pool.write()?;
    Ok(pool)
}

/// Reuses a calibrated pool whose digest matches `cfg`, else calibrates.
pub fn load_or_calibrate(cfg: &RunConfig, agent: &dyn Agent) -> Result<StimulusPool, RunnerError> {
    match StimulusPool::load_matching(&cfg.pool_dir(), &cfg.pool_digest()) {
        Some(pool) => Ok(pool),
        None => calibrate_pool(cfg, agent),
    }
}

/// The uncalibrated ten-level pool of the difficulty experiment.
pub fn build_difficulty_pool(cfg: &RunConfig) -> Result<StimulusPool, RunnerError> {
    let dir = cfg.pool_dir();
    if let Some(pool) = StimulusPool::load_matching(&dir, &cfg.pool_digest()) {
        return Ok(pool);
    }
    let ladder = cfg.ladder().with_per_level_count(cfg.difficulty_per_level);
    let rows = build_pool(cfg.task, &ladder, cfg.master_seed, &dir)?;
    let entries: Vec<PoolEntry> = rows
        .into_iter()
        .map(|stimulus| PoolEntry { stimulus, baseline_p_correct: None, baseline_logit_correct: None })
        .collect();
    let pool = StimulusPool {
        dir,
        summary: PoolSummary {
            digest: cfg.pool_digest(),
            kind: PoolKind::Ladder,
            size: entries.len(),
            candidates_evaluated: 0,
            acceptance_rate: None,
            baseline_epsilon: cfg.baseline_epsilon,
            candidate_budget: cfg.candidate_budget,
        },
        entries,
    };
    pool.write()?;
    Ok(pool)
}
