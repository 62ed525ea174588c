//! Turns a finished trial log into curves, deltas and statistics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::metrics::{paired_delta_score, ConformityCurve, DeltaLabel, DeltaScore, TrialRecord};
use crate::stats::{
    min_max_normalize, one_sample_t, ols, spearman, RegressionResult, SpearmanResult, TTestResult, Tail,
};
use crate::stimgen::TaskKind;

use super::{
    plan_trials, read_log, sweeps_for, Experiment, PlannedTrial, RunConfig, RunnerError, StimulusPool, Sweep,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCurve {
    pub sweep: String,
    pub label: String,
    pub curve: ConformityCurve<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub name: String,
    pub score: DeltaScore<f64>,
    pub test: TTestResult<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointQuality {
    pub sweep: String,
    pub n: u32,
    pub planned: usize,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub stimulus_id: String,
    pub level: u8,
    pub difficulty: f64,
    pub simplicity: f64,
    pub difficulty_norm: f64,
    /// Mean raw correct-token score at N = 0.
    pub logit_correct: f64,
    pub p_correct_0: f64,
    pub auc: f64,
    /// Whether the image met the baseline filter.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    pub level: u8,
    pub mean_auc: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyAnalysis {
    pub rows: Vec<ImageRow>,
    pub flagged: usize,
    pub analysed: usize,
    pub level_means: Vec<LevelMean>,
    /// Level index against mean AUC per level.
    pub spearman_level: SpearmanResult<f64>,
    /// Per-image difficulty against AUC.
    pub spearman_image: SpearmanResult<f64>,
    /// Normalized AUC on normalized difficulty and logit.
    pub regression_difficulty: RegressionResult<f64>,
    /// Same fit with simplicity in place of difficulty.
    pub regression_simplicity: RegressionResult<f64>,
    /// Predictors left out because they were constant.
    pub dropped_predictors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub experiment: Experiment,
    pub task: TaskKind,
    pub config_digest: String,
    pub curves: Vec<NamedCurve>,
    pub deltas: Vec<DeltaSummary>,
    pub difficulty: Option<DifficultyAnalysis>,
    pub quality: Vec<PointQuality>,
    pub failed_trials: usize,
}

pub const DIFFICULTY_VAR: &str = "task difficulty";
pub const SIMPLICITY_VAR: &str = "task simplicity";
pub const PERFORMANCE_VAR: &str = "model performance";

/// Successful records of one sweep indexed by (trial index, N).
struct SweepData<'a> {
    sweep: &'a Sweep,
    cells: BTreeMap<(u32, u32), &'a TrialRecord>,
}

impl SweepData<'_> {
    fn curve(&self, grid: &[u32]) -> Result<ConformityCurve<f64>, RunnerError> {
        let samples: Vec<Vec<f64>> = grid
            .iter()
            .map(|&n| {
                self.cells.iter().filter(|((_, cn), _)| *cn == n).map(|(_, r)| r.p_wrong).collect()
            })
            .collect();
        Ok(ConformityCurve::from_samples(grid, &samples)?)
    }

    /// Single-trial curve over the grid, if every point succeeded.
    fn trial_curve(&self, t: u32, grid: &[u32]) -> Option<ConformityCurve<f64>> {
        let samples: Option<Vec<Vec<f64>>> =
            grid.iter().map(|&n| self.cells.get(&(t, n)).map(|r| vec![r.p_wrong])).collect();
        ConformityCurve::from_samples(grid, &samples?).ok()
    }
}

fn quality(
    cfg: &RunConfig,
    sweeps: &[Sweep],
    plan: &[PlannedTrial],
    ok: &HashMap<&str, &TrialRecord>,
    failed: &HashMap<&str, ()>,
) -> Result<Vec<PointQuality>, RunnerError> {
    let mut cells: BTreeMap<(usize, u32), PointQuality> = BTreeMap::new();
    for t in plan {
        let q = cells.entry((t.sweep, t.n)).or_insert_with(|| PointQuality {
            sweep: sweeps[t.sweep].name.clone(),
            n: t.n,
            planned: 0,
            ok: 0,
            failed: 0,
        });
        q.planned += 1;
        if ok.contains_key(t.key.as_str()) {
            q.ok += 1;
        } else if failed.contains_key(t.key.as_str()) {
            q.failed += 1;
        }
    }
    let out: Vec<PointQuality> = cells.into_values().collect();
    for q in &out {
        if (q.ok as f64) < cfg.min_success_rate * q.planned as f64 {
            return Err(RunnerError::DataQuality(format!(
                "sweep {} at N = {}: {}/{} trials succeeded ({} failed, {} missing), below {:.0}%",
                q.sweep,
                q.n,
                q.ok,
                q.planned,
                q.failed,
                q.planned - q.ok - q.failed,
                cfg.min_success_rate * 100.0
            )));
        }
    }
    Ok(out)
}

/// Analyses the run in `cfg.output_dir`, loading the pool written there.
pub fn analyze(cfg: &RunConfig) -> Result<AnalysisReport, RunnerError> {
    let pool = StimulusPool::load(&cfg.pool_dir())?;
    if pool.summary.digest != cfg.pool_digest() {
        return Err(RunnerError::ConfigMismatch { expected: cfg.pool_digest(), found: pool.summary.digest });
    }
    analyze_with_pool(cfg, &pool)
}

pub fn analyze_with_pool(cfg: &RunConfig, pool: &StimulusPool) -> Result<AnalysisReport, RunnerError> {
    super::check_state(cfg)?;
    let sweeps = sweeps_for(cfg, pool);
    let plan = plan_trials(cfg, pool, &sweeps);
    let log = read_log(&cfg.trial_log_path())?;
    let records = log.records();
    let ok: HashMap<&str, &TrialRecord> = records.iter().map(|r| (r.trial_key.as_str(), *r)).collect();
    let outstanding = log.outstanding_failures();
    let failed: HashMap<&str, ()> = outstanding.iter().map(|f| (f.trial_key.as_str(), ())).collect();
    let quality = quality(cfg, &sweeps, &plan, &ok, &failed)?;

    let mut data: Vec<SweepData> = sweeps.iter().map(|sweep| SweepData { sweep, cells: BTreeMap::new() }).collect();
    for t in &plan {
        if let Some(r) = ok.get(t.key.as_str()) {
            data[t.sweep].cells.insert((t.trial_index, t.n), r);
        }
    }
    let grid = &cfg.n_grid;
    let by_name: HashMap<&str, &SweepData> = data.iter().map(|d| (d.sweep.name.as_str(), d)).collect();

    let mut curves = Vec::new();
    let mut deltas = Vec::new();
    let mut difficulty = None;
    let named = |d: &SweepData| -> Result<NamedCurve, RunnerError> {
        Ok(NamedCurve { sweep: d.sweep.name.clone(), label: d.sweep.label.clone(), curve: d.curve(grid)? })
    };

    match cfg.experiment {
        Experiment::GroupSize | Experiment::Unanimity | Experiment::Strength => {
            for d in &data {
                curves.push(named(d)?);
            }
            if cfg.experiment == Experiment::Strength {
                if let Some(base) = by_name.get("strength/participants") {
                    for d in data.iter().filter(|d| d.sweep.name != base.sweep.name) {
                        deltas.push(per_trial_delta(d, base, grid, DeltaLabel::Strength, &d.sweep.label)?);
                    }
                }
            }
        }
        Experiment::Identity | Experiment::ProximitySpatial | Experiment::ProximityTemporal => {
            for d in &data {
                curves.push(named(d)?);
            }
            for pair in data.chunks(2) {
                let (first, second) = (&pair[0], &pair[1]);
                let (label, name) = match cfg.experiment {
                    Experiment::Identity => (DeltaLabel::Identity, first.sweep.template.identity_kind.slug()),
                    Experiment::ProximitySpatial => (DeltaLabel::Spatial, "spatial"),
                    _ => (DeltaLabel::Temporal, "temporal"),
                };
                deltas.push(per_trial_delta(first, second, grid, label, name)?);
            }
        }
        Experiment::Normative => {
            let mut public = Vec::new();
            let mut private = Vec::new();
            let mut pairs = Vec::new();
            for pair in data.chunks(2) {
                let (p, q) = (&pair[0], &pair[1]);
                public.extend(p.cells.values().copied());
                private.extend(q.cells.values().copied());
                pairs.push((p.curve(grid)?, q.curve(grid)?));
            }
            for (name, label, recs) in [("normative/public", "public", public), ("normative/private", "private", private)] {
                let owned: Vec<TrialRecord> = recs.into_iter().cloned().collect();
                curves.push(NamedCurve {
                    sweep: name.into(),
                    label: label.into(),
                    curve: crate::metrics::aggregate_curve(&owned, grid)?,
                });
            }
            let score = paired_delta_score(&pairs, DeltaLabel::Normative)?;
            let test = one_sample_t(&score.paired_samples, Tail::Greater)?;
            deltas.push(DeltaSummary { name: "public - private".into(), score, test });
        }
        Experiment::DifficultyPerformance => {
            difficulty = Some(difficulty_analysis(cfg, pool, &data)?);
        }
    }

    Ok(AnalysisReport {
        experiment: cfg.experiment,
        task: cfg.task,
        config_digest: cfg.digest(),
        curves,
        deltas,
        difficulty,
        quality,
        failed_trials: outstanding.len(),
    })
}

/// Delta of `first - second` paired by trial index.
fn per_trial_delta(
    first: &SweepData,
    second: &SweepData,
    grid: &[u32],
    label: DeltaLabel,
    name: &str,
) -> Result<DeltaSummary, RunnerError> {
    let pairs: Vec<_> = (0..first.sweep.trials_per_n)
        .filter_map(|t| Some((first.trial_curve(t, grid)?, second.trial_curve(t, grid)?)))
        .collect();
    let score = paired_delta_score(&pairs, label)?;
    let test = one_sample_t(&score.paired_samples, Tail::Greater)?;
    Ok(DeltaSummary { name: name.to_string(), score, test })
}

fn difficulty_analysis(
    cfg: &RunConfig,
    pool: &StimulusPool,
    data: &[SweepData],
) -> Result<DifficultyAnalysis, RunnerError> {
    let threshold = 1.0 - cfg.baseline_epsilon;
    let mut rows = Vec::with_capacity(data.len());
    for d in data {
        let super::StimulusChoice::Fixed(i) = d.sweep.stimulus else { unreachable!("difficulty sweeps are fixed") };
        let stim = &pool.entries[i].stimulus;
        let base: Vec<&TrialRecord> = d.cells.iter().filter(|((_, n), _)| *n == cfg.n_grid[0]).map(|(_, r)| *r).collect();
        let mean = |f: fn(&TrialRecord) -> f64| base.iter().map(|r| f(r)).sum::<f64>() / base.len().max(1) as f64;
        let p_correct_0 = mean(|r| r.p_correct);
        rows.push(ImageRow {
            stimulus_id: stim.id.clone(),
            level: stim.level,
            difficulty: stim.difficulty,
            simplicity: stim.simplicity,
            difficulty_norm: stim.difficulty_norm,
            logit_correct: mean(|r| r.logit_correct),
            p_correct_0,
            auc: d.curve(&cfg.n_grid)?.auc,
            passed: p_correct_0 >= threshold,
        });
    }
    let passing: Vec<&ImageRow> = rows.iter().filter(|r| r.passed).collect();
    let flagged = rows.len() - passing.len();

    let mut by_level: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for r in &passing {
        by_level.entry(r.level).or_default().push(r.auc);
    }
    let level_means: Vec<LevelMean> = by_level
        .iter()
        .map(|(&level, aucs)| LevelMean {
            level,
            mean_auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
            images: aucs.len(),
        })
        .collect();
    let lv: Vec<f64> = level_means.iter().map(|l| f64::from(l.level)).collect();
    let la: Vec<f64> = level_means.iter().map(|l| l.mean_auc).collect();
    let spearman_level = spearman(&lv, &la)?;
    let diff: Vec<f64> = passing.iter().map(|r| r.difficulty).collect();
    let auc: Vec<f64> = passing.iter().map(|r| r.auc).collect();
    let spearman_image = spearman(&diff, &auc)?;

    let y = min_max_normalize(&auc).values;
    let nd = min_max_normalize(&diff);
    let ns = min_max_normalize(&passing.iter().map(|r| r.simplicity).collect::<Vec<_>>());
    let nl = min_max_normalize(&passing.iter().map(|r| r.logit_correct).collect::<Vec<_>>());
    let mut dropped = Vec::new();
    if nl.degenerate {
        dropped.push(PERFORMANCE_VAR.to_string());
    }
    let fit = |first: (&str, &[f64])| {
        let mut preds = vec![first];
        if !nl.degenerate {
            preds.push((PERFORMANCE_VAR, &nl.values));
        }
        ols(&y, &preds)
    };
    let regression_difficulty = fit((DIFFICULTY_VAR, &nd.values))?;
    let regression_simplicity = fit((SIMPLICITY_VAR, &ns.values))?;
    Ok(DifficultyAnalysis {
        analysed: passing.len(),
        rows,
        flagged,
        level_means,
        spearman_level,
        spearman_image,
        regression_difficulty,
        regression_simplicity,
        dropped_predictors: dropped,
    })
}
