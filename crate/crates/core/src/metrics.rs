//! Token scores to probabilities, conformity curves, AUC and condition deltas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::TokenScores;
use crate::promptkit::Condition;
use crate::scalar::Scalar;
use crate::stimgen::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("no trials at grid point N = {0}")]
    EmptyGridPoint(u32),
    #[error("curves have different N grids")]
    GridMismatch,
}

/// Two-token softmax. Returns `(p_a, p_b)`.
pub fn two_token_probs<T: Scalar>(score_a: T, score_b: T) -> Result<(T, T), MetricsError> {
    if !(score_a.is_finite() && score_b.is_finite()) {
        return Err(MetricsError::Domain(format!("non-finite scores ({score_a}, {score_b})")));
    }
    let m = score_a.max(score_b);
    let ea = (score_a - m).exp();
    let eb = (score_b - m).exp();
    let total = ea + eb;
    Ok((ea / total, eb / total))
}

/// One successful trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_key: String,
    pub sweep: String,
    pub trial_index: u32,
    pub stimulus_id: String,
    pub condition: Condition,
    pub n: u32,
    pub reply_seed: u64,
    pub reply_digest: String,
    pub correct_label: Label,
    pub difficulty_norm: f64,
    pub score_a: f64,
    pub score_b: f64,
    pub p_correct: f64,
    pub p_wrong: f64,
    /// Raw score of the correct token.
    pub logit_correct: f64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_payload_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_payload: Option<String>,
    pub timestamp: String,
}

/// Trial identity fields, filled in by the runner.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMeta {
    pub trial_key: String,
    pub sweep: String,
    pub trial_index: u32,
    pub stimulus_id: String,
    pub condition: Condition,
    pub reply_seed: u64,
    pub reply_digest: String,
    pub correct_label: Label,
    pub difficulty_norm: f64,
}

impl TrialRecord {
    pub fn from_scores(
        meta: TrialMeta,
        scores: TokenScores,
        attempts: u32,
        timestamp: String,
    ) -> Result<Self, MetricsError> {
        let (p_a, p_b) = two_token_probs(scores.score_a, scores.score_b)?;
        let (p_correct, p_wrong) = match meta.correct_label {
            Label::A => (p_a, p_b),
            Label::B => (p_b, p_a),
        };
        Ok(Self {
            n: meta.condition.n_confederates,
            trial_key: meta.trial_key,
            sweep: meta.sweep,
            trial_index: meta.trial_index,
            stimulus_id: meta.stimulus_id,
            condition: meta.condition,
            reply_seed: meta.reply_seed,
            reply_digest: meta.reply_digest,
            correct_label: meta.correct_label,
            difficulty_norm: meta.difficulty_norm,
            logit_correct: scores.score_of(meta.correct_label),
            score_a: scores.score_a,
            score_b: scores.score_b,
            p_correct,
            p_wrong,
            attempts,
            raw_payload_digest: scores.raw_payload_digest,
            raw_payload: scores.raw_payload,
            timestamp,
        })
    }
}

/// Mean `p_wrong` over an N grid with standard errors and AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformityCurve<T> {
    pub n_grid: Vec<u32>,
    pub mean_p_wrong: Vec<T>,
    /// `None` where fewer than two trials make the standard error undefined.
    pub stderr: Vec<Option<T>>,
    pub trials_per_point: Vec<usize>,
    pub auc: T,
}

impl<T: Scalar> ConformityCurve<T> {
    /// Builds a curve from per-grid-point samples of `p_wrong`.
    pub fn from_samples(n_grid: &[u32], samples: &[Vec<T>]) -> Result<Self, MetricsError> {
        if n_grid.len() != samples.len() {
            return Err(MetricsError::GridMismatch);
        }
        let mut mean_p_wrong = Vec::with_capacity(n_grid.len());
        let mut stderr = Vec::with_capacity(n_grid.len());
        let mut trials_per_point = Vec::with_capacity(n_grid.len());
        for (&n, xs) in n_grid.iter().zip(samples) {
            if xs.is_empty() {
                return Err(MetricsError::EmptyGridPoint(n));
            }
            let count = T::from_usize_lossy(xs.len());
            let mean = xs.iter().fold(T::zero(), |acc, &x| acc + x) / count;
            let se = (xs.len() > 1).then(|| {
                let ss = xs.iter().fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean));
                (ss / (count - T::one())).sqrt() / count.sqrt()
            });
            mean_p_wrong.push(mean);
            stderr.push(se);
            trials_per_point.push(xs.len());
        }
        let points: Vec<(T, T)> = n_grid
            .iter()
            .zip(&mean_p_wrong)
            .map(|(&n, &p)| (T::lit(f64::from(n)), p))
            .collect();
        let auc = auc(&points)?;
        Ok(Self { n_grid: n_grid.to_vec(), mean_p_wrong, stderr, trials_per_point, auc })
    }
}

/// Groups trial records by N and aggregates them onto `n_grid`.
pub fn aggregate_curve(
    trials: &[TrialRecord],
    n_grid: &[u32],
) -> Result<ConformityCurve<f64>, MetricsError> {
    let mut by_n: BTreeMap<u32, Vec<f64>> = n_grid.iter().map(|&n| (n, Vec::new())).collect();
    for t in trials {
        if let Some(v) = by_n.get_mut(&t.n) {
            v.push(t.p_wrong);
        }
    }
    let samples: Vec<Vec<f64>> = n_grid.iter().map(|n| by_n[n].clone()).collect();
    ConformityCurve::from_samples(n_grid, &samples)
}

/// Trapezoidal area under `(n, p)` points, normalized by the N span.
pub fn auc<T: Scalar>(points: &[(T, T)]) -> Result<T, MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::Domain("AUC needs at least two points".into()));
    }
    let half = T::lit(0.5);
    let mut area = T::zero();
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x1 <= x0 {
            return Err(MetricsError::Domain("N values must be strictly increasing".into()));
        }
        area = area + (x1 - x0) * (y0 + y1) * half;
    }
    let span = points[points.len() - 1].0 - points[0].0;
    Ok(area / span)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaLabel {
    Normative,
    Identity,
    Spatial,
    Temporal,
    Strength,
}

impl DeltaLabel {
    pub fn slug(self) -> &'static str {
        match self {
            DeltaLabel::Normative => "normative",
            DeltaLabel::Identity => "identity",
            DeltaLabel::Spatial => "spatial",
            DeltaLabel::Temporal => "temporal",
            DeltaLabel::Strength => "strength",
        }
    }
}

/// AUC difference between two conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScore<T> {
    pub label: DeltaLabel,
    pub auc_condition_1: T,
    pub auc_condition_2: T,
    pub delta: T,
    pub paired_samples: Vec<T>,
}

pub fn delta_score<T: Scalar>(
    curve_1: &ConformityCurve<T>,
    curve_2: &ConformityCurve<T>,
    label: DeltaLabel,
) -> Result<DeltaScore<T>, MetricsError> {
    if curve_1.n_grid != curve_2.n_grid {
        return Err(MetricsError::GridMismatch);
    }
    Ok(DeltaScore {
        label,
        auc_condition_1: curve_1.auc,
        auc_condition_2: curve_2.auc,
        delta: curve_1.auc - curve_2.auc,
        paired_samples: Vec::new(),
    })
}

/// Delta over matched curve pairs; keeps each pair's difference.
pub fn paired_delta_score<T: Scalar>(
    pairs: &[(ConformityCurve<T>, ConformityCurve<T>)],
    label: DeltaLabel,
) -> Result<DeltaScore<T>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Domain("no curve pairs".into()));
    }
    let mut samples = Vec::with_capacity(pairs.len());
    let (mut sum_1, mut sum_2) = (T::zero(), T::zero());
    let grid = &pairs[0].0.n_grid;
    for (c1, c2) in pairs {
        if &c1.n_grid != grid || &c2.n_grid != grid {
            return Err(MetricsError::GridMismatch);
        }
        sum_1 = sum_1 + c1.auc;
        sum_2 = sum_2 + c2.auc;
        samples.push(c1.auc - c2.auc);
    }
    let count = T::from_usize_lossy(pairs.len());
    let (auc_1, auc_2) = (sum_1 / count, sum_2 / count);
    Ok(DeltaScore {
        label,
        auc_condition_1: auc_1,
        auc_condition_2: auc_2,
        delta: auc_1 - auc_2,
        paired_samples: samples,
    })
}
