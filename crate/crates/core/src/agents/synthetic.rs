//! Synthetic agent following a saturating Social-Impact law.
//!
//! `p_wrong = P_inf * (1 - exp(-lambda * S * I * N_eff))` with
//! `N_eff = max(0, N * (2 * wrong_fraction - 1))` and
//! `P_inf = logistic(theta_0 + theta_d * difficulty + theta_v * [public])`.
//! The law is turned into two answer-token scores so the synthetic agent runs
//! through exactly the same metrics path as a remote model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, EvalRequest, ScoreSource, TokenScores};
use crate::promptkit::{Condition, ConditionKind, Visibility};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticAgentParams {
    pub lambda: f64,
    pub strength_weights: BTreeMap<String, f64>,
    pub immediacy_same: f64,
    pub immediacy_diff: f64,
    pub immediacy_far: f64,
    pub theta_0: f64,
    pub theta_d: f64,
    pub theta_v: f64,
    /// Logit gap emitted when the law gives `p_wrong = 0`.
    pub p_floor_logit_gap: f64,
    /// Relative per-stimulus spread of the baseline gap, in [0, 1).
    pub gap_jitter: f64,
}

impl Default for SyntheticAgentParams {
    fn default() -> Self {
        let strength_weights = [
            ("chatbots", 0.4),
            ("kids", 0.6),
            ("participants", 1.0),
            ("scientists", 1.4),
            ("policemen", 1.4),
            ("judges", 1.5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            lambda: 0.35,
            strength_weights,
            immediacy_same: 1.0,
            immediacy_diff: 0.5,
            immediacy_far: 0.7,
            theta_0: -1.0,
            theta_d: 2.5,
            theta_v: 0.4,
            p_floor_logit_gap: 1000.0,
            gap_jitter: 0.25,
        }
    }
}

impl SyntheticAgentParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let positive = [
            ("lambda", self.lambda),
            ("immediacy_same", self.immediacy_same),
            ("immediacy_diff", self.immediacy_diff),
            ("immediacy_far", self.immediacy_far),
            ("p_floor_logit_gap", self.p_floor_logit_gap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(AgentError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (role, &w) in &self.strength_weights {
            if !(w > 0.0 && w <= 2.0) {
                return Err(AgentError::Config(format!("strength weight for {role} outside (0, 2]")));
            }
        }
        if !(0.0..1.0).contains(&self.gap_jitter) {
            return Err(AgentError::Config("gap_jitter outside [0, 1)".into()));
        }
        if ![self.theta_0, self.theta_d, self.theta_v].iter().all(|t| t.is_finite()) {
            return Err(AgentError::Config("non-finite theta".into()));
        }
        Ok(())
    }

    fn immediacy(&self, cond: &Condition) -> f64 {
        match cond.kind {
            ConditionKind::Identity if cond.identity_same => self.immediacy_same,
            ConditionKind::Identity => self.immediacy_diff,
            ConditionKind::Proximity if !cond.proximity_near => self.immediacy_far,
            _ => 1.0,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Closed-form conformity law of the synthetic agent.
pub fn synthetic_p_wrong(
    n: u32,
    cond: &Condition,
    difficulty_norm: f64,
    params: &SyntheticAgentParams,
) -> Result<f64, AgentError> {
    if !(0.0..=1.0).contains(&difficulty_norm) {
        return Err(AgentError::Domain(format!("difficulty_norm {difficulty_norm} outside [0, 1]")));
    }
    let strength = *params
        .strength_weights
        .get(&cond.role)
        .ok_or_else(|| AgentError::Config(format!("unknown role {:?}", cond.role)))?;
    let n_eff = (f64::from(n) * (2.0 * cond.wrong_fraction - 1.0)).max(0.0);
    let public = if cond.visibility == Visibility::Public { 1.0 } else { 0.0 };
    let ceiling = logistic(params.theta_0 + params.theta_d * difficulty_norm + params.theta_v * public);
    let impact = params.lambda * strength * params.immediacy(cond) * n_eff;
    Ok(ceiling * -(-impact).exp_m1())
}

/// Inverts the two-token softmax: returns `(score_correct, score_wrong)`.
///
/// `p_wrong = 0` maps to `(gap, 0)`.
pub fn scores_from_p(p_wrong: f64, gap: f64) -> Result<(f64, f64), AgentError> {
    if !(0.0..1.0).contains(&p_wrong) {
        return Err(AgentError::Domain(format!("p_wrong {p_wrong} outside [0, 1)")));
    }
    if p_wrong == 0.0 {
        return Ok((gap, 0.0));
    }
    Ok(((-p_wrong).ln_1p() - p_wrong.ln(), 0.0))
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticAgent {
    pub params: SyntheticAgentParams,
}

impl SyntheticAgent {
    pub fn new(params: SyntheticAgentParams) -> Result<Self, AgentError> {
        params.validate()?;
        Ok(Self { params })
    }

    /// Baseline logit gap for a stimulus: a fixed hash-derived spread around
    /// `p_floor_logit_gap`, independent of difficulty.
    pub fn baseline_gap(&self, stimulus_id: &str) -> f64 {
        let h = derive_seed(0, &["synthetic-gap", stimulus_id]);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        self.params.p_floor_logit_gap * (1.0 + self.params.gap_jitter * (2.0 * u - 1.0))
    }
}

impl Agent for SyntheticAgent {
    fn evaluate(&self, req: &EvalRequest) -> Result<TokenScores, AgentError> {
        let p = synthetic_p_wrong(
            req.condition.n_confederates,
            &req.condition,
            req.difficulty_norm,
            &self.params,
        )?;
        let (correct, wrong) = scores_from_p(p, self.baseline_gap(&req.stimulus_id))?;
        TokenScores::from_correct_wrong(req.correct_label, correct, wrong, ScoreSource::Synthetic)
    }
}
