//! Prompt assembly for every experimental condition.
//!
//! All fixed text comes from an embedded, human-readable template resource
//! (`templates.txt`). A prompt is an ordered list of segments joined by blank
//! lines: identity intro, question, visibility sentence, replies header,
//! numbered replies and the closing instruction. Baseline prompts carry no
//! replies section at all.

mod templates;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, hex_digest, rng_from_seed};
use crate::stimgen::{Label, TaskKind};

pub use templates::resource as template_resource;

/// Names of the sections in the embedded template resource.
pub fn template_sections() -> Vec<&'static str> {
    BOOK.section_names().collect()
}
use templates::BOOK;

/// Default participant-role noun in the replies header.
pub const DEFAULT_ROLE: &str = "participants";
/// Participant roles used for the source-strength manipulation.
pub const STRENGTH_ROLES: [&str; 6] =
    ["participants", "chatbots", "kids", "scientists", "policemen", "judges"];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error("identity condition requires identity pools")]
    MissingPools,
    #[error("replies inconsistent with condition: {0}")]
    InconsistentReplies(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Baseline,
    GroupSize,
    Unanimity,
    Normative,
    SourceStrength,
    Identity,
    Proximity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Public,
    Private,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    Nationality,
    Ethnicity,
    Minimal,
    None,
}

impl IdentityKind {
    pub fn slug(self) -> &'static str {
        match self {
            IdentityKind::Nationality => "nationality",
            IdentityKind::Ethnicity => "ethnicity",
            IdentityKind::Minimal => "minimal",
            IdentityKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityAxis {
    Spatial,
    Temporal,
    None,
}

/// One experimental manipulation at a given group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub kind: ConditionKind,
    pub n_confederates: u32,
    pub wrong_fraction: f64,
    pub visibility: Visibility,
    pub role: String,
    pub identity_kind: IdentityKind,
    pub identity_same: bool,
    pub proximity_axis: ProximityAxis,
    pub proximity_near: bool,
    /// Fixed visibility paraphrase; chosen from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase: Option<usize>,
}

impl Condition {
    fn neutral(kind: ConditionKind, n: u32) -> Self {
        Self {
            kind,
            n_confederates: n,
            wrong_fraction: 1.0,
            visibility: Visibility::Unspecified,
            role: DEFAULT_ROLE.to_string(),
            identity_kind: IdentityKind::None,
            identity_same: false,
            proximity_axis: ProximityAxis::None,
            proximity_near: false,
            paraphrase: None,
        }
    }

    pub fn baseline() -> Self {
        Self::neutral(ConditionKind::Baseline, 0)
    }

    pub fn group_size(n: u32) -> Self {
        Self::neutral(ConditionKind::GroupSize, n)
    }

    pub fn unanimity(n: u32, wrong_fraction: f64) -> Self {
        Self { wrong_fraction, ..Self::neutral(ConditionKind::Unanimity, n) }
    }

    pub fn normative(n: u32, visibility: Visibility, paraphrase: Option<usize>) -> Self {
        Self { visibility, paraphrase, ..Self::neutral(ConditionKind::Normative, n) }
    }

    pub fn strength(n: u32, role: &str) -> Self {
        Self { role: role.to_string(), ..Self::neutral(ConditionKind::SourceStrength, n) }
    }

    pub fn identity(n: u32, kind: IdentityKind, same: bool) -> Self {
        Self {
            identity_kind: kind,
            identity_same: same,
            ..Self::neutral(ConditionKind::Identity, n)
        }
    }

    pub fn proximity(n: u32, axis: ProximityAxis, near: bool) -> Self {
        Self {
            proximity_axis: axis,
            proximity_near: near,
            ..Self::neutral(ConditionKind::Proximity, n)
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: &str| Err(PromptError::InvalidCondition(m.to_string()));
        match self.kind {
            ConditionKind::Baseline if self.n_confederates != 0 => {
                return bad("baseline requires zero confederates")
            }
            ConditionKind::Baseline => {}
            _ if self.n_confederates == 0 => return bad("non-baseline requires at least one confederate"),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.wrong_fraction) {
            return bad("wrong_fraction outside [0, 1]");
        }
        if self.kind != ConditionKind::Unanimity && self.wrong_fraction != 1.0 {
            return bad("wrong_fraction must be 1 outside the unanimity condition");
        }
        if self.kind == ConditionKind::Identity && self.identity_kind == IdentityKind::None {
            return bad("identity condition needs an identity kind");
        }
        if self.kind == ConditionKind::Proximity && self.proximity_axis == ProximityAxis::None {
            return bad("proximity condition needs an axis");
        }
        if self.kind == ConditionKind::Normative && self.visibility == Visibility::Unspecified {
            return bad("normative condition needs a visibility");
        }
        if self.paraphrase.is_some_and(|i| i >= 10) {
            return bad("paraphrase index outside 0..10");
        }
        if self.role.trim().is_empty() {
            return bad("empty role");
        }
        Ok(())
    }

    /// Canonical serialized form, used for trial keys.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("condition serializes")
    }
}

/// Annotation placed on a confederate reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ReplyPrefix {
    Group(String),
    Distance(String),
    Time(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfederateReply {
    pub template_index: usize,
    pub asserted_label: Label,
    pub prefix: Option<ReplyPrefix>,
}

impl ConfederateReply {
    pub fn text(&self) -> String {
        reply_templates()[self.template_index].replace("[A/B]", self.asserted_label.as_str())
    }

    fn line(&self, k: usize) -> String {
        match &self.prefix {
            None => format!("reply {k}: {}", self.text()),
            Some(ReplyPrefix::Group(g)) => format!("{g}: reply {k}: {}", self.text()),
            Some(ReplyPrefix::Distance(d)) => {
                format!("reply {k} (distance from you: {d}): {}", self.text())
            }
            Some(ReplyPrefix::Time(t)) => format!("reply {k} (time of reply: {t}): {}", self.text()),
        }
    }
}

/// Identity label pools for the social-proximity conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityPools {
    pub nationalities: Vec<String>,
    pub ethnicities: Vec<String>,
    pub minimal_group_labels: Vec<String>,
}

impl Default for IdentityPools {
    fn default() -> Self {
        Self {
            nationalities: BOOK.lines("nationalities").to_vec(),
            ethnicities: BOOK.lines("ethnicities").to_vec(),
            // A and B are answer labels, so group letters start at C.
            minimal_group_labels: ('C'..='Z').map(String::from).collect(),
        }
    }
}

impl IdentityPools {
    fn pool(&self, kind: IdentityKind) -> &[String] {
        match kind {
            IdentityKind::Nationality => &self.nationalities,
            IdentityKind::Ethnicity => &self.ethnicities,
            IdentityKind::Minimal => &self.minimal_group_labels,
            IdentityKind::None => &[],
        }
    }
}

/// Prompt segments in emission order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSegments {
    pub identity_intro: Option<String>,
    pub question_text: String,
    pub visibility_sentence: Option<String>,
    pub replies_header: Option<String>,
    pub reply_lines: Vec<String>,
    pub final_instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub segments: PromptSegments,
    pub full_text: String,
    pub content_hash: String,
}

impl RenderedPrompt {
    fn from_segments(segments: PromptSegments) -> Self {
        let mut parts: Vec<String> = Vec::new();
        parts.extend(segments.identity_intro.clone());
        parts.push(segments.question_text.clone());
        parts.extend(segments.visibility_sentence.clone());
        parts.extend(segments.replies_header.clone());
        if !segments.reply_lines.is_empty() {
            parts.push(segments.reply_lines.join("\n"));
        }
        parts.push(segments.final_instruction.clone());
        let full_text = parts.join("\n\n");
        let content_hash = hex_digest(full_text.as_bytes());
        Self { segments, full_text, content_hash }
    }
}

/// The ten neutral confederate reply templates, with `[A/B]` placeholders.
pub fn reply_templates() -> &'static [String] {
    BOOK.lines("replies")
}

pub fn public_sentences() -> &'static [String] {
    BOOK.lines("visibility.public")
}

pub fn private_sentences() -> &'static [String] {
    BOOK.lines("visibility.private")
}

pub fn distance_labels() -> &'static [String] {
    BOOK.lines("distances")
}

pub fn time_labels() -> &'static [String] {
    BOOK.lines("times")
}

/// Replies header for the given role; `participants` is the neutral role.
pub fn replies_header(role: &str) -> String {
    BOOK.block("header.replies").replacen(DEFAULT_ROLE, role, 1)
}

pub fn proximity_header(axis: ProximityAxis, role: &str) -> Option<String> {
    let name = match axis {
        ProximityAxis::Spatial => "header.spatial",
        ProximityAxis::Temporal => "header.temporal",
        ProximityAxis::None => return None,
    };
    Some(BOOK.block(name).replacen(DEFAULT_ROLE, role, 1))
}

pub fn identity_intro(kind: IdentityKind, label: &str) -> Option<String> {
    let (name, placeholder) = match kind {
        IdentityKind::Nationality => ("intro.nationality", "[nationality1]"),
        IdentityKind::Ethnicity => ("intro.ethnicity", "[ethnicity1]"),
        IdentityKind::Minimal => ("intro.minimal", "[group1]"),
        IdentityKind::None => return None,
    };
    Some(BOOK.block(name).replace(placeholder, label))
}

/// The task's full baseline question block, verbatim.
pub fn base_question(task: TaskKind) -> String {
    BOOK.block(&format!("question.{}", task.slug()))
}

fn split_question(task: TaskKind) -> (String, String) {
    let lines = BOOK.lines(&format!("question.{}", task.slug()));
    let (last, head) = lines.split_last().expect("question block is non-empty");
    (head.join("\n"), last.clone())
}

/// Number of wrong replies for `n` confederates, rounding half away from zero.
pub fn wrong_count(n: u32, wrong_fraction: f64) -> u32 {
    (wrong_fraction * f64::from(n)).round() as u32
}

/// Samples the confederate replies for one trial.
pub fn sample_replies(rng_seed: u64, cond: &Condition, correct: Label) -> Vec<ConfederateReply> {
    let n = cond.n_confederates as usize;
    let wrong = wrong_count(cond.n_confederates, cond.wrong_fraction) as usize;
    let mut rng = rng_from_seed(derive_seed(rng_seed, &["replies"]));
    let mut asserted: Vec<Label> = (0..n)
        .map(|i| if i < wrong { correct.other() } else { correct })
        .collect();
    asserted.shuffle(&mut rng);
    let templates = reply_templates().len();
    asserted
        .into_iter()
        .map(|label| ConfederateReply {
            template_index: rng.random_range(0..templates),
            asserted_label: label,
            prefix: None,
        })
        .collect()
}

/// A matched public/private visibility statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormativePair {
    pub index: usize,
    pub public: String,
    pub private: String,
}

pub fn normative_pair_at(index: usize) -> NormativePair {
    NormativePair {
        index,
        public: public_sentences()[index].clone(),
        private: private_sentences()[index].clone(),
    }
}

/// Picks a matched visibility pair from the seed.
pub fn normative_pair(rng_seed: u64) -> NormativePair {
    let mut rng = rng_from_seed(derive_seed(rng_seed, &["visibility"]));
    normative_pair_at(rng.random_range(0..public_sentences().len()))
}

/// Assembles the prompt for one trial.
pub fn assemble(
    task: TaskKind,
    cond: &Condition,
    replies: &[ConfederateReply],
    rng_seed: u64,
    pools: Option<&IdentityPools>,
) -> Result<RenderedPrompt, PromptError> {
    cond.validate()?;
    if replies.len() != cond.n_confederates as usize {
        return Err(PromptError::InconsistentReplies(format!(
            "{} replies for {} confederates",
            replies.len(),
            cond.n_confederates
        )));
    }
    let (question_text, final_instruction) = split_question(task);
    let mut segments = PromptSegments {
        identity_intro: None,
        question_text,
        visibility_sentence: None,
        replies_header: None,
        reply_lines: Vec::new(),
        final_instruction,
    };
    if cond.kind == ConditionKind::Baseline {
        return Ok(RenderedPrompt::from_segments(segments));
    }

    let mut replies = replies.to_vec();

    if cond.kind == ConditionKind::Identity {
        let pools = pools.ok_or(PromptError::MissingPools)?;
        let pool = pools.pool(cond.identity_kind);
        if pool.len() < 2 {
            return Err(PromptError::InvalidCondition(format!(
                "{} pool needs at least two labels",
                cond.identity_kind.slug()
            )));
        }
        let mut rng = rng_from_seed(derive_seed(rng_seed, &["identity"]));
        let own = pool.choose(&mut rng).expect("non-empty pool").clone();
        let other = if cond.identity_same {
            own.clone()
        } else {
            let rest: Vec<&String> = pool.iter().filter(|l| **l != own).collect();
            (*rest.choose(&mut rng).expect("pool has another label")).clone()
        };
        segments.identity_intro = identity_intro(cond.identity_kind, &own);
        for reply in replies.iter_mut().filter(|r| r.prefix.is_none()) {
            reply.prefix = Some(ReplyPrefix::Group(other.clone()));
        }
    }

    if cond.kind == ConditionKind::Normative {
        let index = cond.paraphrase.unwrap_or_else(|| normative_pair(rng_seed).index);
        let pair = normative_pair_at(index);
        segments.visibility_sentence = Some(match cond.visibility {
            Visibility::Public => pair.public,
            Visibility::Private => pair.private,
            Visibility::Unspecified => unreachable!("validated"),
        });
    }

    if cond.kind == ConditionKind::Proximity {
        let mut rng = rng_from_seed(derive_seed(rng_seed, &["proximity"]));
        let labels = match cond.proximity_axis {
            ProximityAxis::Spatial => distance_labels(),
            ProximityAxis::Temporal => time_labels(),
            ProximityAxis::None => unreachable!("validated"),
        };
        let (near, far) = labels.split_first().expect("label list is non-empty");
        for reply in replies.iter_mut().filter(|r| r.prefix.is_none()) {
            let label = if cond.proximity_near {
                near.clone()
            } else {
                far.choose(&mut rng).expect("far labels").clone()
            };
            reply.prefix = Some(match cond.proximity_axis {
                ProximityAxis::Spatial => ReplyPrefix::Distance(label),
                _ => ReplyPrefix::Time(label),
            });
        }
        segments.replies_header = proximity_header(cond.proximity_axis, &cond.role);
    } else {
        segments.replies_header = Some(replies_header(&cond.role));
    }

    segments.reply_lines = replies.iter().enumerate().map(|(i, r)| r.line(i + 1)).collect();
    Ok(RenderedPrompt::from_segments(segments))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_question_is_verbatim() {
        assert_eq!(
            base_question(TaskKind::ColorRecognition),
            "In the image, there are three colored squares labeled A, REFERENCE COLOR, and B.\n\
             Which of the squares, A or B, has the same color as the REFERENCE COLOR?\n\
             Provide only the final answer, either A or B, without generating anything else."
        );
        assert!(base_question(TaskKind::LineJudgment).contains("REFERENCE LINE"));
        assert!(base_question(TaskKind::DotsEstimation).contains("black dots"));
    }

    #[test]
    fn unanimous_replies_all_wrong() {
        let replies = sample_replies(5, &Condition::group_size(3), Label::A);
        assert_eq!(replies.len(), 3);
        assert!(replies.iter().all(|r| r.asserted_label == Label::B));
    }

    #[test]
    fn mixed_reply_counts() {
        let count = |n, f| {
            sample_replies(11, &Condition::unanimity(n, f), Label::B)
                .iter()
                .filter(|r| r.asserted_label == Label::A)
                .count()
        };
        assert_eq!(count(4, 0.5), 2);
        assert_eq!(count(5, 0.8), 4);
        assert_eq!(count(3, 0.5), 2);
    }

    #[test]
    fn baseline_has_no_replies_section() {
        let p = assemble(TaskKind::LineJudgment, &Condition::baseline(), &[], 1, None).unwrap();
        assert!(!p.full_text.contains("reply 1:"));
        assert!(p.segments.replies_header.is_none());
        assert_eq!(
            p.full_text,
            "In the image, there are three vertical lines labeled A, REFERENCE LINE, and B.\n\
             Which of the lines, A or B, is the same length as the REFERENCE LINE?\n\n\
             Provide only the final answer, either A or B, without generating anything else."
        );
    }

    #[test]
    fn group_size_prompt_layout() {
        let cond = Condition::group_size(2);
        let replies = vec![
            ConfederateReply { template_index: 0, asserted_label: Label::B, prefix: None },
            ConfederateReply { template_index: 2, asserted_label: Label::B, prefix: None },
        ];
        let p = assemble(TaskKind::ColorRecognition, &cond, &replies, 3, None).unwrap();
        assert_eq!(
            p.full_text,
            "In the image, there are three colored squares labeled A, REFERENCE COLOR, and B.\n\
             Which of the squares, A or B, has the same color as the REFERENCE COLOR?\n\n\
             The participants before you provided the following replies:\n\n\
             reply 1: I think the answer is B.\n\
             reply 2: I'm going with B.\n\n\
             Provide only the final answer, either A or B, without generating anything else."
        );
    }

    #[test]
    fn strength_role_replaces_participants() {
        let cond = Condition::strength(2, "judges");
        let replies = sample_replies(9, &cond, Label::A);
        let p = assemble(TaskKind::DotsEstimation, &cond, &replies, 9, None).unwrap();
        assert_eq!(
            p.segments.replies_header.as_deref(),
            Some("The judges before you provided the following replies:")
        );
        assert_eq!(p.segments.reply_lines.len(), 2);
        assert!(p.segments.reply_lines[1].starts_with("reply 2: "));
    }

    #[test]
    fn spatial_near_annotates_every_reply() {
        let cond = Condition::proximity(3, ProximityAxis::Spatial, true);
        let replies = sample_replies(2, &cond, Label::A);
        let p = assemble(TaskKind::ColorRecognition, &cond, &replies, 2, None).unwrap();
        assert!(p.segments.reply_lines.iter().all(|l| l.contains("(distance from you: right here)")));
        assert!(p.full_text.contains("Each participant is located at a specific distance from you,"));
    }

    #[test]
    fn temporal_far_never_uses_right_now() {
        let cond = Condition::proximity(8, ProximityAxis::Temporal, false);
        for seed in 0..20 {
            let replies = sample_replies(seed, &cond, Label::A);
            let p = assemble(TaskKind::ColorRecognition, &cond, &replies, seed, None).unwrap();
            for line in &p.segments.reply_lines {
                assert!(line.contains("(time of reply: ") && !line.contains("right now"), "{line}");
            }
        }
    }

    #[test]
    fn identity_requires_pools() {
        let cond = Condition::identity(2, IdentityKind::Nationality, true);
        let replies = sample_replies(1, &cond, Label::A);
        assert_eq!(
            assemble(TaskKind::ColorRecognition, &cond, &replies, 1, None),
            Err(PromptError::MissingPools)
        );
    }

    #[test]
    fn identity_same_and_different_labels() {
        let pools = IdentityPools::default();
        for same in [true, false] {
            let cond = Condition::identity(3, IdentityKind::Nationality, same);
            let replies = sample_replies(4, &cond, Label::A);
            let p = assemble(TaskKind::ColorRecognition, &cond, &replies, 4, Some(&pools)).unwrap();
            let intro = p.segments.identity_intro.clone().unwrap();
            let own = intro.strip_prefix("Your nationality is ").unwrap().strip_suffix('.').unwrap();
            let other = p.segments.reply_lines[0].split(": reply 1:").next().unwrap();
            assert_eq!(own == other, same);
            assert!(p.full_text.starts_with("Your nationality is "));
        }
    }

    #[test]
    fn minimal_groups_use_single_letters() {
        let pools = IdentityPools::default();
        let cond = Condition::identity(1, IdentityKind::Minimal, false);
        let replies = sample_replies(8, &cond, Label::B);
        let p = assemble(TaskKind::LineJudgment, &cond, &replies, 8, Some(&pools)).unwrap();
        let intro = p.segments.identity_intro.unwrap();
        assert!(intro.starts_with("You will be divided into groups with other participants.\nYour group is "));
        let group = p.segments.reply_lines[0].split(':').next().unwrap();
        assert_eq!(group.len(), 1);
        assert!(group != "A" && group != "B");
    }

    #[test]
    fn normative_sentence_follows_question() {
        let cond = Condition::normative(2, Visibility::Public, Some(0));
        let replies = sample_replies(1, &cond, Label::A);
        let p = assemble(TaskKind::ColorRecognition, &cond, &replies, 1, None).unwrap();
        let q = p.full_text.find("REFERENCE COLOR?").unwrap();
        let v = p.full_text.find("Your response will be shared with other participants.").unwrap();
        let h = p.full_text.find("The participants before you").unwrap();
        assert!(q < v && v < h);
    }

    #[test]
    fn normative_pair_is_matched_and_deterministic() {
        assert_eq!(normative_pair(77), normative_pair(77));
        let p = normative_pair_at(0);
        assert_eq!(p.public, "Your response will be shared with other participants.");
        assert_eq!(p.private, "Your response will not be shared with other participants.");
    }

    #[test]
    fn invalid_conditions_are_rejected() {
        let mut c = Condition::baseline();
        c.n_confederates = 2;
        assert!(c.validate().is_err());
        assert!(Condition::group_size(0).validate().is_err());
        let mut c = Condition::group_size(3);
        c.wrong_fraction = 0.5;
        assert!(c.validate().is_err());
        assert!(Condition::unanimity(3, 0.5).validate().is_ok());
        assert!(Condition::normative(2, Visibility::Unspecified, None).validate().is_err());
    }

    #[test]
    fn reply_count_must_match_condition() {
        let cond = Condition::group_size(2);
        let replies = sample_replies(1, &Condition::group_size(3), Label::A);
        assert!(matches!(
            assemble(TaskKind::ColorRecognition, &cond, &replies, 1, None),
            Err(PromptError::InconsistentReplies(_))
        ));
    }
}
