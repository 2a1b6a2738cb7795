//! Response grammar and scoring.
//!
//! A well-formed response is
//! `THINK_OPEN concept* THINK_CLOSE ANS_OPEN option (SEP option)* ANS_CLOSE EOS`
//! with nothing before or after. Scoring never panics on malformed output:
//! the parser reports `well_formed = false` and downstream metrics treat the
//! prediction as empty.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::vocab::Token;

/// Result of running the grammar over a token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedResponse {
    pub well_formed: bool,
    /// Deduplicated option labels inside the answer block (empty when malformed).
    pub answers: BTreeSet<String>,
    /// Concept tokens inside the think block (empty when malformed).
    pub think_tokens: Vec<Token>,
}

impl ParsedResponse {
    fn malformed() -> Self {
        ParsedResponse::default()
    }
}

/// Strict single-pass parse of the full response grammar.
pub fn parse_response(tokens: &[Token]) -> ParsedResponse {
    let mut it = tokens.iter().copied();
    if it.next() != Some(Token::ThinkOpen) {
        return ParsedResponse::malformed();
    }
    let mut think_tokens = Vec::new();
    let mut cur = it.next();
    while let Some(tok @ Token::Concept(_)) = cur {
        think_tokens.push(tok);
        cur = it.next();
    }
    if cur != Some(Token::ThinkClose) {
        return ParsedResponse::malformed();
    }
    if it.next() != Some(Token::AnsOpen) {
        return ParsedResponse::malformed();
    }
    let mut answers = BTreeSet::new();
    match it.next() {
        Some(tok @ Token::Opt(_)) => {
            answers.insert(tok.option_label().expect("option token"));
        }
        _ => return ParsedResponse::malformed(),
    }
    loop {
        match it.next() {
            Some(Token::Sep) => match it.next() {
                Some(tok @ Token::Opt(_)) => {
                    answers.insert(tok.option_label().expect("option token"));
                }
                _ => return ParsedResponse::malformed(),
            },
            Some(Token::AnsClose) => break,
            _ => return ParsedResponse::malformed(),
        }
    }
    if it.next() != Some(Token::Eos) || it.next().is_some() {
        return ParsedResponse::malformed();
    }
    ParsedResponse {
        well_formed: true,
        answers,
        think_tokens,
    }
}

/// Exact-match score: 1.0 iff the predicted set equals gold.
pub fn exam_score(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    if pred == gold {
        1.0
    } else {
        0.0
    }
}

/// Partial-credit score: hits minus false positives over the gold size,
/// floored at zero.
pub fn easy_exam_score(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    debug_assert!(!gold.is_empty());
    let hits = pred.intersection(gold).count() as f64;
    let false_pos = pred.difference(gold).count() as f64;
    ((hits - false_pos) / gold.len() as f64).max(0.0)
}

/// Fraction of options on which the binary include/exclude decision is right.
pub fn accuracy_score(pred: &BTreeSet<String>, gold: &BTreeSet<String>, options: &[String]) -> f64 {
    debug_assert!(!options.is_empty());
    let agree = options
        .iter()
        .filter(|o| pred.contains(*o) == gold.contains(*o))
        .count();
    agree as f64 / options.len() as f64
}

/// Relative weights of the task and format reward components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub task_weight: f64,
    pub format_weight: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            task_weight: 1.0,
            format_weight: 0.5,
        }
    }
}

/// Reward components for one response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Partial-credit task score (zero when malformed).
    pub task: f64,
    /// 1.0 iff the response matches the grammar.
    pub format: f64,
    /// `task_weight * task + format_weight * format`.
    pub total: f64,
}

/// Score a parsed response against a scenario.
pub fn compute_reward(
    parsed: &ParsedResponse,
    scenario: &Scenario,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let format = if parsed.well_formed { 1.0 } else { 0.0 };
    let task = if parsed.well_formed {
        easy_exam_score(&parsed.answers, &scenario.gold)
    } else {
        0.0
    };
    RewardBreakdown {
        task,
        format,
        total: weights.task_weight * task + weights.format_weight * format,
    }
}
