//! Difficulty tagging of the RL pool with a CoT-free evaluation model.
//!
//! Each scenario is greedy-decoded; the confidence is the length-normalized
//! geometric mean of the token probabilities inside the decoded answer block
//! (the think block, if any, never influences it). Classification:
//! correct and confident (`c >= th1`) is Easy, wrong but confident
//! (`c >= th2`) is Hard, everything else is Medium.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, PolicySpace};
use crate::scenario::Scenario;
use crate::vocab::{Token, Vocabulary};

/// Difficulty levels, ordered easiest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLabel {
    Easy,
    Medium,
    Hard,
}

impl DifficultyLabel {
    pub const ALL: [DifficultyLabel; 3] =
        [DifficultyLabel::Easy, DifficultyLabel::Medium, DifficultyLabel::Hard];

    /// Scheduler level index: easy 0, medium 1, hard 2.
    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DifficultyLabel::Easy => "easy",
            DifficultyLabel::Medium => "medium",
            DifficultyLabel::Hard => "hard",
        };
        f.write_str(name)
    }
}

/// Locate the first complete answer block `ANS_OPEN opt (SEP opt)* ANS_CLOSE`
/// in a decoded sequence. Returns the option set and the inclusive token
/// index range of the block.
fn extract_answer_block(
    vocab: &Vocabulary,
    ids: &[usize],
) -> Option<(BTreeSet<String>, std::ops::RangeInclusive<usize>)> {
    let tokens: Vec<Token> = ids.iter().filter_map(|&id| vocab.token(id)).collect();
    if tokens.len() != ids.len() {
        return None;
    }
    for start in 0..tokens.len() {
        if tokens[start] != Token::AnsOpen {
            continue;
        }
        let mut answers = BTreeSet::new();
        let mut pos = start + 1;
        let mut expect_option = true;
        loop {
            match tokens.get(pos) {
                Some(tok @ Token::Opt(_)) if expect_option => {
                    answers.insert(tok.option_label().expect("option token"));
                    expect_option = false;
                }
                Some(Token::Sep) if !expect_option => expect_option = true,
                Some(Token::AnsClose) if !expect_option => {
                    return Some((answers, start..=pos));
                }
                _ => break,
            }
            pos += 1;
        }
    }
    None
}

/// Greedy-decode a scenario and return the predicted answer set with its
/// confidence `c = exp((1/L) Σ_t log π(chosen token))`: the length-normalized
/// geometric mean of the token probabilities inside the answer block, so `c`
/// is comparable across answers of different lengths. When no complete
/// answer block appears the prediction is empty and the mean runs over every
/// emitted token.
pub fn confidence(
    space: &PolicySpace,
    params: &PolicyParams,
    scenario: &Scenario,
) -> (BTreeSet<String>, f64) {
    let (ids, logps) = space.greedy_decode(params, scenario);
    let mean = |span: &[f64]| (span.iter().sum::<f64>() / span.len() as f64).exp();
    match extract_answer_block(&space.vocab, &ids) {
        Some((answers, range)) => {
            let c = mean(&logps[*range.start()..=*range.end()]);
            (answers, c)
        }
        None => (BTreeSet::new(), mean(&logps)),
    }
}

/// The correctness/confidence decision rule.
pub fn classify(
    predicted: &BTreeSet<String>,
    gold: &BTreeSet<String>,
    confidence: f64,
    th1: f64,
    th2: f64,
) -> DifficultyLabel {
    let correct = predicted == gold;
    if correct && confidence >= th1 {
        DifficultyLabel::Easy
    } else if !correct && confidence >= th2 {
        DifficultyLabel::Hard
    } else {
        DifficultyLabel::Medium
    }
}

/// A scenario plus its difficulty verdict; serializes as the scenario's
/// JSONL record extended with `label`, `confidence`, and `predicted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedScenario {
    #[serde(flatten)]
    pub scenario: Scenario,
    pub label: DifficultyLabel,
    pub confidence: f64,
    pub predicted: BTreeSet<String>,
}

/// The RL pool partitioned into difficulty levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedDataset {
    pub easy: Vec<TaggedScenario>,
    pub medium: Vec<TaggedScenario>,
    pub hard: Vec<TaggedScenario>,
    pub th1: f64,
    pub th2: f64,
}

impl TaggedDataset {
    pub fn pool(&self, label: DifficultyLabel) -> &[TaggedScenario] {
        match label {
            DifficultyLabel::Easy => &self.easy,
            DifficultyLabel::Medium => &self.medium,
            DifficultyLabel::Hard => &self.hard,
        }
    }

    pub fn len(&self) -> usize {
        self.easy.len() + self.medium.len() + self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaggedScenario> {
        self.easy.iter().chain(self.medium.iter()).chain(self.hard.iter())
    }

    /// Levels that currently hold no scenarios; worth a warning, not an error.
    pub fn empty_pools(&self) -> Vec<DifficultyLabel> {
        DifficultyLabel::ALL.into_iter().filter(|&l| self.pool(l).is_empty()).collect()
    }

    /// Partition already-labeled scenarios into level pools.
    pub fn from_parts(tagged: Vec<TaggedScenario>, th1: f64, th2: f64) -> Self {
        let mut out = TaggedDataset {
            easy: Vec::new(),
            medium: Vec::new(),
            hard: Vec::new(),
            th1,
            th2,
        };
        for t in tagged {
            match t.label {
                DifficultyLabel::Easy => out.easy.push(t),
                DifficultyLabel::Medium => out.medium.push(t),
                DifficultyLabel::Hard => out.hard.push(t),
            }
        }
        out
    }
}

/// Tag every scenario in the RL pool with the evaluation model.
pub fn tag_dataset(
    space: &PolicySpace,
    eval_params: &PolicyParams,
    rl_pool: &[Scenario],
    th1: f64,
    th2: f64,
) -> Result<TaggedDataset> {
    if rl_pool.is_empty() {
        return Err(Error::Config("tag_dataset: empty RL pool".into()));
    }
    if !(0.0..=1.0).contains(&th1) || !(0.0..=1.0).contains(&th2) {
        return Err(Error::Config("difficulty thresholds must lie in [0, 1]".into()));
    }
    let tagged = rl_pool
        .iter()
        .map(|scenario| {
            let (predicted, c) = confidence(space, eval_params, scenario);
            let label = classify(&predicted, &scenario.gold, c, th1, th2);
            TaggedScenario { scenario: scenario.clone(), label, confidence: c, predicted }
        })
        .collect();
    Ok(TaggedDataset::from_parts(tagged, th1, th2))
}

/// Write the tagged pool as JSONL, easy pool first, preserving order.
pub fn save_tagged<P: AsRef<Path>>(path: P, tagged: &TaggedDataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in tagged.iter() {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a tagged JSONL file back into level pools.
pub fn load_tagged<P: AsRef<Path>>(path: P, th1: f64, th2: f64) -> Result<TaggedDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut tagged = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TaggedScenario = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.scenario.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        tagged.push(record);
    }
    Ok(TaggedDataset::from_parts(tagged, th1, th2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyParams;
    use crate::scenario::{generate_dataset, test_scenario, GenConfig};
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn space() -> PolicySpace {
        PolicySpace::new(Vocabulary::new(4), 4, 16).unwrap()
    }

    fn set(labels: &[&str]) -> BTreeSet<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn classify_covers_all_branches() {
        let gold = set(&["A"]);
        // Correct and confident.
        assert_eq!(classify(&set(&["A"]), &gold, 0.9, 0.6, 0.4), DifficultyLabel::Easy);
        // Correct but unsure.
        assert_eq!(classify(&set(&["A"]), &gold, 0.5, 0.6, 0.4), DifficultyLabel::Medium);
        // Wrong and confident.
        assert_eq!(classify(&set(&["B"]), &gold, 0.5, 0.6, 0.4), DifficultyLabel::Hard);
        // Wrong and unsure.
        assert_eq!(classify(&set(&["B"]), &gold, 0.3, 0.6, 0.4), DifficultyLabel::Medium);
        // Thresholds are inclusive.
        assert_eq!(classify(&set(&["A"]), &gold, 0.6, 0.6, 0.4), DifficultyLabel::Easy);
        assert_eq!(classify(&set(&["B"]), &gold, 0.4, 0.6, 0.4), DifficultyLabel::Hard);
        // Empty prediction (malformed decode) is never equal to gold.
        assert_eq!(classify(&set(&[]), &gold, 0.9, 0.6, 0.4), DifficultyLabel::Hard);
    }

    #[test]
    fn uniform_policy_confidence_is_one_over_vocab() {
        // Zero parameters emit every token with prob 1/V and produce no
        // answer block, so the length-normalized confidence over the emitted
        // tokens is exactly 1/V regardless of length.
        let sp = space();
        let params = PolicyParams::zeros(&sp);
        let scenario = test_scenario(&["A"], &["A", "B", "C", "D"]);
        let (predicted, c) = confidence(&sp, &params, &scenario);
        assert!(predicted.is_empty());
        let expected = 1.0 / sp.vocab.len() as f64;
        assert!((c - expected).abs() < 1e-12, "confidence {c} vs {expected}");
    }

    /// Hand-built near-deterministic policy: `start` wins the empty prefix
    /// via the bias input (killed afterwards by a position penalty), then
    /// each token in `chain` follows its predecessor via last-token one-hots.
    fn scripted_params(sp: &PolicySpace, start: Token, chain: &[(Token, Token)]) -> PolicyParams {
        let v = sp.vocab.len();
        let big = 1e4;
        let id = |t: Token| sp.vocab.id(t).unwrap();
        let last_col = |tok: Token| 5 + v + id(tok);
        let mut params = PolicyParams::zeros(sp);
        // The bias input favors the start token; the position penalty kills
        // it again after the first step.
        params.theta[(id(start), 0)] = big;
        params.theta[(id(start), 5 + 2 * v)] = -1e6; // position penalty
        for &(prev, next) in chain {
            params.theta[(id(next), last_col(prev))] = big;
        }
        params
    }

    #[test]
    fn near_deterministic_policy_has_confidence_near_one() {
        let sp = space();
        let params = scripted_params(
            &sp,
            Token::AnsOpen,
            &[
                (Token::AnsOpen, Token::Opt(0)),
                (Token::Opt(0), Token::AnsClose),
                (Token::AnsClose, Token::Eos),
            ],
        );
        let scenario = test_scenario(&["A"], &["A", "B", "C", "D"]);
        let (predicted, c) = confidence(&sp, &params, &scenario);
        assert_eq!(predicted, set(&["A"]));
        assert!(c > 1.0 - 1e-6, "confidence {c}");
    }

    #[test]
    fn confidence_ignores_the_think_block() {
        // Same saturated answer block behind think blocks of different
        // lengths: the confidence must not move.
        let sp = space();
        let scenario = test_scenario(&["A"], &["A", "B", "C", "D"]);
        let tail = [
            (Token::ThinkClose, Token::AnsOpen),
            (Token::AnsOpen, Token::Opt(0)),
            (Token::Opt(0), Token::AnsClose),
            (Token::AnsClose, Token::Eos),
        ];
        let mut short_chain = vec![(Token::ThinkOpen, Token::ThinkClose)];
        short_chain.extend(tail);
        let mut long_chain = vec![
            (Token::ThinkOpen, Token::Concept(0)),
            (Token::Concept(0), Token::ThinkClose),
        ];
        long_chain.extend(tail);

        let short = scripted_params(&sp, Token::ThinkOpen, &short_chain);
        let long = scripted_params(&sp, Token::ThinkOpen, &long_chain);
        let (pred_s, c_s) = confidence(&sp, &short, &scenario);
        let (pred_l, c_l) = confidence(&sp, &long, &scenario);
        assert_eq!(pred_s, set(&["A"]));
        assert_eq!(pred_l, set(&["A"]));
        assert!((c_s - c_l).abs() < 1e-9, "c_short {c_s} vs c_long {c_l}");
    }

    #[test]
    fn tagging_partitions_the_pool_deterministically() {
        let sp = PolicySpace::new(Vocabulary::new(8), 8, 24).unwrap();
        let data = generate_dataset(&GenConfig { n: 60, ..GenConfig::default() }).unwrap();
        let params = PolicyParams::random_init(&sp, 0.5, 9);
        let a = tag_dataset(&sp, &params, &data, 0.6, 0.4).unwrap();
        let b = tag_dataset(&sp, &params, &data, 0.6, 0.4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        let mut ids: Vec<&str> = a.iter().map(|t| t.scenario.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 60);
    }

    #[test]
    fn tagged_jsonl_roundtrips_with_contract_keys() {
        let sp = PolicySpace::new(Vocabulary::new(8), 8, 24).unwrap();
        let data = generate_dataset(&GenConfig { n: 12, ..GenConfig::default() }).unwrap();
        let params = PolicyParams::random_init(&sp, 0.5, 9);
        let tagged = tag_dataset(&sp, &params, &data, 0.6, 0.4).unwrap();

        let dir = tempdir().unwrap();
        let path = dir.path().join("tagged.jsonl");
        save_tagged(&path, &tagged).unwrap();
        let loaded = load_tagged(&path, 0.6, 0.4).unwrap();
        assert_eq!(tagged, loaded);

        let first = tagged.iter().next().unwrap();
        let value = serde_json::to_value(first).unwrap();
        let obj = value.as_object().unwrap();
        for key in ["id", "features", "options", "gold", "demo_tokens", "knob", "label", "confidence", "predicted"] {
            assert!(obj.contains_key(key), "missing key {key}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Raising th1 can only shrink Easy; lowering th2 can only shrink Hard.
        #[test]
        fn classification_is_threshold_monotone(
            correct in proptest::bool::ANY,
            c in 0.0f64..1.0,
            th1 in 0.0f64..1.0,
            th2 in 0.0f64..1.0,
            bump in 0.0f64..0.5,
        ) {
            let pred = if correct { set(&["A"]) } else { set(&["B"]) };
            let gold = set(&["A"]);
            let base = classify(&pred, &gold, c, th1, th2);
            let stricter_easy = classify(&pred, &gold, c, (th1 + bump).min(1.0), th2);
            if stricter_easy == DifficultyLabel::Easy {
                prop_assert_eq!(base, DifficultyLabel::Easy);
            }
            let stricter_hard = classify(&pred, &gold, c, th1, (th2 - bump).max(0.0));
            if base == DifficultyLabel::Hard {
                prop_assert_eq!(stricter_hard, DifficultyLabel::Hard);
            }
        }
    }
}
