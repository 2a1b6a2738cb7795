//! Synthetic multiple-choice scenario generation, stratified splitting, and
//! JSONL persistence.
//!
//! Gold answers come from a fixed linear rule over the feature vector:
//! option `j` scores the sum of its two designated features plus Gaussian
//! noise scaled by the scenario's difficulty knob. The last feature slot is
//! not part of any score; it holds the question-mode flag (+1 for "select
//! all that apply", -1 for "choose one"), the same cue a real exam prompt
//! prints, so the full answer — which options and how many — is a function
//! of the feature vector. At knob 0 the gold set is a deterministic function
//! of the features alone (see [`noise_free_gold`]), so the dataset is
//! perfectly classifiable; larger knobs flip small-margin decisions and make
//! questions genuinely harder. Demo traces list the concepts (feature
//! indices) that fired for the gold options, then the gold answer block, and
//! always parse back to the gold set.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::parse_response;
use crate::vocab::{option_label, Token, OPTION_COUNT};

/// One synthetic question: feature vector, option labels, gold answer set,
/// and a demonstration trace ending in the gold answer block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub features: Vec<f64>,
    pub options: Vec<String>,
    pub gold: BTreeSet<String>,
    pub demo_tokens: Vec<Token>,
    /// Generation noise level in `[0, 1]`; 0 means noise-free rules.
    #[serde(rename = "knob")]
    pub difficulty_knob: f64,
}

impl Scenario {
    /// Multiple-choice questions carry two or more gold options.
    pub fn is_multi(&self) -> bool {
        self.gold.len() >= 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() || self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!(
                "scenario {}: features must be non-empty and finite",
                self.id
            )));
        }
        if self.options.is_empty() || self.options.len() > OPTION_COUNT {
            return Err(Error::Config(format!(
                "scenario {}: expected 1..={OPTION_COUNT} options",
                self.id
            )));
        }
        if self.gold.is_empty() || !self.gold.iter().all(|g| self.options.contains(g)) {
            return Err(Error::Config(format!(
                "scenario {}: gold must be a non-empty subset of options",
                self.id
            )));
        }
        if !(0.0..=1.0).contains(&self.difficulty_knob) {
            return Err(Error::Config(format!(
                "scenario {}: knob must lie in [0, 1]",
                self.id
            )));
        }
        let parsed = parse_response(&self.demo_tokens);
        if !parsed.well_formed || parsed.answers != self.gold {
            return Err(Error::Config(format!(
                "scenario {}: demo trace must parse to the gold set",
                self.id
            )));
        }
        Ok(())
    }
}

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Number of scenarios.
    pub n: usize,
    /// Feature vector width; also the number of concept tokens.
    pub feature_dim: usize,
    pub seed: u64,
    /// Fraction of single-choice questions.
    pub mix_single: f64,
    /// Fraction of multiple-choice questions; must sum with `mix_single` to 1.
    pub mix_multi: f64,
    /// Difficulty knobs are drawn uniformly from `[knob_min, knob_max]`.
    pub knob_min: f64,
    pub knob_max: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 600,
            feature_dim: 16,
            seed: 11,
            mix_single: 0.5,
            mix_multi: 0.5,
            knob_min: 0.0,
            knob_max: 1.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("scenario.n must be positive".into()));
        }
        if self.feature_dim < 2 {
            return Err(Error::Config("scenario.feature_dim must be at least 2".into()));
        }
        if (self.mix_single + self.mix_multi - 1.0).abs() > 1e-9
            || !(0.0..=1.0).contains(&self.mix_single)
        {
            return Err(Error::Config(
                "scenario mix_single and mix_multi must be fractions summing to 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.knob_min)
            || !(0.0..=1.0).contains(&self.knob_max)
            || self.knob_min > self.knob_max
        {
            return Err(Error::Config(
                "scenario knob range must satisfy 0 <= knob_min <= knob_max <= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Index of the question-mode flag inside the feature vector: the last slot
/// holds +1 for multiple-choice ("select all that apply") and -1 for
/// single-choice. It never contributes to option scores.
pub fn mode_feature_index(feature_dim: usize) -> usize {
    feature_dim - 1
}

/// The two feature indices summed by option `j`'s rule. Scores draw only on
/// the evidence slots `0..feature_dim-1`; the mode flag is excluded.
pub fn option_rule_features(option_index: usize, feature_dim: usize) -> [usize; 2] {
    let evidence = feature_dim - 1;
    [(2 * option_index) % evidence, (2 * option_index + 1) % evidence]
}

/// Noise-to-margin calibration: at `difficulty_knob = 1` the per-option
/// score noise has this standard deviation, which flips roughly a fifth of
/// gold sets relative to the noise-free rule. Large enough that hard
/// questions exist, small enough that hard pools stay mostly learnable.
const NOISE_SCALE: f64 = 0.2;

fn rule_scores(features: &[f64], knob: f64, noise: &[f64; OPTION_COUNT]) -> [f64; OPTION_COUNT] {
    let mut scores = [0.0; OPTION_COUNT];
    for (j, score) in scores.iter_mut().enumerate() {
        for i in option_rule_features(j, features.len()) {
            *score += features[i];
        }
        *score += knob * NOISE_SCALE * noise[j];
    }
    scores
}

/// Reference rule: the gold index set at knob 0, as a pure function of the
/// features (the mode flag selects the single- or multi-answer rule).
/// Exposed so oracle tests can verify the dataset is learnable.
pub fn noise_free_gold(features: &[f64]) -> BTreeSet<usize> {
    let scores = rule_scores(features, 0.0, &[0.0; OPTION_COUNT]);
    if features[mode_feature_index(features.len())] > 0.0 {
        gold_multi(&scores)
    } else {
        gold_single(&scores)
    }
}

fn gold_single(scores: &[f64; OPTION_COUNT]) -> BTreeSet<usize> {
    let mut best = 0;
    for j in 1..OPTION_COUNT {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    BTreeSet::from([best])
}

fn gold_multi(scores: &[f64; OPTION_COUNT]) -> BTreeSet<usize> {
    let mut gold: BTreeSet<usize> = (0..OPTION_COUNT).filter(|&j| scores[j] > 0.0).collect();
    if gold.len() < 2 {
        // Too few positives: take the top two scores (ties resolved by index).
        let mut order: Vec<usize> = (0..OPTION_COUNT).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        gold = order.into_iter().take(2).collect();
    }
    gold
}

/// Concepts cited in the demo trace: features with positive sign among the
/// gold options' rule features, plus the mode flag when it fired (multi),
/// ascending.
fn fired_concepts(features: &[f64], gold: &BTreeSet<usize>) -> Vec<u16> {
    let mut fired: BTreeSet<usize> = BTreeSet::new();
    for &j in gold {
        for i in option_rule_features(j, features.len()) {
            if features[i] > 0.0 {
                fired.insert(i);
            }
        }
    }
    let mode = mode_feature_index(features.len());
    if features[mode] > 0.0 {
        fired.insert(mode);
    }
    fired.into_iter().map(|i| i as u16).collect()
}

/// Demo answers are listed by descending noise-free score (ties by index):
/// "strongest option first" is the ordering an argmax-style reader can
/// reproduce, unlike a fixed index order.
fn demo_answer_order(gold: &BTreeSet<usize>, features: &[f64]) -> Vec<usize> {
    let scores = rule_scores(features, 0.0, &[0.0; OPTION_COUNT]);
    let mut order: Vec<usize> = gold.iter().copied().collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite").then(a.cmp(&b)));
    order
}

fn build_demo(gold: &BTreeSet<usize>, features: &[f64], fired: &[u16]) -> Vec<Token> {
    let mut demo = vec![Token::ThinkOpen];
    demo.extend(fired.iter().map(|&i| Token::Concept(i)));
    demo.push(Token::ThinkClose);
    demo.push(Token::AnsOpen);
    for (k, j) in demo_answer_order(gold, features).into_iter().enumerate() {
        if k > 0 {
            demo.push(Token::Sep);
        }
        demo.push(Token::Opt(j as u8));
    }
    demo.push(Token::AnsClose);
    demo.push(Token::Eos);
    demo
}

/// Generate a dataset as a pure function of the config.
pub fn generate_dataset(config: &GenConfig) -> Result<Vec<Scenario>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_single = (config.mix_single * config.n as f64).round() as usize;
    let n_single = n_single.min(config.n);
    let mut is_single: Vec<bool> = (0..config.n).map(|i| i < n_single).collect();
    is_single.shuffle(&mut rng);

    let options: Vec<String> = (0..OPTION_COUNT).map(option_label).collect();
    let mut dataset = Vec::with_capacity(config.n);
    for (idx, single) in is_single.into_iter().enumerate() {
        let mut features: Vec<f64> =
            (0..config.feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        features[mode_feature_index(config.feature_dim)] = if single { -1.0 } else { 1.0 };
        let knob = rng.gen_range(config.knob_min..=config.knob_max);
        let mut noise = [0.0; OPTION_COUNT];
        for slot in noise.iter_mut() {
            *slot = StandardNormal.sample(&mut rng);
        }
        let scores = rule_scores(&features, knob, &noise);
        let gold_idx = if single { gold_single(&scores) } else { gold_multi(&scores) };
        let fired = fired_concepts(&features, &gold_idx);
        let scenario = Scenario {
            id: format!("s{idx:05}"),
            demo_tokens: build_demo(&gold_idx, &features, &fired),
            gold: gold_idx.iter().map(|&j| option_label(j)).collect(),
            features,
            options: options.clone(),
            difficulty_knob: knob,
        };
        debug_assert!(scenario.validate().is_ok());
        dataset.push(scenario);
    }
    Ok(dataset)
}

/// Disjoint supervised/RL pools, stratified by question type.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub sft_pool: Vec<Scenario>,
    pub rl_pool: Vec<Scenario>,
    pub seed: u64,
}

/// Split a dataset so each question type contributes `sft_fraction` of its
/// scenarios (rounded) to the supervised pool. Pools are sorted by id.
pub fn split_dataset(data: &[Scenario], sft_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if data.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    if !(sft_fraction > 0.0 && sft_fraction < 1.0) {
        return Err(Error::Config("split.sft_fraction must lie strictly in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sft_pool = Vec::new();
    let mut rl_pool = Vec::new();
    for want_multi in [false, true] {
        let mut group: Vec<&Scenario> =
            data.iter().filter(|s| s.is_multi() == want_multi).collect();
        if group.is_empty() {
            continue;
        }
        group.shuffle(&mut rng);
        let k = (sft_fraction * group.len() as f64).round() as usize;
        for (i, s) in group.into_iter().enumerate() {
            if i < k {
                sft_pool.push(s.clone());
            } else {
                rl_pool.push(s.clone());
            }
        }
    }
    sft_pool.sort_by(|a, b| a.id.cmp(&b.id));
    rl_pool.sort_by(|a, b| a.id.cmp(&b.id));
    if sft_pool.is_empty() || rl_pool.is_empty() {
        return Err(Error::Config(format!(
            "split produced an empty pool (sft {}, rl {})",
            sft_pool.len(),
            rl_pool.len()
        )));
    }
    Ok(DatasetSplit { sft_pool, rl_pool, seed })
}

/// Write one JSON object per line.
pub fn save_dataset<P: AsRef<Path>>(path: P, data: &[Scenario]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for scenario in data {
        serde_json::to_writer(&mut out, scenario)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSONL dataset, validating every record. Errors carry the 1-based
/// line number.
pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<Vec<Scenario>> {
    let reader = BufReader::new(File::open(path)?);
    let mut dataset = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scenario: Scenario = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        scenario.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        dataset.push(scenario);
    }
    Ok(dataset)
}

/// Hand-built scenario for unit tests elsewhere in the crate.
#[cfg(test)]
pub fn test_scenario(gold: &[&str], options: &[&str]) -> Scenario {
    let gold_set: BTreeSet<String> = gold.iter().map(|s| s.to_string()).collect();
    let gold_idx: BTreeSet<usize> =
        gold.iter().map(|s| (s.as_bytes()[0] - b'A') as usize).collect();
    let mut features = vec![0.5, -0.25, 0.75, -1.0];
    if gold_idx.len() >= 2 {
        features[3] = 1.0;
    }
    Scenario {
        id: "test".into(),
        demo_tokens: build_demo(&gold_idx, &features, &[0, 2]),
        features,
        options: options.iter().map(|s| s.to_string()).collect(),
        gold: gold_set,
        difficulty_knob: 0.0,
    }
}
