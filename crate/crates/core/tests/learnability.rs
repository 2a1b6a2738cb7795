//! The synthetic task is solvable in principle: gold answers follow a fixed
//! rule of the feature vector (exactly at zero noise, predominantly at the
//! default noise level), and the policy class is expressive enough to score
//! highly after supervised training alone.

use std::collections::BTreeSet;

use rlft_core::scenario::{mode_feature_index, noise_free_gold};
use rlft_core::sft::sft_train;
use rlft_core::{evaluate, GenConfig, PolicyParams, PolicySpace, SftConfig, Vocabulary};

fn option_letters(gold: &BTreeSet<String>) -> BTreeSet<usize> {
    gold.iter().map(|s| (s.as_bytes()[0] - b'A') as usize).collect()
}

#[test]
fn zero_noise_gold_is_exactly_the_feature_rule() {
    let config = GenConfig { knob_min: 0.0, knob_max: 0.0, ..GenConfig::default() };
    let data = rlft_core::generate_dataset(&config).unwrap();
    for scenario in &data {
        assert_eq!(
            option_letters(&scenario.gold),
            noise_free_gold(&scenario.features),
            "scenario {}: gold must equal the noise-free rule at knob 0",
            scenario.id
        );
    }
}

#[test]
fn default_noise_keeps_the_rule_dominant() {
    let data = rlft_core::generate_dataset(&GenConfig::default()).unwrap();
    let agree = data
        .iter()
        .filter(|s| option_letters(&s.gold) == noise_free_gold(&s.features))
        .count();
    let fraction = agree as f64 / data.len() as f64;
    assert!(
        fraction >= 0.6,
        "only {fraction:.3} of gold sets match the noise-free rule; the task is noise-dominated"
    );
    // And the noise must be doing something, or the difficulty knob is dead.
    assert!(
        fraction < 1.0,
        "every gold set matches the noise-free rule; the difficulty knob has no effect"
    );
}

#[test]
fn question_mode_is_readable_from_the_features() {
    let data = rlft_core::generate_dataset(&GenConfig::default()).unwrap();
    let mode = mode_feature_index(GenConfig::default().feature_dim);
    for scenario in &data {
        assert_eq!(
            scenario.is_multi(),
            scenario.features[mode] > 0.0,
            "scenario {}: mode flag disagrees with the gold-set size",
            scenario.id
        );
        assert!(!scenario.gold.is_empty() && scenario.gold.len() <= scenario.options.len());
    }
}

#[test]
fn supervised_training_alone_reaches_a_strong_score_on_its_own_pool() {
    let gen = GenConfig { n: 120, ..GenConfig::default() };
    let data = rlft_core::generate_dataset(&gen).unwrap();
    let space =
        PolicySpace::new(Vocabulary::new(gen.feature_dim), gen.feature_dim, 24).unwrap();
    let sft = SftConfig { epochs: 150, ..SftConfig::default() };
    let init = PolicyParams::zeros(&space);
    let (params, _) = sft_train(&space, &init, &data, &sft).unwrap();
    let metrics = evaluate(&space, &params, &data).unwrap();
    assert!(
        metrics.format_rate >= 0.9,
        "format rate {:.3} after supervised training on its own pool",
        metrics.format_rate
    );
    assert!(
        metrics.exam >= 0.5,
        "resubstitution exam {:.3}: the policy class cannot even fit its training pool",
        metrics.exam
    );
}
