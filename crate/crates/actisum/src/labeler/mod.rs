//! Deterministic behavioral-summary labeler.
//!
//! Implements the dataset's label-generation procedure as code: count zero
//! hours and flag likely device misuse, describe the four six-hour blocks
//! from a template bank keyed by trend codes, name the peak by its general
//! time block (never an exact hour), acknowledge the lowest-activity block as
//! a rest period, and close with an overall statement. Template choice among
//! synonymous phrasings is seeded-deterministic per profile.

mod exemplars;
mod rubric;
mod templates;
mod trend;

pub use exemplars::select_exemplars;
pub use rubric::{score_label, RubricScore};
pub use templates::{fill_period, TemplateBank, BLOCK_NAMES, TEMPLATE_BANK_JSON};
pub use trend::{block_slope, classify_block, classify_intensity, IntensityClass, TrendCode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{HourlyProfile, HOURS_PER_DAY};

pub const BLOCK_COUNT: usize = 4;
pub const HOURS_PER_BLOCK: usize = HOURS_PER_DAY / BLOCK_COUNT;
/// Zero-hour count above which the device was likely unworn or misused.
pub const MISUSE_ZERO_THRESHOLD: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelerConfig {
    /// Profiles whose level range is at most this are described as low
    /// movement overall instead of reading trends into noise.
    pub low_range_threshold: u16,
    /// Overall-mean boundaries between the low / moderate / high registers.
    pub moderate_mean: f64,
    pub high_mean: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            low_range_threshold: 20,
            moderate_mean: 100.0,
            high_mean: 350.0,
        }
    }
}

/// Structured provenance facts carried alongside the prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFacts {
    pub peak_hour: u8,
    pub zero_count: u8,
    pub misuse_flag: bool,
    pub block_trends: [TrendCode; BLOCK_COUNT],
}

/// The six-part behavioral summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLabel {
    pub participant_id: String,
    pub day_index: u32,
    /// Join of `sections` in fixed order.
    pub text: String,
    /// overall, night, morning, afternoon, evening, closing.
    pub sections: [String; 6],
    pub facts: LabelFacts,
}

fn fnv1a_levels(levels: &[u16]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &l in levels {
        for byte in l.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &'a [String]) -> &'a str {
    &options[rng.random_range(0..options.len())]
}

/// Earliest hour attaining the maximum level.
pub fn peak_hour(levels: &[u16]) -> u8 {
    let mut best = 0usize;
    for (h, &l) in levels.iter().enumerate() {
        if l > levels[best] {
            best = h;
        }
    }
    best as u8
}

fn block_means(levels: &[u16]) -> [f64; BLOCK_COUNT] {
    let mut means = [0.0; BLOCK_COUNT];
    for (b, mean) in means.iter_mut().enumerate() {
        let block = &levels[b * HOURS_PER_BLOCK..(b + 1) * HOURS_PER_BLOCK];
        *mean = block.iter().map(|&l| l as f64).sum::<f64>() / HOURS_PER_BLOCK as f64;
    }
    means
}

pub fn generate_label(profile: &HourlyProfile, rng_seed: u64) -> SummaryLabel {
    generate_label_with(profile, rng_seed, &LabelerConfig::default())
}

pub fn generate_label_with(
    profile: &HourlyProfile,
    rng_seed: u64,
    config: &LabelerConfig,
) -> SummaryLabel {
    let bank = TemplateBank::builtin();
    let levels = &profile.levels;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ fnv1a_levels(levels));

    // step 1: zero count and misuse flag
    let zero_count = levels.iter().filter(|&&l| l == 0).count() as u8;
    let misuse_flag = zero_count > MISUSE_ZERO_THRESHOLD;

    // step 2: block trend codes
    let mut block_trends = [TrendCode::Inactive; BLOCK_COUNT];
    for (b, slot) in block_trends.iter_mut().enumerate() {
        *slot = classify_block(&levels[b * HOURS_PER_BLOCK..(b + 1) * HOURS_PER_BLOCK]);
    }

    // derived facts for narrative placement
    let peak = peak_hour(levels);
    let peak_block = peak as usize / HOURS_PER_BLOCK;
    let means = block_means(levels);
    let mut rest_block = 0usize;
    for (b, &m) in means.iter().enumerate() {
        if m < means[rest_block] {
            rest_block = b;
        }
    }
    let max = levels.iter().copied().max().unwrap_or(0);
    let min = levels.iter().copied().min().unwrap_or(0);
    let narrow_range = max - min <= config.low_range_threshold;
    let overall_mean = levels.iter().map(|&l| l as f64).sum::<f64>() / HOURS_PER_DAY as f64;

    // overall statement, with the misuse note when the flag fires
    let overall_group: &[String] = if narrow_range {
        &bank.overall_low_range
    } else if overall_mean < config.moderate_mean {
        &bank.overall_low
    } else if overall_mean < config.high_mean {
        &bank.overall_moderate
    } else {
        &bank.overall_high
    };
    let mut overall = pick(&mut rng, overall_group).to_string();
    if misuse_flag {
        overall.push(' ');
        overall.push_str(pick(&mut rng, &bank.misuse));
    }

    // steps 3-5: per-block descriptions with peak and rest mentions
    let mut block_sections: Vec<String> = Vec::with_capacity(BLOCK_COUNT);
    for b in 0..BLOCK_COUNT {
        let period = pick(&mut rng, bank.periods_for_block(b)).to_string();
        let template = pick(&mut rng, bank.trend_templates(block_trends[b]));
        let mut section = fill_period(template, &period);
        if b == peak_block && !narrow_range {
            let peak_period = pick(&mut rng, bank.periods_for_block(b)).to_string();
            let peak_template = pick(&mut rng, &bank.peak);
            section.push(' ');
            section.push_str(&fill_period(peak_template, &peak_period));
        }
        if b == rest_block {
            let rest_group: &[String] = if b == 0 { &bank.rest_expected } else { &bank.rest_other };
            section.push(' ');
            section.push_str(pick(&mut rng, rest_group));
        }
        block_sections.push(section);
    }

    // step 6: closing summary
    let closing_group: &[String] = if narrow_range || overall_mean < config.moderate_mean {
        &bank.closing_low
    } else if overall_mean < config.high_mean {
        &bank.closing_moderate
    } else {
        &bank.closing_high
    };
    let closing = pick(&mut rng, closing_group).to_string();

    let sections: [String; 6] = [
        overall,
        block_sections[0].clone(),
        block_sections[1].clone(),
        block_sections[2].clone(),
        block_sections[3].clone(),
        closing,
    ];
    let text = sections.join(" ");

    SummaryLabel {
        participant_id: profile.participant_id.clone(),
        day_index: profile.day_index,
        text,
        sections,
        facts: LabelFacts {
            peak_hour: peak,
            zero_count,
            misuse_flag,
            block_trends,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn profile(levels: Vec<u16>) -> HourlyProfile {
        HourlyProfile::new("p1", 0, levels).unwrap()
    }

    #[test]
    fn all_zero_profile_has_full_zero_count_and_misuse_flag() {
        let label = generate_label(&profile(vec![0; 24]), 1);
        assert_eq!(label.facts.zero_count, 24);
        assert!(label.facts.misuse_flag);
        assert!(label
            .facts
            .block_trends
            .iter()
            .all(|&t| t == TrendCode::Inactive));
        assert_eq!(label.text, label.sections.join(" "));
    }

    #[test]
    fn unique_maximum_at_hour_nine_names_peak_in_morning_section() {
        let mut levels = vec![50u16; 24];
        levels[9] = 800;
        let label = generate_label(&profile(levels.clone()), 3);
        // brute-force argmax oracle
        let mut best = 0usize;
        for (h, &l) in levels.iter().enumerate() {
            if l > levels[best] {
                best = h;
            }
        }
        assert_eq!(label.facts.peak_hour as usize, best);
        assert_eq!(label.facts.peak_hour, 9);
        assert!(label.sections[2].to_lowercase().contains("peak"), "{}", label.sections[2]);
        for (i, section) in label.sections.iter().enumerate() {
            if i != 2 {
                assert!(!section.to_lowercase().contains("peak"), "{section}");
            }
        }
    }

    #[test]
    fn narrow_range_profile_reads_as_low_movement_without_buildup() {
        let levels: Vec<u16> = (0..24).map(|h| (h % 3) as u16 * 7).collect();
        let label = generate_label(&profile(levels), 5);
        let overall = label.sections[0].to_lowercase();
        assert!(overall.contains("low movement"), "{overall}");
        assert!(!label.text.to_lowercase().contains("buildup"));
        // peak phrasing is suppressed for narrow-range profiles
        assert!(!label.text.to_lowercase().contains("peak"));
    }

    #[test]
    fn labels_are_deterministic_for_fixed_profile_and_seed() {
        let levels: Vec<u16> = (0..24).map(|h| (h * 37 % 900) as u16).collect();
        let a = generate_label(&profile(levels.clone()), 11);
        let b = generate_label(&profile(levels), 11);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_can_pick_different_phrasings() {
        let levels: Vec<u16> = (0..24).map(|h| (h * 53 % 700) as u16).collect();
        let texts: std::collections::BTreeSet<String> = (0..16)
            .map(|seed| generate_label(&profile(levels.clone()), seed).text)
            .collect();
        assert!(texts.len() > 1, "seeded synonym choice never varied");
    }

    #[test]
    fn misuse_flag_fires_exactly_above_sixteen_zeros() {
        for zeros in 0..=24usize {
            let mut levels = vec![300u16; 24];
            for l in levels.iter_mut().take(zeros) {
                *l = 0;
            }
            let label = generate_label(&profile(levels), 2);
            assert_eq!(label.facts.zero_count as usize, zeros);
            assert_eq!(label.facts.misuse_flag, zeros > 16, "zeros={zeros}");
        }
    }

    #[test]
    fn labels_never_contain_digits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for case in 0..500 {
            let levels: Vec<u16> = (0..24).map(|_| rng.random_range(0..=1000)).collect();
            let label = generate_label(&profile(levels), case);
            assert!(
                !label.text.chars().any(|c| c.is_ascii_digit()),
                "{}",
                label.text
            );
        }
    }

    #[test]
    fn peak_hour_matches_brute_force_argmax_over_many_profiles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for case in 0..10_000u64 {
            let levels: Vec<u16> = (0..24).map(|_| rng.random_range(0..=1000)).collect();
            let label = generate_label(&profile(levels.clone()), case);
            let mut best = 0usize;
            for h in 1..24 {
                if levels[h] > levels[best] {
                    best = h;
                }
            }
            assert_eq!(label.facts.peak_hour as usize, best);
        }
    }

    #[test]
    fn ties_break_to_the_earliest_hour() {
        let mut levels = vec![10u16; 24];
        levels[4] = 500;
        levels[15] = 500;
        let label = generate_label(&profile(levels), 0);
        assert_eq!(label.facts.peak_hour, 4);
    }
}
