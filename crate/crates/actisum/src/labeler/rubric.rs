//! Automated rubric scoring of summary labels.
//!
//! Six categories, each 1..5: peak identification, one per six-hour block,
//! and language quality. The subjective wording of the original rating sheet
//! is operationalized on the label's structured facts plus a denylist scan of
//! the prose, so scoring is deterministic and self-contained.

use serde::{Deserialize, Serialize};

use crate::data::HourlyProfile;
use crate::error::{Error, Result};
use crate::labeler::templates::TemplateBank;
use crate::labeler::trend::classify_block;
use crate::labeler::{peak_hour, SummaryLabel, BLOCK_COUNT, HOURS_PER_BLOCK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricScore {
    /// peak, night, morning, afternoon, evening, language — each 1..5.
    pub categories: [u8; 6],
    pub total: u8,
}

impl RubricScore {
    fn new(categories: [u8; 6]) -> Self {
        RubricScore {
            categories,
            total: categories.iter().sum(),
        }
    }
}

/// Second-highest hour: argmax over hours other than the true peak,
/// earliest on ties.
fn second_peak_hour(levels: &[u16], peak: usize) -> usize {
    let mut best: Option<usize> = None;
    for (h, &l) in levels.iter().enumerate() {
        if h == peak {
            continue;
        }
        match best {
            None => best = Some(h),
            Some(b) if l > levels[b] => best = Some(h),
            _ => {}
        }
    }
    best.unwrap_or(peak)
}

fn median_level(levels: &[u16]) -> u16 {
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    sorted[sorted.len() / 2]
}

fn score_peak(claimed: usize, levels: &[u16]) -> u8 {
    let truth = peak_hour(levels) as usize;
    if claimed == truth {
        return 5;
    }
    let second = second_peak_hour(levels, truth);
    if claimed == second || claimed.abs_diff(truth) <= 1 {
        return 4;
    }
    if claimed / HOURS_PER_BLOCK == truth / HOURS_PER_BLOCK {
        return 3;
    }
    if claimed < levels.len() && levels[claimed] >= median_level(levels) {
        return 2;
    }
    1
}

fn score_language(text: &str, bank: &TemplateBank) -> u8 {
    let has_digit = text.chars().any(|c| c.is_ascii_digit());
    let lower = text.to_lowercase();
    let has_banned = bank
        .banned_phrases
        .iter()
        .any(|p| lower.contains(&p.to_lowercase()));
    match (has_digit, has_banned) {
        (false, false) => 5,
        (false, true) => 3,
        (true, false) => 2,
        (true, true) => 1,
    }
}

/// Score a label against the profile it claims to describe.
pub fn score_label(label: &SummaryLabel, profile: &HourlyProfile) -> Result<RubricScore> {
    if label.participant_id != profile.participant_id || label.day_index != profile.day_index {
        return Err(Error::validation(format!(
            "label for {}/{} scored against profile {}/{}",
            label.participant_id, label.day_index, profile.participant_id, profile.day_index
        )));
    }
    let bank = TemplateBank::builtin();
    let levels = &profile.levels;

    let mut categories = [0u8; 6];
    categories[0] = score_peak(label.facts.peak_hour as usize, levels);
    for b in 0..BLOCK_COUNT {
        let oracle = classify_block(&levels[b * HOURS_PER_BLOCK..(b + 1) * HOURS_PER_BLOCK]);
        let claimed = label.facts.block_trends[b];
        categories[1 + b] = if claimed == oracle {
            5
        } else if claimed.is_adjacent(oracle) {
            3
        } else {
            1
        };
    }
    categories[5] = score_language(&label.text, bank);

    Ok(RubricScore::new(categories))
}
