//! Minute-level activity sequences: ingestion, synthesis, binning,
//! normalization and dataset splitting.

mod binning;
mod ingest;
mod split;
mod synth;

pub use binning::{bin_hourly, compute_norm_stats, hourly_means, BinOutcome};
pub use ingest::{ingest_csv, write_long_csv, write_wide_csv};
pub use split::{split_dataset, split_sizes};
pub use synth::{synthesize_cohort, Archetype, ARCHETYPE_COUNT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::SummaryLabel;

pub const MINUTES_PER_DAY: usize = 1440;
pub const HOURS_PER_DAY: usize = 24;
pub const MINUTES_PER_HOUR: usize = 60;
/// Hourly activity levels live on this integer scale.
pub const LEVEL_SCALE: f64 = 1000.0;

pub const STATS_SCHEMA_VERSION: u32 = 1;

/// One participant-day of raw minute-level activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySequence {
    pub participant_id: String,
    pub day_index: u32,
    pub minutes: Vec<f64>,
}

impl DaySequence {
    pub fn new(participant_id: impl Into<String>, day_index: u32, minutes: Vec<f64>) -> Result<Self> {
        let participant_id = participant_id.into();
        if minutes.len() != MINUTES_PER_DAY {
            return Err(Error::validation(format!(
                "participant {participant_id} day {day_index}: expected {MINUTES_PER_DAY} minute values, got {}",
                minutes.len()
            )));
        }
        if let Some(bad) = minutes.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::validation(format!(
                "participant {participant_id} day {day_index}: invalid minute value {bad}"
            )));
        }
        Ok(DaySequence {
            participant_id,
            day_index,
            minutes,
        })
    }

    /// Minutes standardized with the dataset's mean/std, the encoder's input.
    pub fn standardized(&self, stats: &NormalizationStats) -> Vec<f64> {
        let std = if stats.minute_std > 0.0 { stats.minute_std } else { 1.0 };
        self.minutes
            .iter()
            .map(|v| (v - stats.minute_mean) / std)
            .collect()
    }
}

/// 24 normalized integer activity levels in `[0, 1000]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub participant_id: String,
    pub day_index: u32,
    pub levels: Vec<u16>,
}

impl HourlyProfile {
    pub fn new(participant_id: impl Into<String>, day_index: u32, levels: Vec<u16>) -> Result<Self> {
        if levels.len() != HOURS_PER_DAY || levels.iter().any(|&l| l > LEVEL_SCALE as u16) {
            return Err(Error::validation(format!(
                "hourly profile must have {HOURS_PER_DAY} levels in [0,{LEVEL_SCALE}]"
            )));
        }
        Ok(HourlyProfile {
            participant_id: participant_id.into(),
            day_index,
            levels,
        })
    }
}

/// Dataset-wide normalization constants, saved as a sidecar next to the
/// pairs file. Min/max range over *hourly means*; the minute-level mean/std
/// standardize the encoder input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub schema_version: u32,
    pub global_min: f64,
    pub global_max: f64,
    pub minute_mean: f64,
    pub minute_std: f64,
}

impl NormalizationStats {
    pub fn is_degenerate(&self) -> bool {
        self.global_max <= self.global_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split {other}"))),
        }
    }
}

/// A ⟨raw sequence, label⟩ pair plus split tag and optional cluster id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub sequence: DaySequence,
    pub profile: HourlyProfile,
    pub label: SummaryLabel,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<u32>,
}

/// Serialize records as JSON Lines.
pub fn write_pairs_jsonl<W: std::io::Write>(out: &mut W, records: &[PairRecord]) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::json("pair record", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("pairs jsonl", e))?;
    }
    Ok(())
}

pub fn read_pairs_jsonl<R: std::io::BufRead>(input: R) -> Result<Vec<PairRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("pairs jsonl", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            message: format!("bad pair record: {e}"),
        })?;
        records.push(record);
    }
    Ok(records)
}
