//! Block trend classification and intensity thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qualitative shape of one six-hour block of hourly levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendCode {
    Inactive,
    Sporadic,
    GradualRise,
    AbruptRise,
    Sustained,
    Decline,
    FlatLow,
}

impl TrendCode {
    pub const ALL: [TrendCode; 7] = [
        TrendCode::Inactive,
        TrendCode::Sporadic,
        TrendCode::GradualRise,
        TrendCode::AbruptRise,
        TrendCode::Sustained,
        TrendCode::Decline,
        TrendCode::FlatLow,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            TrendCode::Inactive => "inactive",
            TrendCode::Sporadic => "sporadic",
            TrendCode::GradualRise => "gradual-rise",
            TrendCode::AbruptRise => "abrupt-rise",
            TrendCode::Sustained => "sustained",
            TrendCode::Decline => "decline",
            TrendCode::FlatLow => "flat-low",
        }
    }

    /// Codes close enough that confusing them is a wording issue rather than
    /// a contradiction; used by the rubric scorer. Symmetric.
    pub fn is_adjacent(&self, other: TrendCode) -> bool {
        use TrendCode::*;
        matches!(
            (*self, other),
            (Inactive, FlatLow)
                | (FlatLow, Inactive)
                | (Inactive, Sporadic)
                | (Sporadic, Inactive)
                | (Sporadic, FlatLow)
                | (FlatLow, Sporadic)
                | (GradualRise, AbruptRise)
                | (AbruptRise, GradualRise)
                | (Sustained, FlatLow)
                | (FlatLow, Sustained)
        )
    }
}

// Thresholds on the 0..1000 level scale.
pub const SLOPE_RISE: f64 = 5.0; // levels per hour
pub const SLOPE_ABRUPT: f64 = 25.0;
pub const SLOPE_DECLINE: f64 = -5.0;
pub const MEAN_INACTIVE: f64 = 10.0;
pub const MAX_INACTIVE: f64 = 30.0;
pub const CV_SPORADIC: f64 = 0.8;
pub const MEAN_LOW: f64 = 50.0;

/// Least-squares slope of the block levels over hour offsets 0..len.
pub fn block_slope(levels: &[u16]) -> f64 {
    let n = levels.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = levels.iter().map(|&l| l as f64).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &l) in levels.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (l as f64 - y_mean);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Classify one block of hourly levels. Rules fire in a fixed order:
/// near-zero blocks first, then slope-based rise/decline, then high relative
/// variability, then low mean, with steady engagement as the remainder.
pub fn classify_block(levels: &[u16]) -> TrendCode {
    let n = levels.len() as f64;
    let mean = levels.iter().map(|&l| l as f64).sum::<f64>() / n;
    let max = levels.iter().copied().max().unwrap_or(0) as f64;
    let var = levels
        .iter()
        .map(|&l| {
            let d = l as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    let slope = block_slope(levels);

    if mean < MEAN_INACTIVE && max < MAX_INACTIVE {
        TrendCode::Inactive
    } else if slope > SLOPE_ABRUPT {
        TrendCode::AbruptRise
    } else if slope > SLOPE_RISE {
        TrendCode::GradualRise
    } else if slope < SLOPE_DECLINE {
        TrendCode::Decline
    } else if cv > CV_SPORADIC {
        TrendCode::Sporadic
    } else if mean < MEAN_LOW {
        TrendCode::FlatLow
    } else {
        TrendCode::Sustained
    }
}

/// Physical-activity intensity classes from counts-per-minute cut points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntensityClass {
    Sedentary,
    Light,
    Moderate,
    Vigorous,
}

/// Classify a counts-per-minute value: `<100` sedentary, `100..2020` light,
/// `2020..5999` moderate, `>=5999` vigorous.
pub fn classify_intensity(cpm: f64) -> Result<IntensityClass> {
    if !cpm.is_finite() || cpm < 0.0 {
        return Err(Error::validation(format!("cpm must be non-negative, got {cpm}")));
    }
    Ok(if cpm < 100.0 {
        IntensityClass::Sedentary
    } else if cpm < 2020.0 {
        IntensityClass::Light
    } else if cpm < 5999.0 {
        IntensityClass::Moderate
    } else {
        IntensityClass::Vigorous
    })
}
