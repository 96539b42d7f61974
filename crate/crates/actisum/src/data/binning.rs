//! Hourly binning and dataset-wide normalization statistics.

use crate::data::{
    DaySequence, HourlyProfile, NormalizationStats, HOURS_PER_DAY, LEVEL_SCALE, MINUTES_PER_HOUR,
    STATS_SCHEMA_VERSION,
};
use crate::error::{Error, Result};

/// Raw mean movement intensity within each hour of one day.
pub fn hourly_means(seq: &DaySequence) -> [f64; HOURS_PER_DAY] {
    let mut means = [0.0; HOURS_PER_DAY];
    for (h, mean) in means.iter_mut().enumerate() {
        let window = &seq.minutes[h * MINUTES_PER_HOUR..(h + 1) * MINUTES_PER_HOUR];
        *mean = window.iter().sum::<f64>() / MINUTES_PER_HOUR as f64;
    }
    means
}

/// Min/max over all hourly means of the whole dataset, plus minute-level
/// mean/std for encoder-input standardization.
pub fn compute_norm_stats(sequences: &[DaySequence]) -> Result<NormalizationStats> {
    if sequences.is_empty() {
        return Err(Error::validation("cannot compute stats over an empty dataset"));
    }
    let mut global_min = f64::INFINITY;
    let mut global_max = f64::NEG_INFINITY;
    let mut minute_sum = 0.0;
    let mut minute_count = 0usize;
    for seq in sequences {
        for mean in hourly_means(seq) {
            global_min = global_min.min(mean);
            global_max = global_max.max(mean);
        }
        minute_sum += seq.minutes.iter().sum::<f64>();
        minute_count += seq.minutes.len();
    }
    let minute_mean = minute_sum / minute_count as f64;
    let mut var_sum = 0.0;
    for seq in sequences {
        for v in &seq.minutes {
            let d = v - minute_mean;
            var_sum += d * d;
        }
    }
    let minute_std = (var_sum / minute_count as f64).sqrt();
    Ok(NormalizationStats {
        schema_version: STATS_SCHEMA_VERSION,
        global_min,
        global_max,
        minute_mean,
        minute_std,
    })
}

#[derive(Debug, Clone)]
pub struct BinOutcome {
    pub profile: HourlyProfile,
    /// Set when the dataset's hourly-mean range was degenerate (max == min):
    /// all levels are forced to zero instead of failing.
    pub degenerate_range: bool,
}

/// Min-max normalize this day's hourly means onto the `[0, 1000]` integer
/// scale, rounding half-up.
pub fn bin_hourly(seq: &DaySequence, stats: &NormalizationStats) -> Result<BinOutcome> {
    let means = hourly_means(seq);
    if stats.is_degenerate() {
        return Ok(BinOutcome {
            profile: HourlyProfile::new(seq.participant_id.clone(), seq.day_index, vec![0; HOURS_PER_DAY])?,
            degenerate_range: true,
        });
    }
    let range = stats.global_max - stats.global_min;
    let mut levels = Vec::with_capacity(HOURS_PER_DAY);
    for mean in means {
        let scaled = (mean - stats.global_min) / range * LEVEL_SCALE;
        // f64::round is half-away-from-zero == half-up for non-negative input
        let level = scaled.round().clamp(0.0, LEVEL_SCALE) as u16;
        levels.push(level);
    }
    Ok(BinOutcome {
        profile: HourlyProfile::new(seq.participant_id.clone(), seq.day_index, levels)?,
        degenerate_range: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MINUTES_PER_DAY;

    fn seq_with_hour(hour: usize, value: f64) -> DaySequence {
        let mut minutes = vec![0.0; MINUTES_PER_DAY];
        for m in minutes[hour * 60..(hour + 1) * 60].iter_mut() {
            *m = value;
        }
        DaySequence::new("p", 0, minutes).unwrap()
    }

    fn stats(min: f64, max: f64) -> NormalizationStats {
        NormalizationStats {
            schema_version: STATS_SCHEMA_VERSION,
            global_min: min,
            global_max: max,
            minute_mean: 0.0,
            minute_std: 1.0,
        }
    }

    #[test]
    fn midpoint_hour_maps_to_level_500() {
        let seq = seq_with_hour(3, 5.0);
        let out = bin_hourly(&seq, &stats(0.0, 10.0)).unwrap();
        assert_eq!(out.profile.levels[3], 500);
        assert!(!out.degenerate_range);
    }

    #[test]
    fn arithmetic_series_hour_mean() {
        let mut minutes = vec![0.0; MINUTES_PER_DAY];
        for (i, m) in minutes[0..60].iter_mut().enumerate() {
            *m = i as f64;
        }
        let seq = DaySequence::new("p", 0, minutes).unwrap();
        assert!((hourly_means(&seq)[0] - 29.5).abs() < 1e-12);
    }

    #[test]
    fn hour_at_global_max_maps_to_1000() {
        let seq = seq_with_hour(7, 10.0);
        let out = bin_hourly(&seq, &stats(0.0, 10.0)).unwrap();
        assert_eq!(out.profile.levels[7], 1000);
    }

    #[test]
    fn degenerate_range_yields_all_zero_levels_and_flag() {
        let seq = seq_with_hour(0, 4.0);
        let out = bin_hourly(&seq, &stats(4.0, 4.0)).unwrap();
        assert!(out.degenerate_range);
        assert!(out.profile.levels.iter().all(|&l| l == 0));
    }

    #[test]
    fn stats_of_single_all_zero_day_are_zero() {
        let seq = DaySequence::new("p", 0, vec![0.0; MINUTES_PER_DAY]).unwrap();
        let s = compute_norm_stats(&[seq]).unwrap();
        assert_eq!(s.global_min, 0.0);
        assert_eq!(s.global_max, 0.0);
        assert!(s.is_degenerate());
    }

    #[test]
    fn stats_match_simple_means() {
        let a = seq_with_hour(0, 2.0);
        let b = seq_with_hour(1, 8.0);
        let c = seq_with_hour(2, 4.0);
        let s = compute_norm_stats(&[a, b, c]).unwrap();
        assert_eq!(s.global_min, 0.0); // other hours are all zero
        assert_eq!(s.global_max, 8.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(compute_norm_stats(&[]).is_err());
    }

    #[test]
    fn binning_is_monotone_in_hourly_means() {
        let st = stats(0.0, 20.0);
        let mut prev_level = 0;
        for step in 0..=20 {
            let seq = seq_with_hour(5, step as f64);
            let level = bin_hourly(&seq, &st).unwrap().profile.levels[5];
            assert!(level >= prev_level);
            prev_level = level;
        }
    }

    #[test]
    fn full_synthetic_cohort_stats_equal_brute_force_scan() {
        let cohort = crate::data::synthesize_cohort(15, 11, [0.2; 5]).unwrap();
        let s = compute_norm_stats(&cohort).unwrap();
        // independent linear scan
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for seq in &cohort {
            for h in 0..24 {
                let mut sum = 0.0;
                for m in 0..60 {
                    sum += seq.minutes[h * 60 + m];
                }
                let mean = sum / 60.0;
                lo = lo.min(mean);
                hi = hi.max(mean);
            }
        }
        assert_eq!(s.global_min, lo);
        assert_eq!(s.global_max, hi);
    }
}
