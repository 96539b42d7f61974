//! Synthetic cohort generator.
//!
//! Stand-in for a real accelerometer release: five behavioral archetypes with
//! per-participant parameter jitter and additive noise, deterministic under a
//! seed. Intensities are MIMS-like unitless magnitudes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DaySequence, MINUTES_PER_DAY};
use crate::error::{Error, Result};

pub const ARCHETYPE_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    MorningDominant,
    EveningDominant,
    Bimodal,
    LowFlat,
    IrregularSporadic,
}

impl Archetype {
    pub const ALL: [Archetype; ARCHETYPE_COUNT] = [
        Archetype::MorningDominant,
        Archetype::EveningDominant,
        Archetype::Bimodal,
        Archetype::LowFlat,
        Archetype::IrregularSporadic,
    ];
}

fn sub_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

fn gaussian_bump(hour: f64, center: f64, width: f64, amplitude: f64) -> f64 {
    let d = hour - center;
    amplitude * (-d * d / (2.0 * width * width)).exp()
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
}

/// Generate `n_participants` one-day sequences with archetypes drawn from the
/// given five mixing weights. Identical `(n, seed, mix)` inputs reproduce the
/// output exactly.
pub fn synthesize_cohort(
    n_participants: usize,
    seed: u64,
    archetype_mix: [f64; ARCHETYPE_COUNT],
) -> Result<Vec<DaySequence>> {
    if n_participants == 0 {
        return Err(Error::validation("cohort size must be at least 1"));
    }
    if archetype_mix.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::validation("archetype weights must be non-negative"));
    }
    let total: f64 = archetype_mix.iter().sum();
    if total <= 0.0 {
        return Err(Error::validation("archetype weights must not all be zero"));
    }

    let mut out = Vec::with_capacity(n_participants);
    for i in 0..n_participants {
        let mut rng = sub_rng(seed, i as u64);
        let archetype = pick_archetype(&mut rng, &archetype_mix, total);
        let minutes = generate_day(&mut rng, archetype);
        out.push(DaySequence::new(format!("synth-{i:05}"), 0, minutes)?);
    }
    Ok(out)
}

fn pick_archetype(rng: &mut ChaCha8Rng, mix: &[f64; ARCHETYPE_COUNT], total: f64) -> Archetype {
    let draw: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (arch, &w) in Archetype::ALL.iter().zip(mix) {
        acc += w;
        if draw < acc {
            return *arch;
        }
    }
    Archetype::IrregularSporadic
}

fn generate_day(rng: &mut ChaCha8Rng, archetype: Archetype) -> Vec<f64> {
    const NOISE_STD: f64 = 0.8;
    let mut minutes = vec![0.0; MINUTES_PER_DAY];

    match archetype {
        Archetype::MorningDominant => {
            let amp = rng.random_range(30.0..45.0);
            let center = rng.random_range(8.0..9.5);
            let width = rng.random_range(1.4..2.0);
            let day_base = rng.random_range(3.0..6.0);
            fill_curve(&mut minutes, |h| {
                night_base(h) + day_floor(h, day_base) + gaussian_bump(h, center, width, amp)
            });
        }
        Archetype::EveningDominant => {
            let amp = rng.random_range(28.0..42.0);
            let center = rng.random_range(18.5..20.5);
            let width = rng.random_range(1.4..2.2);
            let day_base = rng.random_range(3.0..6.0);
            fill_curve(&mut minutes, |h| {
                night_base(h) + day_floor(h, day_base) + gaussian_bump(h, center, width, amp)
            });
        }
        Archetype::Bimodal => {
            let amp_a = rng.random_range(22.0..32.0);
            let amp_b = rng.random_range(22.0..32.0);
            let center_a = rng.random_range(7.5..9.0);
            let center_b = rng.random_range(17.5..19.5);
            let day_base = rng.random_range(2.0..5.0);
            fill_curve(&mut minutes, |h| {
                night_base(h)
                    + day_floor(h, day_base)
                    + gaussian_bump(h, center_a, 1.4, amp_a)
                    + gaussian_bump(h, center_b, 1.6, amp_b)
            });
        }
        Archetype::LowFlat => {
            let base = rng.random_range(0.8..2.5);
            fill_curve(&mut minutes, |h| night_base(h) * 0.5 + day_floor(h, base));
        }
        Archetype::IrregularSporadic => {
            let base = rng.random_range(1.0..3.0);
            fill_curve(&mut minutes, |h| night_base(h) + day_floor(h, base));
            let bursts = rng.random_range(5..10);
            for _ in 0..bursts {
                let start = rng.random_range(0..MINUTES_PER_DAY);
                let span = rng.random_range(20..70);
                let amp = rng.random_range(15.0..40.0);
                for m in start..(start + span).min(MINUTES_PER_DAY) {
                    minutes[m] += amp;
                }
            }
        }
    }

    for v in minutes.iter_mut() {
        *v = (*v + normal(rng, NOISE_STD)).max(0.0);
    }
    minutes
}

/// Small residual movement overnight (turning over in sleep).
fn night_base(hour: f64) -> f64 {
    if (1.0..5.5).contains(&hour) {
        0.2
    } else {
        0.6
    }
}

/// Waking-hours floor that tapers at the edges of the day.
fn day_floor(hour: f64, base: f64) -> f64 {
    if (7.0..22.0).contains(&hour) {
        base
    } else if (6.0..23.0).contains(&hour) {
        base * 0.4
    } else {
        0.0
    }
}

fn fill_curve(minutes: &mut [f64], f: impl Fn(f64) -> f64) {
    for (m, v) in minutes.iter_mut().enumerate() {
        let hour = m as f64 / 60.0;
        *v = f(hour);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::hourly_means;

    #[test]
    fn identical_inputs_give_byte_identical_output() {
        let mix = [0.2, 0.2, 0.2, 0.2, 0.2];
        let a = synthesize_cohort(12, 42, mix).unwrap();
        let b = synthesize_cohort(12, 42, mix).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.minutes.iter().zip(&y.minutes) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn morning_only_mix_peaks_in_hours_6_to_11() {
        let seqs = synthesize_cohort(60, 7, [1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for seq in &seqs {
            let means = hourly_means(seq);
            // brute-force hourly argmax
            let mut best = 0usize;
            for h in 1..24 {
                if means[h] > means[best] {
                    best = h;
                }
            }
            assert!((6..=11).contains(&best), "{} peaked at hour {best}", seq.participant_id);
        }
    }

    #[test]
    fn empty_cohort_is_an_error() {
        assert!(synthesize_cohort(0, 1, [1.0; 5]).is_err());
    }

    #[test]
    fn all_zero_weights_are_an_error() {
        assert!(synthesize_cohort(3, 1, [0.0; 5]).is_err());
    }

    #[test]
    fn values_are_clamped_non_negative() {
        let seqs = synthesize_cohort(20, 3, [0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        for seq in &seqs {
            assert!(seq.minutes.iter().all(|&v| v >= 0.0));
        }
    }
}
