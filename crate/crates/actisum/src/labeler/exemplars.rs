//! Cluster-representative exemplar selection.

use crate::analysis::kmeans;
use crate::data::PairRecord;
use crate::error::{Error, Result};

/// Cluster the hourly profiles with seeded k-means and return, per cluster,
/// the record whose profile is nearest its centroid — the few-shot exemplar
/// set. Ties break to the earliest record.
pub fn select_exemplars(records: &[PairRecord], k: usize, seed: u64) -> Result<Vec<PairRecord>> {
    let points: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.profile.levels.iter().map(|&l| l as f64).collect())
        .collect();
    let unique: std::collections::BTreeSet<&[u16]> = records
        .iter()
        .map(|r| r.profile.levels.as_slice())
        .collect();
    if unique.len() < k {
        return Err(Error::validation(format!(
            "need at least {k} distinct profiles, found {}",
            unique.len()
        )));
    }

    let model = kmeans(&points, k, seed, 300)?;
    let mut out = Vec::with_capacity(k);
    for cluster in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, point) in points.iter().enumerate() {
            if model.assignments[i] != cluster {
                continue;
            }
            let d: f64 = point
                .iter()
                .zip(&model.centroids[cluster])
                .map(|(x, c)| (x - c) * (x - c))
                .sum();
            match best {
                None => best = Some((i, d)),
                Some((_, bd)) if d < bd => best = Some((i, d)),
                _ => {}
            }
        }
        let (idx, _) = best.ok_or_else(|| {
            Error::validation(format!("cluster {cluster} received no members"))
        })?;
        out.push(records[idx].clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DaySequence, HourlyProfile, Split, MINUTES_PER_DAY};
    use crate::labeler::generate_label;

    fn record(id: &str, levels: Vec<u16>) -> PairRecord {
        let profile = HourlyProfile::new(id, 0, levels).unwrap();
        let label = generate_label(&profile, 0);
        PairRecord {
            sequence: DaySequence::new(id, 0, vec![0.0; MINUTES_PER_DAY]).unwrap(),
            profile,
            label,
            split: Split::Train,
            cluster_id: None,
        }
    }

    fn archetype_levels(kind: usize, jitter: u16) -> Vec<u16> {
        let mut levels = vec![0u16; 24];
        match kind {
            0 => levels[7..11].iter_mut().for_each(|l| *l = 800 + jitter),
            1 => levels[18..22].iter_mut().for_each(|l| *l = 750 + jitter),
            2 => {
                levels[8] = 700 + jitter;
                levels[19] = 700 + jitter;
            }
            3 => levels.iter_mut().for_each(|l| *l = 30 + jitter),
            _ => {
                levels[3] = 500 + jitter;
                levels[13] = 450;
                levels[22] = 400;
            }
        }
        levels
    }

    #[test]
    fn five_separated_archetypes_yield_one_exemplar_each() {
        let mut records = Vec::new();
        for kind in 0..5 {
            for j in 0..6u16 {
                records.push(record(&format!("k{kind}-{j}"), archetype_levels(kind, j * 3)));
            }
        }
        let exemplars = select_exemplars(&records, 5, 7).unwrap();
        assert_eq!(exemplars.len(), 5);
        // brute-force: each exemplar must be nearest to a distinct archetype's
        // family of profiles
        let mut kinds_seen = std::collections::BTreeSet::new();
        for ex in &exemplars {
            let kind: usize = ex.profile.participant_id[1..2].parse().unwrap();
            kinds_seen.insert(kind);
        }
        assert_eq!(kinds_seen.len(), 5);
    }

    #[test]
    fn k1_returns_the_profile_nearest_the_global_mean() {
        let records = vec![
            record("a", vec![0; 24]),
            record("b", vec![500; 24]),
            record("c", vec![1000; 24]),
        ];
        let exemplars = select_exemplars(&records, 1, 0).unwrap();
        assert_eq!(exemplars[0].profile.participant_id, "b");
    }

    #[test]
    fn duplicate_only_dataset_is_an_error() {
        let records = vec![
            record("a", vec![100; 24]),
            record("b", vec![100; 24]),
            record("c", vec![100; 24]),
        ];
        assert!(select_exemplars(&records, 5, 0).is_err());
    }
}
