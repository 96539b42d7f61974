//! Cluster-wise metric tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLUSTERWISE_METRICS: [&str; 3] = ["rouge1", "rougeL", "sem_F1"];

/// Per-cluster mean and standard deviation of the three headline metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterwiseReport {
    pub k: usize,
    /// `[metric][cluster]`, metrics ordered as in [`CLUSTERWISE_METRICS`].
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

/// Aggregate per-participant metric rows (`rouge1`, `rougeL`, `sem_F1`) into a
/// metrics × clusters table. Every evaluated participant must have a cluster
/// assignment.
pub fn clusterwise_report(
    rows: &[(String, [f64; 3])],
    assignments: &BTreeMap<String, usize>,
    k: usize,
) -> Result<ClusterwiseReport> {
    let mut buckets: Vec<Vec<[f64; 3]>> = vec![Vec::new(); k];
    for (id, values) in rows {
        let cluster = *assignments
            .get(id)
            .ok_or_else(|| Error::validation(format!("participant {id} has no cluster assignment")))?;
        if cluster >= k {
            return Err(Error::validation(format!(
                "participant {id} assigned to cluster {cluster} outside 0..{k}"
            )));
        }
        buckets[cluster].push(*values);
    }

    let mut means = vec![vec![0.0; k]; 3];
    let mut stds = vec![vec![0.0; k]; 3];
    let counts: Vec<usize> = buckets.iter().map(|b| b.len()).collect();
    for (cluster, bucket) in buckets.iter().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        let n = bucket.len() as f64;
        for m in 0..3 {
            let mean = bucket.iter().map(|v| v[m]).sum::<f64>() / n;
            let var = bucket.iter().map(|v| (v[m] - mean) * (v[m] - mean)).sum::<f64>() / n;
            means[m][cluster] = mean;
            stds[m][cluster] = var.sqrt();
        }
    }

    Ok(ClusterwiseReport {
        k,
        means,
        stds,
        counts,
    })
}

impl ClusterwiseReport {
    /// CSV shaped metrics × clusters, one `mean ± std` cell per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in 0..self.k {
            out.push_str(&format!(",cluster_{}", c + 1));
        }
        out.push('\n');
        for (m, name) in CLUSTERWISE_METRICS.iter().enumerate() {
            out.push_str(name);
            for c in 0..self.k {
                out.push_str(&format!(",{:.4} ± {:.4}", self.means[m][c], self.stds[m][c]));
            }
            out.push('\n');
        }
        out
    }
}
