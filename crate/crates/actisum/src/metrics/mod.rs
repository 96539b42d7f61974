//! Text-generation metrics: ROUGE-1, ROUGE-L and an embedding-based semantic
//! precision/recall/F1, plus the batch scoring interface.

mod rouge;
mod semantic;
mod stem;

pub use rouge::{lcs_length, rouge1, rouge_l, unigram_overlap};
pub use semantic::{semantic_score, EmbeddingProvider, SemanticScore, StaticHashEmbedding};
pub use stem::stem;

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision / recall / harmonic F1, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    pub fn zero() -> Self {
        PrfScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        }
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfScore {
            precision,
            recall,
            f1,
        }
    }
}

/// The five per-participant metric values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge1: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub sem_p: f64,
    pub sem_r: f64,
    pub sem_f1: f64,
}

impl MetricReport {
    pub fn values(&self) -> [f64; 5] {
        [self.rouge1, self.rouge_l, self.sem_p, self.sem_r, self.sem_f1]
    }
}

pub const METRIC_COLUMNS: [&str; 5] = ["rouge1", "rougeL", "sem_P", "sem_R", "sem_F1"];

/// Metric-side tokenization: lowercase, split on anything non-alphanumeric.
/// Deliberately independent of the model tokenizer so the metrics stay
/// model-agnostic.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Score one candidate/reference pair with all five metrics.
pub fn score_pair(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
    stemmed: bool,
) -> Result<MetricReport> {
    let cand = metric_tokens(candidate);
    let refs = metric_tokens(reference);
    if refs.is_empty() {
        return Err(Error::validation("reference text has no tokens"));
    }
    let r1 = rouge1(&cand, &refs, stemmed)?;
    let rl = rouge_l(&cand, &refs, stemmed)?;
    let sem = if cand.is_empty() {
        SemanticScore {
            score: PrfScore::zero(),
            clamped: provider.signed(),
        }
    } else {
        semantic_score(&cand, &refs, provider)?
    };
    Ok(MetricReport {
        rouge1: r1.f1,
        rouge_l: rl.f1,
        sem_p: sem.score.precision,
        sem_r: sem.score.recall,
        sem_f1: sem.score.f1,
    })
}

/// Mean and standard deviation per metric column over a set of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: MetricReport,
    pub std: MetricReport,
    /// Whether semantic similarities were clamped through `(1+cos)/2`.
    pub semantic_clamped: bool,
}

pub fn summarize(rows: &[MetricReport], semantic_clamped: bool) -> MetricSummary {
    let n = rows.len().max(1) as f64;
    let mut mean = [0.0; 5];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.values()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0; 5];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(row.values()).zip(mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let pack = |a: &[f64]| MetricReport {
        rouge1: a[0],
        rouge_l: a[1],
        sem_p: a[2],
        sem_r: a[3],
        sem_f1: a[4],
    };
    MetricSummary {
        count: rows.len(),
        mean: pack(&mean),
        std: pack(&std),
        semantic_clamped,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredPair {
    pub id: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// Batch interface: JSONL of `{id, candidate, reference}` in, per-id reports
/// plus a summary out.
pub fn score_jsonl<R: BufRead>(
    input: R,
    provider: &dyn EmbeddingProvider,
    stemmed: bool,
) -> Result<(Vec<ScoredPair>, MetricSummary)> {
    #[derive(Deserialize)]
    struct PairLine {
        id: String,
        candidate: String,
        reference: String,
    }
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("pairs jsonl", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PairLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            message: format!("bad metric pair: {e}"),
        })?;
        let report = score_pair(&pair.candidate, &pair.reference, provider, stemmed)?;
        rows.push(ScoredPair {
            id: pair.id,
            report,
        });
    }
    let reports: Vec<MetricReport> = rows.iter().map(|r| r.report).collect();
    let summary = summarize(&reports, provider.signed());
    Ok((rows, summary))
}

/// CSV with one row per id plus a trailing summary row.
pub fn rows_to_csv(rows: &[ScoredPair], summary: &MetricSummary) -> String {
    let mut out = String::from("id");
    for col in METRIC_COLUMNS {
        out.push(',');
        out.push_str(col);
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.id);
        for v in row.report.values() {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out.push_str("__summary_mean__");
    for v in summary.mean.values() {
        out.push_str(&format!(",{v:.6}"));
    }
    out.push('\n');
    out
}
