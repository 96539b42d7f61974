//! ROUGE-1 (clipped unigram overlap) and ROUGE-L (longest common
//! subsequence), both with optional stemming.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::stem::stem;
use crate::metrics::PrfScore;

fn maybe_stem(tokens: &[String], apply: bool) -> Vec<String> {
    if apply {
        tokens.iter().map(|t| stem(t)).collect()
    } else {
        tokens.to_vec()
    }
}

/// Clipped unigram overlap count between two token multisets.
pub fn unigram_overlap(candidate: &[String], reference: &[String]) -> usize {
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *ref_counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in candidate {
        if let Some(count) = ref_counts.get_mut(t.as_str()) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

/// Length of the longest common subsequence, O(mn) dynamic programming.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return 0;
    }
    let mut prev = vec![0usize; n + 1];
    let mut curr = vec![0usize; n + 1];
    for i in 0..m {
        for j in 0..n {
            curr[j + 1] = if a[i] == b[j] {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[n]
}

fn prf(overlap: usize, cand_len: usize, ref_len: usize) -> PrfScore {
    if cand_len == 0 {
        return PrfScore::zero();
    }
    let p = overlap as f64 / cand_len as f64;
    let r = overlap as f64 / ref_len as f64;
    PrfScore::from_pr(p, r)
}

pub fn rouge1(candidate: &[String], reference: &[String], stemmed: bool) -> Result<PrfScore> {
    if reference.is_empty() {
        return Err(Error::validation("rouge1 needs a non-empty reference"));
    }
    if candidate.is_empty() {
        return Ok(PrfScore::zero());
    }
    let c = maybe_stem(candidate, stemmed);
    let r = maybe_stem(reference, stemmed);
    Ok(prf(unigram_overlap(&c, &r), c.len(), r.len()))
}

pub fn rouge_l(candidate: &[String], reference: &[String], stemmed: bool) -> Result<PrfScore> {
    if reference.is_empty() {
        return Err(Error::validation("rougeL needs a non-empty reference"));
    }
    if candidate.is_empty() {
        return Ok(PrfScore::zero());
    }
    let c = maybe_stem(candidate, stemmed);
    let r = maybe_stem(reference, stemmed);
    Ok(prf(lcs_length(&c, &r), c.len(), r.len()))
}
