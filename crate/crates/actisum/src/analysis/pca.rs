//! Two-component PCA via power iteration on the covariance matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Two orthonormal rows.
    pub components: [Vec<f64>; 2],
    /// Sample variance captured by each component, non-increasing.
    pub explained_variance: [f64; 2],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Deterministic start vector, mildly asymmetric to avoid unlucky
/// orthogonality with the leading eigenvector.
fn start_vector(dim: usize, which: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|i| 1.0 + 0.37 * ((i + 1 + which * 13) as f64).sin())
        .collect();
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    v
}

fn mat_vec(cov: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    cov.iter().map(|row| dot(row, v)).collect()
}

fn orthogonalize_against(v: &mut [f64], basis: &[f64]) {
    let proj = dot(v, basis);
    for (x, &b) in v.iter_mut().zip(basis) {
        *x -= proj * b;
    }
}

/// Power iteration for the dominant eigenpair of `cov`, optionally deflating
/// against an already-found component every step.
fn dominant_eigenpair(cov: &[Vec<f64>], against: Option<&[f64]>, which: usize) -> (Vec<f64>, f64) {
    let dim = cov.len();
    let mut v = start_vector(dim, which);
    if let Some(basis) = against {
        orthogonalize_against(&mut v, basis);
    }
    let mut eigenvalue = 0.0;
    for _ in 0..1000 {
        let mut next = mat_vec(cov, &v);
        if let Some(basis) = against {
            orthogonalize_against(&mut next, basis);
        }
        let n = norm(&next);
        if n < 1e-14 {
            // degenerate direction: all remaining variance is zero; return a
            // deterministic unit vector orthogonal to the basis
            let mut fallback = vec![0.0; dim];
            let pivot = match against {
                Some(basis) => {
                    let mut idx = 0;
                    for (i, b) in basis.iter().enumerate() {
                        if b.abs() < basis[idx].abs() {
                            idx = i;
                        }
                    }
                    idx
                }
                None => 0,
            };
            fallback[pivot] = 1.0;
            if let Some(basis) = against {
                orthogonalize_against(&mut fallback, basis);
                let n = norm(&fallback);
                if n > 0.0 {
                    for x in fallback.iter_mut() {
                        *x /= n;
                    }
                }
            }
            return (fallback, 0.0);
        }
        for x in next.iter_mut() {
            *x /= n;
        }
        let new_eigenvalue = dot(&next, &mat_vec(cov, &next));
        let converged = (new_eigenvalue - eigenvalue).abs() <= 1e-13 * new_eigenvalue.abs().max(1.0);
        v = next;
        eigenvalue = new_eigenvalue;
        if converged {
            break;
        }
    }
    (v, eigenvalue.max(0.0))
}

/// Fix the sign so each component's largest-magnitude entry is positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Center by the mean, extract the top two principal directions and project
/// every vector onto them.
pub fn pca2(vectors: &[Vec<f64>]) -> Result<(PcaModel, Vec<[f64; 2]>)> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::validation(format!("pca needs at least 2 vectors, got {n}")));
    }
    let dim = vectors[0].len();
    if dim < 2 {
        return Err(Error::validation("pca needs at least 2 dimensions"));
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::validation("pca vectors must share one dimensionality"));
    }

    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // sample covariance, D×D
    let mut cov = vec![vec![0.0; dim]; dim];
    for v in vectors {
        let centered: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for (i, &ci) in centered.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i];
            for (slot, &cj) in row.iter_mut().zip(&centered) {
                *slot += ci * cj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= denom;
        }
    }

    let (mut c1, ev1) = dominant_eigenpair(&cov, None, 0);
    let (mut c2, ev2) = dominant_eigenpair(&cov, Some(&c1), 1);
    // final re-orthogonalization for tight numerical orthonormality
    orthogonalize_against(&mut c2, &c1);
    let n2 = norm(&c2);
    if n2 > 0.0 {
        for x in c2.iter_mut() {
            *x /= n2;
        }
    }
    fix_sign(&mut c1);
    fix_sign(&mut c2);
    let (ev1, ev2) = if ev2 > ev1 { (ev2, ev1) } else { (ev1, ev2) };

    let projected: Vec<[f64; 2]> = vectors
        .iter()
        .map(|v| {
            let centered: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
            [dot(&centered, &c1), dot(&centered, &c2)]
        })
        .collect();

    Ok((
        PcaModel {
            mean,
            components: [c1, c2],
            explained_variance: [ev1, ev2],
        },
        projected,
    ))
}
