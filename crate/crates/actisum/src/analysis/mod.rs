//! Embedding and profile analysis: k-means clustering, balanced subset
//! sampling, token pooling, two-component PCA and cluster-wise metric tables.

mod kmeans;
mod pca;
mod report;

pub use kmeans::{kmeans, sample_cluster_subset, silhouette_score, ClusterModel};
pub use pca::{pca2, PcaModel};
pub use report::{clusterwise_report, ClusterwiseReport};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Mean over the token (row) axis: `[n_tokens, d] -> [d]`.
pub fn pool_embeddings(tokens: &Tensor, expected_tokens: usize) -> Result<Vec<f64>> {
    if tokens.rank() != 2 || tokens.rows() != expected_tokens {
        return Err(Error::Shape {
            op: "pool_embeddings",
            left: tokens.shape.clone(),
            right: vec![expected_tokens],
        });
    }
    Ok(crate::nn::tensor::mean_rows(tokens))
}
