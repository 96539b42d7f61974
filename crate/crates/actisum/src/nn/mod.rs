//! Numerical substrate: dense tensors, a reverse-mode autodiff tape, the
//! adaptive-moment optimizer and the warmup schedule.

pub mod archive;
pub mod optim;
pub mod param;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use archive::WeightArchive;
pub use optim::{AdamConfig, OptimizerState};
pub use param::Parameter;
pub use schedule::WarmupSchedule;
pub use tape::{Tape, Var, IGNORE_INDEX};
pub use tensor::Tensor;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Normal(0, std) initialization, deterministic under the caller's rng.
pub fn normal_init(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            // Box-Muller keeps us independent of distribution-crate stream details.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
        })
        .collect();
    Tensor { shape, data }
}
