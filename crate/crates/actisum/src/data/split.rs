//! Deterministic train/val/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{PairRecord, Split};
use crate::error::{Error, Result};

/// Sizes for an `n`-record dataset under the given fractions: boundaries are
/// placed at `floor(f_train·n)` and `floor((f_train+f_val)·n)`, so rounding
/// slack accrues to the outer splits and an 80/10/10 split of 7,769 records
/// yields 6,215/777/777.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (ft, fv, fe) = fractions;
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "split fractions must sum to 1, got {}",
            ft + fv + fe
        )));
    }
    if ft < 0.0 || fv < 0.0 || fe < 0.0 {
        return Err(Error::validation("split fractions must be non-negative"));
    }
    if n < 3 {
        return Err(Error::validation(format!(
            "need at least 3 records to split, got {n}"
        )));
    }
    let train_end = (ft * n as f64).floor() as usize;
    let val_end = ((ft + fv) * n as f64).floor() as usize;
    Ok((train_end, val_end - train_end, n - val_end))
}

/// Tag every record with a split, shuffling deterministically by seed.
pub fn split_dataset(
    records: &mut [PairRecord],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(usize, usize, usize)> {
    let sizes = split_sizes(records.len(), fractions)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    for (rank, &idx) in order.iter().enumerate() {
        records[idx].split = if rank < sizes.0 {
            Split::Train
        } else if rank < sizes.0 + sizes.1 {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(sizes)
}
