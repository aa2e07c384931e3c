use rand::seq::SliceRandom;

use crate::error::{Result, TrustError};
use crate::seed::rng_for;

/// Seeded per-epoch shuffle of `0..n` cut into batches of exactly
/// `batch_size`; the short remainder is dropped.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(TrustError::InvalidArgument(format!(
            "batch size {batch_size} < 2 leaves no negatives"
        )));
    }
    if batch_size > n {
        return Err(TrustError::InvalidArgument(format!(
            "batch size {batch_size} exceeds dataset size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[epoch]));
    Ok(order.chunks_exact(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_last_partial_batch() {
        let batches = batch_indices(10, 4, 1, 0).unwrap();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        assert_eq!(batch_indices(50, 8, 3, 2).unwrap(), batch_indices(50, 8, 3, 2).unwrap());
    }

    #[test]
    fn epochs_reshuffle() {
        let perms: Vec<_> = (0..10).map(|e| batch_indices(40, 4, 3, e).unwrap().concat()).collect();
        for i in 0..perms.len() {
            for j in i + 1..perms.len() {
                assert_ne!(perms[i], perms[j], "epochs {i} and {j} share an order");
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(batch_indices(3, 4, 0, 0).is_err());
        assert!(batch_indices(3, 1, 0, 0).is_err());
    }
}
