use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{tag, Stream};

/// Partitions a seeded permutation of a split into consecutive batches of
/// indices into `dataset.split(split)`. The last batch may be short.
pub fn batches(
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..dataset.split_len(split)).collect();
    Stream::from_parts(seed, &[tag::BATCH, epoch]).shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Dims, SyntheticSpec};

    fn ds(n_train: usize) -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_per_split: [n_train, 1, 1],
            dims: Dims::new(1, 1, 1),
            signal_weights: [1.0, 0.0, 0.0],
            feature_noise_sigma: 0.0,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn partition_sizes() {
        let b = batches(&ds(10), Split::Train, 4, 1, 0).unwrap();
        let sizes: Vec<_> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, [4, 4, 2]);
        let mut all: Vec<_> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_per_epoch() {
        let d = ds(10);
        assert_eq!(
            batches(&d, Split::Train, 3, 9, 2).unwrap(),
            batches(&d, Split::Train, 3, 9, 2).unwrap()
        );
    }

    #[test]
    fn epochs_give_different_orders() {
        let d = ds(10);
        let perms: Vec<Vec<usize>> = (0..100)
            .map(|e| batches(&d, Split::Train, 10, 4, e).unwrap().concat())
            .collect();
        for i in 0..perms.len() {
            for j in i + 1..perms.len() {
                assert_ne!(perms[i], perms[j], "epochs {i} and {j} collide");
            }
        }
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(batches(&ds(3), Split::Train, 0, 0, 0).is_err());
    }
}
