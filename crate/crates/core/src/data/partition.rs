use rand::seq::SliceRandom;
use rand::Rng;

use crate::episodes::LabeledDataset;
use crate::error::{Error, Result};

/// Splits `count` items by `ratios` with largest-remainder rounding; ties
/// in the fractional part go to the lower index.
pub fn largest_remainder(count: usize, ratios: &[f64]) -> Vec<usize> {
    let total: f64 = ratios.iter().sum();
    let quotas: Vec<f64> = ratios.iter().map(|r| count as f64 * r / total).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(count.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Stratified, disjoint and exhaustive split of `dataset` across clients.
pub fn partition_clients<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    ratios: &[f64],
    rng: &mut R,
) -> Result<Vec<LabeledDataset>> {
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InsufficientData("client ratios must be positive".into()));
    }
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); ratios.len()];
    for (_, mut idx) in dataset.by_class() {
        idx.shuffle(rng);
        let sizes = largest_remainder(idx.len(), ratios);
        let mut start = 0;
        for (part, n) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&idx[start..start + n]);
            start += n;
        }
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(client, mut idx)| {
            if idx.is_empty() {
                return Err(Error::InsufficientData(format!("client {client} would receive no examples")));
            }
            idx.sort_unstable();
            Ok(LabeledDataset {
                examples: idx.iter().map(|&i| dataset.examples[i].clone()).collect(),
                class_names: dataset.class_names.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::Example;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn toy(classes: usize, per_class: usize) -> LabeledDataset {
        let ex = (0..classes * per_class)
            .map(|i| Example::new(i as u64, vec![i as f64], i / per_class))
            .collect();
        LabeledDataset::new(ex, (0..classes).map(|c| c.to_string()).collect()).unwrap()
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0]), vec![5, 5]);
        assert_eq!(largest_remainder(3616, &[1.0, 2.0, 3.0, 4.0]), vec![362, 723, 1085, 1446]);
        assert_eq!(largest_remainder(5, &[1.0, 1.0]), vec![3, 2]);
    }

    #[test]
    fn equal_halves() {
        let parts = partition_clients(&toy(2, 10), &[1.0, 1.0], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for p in &parts {
            assert_eq!(p.class_counts(), vec![5, 5]);
        }
    }

    #[test]
    fn empty_partition_is_an_error() {
        assert!(partition_clients(&toy(1, 2), &[1.0, 1.0, 1.0], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(partition_clients(&toy(1, 2), &[1.0, 0.0], &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_and_exhaustive(
            ratios in proptest::collection::vec(0.1f64..5.0, 1..5),
            per_class in 8usize..40,
            seed in any::<u64>(),
        ) {
            let ds = toy(3, per_class);
            let parts = partition_clients(&ds, &ratios, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assume!(parts.is_ok());
            let parts = parts.unwrap();
            let mut seen = HashSet::new();
            for p in &parts {
                for e in &p.examples {
                    prop_assert!(seen.insert(e.id));
                }
            }
            prop_assert_eq!(seen.len(), ds.len());
        }
    }
}
