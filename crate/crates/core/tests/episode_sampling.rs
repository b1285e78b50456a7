use std::collections::HashSet;

use fedmeta::episodes::{sample_episode, sample_episodes, split_train_test, EpisodeSpec, Example, LabeledDataset};
use fedmeta::rng::SimRng;
use proptest::prelude::*;
use rand::SeedableRng;

fn toy(classes: usize, per_class: usize) -> LabeledDataset {
    let examples = (0..classes * per_class)
        .map(|i| Example::new(i as u64, vec![(i % classes) as f64, i as f64], i % classes))
        .collect();
    LabeledDataset::new(examples, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
}

#[test]
fn classes_are_drawn_uniformly() {
    let ds = toy(4, 12);
    let spec = EpisodeSpec::new(2, 1, 1).unwrap();
    let n = 10_000;
    let mut rng = SimRng::seed_from_u64(3);
    let mut counts = [0usize; 4];
    let mut picks = vec![0usize; ds.len()];
    for _ in 0..n {
        let ep = sample_episode(&ds, &spec, &mut rng).unwrap();
        for &c in &ep.class_map {
            counts[c] += 1;
        }
        for id in ep.support_ids.iter().chain(&ep.query_ids) {
            picks[*id as usize] += 1;
        }
    }
    // each class appears in half of the 2-way episodes
    let p = 0.5;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for (c, &k) in counts.iter().enumerate() {
        let f = k as f64 / n as f64;
        assert!((f - p).abs() <= 3.0 * se, "class {c}: frequency {f}");
    }
    // within a selected class, each of the 12 examples is used 2/12 of the time
    let q = 2.0 / 12.0;
    for (id, &k) in picks.iter().enumerate() {
        let trials = counts[id % 4] as f64;
        let f = k as f64 / trials;
        let se = (q * (1.0 - q) / trials).sqrt();
        assert!((f - q).abs() <= 4.0 * se, "example {id}: frequency {f}");
    }
}

#[test]
fn support_and_query_are_disjoint_and_balanced() {
    let ds = toy(5, 9);
    let spec = EpisodeSpec::new(3, 4, 5).unwrap();
    let mut rng = SimRng::seed_from_u64(4);
    for ep in sample_episodes(&ds, &spec, 200, &mut rng).unwrap() {
        let s: HashSet<u64> = ep.support_ids.iter().copied().collect();
        assert!(ep.query_ids.iter().all(|id| !s.contains(id)));
        assert_eq!(ep.support.rows(), 12);
        assert_eq!(ep.query.rows(), 15);
        for e in 0..3 {
            assert_eq!(ep.support.labels().iter().filter(|&&l| l == e).count(), 4);
            assert_eq!(ep.query.labels().iter().filter(|&&l| l == e).count(), 5);
        }
        // episode labels map back to the dataset classes of the rows
        for (r, &l) in ep.query.labels().iter().enumerate() {
            assert_eq!(ep.query.row(r)[0] as usize, ep.class_map[l]);
        }
    }
}

#[test]
fn too_few_examples_is_an_error() {
    let ds = toy(3, 4);
    assert!(sample_episode(&ds, &EpisodeSpec::new(2, 3, 2).unwrap(), &mut SimRng::seed_from_u64(0)).is_err());
    assert!(sample_episode(&ds, &EpisodeSpec::new(4, 1, 1).unwrap(), &mut SimRng::seed_from_u64(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_a_stratified_partition(classes in 2usize..6, per_class in 2usize..30, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = toy(classes, per_class);
        let (train, test) = split_train_test(&ds, ratio, &mut SimRng::seed_from_u64(seed)).unwrap();
        let a: HashSet<u64> = train.examples.iter().map(|e| e.id).collect();
        let b: HashSet<u64> = test.examples.iter().map(|e| e.id).collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), ds.len());
        for c in 0..classes {
            let n = train.examples.iter().filter(|e| e.label == c).count();
            prop_assert!(n >= 1 && n < per_class);
        }
    }

    #[test]
    fn same_seed_same_episodes(seed in any::<u64>()) {
        let ds = toy(4, 6);
        let spec = EpisodeSpec::new(2, 2, 2).unwrap();
        let a = sample_episodes(&ds, &spec, 5, &mut SimRng::seed_from_u64(seed)).unwrap();
        let b = sample_episodes(&ds, &spec, 5, &mut SimRng::seed_from_u64(seed)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.support_ids, &y.support_ids);
            prop_assert_eq!(&x.query_ids, &y.query_ids);
            prop_assert_eq!(&x.class_map, &y.class_map);
        }
    }
}
