//! Labeled datasets and N-way K-shot episode construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Batch;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Identity of the underlying record, unique within a source dataset.
    pub id: u64,
    pub input: Arc<[f64]>,
    pub label: usize,
    pub tags: Vec<String>,
}

impl Example {
    pub fn new(id: u64, input: Vec<f64>, label: usize) -> Self {
        Example {
            id,
            input: input.into(),
            label,
            tags: Vec::new(),
        }
    }

    pub fn with_tags(mut self, tags: Vec<String>) -> Self {
        self.tags = tags;
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    /// Human-readable name of each label index.
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(examples: Vec<Example>, class_names: Vec<String>) -> Result<Self> {
        let ds = LabeledDataset { examples, class_names };
        ds.validate()?;
        Ok(ds)
    }

    /// Every label is below `class_names.len()` and inputs share one width.
    pub fn validate(&self) -> Result<()> {
        let n = self.class_names.len();
        if let Some(e) = self.examples.iter().find(|e| e.label >= n) {
            return Err(Error::InsufficientData(format!(
                "example {} has label {} but only {n} classes are named",
                e.id, e.label
            )));
        }
        if let Some(first) = self.examples.first() {
            let w = first.input.len();
            if self.examples.iter().any(|e| e.input.len() != w) {
                return Err(Error::Dimension("examples have differing input widths".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.input.len())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Example indices grouped by label, in dataset order.
    pub fn by_class(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.examples.iter().enumerate() {
            map.entry(e.label).or_default().push(i);
        }
        map
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Examples passing `keep`, with labels compacted to the classes that
    /// remain (in original label order).
    pub fn filter<F: Fn(&Example) -> bool>(&self, keep: F) -> LabeledDataset {
        let kept: Vec<&Example> = self.examples.iter().filter(|e| keep(e)).collect();
        let mut present = vec![false; self.class_names.len()];
        for e in &kept {
            present[e.label] = true;
        }
        let mut remap = vec![usize::MAX; self.class_names.len()];
        let mut names = Vec::new();
        for (old, &p) in present.iter().enumerate() {
            if p {
                remap[old] = names.len();
                names.push(self.class_names[old].clone());
            }
        }
        let examples = kept
            .into_iter()
            .map(|e| Example {
                label: remap[e.label],
                ..e.clone()
            })
            .collect();
        LabeledDataset {
            examples,
            class_names: names,
        }
    }

    pub fn with_tag(&self, tag: &str) -> LabeledDataset {
        self.filter(|e| e.has_tag(tag))
    }

    pub fn with_classes(&self, names: &[&str]) -> LabeledDataset {
        self.filter(|e| names.contains(&self.class_names[e.label].as_str()))
    }

    fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec {
            n_way: 2,
            k_shot: 5,
            q_query: 5,
        }
    }
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, q_query: usize) -> Result<Self> {
        let spec = EpisodeSpec { n_way, k_shot, q_query };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 {
            return Err(Error::InvalidEpisode(format!("n_way must be >= 2, got {}", self.n_way)));
        }
        if self.k_shot == 0 || self.q_query == 0 {
            return Err(Error::InvalidEpisode("k_shot and q_query must be positive".into()));
        }
        Ok(())
    }

    pub fn per_class(&self) -> usize {
        self.k_shot + self.q_query
    }

    pub fn examples_per_episode(&self) -> usize {
        self.n_way * self.per_class()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub support: Batch,
    pub query: Batch,
    /// `class_map[e]` is the dataset label behind episode label `e`.
    pub class_map: Vec<usize>,
    pub support_ids: Vec<u64>,
    pub query_ids: Vec<u64>,
}

impl Episode {
    pub fn episode_label_of(&self, dataset_label: usize) -> Option<usize> {
        self.class_map.iter().position(|&c| c == dataset_label)
    }
}

/// Per-class stratified split. Each class contributes
/// `round(ratio * count)` examples to the first part, clamped so that both
/// parts receive at least one.
pub fn split_train_test<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    ratio: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidEpisode(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in dataset.by_class() {
        let count = idx.len();
        if count < 2 {
            return Err(Error::InsufficientData(format!(
                "class {} ({}) has {count} example(s); splitting needs 2",
                label, dataset.class_names[label]
            )));
        }
        idx.shuffle(rng);
        let n_train = ((ratio * count as f64).round() as usize).clamp(1, count - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Samples one task: `n_way` classes uniformly without replacement, then
/// `k_shot + q_query` examples per class, the first `k_shot` of which form
/// the support set. Episode label `e` is the `e`-th sampled class.
pub fn sample_episode<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    spec: &EpisodeSpec,
    rng: &mut R,
) -> Result<Episode> {
    spec.validate()?;
    let groups = dataset.by_class();
    let eligible: Vec<(&usize, &Vec<usize>)> = groups
        .iter()
        .filter(|(_, idx)| idx.len() >= spec.per_class())
        .collect();
    if eligible.len() < spec.n_way {
        return Err(Error::InsufficientData(format!(
            "{} class(es) have at least {} examples; {}-way episodes need {}",
            eligible.len(),
            spec.per_class(),
            spec.n_way,
            spec.n_way
        )));
    }
    let cols = dataset.input_dim().unwrap_or(0);
    let chosen = index::sample(rng, eligible.len(), spec.n_way);
    let mut class_map = Vec::with_capacity(spec.n_way);
    let mut s_in = Vec::with_capacity(spec.n_way * spec.k_shot * cols);
    let mut q_in = Vec::with_capacity(spec.n_way * spec.q_query * cols);
    let (mut s_lab, mut q_lab) = (Vec::new(), Vec::new());
    let (mut s_ids, mut q_ids) = (Vec::new(), Vec::new());
    for (ep_label, c) in chosen.iter().enumerate() {
        let (&label, members) = eligible[c];
        class_map.push(label);
        let picks = index::sample(rng, members.len(), spec.per_class());
        for (j, p) in picks.iter().enumerate() {
            let ex = &dataset.examples[members[p]];
            if j < spec.k_shot {
                s_in.extend_from_slice(&ex.input);
                s_lab.push(ep_label);
                s_ids.push(ex.id);
            } else {
                q_in.extend_from_slice(&ex.input);
                q_lab.push(ep_label);
                q_ids.push(ex.id);
            }
        }
    }
    Ok(Episode {
        support: Batch::new(s_in, cols, s_lab)?,
        query: Batch::new(q_in, cols, q_lab)?,
        class_map,
        support_ids: s_ids,
        query_ids: q_ids,
    })
}

pub fn sample_episodes<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    spec: &EpisodeSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Episode>> {
    (0..count).map(|_| sample_episode(dataset, spec, rng)).collect()
}
