//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls the crate's derivative code.
#![allow(dead_code)]

use fedmeta::episodes::Episode;
use fedmeta::nn::{self, Batch, ModelConfig, ParamVector};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Max absolute difference relative to the largest magnitude of the reference.
pub fn rel_err(actual: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(actual.len(), reference.len());
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    actual
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Central differences of a scalar function.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Dense Hessian, column by column, from central differences of a gradient.
pub fn fd_hessian<G: Fn(&[f64]) -> Vec<f64>>(grad: G, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut p = x.to_vec();
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let orig = p[j];
        p[j] = orig + h;
        let up = grad(&p);
        p[j] = orig - h;
        let down = grad(&p);
        p[j] = orig;
        cols.push(up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect::<Vec<f64>>());
    }
    // cols[j][i] = H[i][j]
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Loss of the network, evaluated through the public forward pass with an
/// independently written cross-entropy.
pub fn oracle_loss(params: &[f64], config: &ModelConfig, batch: &Batch) -> f64 {
    let probs = nn::forward(&ParamVector::from(params.to_vec()), config, batch).unwrap();
    let n = batch.rows() as f64;
    probs
        .iter()
        .zip(batch.labels())
        .map(|(row, &y)| -row[y].max(1e-15).ln())
        .sum::<f64>()
        / n
}

pub fn random_batch<R: Rng>(rng: &mut R, rows: usize, cols: usize, classes: usize) -> Batch {
    let inputs = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
    let labels = (0..rows).map(|r| (r + rng.random_range(0..classes)) % classes).collect();
    Batch::new(inputs, cols, labels).unwrap()
}

pub fn random_params<R: Rng>(rng: &mut R, config: &ModelConfig) -> ParamVector {
    let mut p = nn::init_params(config, rng);
    // perturb biases and batch-norm affine terms away from their defaults
    for v in p.iter_mut() {
        *v += rng.random_range(-0.2..0.2);
    }
    p
}

pub fn random_episode<R: Rng>(rng: &mut R, cols: usize, classes: usize, per_class: usize) -> Episode {
    let make = |rng: &mut R| {
        let rows = classes * per_class;
        let inputs = (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect();
        let labels = (0..rows).map(|r| r % classes).collect();
        Batch::new(inputs, cols, labels).unwrap()
    };
    let support = make(rng);
    let query = make(rng);
    Episode {
        support,
        query,
        class_map: (0..classes).collect(),
        support_ids: (0..(classes * per_class) as u64).collect(),
        query_ids: ((classes * per_class) as u64..(2 * classes * per_class) as u64).collect(),
    }
}
