//! Fully-connected softmax classifier with exact first and second order
//! derivatives.
//!
//! The network is `input -> [dense -> (batch norm) -> ReLU] x H -> dense -> softmax`.
//! All trainable values live in one flat [`ParamVector`] whose layout is
//! fixed by [`ModelConfig`]: every dense layer's weights (row-major,
//! `fan_out x fan_in`) followed by its biases, in layer order, then the
//! batch-norm scale and shift vectors of each hidden layer.
//!
//! Batch normalization always uses the statistics of the batch being
//! evaluated; there are no running averages, so every function here is pure.

mod engine;
pub(crate) mod scalar;

use std::ops::{Deref, DerefMut};

use rand::Rng;

use crate::error::{Error, Result};
pub use engine::{DenseSlot, Layout, NormSlot};
use scalar::Dual;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub batchnorm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 16 * 16,
            hidden_dims: vec![256, 128, 64, 64],
            num_classes: 2,
            batchnorm: true,
        }
    }
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize, batchnorm: bool) -> Result<Self> {
        let cfg = ModelConfig {
            input_dim,
            hidden_dims,
            num_classes,
            batchnorm,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidModel("input_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidModel("at least one hidden layer is required".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidModel("hidden layer widths must be positive".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidModel("num_classes must be positive".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.input_dim, &self.hidden_dims, self.num_classes, self.batchnorm)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }

    /// Canonical one-line description, used for checkpoint fingerprints.
    pub fn canonical(&self) -> String {
        let hidden: Vec<String> = self.hidden_dims.iter().map(|h| h.to_string()).collect();
        format!(
            "input_dim={};hidden=[{}];classes={};batchnorm={}",
            self.input_dim,
            hidden.join(","),
            self.num_classes,
            self.batchnorm
        )
    }
}

/// Flat vector of model parameters (or of per-coordinate learning rates).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        ParamVector(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &ParamVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += k * b;
        }
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Row-major input matrix with one class label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    cols: usize,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, cols: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dimension("batch must contain at least one row".into()));
        }
        if cols == 0 || inputs.len() != cols * labels.len() {
            return Err(Error::Dimension(format!(
                "batch has {} values for {} rows of width {}",
                inputs.len(),
                labels.len(),
                cols
            )));
        }
        Ok(Batch { inputs, cols, labels })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<usize>) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Dimension("ragged batch rows".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let inputs = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Batch::new(inputs, cols, labels)
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.inputs[r * self.cols..(r + 1) * self.cols]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

fn check(params: &[f64], config: &ModelConfig, batch: &Batch) -> Result<Layout> {
    config.validate()?;
    let layout = config.layout();
    if params.len() != layout.len {
        return Err(Error::Dimension(format!(
            "expected {} parameters, got {}",
            layout.len,
            params.len()
        )));
    }
    if batch.cols != config.input_dim {
        return Err(Error::Dimension(format!(
            "batch width {} does not match input_dim {}",
            batch.cols, config.input_dim
        )));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= config.num_classes) {
        return Err(Error::Dimension(format!(
            "label {bad} outside [0, {})",
            config.num_classes
        )));
    }
    Ok(layout)
}

/// He-style uniform initialization: weights ~ U(-b, b) with
/// `b = sqrt(6 / fan_in)`, biases 0, batch-norm scale 1 and shift 0.
pub fn init_params<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> ParamVector {
    let layout = config.layout();
    let mut p = vec![0.0; layout.len];
    for slot in &layout.dense {
        let bound = (6.0 / slot.fan_in as f64).sqrt();
        for w in &mut p[slot.weights..slot.weights + slot.fan_in * slot.fan_out] {
            *w = rng.random_range(-bound..bound);
        }
    }
    for slot in &layout.norm {
        p[slot.scale..slot.scale + slot.width].fill(1.0);
    }
    ParamVector(p)
}

/// Class probabilities, one row per example.
pub fn forward(params: &ParamVector, config: &ModelConfig, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    let layout = check(params, config, batch)?;
    let flat = engine::probabilities(&layout, params, &batch.inputs, batch.rows());
    Ok(flat.chunks(config.num_classes).map(|r| r.to_vec()).collect())
}

/// Predicted class per row; ties go to the lowest class index.
pub fn predict(params: &ParamVector, config: &ModelConfig, batch: &Batch) -> Result<Vec<usize>> {
    Ok(forward(params, config, batch)?
        .iter()
        .map(|row| argmax(row))
        .collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy with true-class probabilities clamped at 1e-15.
pub fn loss(params: &ParamVector, config: &ModelConfig, batch: &Batch) -> Result<f64> {
    let layout = check(params, config, batch)?;
    Ok(engine::loss::<f64>(&layout, params, &batch.inputs, &batch.labels))
}

pub fn loss_and_grad(params: &ParamVector, config: &ModelConfig, batch: &Batch) -> Result<(f64, ParamVector)> {
    let layout = check(params, config, batch)?;
    let (l, g) = engine::loss_and_grad::<f64>(&layout, params, &batch.inputs, &batch.labels);
    Ok((l, ParamVector(g)))
}

pub fn grad(params: &ParamVector, config: &ModelConfig, batch: &Batch) -> Result<ParamVector> {
    loss_and_grad(params, config, batch).map(|(_, g)| g)
}

/// Exact Hessian-vector product `H·v` of [`loss`], by forward-mode
/// differentiation of the reverse-mode gradient.
pub fn hvp(params: &ParamVector, config: &ModelConfig, batch: &Batch, v: &ParamVector) -> Result<ParamVector> {
    let layout = check(params, config, batch)?;
    if v.len() != params.len() {
        return Err(Error::Dimension(format!(
            "direction has {} entries, parameters {}",
            v.len(),
            params.len()
        )));
    }
    let seeded: Vec<Dual> = params.iter().zip(v.iter()).map(|(&p, &d)| Dual::new(p, d)).collect();
    let (_, g) = engine::loss_and_grad::<Dual>(&layout, &seeded, &batch.inputs, &batch.labels);
    Ok(ParamVector(g.into_iter().map(|x| x.d).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig::new(2, vec![2], 2, false).unwrap()
    }

    #[test]
    fn layout_is_canonical() {
        let cfg = ModelConfig::new(3, vec![4, 2], 2, true).unwrap();
        let l = cfg.layout();
        assert_eq!(l.dense[0], DenseSlot { fan_in: 3, fan_out: 4, weights: 0, biases: 12 });
        assert_eq!(l.dense[1], DenseSlot { fan_in: 4, fan_out: 2, weights: 16, biases: 24 });
        assert_eq!(l.dense[2], DenseSlot { fan_in: 2, fan_out: 2, weights: 26, biases: 30 });
        assert_eq!(l.norm[0], NormSlot { width: 4, scale: 32, shift: 36 });
        assert_eq!(l.norm[1], NormSlot { width: 2, scale: 40, shift: 42 });
        assert_eq!(l.len, 44);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ModelConfig::new(2, vec![], 2, false).is_err());
        assert!(ModelConfig::new(0, vec![2], 2, false).is_err());
        assert!(ModelConfig::new(2, vec![2, 0], 2, false).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = small();
        let a = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(42));
        let b = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(42));
        let c = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(43));
        assert_eq!(a, b);
        assert_ne!(a, c);
        for slot in cfg.layout().dense {
            assert!(a[slot.biases..slot.biases + slot.fan_out].iter().all(|&b| b == 0.0));
        }
        let bn = ModelConfig::new(2, vec![3], 2, true).unwrap();
        let p = init_params(&bn, &mut ChaCha8Rng::seed_from_u64(1));
        let ns = bn.layout().norm[0];
        assert!(p[ns.scale..ns.scale + 3].iter().all(|&g| g == 1.0));
        assert!(p[ns.shift..ns.shift + 3].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_params_give_uniform_predictions() {
        let cfg = ModelConfig::new(3, vec![4], 3, false).unwrap();
        let p = ParamVector::zeros(cfg.param_count());
        let batch = Batch::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]], vec![0, 2]).unwrap();
        for row in forward(&p, &cfg, &batch).unwrap() {
            for v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let two = small();
        let b2 = Batch::from_rows(&[vec![1.0, 2.0]], vec![1]).unwrap();
        let l = loss(&ParamVector::zeros(two.param_count()), &two, &b2).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_single_unit_network() {
        // 1 input -> 1 hidden ReLU unit -> 2 logits
        let cfg = ModelConfig::new(1, vec![1], 2, false).unwrap();
        // w1, b1, w2 (2x1), b2 (2)
        let p = ParamVector::from(vec![2.0, -1.0, 1.5, -0.5, 0.25, 0.0]);
        let batch = Batch::from_rows(&[vec![3.0], vec![0.25]], vec![0, 1]).unwrap();
        let probs = forward(&p, &cfg, &batch).unwrap();
        // row 0: h = relu(2*3-1) = 5, logits (7.75, -2.5)
        let (z0, z1) = (7.75f64, -2.5f64);
        let p0 = z0.exp() / (z0.exp() + z1.exp());
        assert!((probs[0][0] - p0).abs() < 1e-15);
        // row 1: h = relu(0.5-1) = 0, logits (0.25, 0)
        let q0 = 0.25f64.exp() / (0.25f64.exp() + 1.0);
        assert!((probs[1][0] - q0).abs() < 1e-15);
        let expected = -(p0.ln() + (1.0 - q0).ln()) / 2.0;
        assert!((loss(&p, &cfg, &batch).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn confident_correct_model_has_zero_loss() {
        let cfg = ModelConfig::new(1, vec![1], 2, false).unwrap();
        let p = ParamVector::from(vec![1.0, 1.0, 1000.0, -1000.0, 0.0, 0.0]);
        let batch = Batch::from_rows(&[vec![1.0], vec![2.0]], vec![0, 0]).unwrap();
        assert_eq!(loss(&p, &cfg, &batch).unwrap(), 0.0);
    }

    #[test]
    fn clamped_rows_stay_finite() {
        let cfg = ModelConfig::new(1, vec![1], 2, false).unwrap();
        let p = ParamVector::from(vec![1.0, 1.0, 1000.0, -1000.0, 0.0, 0.0]);
        let batch = Batch::from_rows(&[vec![1.0]], vec![1]).unwrap();
        let (l, g) = loss_and_grad(&p, &cfg, &batch).unwrap();
        assert!((l + 1e-15f64.ln()).abs() < 1e-12);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let cfg = small();
        let p = ParamVector::zeros(cfg.param_count());
        let wide = Batch::from_rows(&[vec![1.0, 2.0, 3.0]], vec![0]).unwrap();
        assert!(matches!(forward(&p, &cfg, &wide), Err(Error::Dimension(_))));
        let bad_label = Batch::from_rows(&[vec![1.0, 2.0]], vec![5]).unwrap();
        assert!(loss(&p, &cfg, &bad_label).is_err());
        let short = ParamVector::zeros(3);
        let ok = Batch::from_rows(&[vec![1.0, 2.0]], vec![0]).unwrap();
        assert!(grad(&short, &cfg, &ok).is_err());
        assert!(hvp(&p, &cfg, &ok, &ParamVector::zeros(2)).is_err());
        assert!(Batch::from_rows::<Vec<f64>>(&[], vec![]).is_err());
    }

    #[test]
    fn hvp_of_zero_direction_is_zero() {
        let cfg = ModelConfig::new(3, vec![4], 2, true).unwrap();
        let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let batch = Batch::from_rows(&[vec![1.0, 0.0, 2.0], vec![-1.0, 1.0, 0.5]], vec![0, 1]).unwrap();
        let h = hvp(&p, &cfg, &batch, &ParamVector::zeros(p.len())).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_rows_leave_gradient_unchanged() {
        let cfg = ModelConfig::new(3, vec![5], 2, false).unwrap();
        let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let rows = vec![vec![0.3, -1.0, 2.0], vec![1.0, 0.5, -0.2]];
        let once = Batch::from_rows(&rows, vec![0, 1]).unwrap();
        let twice = Batch::from_rows(&[rows.clone(), rows].concat(), vec![0, 1, 0, 1]).unwrap();
        let g1 = grad(&p, &cfg, &once).unwrap();
        let g2 = grad(&p, &cfg, &twice).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
