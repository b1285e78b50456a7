//! Meta-SGD, its differentially private variant, and a MAML baseline.
//!
//! The inner update is `theta' = theta - alpha ∘ grad L_support(theta)`.
//! Meta-gradients are exact: the adjoint of the query-loss gradient is
//! propagated back through every inner step with Hessian-vector products,
//! `v <- v - H(theta_k) (alpha ∘ v)`, while `alpha` collects
//! `-grad L_support(theta_k) ∘ v`.

use rand::Rng;
use rayon::prelude::*;

use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::nn::{self, Batch, ModelConfig, ParamVector};
use crate::privacy::gaussian_noise;

/// Differentiable objective the learners operate on.
pub trait Objective: Sync {
    fn loss_and_grad(&self, params: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)>;

    fn hvp(&self, params: &ParamVector, batch: &Batch, v: &ParamVector) -> Result<ParamVector>;

    /// Predicted class per row of `batch`.
    fn predict(&self, params: &ParamVector, batch: &Batch) -> Result<Vec<usize>>;

    fn grad(&self, params: &ParamVector, batch: &Batch) -> Result<ParamVector> {
        self.loss_and_grad(params, batch).map(|(_, g)| g)
    }

    fn loss(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        self.loss_and_grad(params, batch).map(|(l, _)| l)
    }
}

impl Objective for ModelConfig {
    fn loss_and_grad(&self, params: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
        nn::loss_and_grad(params, self, batch)
    }

    fn hvp(&self, params: &ParamVector, batch: &Batch, v: &ParamVector) -> Result<ParamVector> {
        nn::hvp(params, self, batch, v)
    }

    fn predict(&self, params: &ParamVector, batch: &Batch) -> Result<Vec<usize>> {
        nn::predict(params, self, batch)
    }

    fn loss(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        nn::loss(params, self, batch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaParams {
    pub theta: ParamVector,
    /// Per-coordinate inner learning rates.
    pub alpha: ParamVector,
}

impl MetaParams {
    pub fn new(theta: ParamVector, alpha: ParamVector) -> Result<Self> {
        let m = MetaParams { theta, alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.alpha.len() {
            return Err(Error::Dimension(format!(
                "theta has {} entries, alpha {}",
                self.theta.len(),
                self.alpha.len()
            )));
        }
        if !self.theta.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidMeta("meta-parameters must be finite".into()));
        }
        Ok(())
    }

    /// Network initialization plus `alpha ~ U[lo, hi]` per coordinate.
    pub fn init<R: Rng + ?Sized>(model: &ModelConfig, alpha_range: (f64, f64), rng: &mut R) -> Self {
        let theta = nn::init_params(model, rng);
        let (lo, hi) = alpha_range;
        let alpha = (0..theta.len())
            .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect::<Vec<_>>();
        MetaParams {
            theta,
            alpha: alpha.into(),
        }
    }

    /// Network initialization with a single shared inner rate, as used by MAML.
    pub fn init_scalar_rate<R: Rng + ?Sized>(model: &ModelConfig, rate: f64, rng: &mut R) -> Self {
        let theta = nn::init_params(model, rng);
        let alpha = ParamVector::filled(theta.len(), rate);
        MetaParams { theta, alpha }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClipBound {
    Finite(f64),
    Unbounded,
}

impl ClipBound {
    pub fn value(self) -> f64 {
        match self {
            ClipBound::Finite(c) => c,
            ClipBound::Unbounded => f64::INFINITY,
        }
    }
}

/// Where the Gaussian noise enters the averaged clipped gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseConvention {
    /// `(1/B)(sum g + N(0, sigma^2 C^2 I))`
    #[default]
    StandardDpsgd,
    /// `(1/B) sum g + N(0, sigma^2 C^2 I)`
    NoiseAfterMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    /// Outer step size.
    pub beta: f64,
    pub inner_steps: usize,
    pub clip_bound: ClipBound,
    /// Noise multiplier; the noise standard deviation is `noise_scale * C`.
    pub noise_scale: f64,
    pub tasks_per_batch: usize,
    pub noise_convention: NoiseConvention,
    /// Shared inner rate for the MAML baseline.
    pub maml_inner_lr: f64,
    pub alpha_init: (f64, f64),
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            beta: 0.05,
            inner_steps: 1,
            clip_bound: ClipBound::Finite(1.0),
            noise_scale: 0.0,
            tasks_per_batch: 32,
            noise_convention: NoiseConvention::StandardDpsgd,
            maml_inner_lr: 0.05,
            alpha_init: (0.005, 0.1),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidMeta(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.inner_steps == 0 {
            return Err(Error::InvalidMeta("inner_steps must be at least 1".into()));
        }
        if let ClipBound::Finite(c) = self.clip_bound {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidMeta(format!("clip bound must be positive, got {c}")));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidMeta(format!(
                "noise scale must be non-negative, got {}",
                self.noise_scale
            )));
        }
        if self.noise_scale > 0.0 && self.clip_bound == ClipBound::Unbounded {
            return Err(Error::InvalidMeta("noise requires a finite clip bound".into()));
        }
        if self.tasks_per_batch == 0 {
            return Err(Error::InvalidMeta("tasks_per_batch must be at least 1".into()));
        }
        let (lo, hi) = self.alpha_init;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidMeta(format!("invalid alpha range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaGradient {
    pub d_theta: ParamVector,
    pub d_alpha: ParamVector,
}

impl MetaGradient {
    pub fn zeros(len: usize) -> Self {
        MetaGradient {
            d_theta: ParamVector::zeros(len),
            d_alpha: ParamVector::zeros(len),
        }
    }

    /// L2 norm of the concatenation `(d_theta, d_alpha)`.
    pub fn norm(&self) -> f64 {
        self.d_theta
            .iter()
            .chain(self.d_alpha.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Adapted parameters after `inner_steps` updates on `support`.
pub fn inner_adapt<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    support: &Batch,
    config: &MetaConfig,
) -> Result<ParamVector> {
    let mut theta = meta.theta.clone();
    for _ in 0..config.inner_steps {
        let g = model.grad(&theta, support)?;
        theta = step_inner(&theta, &meta.alpha, &g);
    }
    Ok(theta)
}

fn step_inner(theta: &ParamVector, alpha: &ParamVector, g: &ParamVector) -> ParamVector {
    theta
        .iter()
        .zip(alpha.iter())
        .zip(g.iter())
        .map(|((t, a), g)| t - a * g)
        .collect::<Vec<_>>()
        .into()
}

/// Exact gradient of the post-adaptation query loss with respect to
/// `(theta, alpha)`, together with that query loss.
pub fn meta_gradient_and_loss<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episode: &Episode,
    config: &MetaConfig,
) -> Result<(MetaGradient, f64)> {
    meta.validate()?;
    let steps = config.inner_steps.max(1);
    let mut iterates = Vec::with_capacity(steps);
    let mut support_grads = Vec::with_capacity(steps);
    let mut theta = meta.theta.clone();
    for _ in 0..steps {
        let g = model.grad(&theta, &episode.support)?;
        let next = step_inner(&theta, &meta.alpha, &g);
        iterates.push(std::mem::replace(&mut theta, next));
        support_grads.push(g);
    }
    let (query_loss, mut adjoint) = model.loss_and_grad(&theta, &episode.query)?;

    let mut d_alpha = ParamVector::zeros(meta.len());
    for (theta_k, g_k) in iterates.iter().zip(&support_grads).rev() {
        for ((da, g), v) in d_alpha.iter_mut().zip(g_k.iter()).zip(adjoint.iter()) {
            *da -= g * v;
        }
        let hv = model.hvp(theta_k, &episode.support, &meta.alpha.hadamard(&adjoint))?;
        adjoint.axpy(-1.0, &hv);
    }
    Ok((
        MetaGradient {
            d_theta: adjoint,
            d_alpha,
        },
        query_loss,
    ))
}

pub fn meta_gradient<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episode: &Episode,
    config: &MetaConfig,
) -> Result<MetaGradient> {
    meta_gradient_and_loss(model, meta, episode, config).map(|(g, _)| g)
}

/// Rescales `g` by `1 / max(1, |g|_2 / C)`, treating `(d_theta, d_alpha)`
/// as one vector. Gradients already inside the ball are returned as is.
pub fn clip_gradient(g: &MetaGradient, clip_bound: f64) -> MetaGradient {
    let mut factor = (g.norm() / clip_bound).max(1.0);
    if factor == 1.0 {
        return g.clone();
    }
    let scale = |factor: f64| {
        let div = |v: &ParamVector| -> ParamVector { v.iter().map(|x| x / factor).collect::<Vec<_>>().into() };
        MetaGradient {
            d_theta: div(&g.d_theta),
            d_alpha: div(&g.d_alpha),
        }
    };
    // rounding can leave the result a few ulps outside the ball
    loop {
        let out = scale(factor);
        if out.norm() <= clip_bound {
            return out;
        }
        factor = factor.next_up();
    }
}

/// Which outer update a client runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Learner {
    Maml,
    MetaSgd,
    MetaDpsgd,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Maml => "maml",
            Learner::MetaSgd => "metasgd",
            Learner::MetaDpsgd => "metadpsgd",
        }
    }

    pub fn parse(s: &str) -> Option<Learner> {
        match s {
            "maml" => Some(Learner::Maml),
            "metasgd" => Some(Learner::MetaSgd),
            "metadpsgd" => Some(Learner::MetaDpsgd),
            _ => None,
        }
    }

    /// One outer update; also returns the mean post-adaptation query loss
    /// of the batch.
    pub fn step<O: Objective + ?Sized, R: Rng + ?Sized>(
        self,
        model: &O,
        meta: &MetaParams,
        episodes: &[Episode],
        config: &MetaConfig,
        rng: &mut R,
    ) -> Result<(MetaParams, f64)> {
        match self {
            Learner::Maml => maml_step_with_loss(model, meta, episodes, config),
            Learner::MetaSgd => metasgd_step_with_loss(model, meta, episodes, config),
            Learner::MetaDpsgd => metadpsgd_step_with_loss(model, meta, episodes, config, rng),
        }
    }

    pub fn init_meta<R: Rng + ?Sized>(self, model: &ModelConfig, config: &MetaConfig, rng: &mut R) -> MetaParams {
        match self {
            Learner::Maml => MetaParams::init_scalar_rate(model, config.maml_inner_lr, rng),
            _ => MetaParams::init(model, config.alpha_init, rng),
        }
    }
}

/// Per-episode meta-gradients, computed in parallel and returned in episode order.
fn episode_gradients<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
) -> Result<Vec<(MetaGradient, f64)>> {
    if episodes.is_empty() {
        return Err(Error::InvalidMeta("a meta-batch needs at least one episode".into()));
    }
    config.validate()?;
    episodes
        .par_iter()
        .map(|ep| meta_gradient_and_loss(model, meta, ep, config))
        .collect()
}

/// Sums in episode order.
fn sum_gradients<'a, I: Iterator<Item = &'a MetaGradient>>(len: usize, grads: I) -> MetaGradient {
    let mut acc = MetaGradient::zeros(len);
    for g in grads {
        acc.d_theta.axpy(1.0, &g.d_theta);
        acc.d_alpha.axpy(1.0, &g.d_alpha);
    }
    acc
}

fn divide(g: &mut MetaGradient, by: f64) {
    for v in g.d_theta.iter_mut().chain(g.d_alpha.iter_mut()) {
        *v /= by;
    }
}

fn mean_loss(grads: &[(MetaGradient, f64)]) -> f64 {
    grads.iter().map(|(_, l)| l).sum::<f64>() / grads.len() as f64
}

fn descend(meta: &MetaParams, dir: &MetaGradient, beta: f64, update_alpha: bool) -> MetaParams {
    let mut next = meta.clone();
    next.theta.axpy(-beta, &dir.d_theta);
    if update_alpha {
        next.alpha.axpy(-beta, &dir.d_alpha);
    }
    next
}

fn metasgd_step_with_loss<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
) -> Result<(MetaParams, f64)> {
    let grads = episode_gradients(model, meta, episodes, config)?;
    let mut dir = sum_gradients(meta.len(), grads.iter().map(|(g, _)| g));
    divide(&mut dir, grads.len() as f64);
    Ok((descend(meta, &dir, config.beta, true), mean_loss(&grads)))
}

/// Plain Meta-SGD: mean meta-gradient over the episodes, one step of size beta.
pub fn metasgd_step<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
) -> Result<MetaParams> {
    metasgd_step_with_loss(model, meta, episodes, config).map(|(m, _)| m)
}

fn metadpsgd_step_with_loss<O: Objective + ?Sized, R: Rng + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
    rng: &mut R,
) -> Result<(MetaParams, f64)> {
    let grads = episode_gradients(model, meta, episodes, config)?;
    let c = config.clip_bound.value();
    let clipped: Vec<MetaGradient> = grads.iter().map(|(g, _)| clip_gradient(g, c)).collect();
    let batch = grads.len() as f64;
    let mut dir = sum_gradients(meta.len(), clipped.iter());
    let noise = if config.noise_scale > 0.0 {
        Some(gaussian_noise(2 * meta.len(), config.noise_scale * c, rng))
    } else {
        None
    };
    let add_noise = |dir: &mut MetaGradient, noise: &[f64]| {
        for (v, n) in dir.d_theta.iter_mut().chain(dir.d_alpha.iter_mut()).zip(noise) {
            *v += n;
        }
    };
    match (config.noise_convention, noise) {
        (_, None) => divide(&mut dir, batch),
        (NoiseConvention::StandardDpsgd, Some(n)) => {
            add_noise(&mut dir, &n);
            divide(&mut dir, batch);
        }
        (NoiseConvention::NoiseAfterMean, Some(n)) => {
            divide(&mut dir, batch);
            add_noise(&mut dir, &n);
        }
    }
    Ok((descend(meta, &dir, config.beta, true), mean_loss(&grads)))
}

/// Private Meta-SGD: per-episode clipping to `C`, Gaussian noise of
/// standard deviation `sigma * C`, then one step of size beta.
pub fn metadpsgd_step<O: Objective + ?Sized, R: Rng + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
    rng: &mut R,
) -> Result<MetaParams> {
    metadpsgd_step_with_loss(model, meta, episodes, config, rng).map(|(m, _)| m)
}

fn maml_step_with_loss<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
) -> Result<(MetaParams, f64)> {
    let grads = episode_gradients(model, meta, episodes, config)?;
    let mut dir = sum_gradients(meta.len(), grads.iter().map(|(g, _)| g));
    divide(&mut dir, grads.len() as f64);
    Ok((descend(meta, &dir, config.beta, false), mean_loss(&grads)))
}

/// MAML: like [`metasgd_step`] but `alpha` is held fixed (normally a
/// broadcast scalar rate) and only `theta` moves.
pub fn maml_step<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
) -> Result<MetaParams> {
    maml_step_with_loss(model, meta, episodes, config).map(|(m, _)| m)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodePredictions {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

impl EpisodePredictions {
    pub fn accuracy(&self) -> f64 {
        let hits = self
            .predictions
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / self.labels.len().max(1) as f64
    }
}

/// Adapts on each support set and predicts the matching query set.
pub fn evaluate<O: Objective + ?Sized>(
    model: &O,
    meta: &MetaParams,
    episodes: &[Episode],
    config: &MetaConfig,
) -> Result<Vec<EpisodePredictions>> {
    episodes
        .par_iter()
        .map(|ep| {
            let adapted = inner_adapt(model, meta, &ep.support, config)?;
            Ok(EpisodePredictions {
                predictions: model.predict(&adapted, &ep.query)?,
                labels: ep.query.labels().to_vec(),
            })
        })
        .collect()
}
