//! Differential-privacy bookkeeping for the private meta-update.
//!
//! The protected record is one few-shot task: each task's meta-gradient is
//! clipped to norm `C`, so the clipped sum over a batch moves by at most `C`
//! when one task is added or removed, and Gaussian noise with standard
//! deviation `sigma * C` is added to that sum.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for PrivacyBudget {
    fn default() -> Self {
        PrivacyBudget {
            epsilon: 1.0,
            delta: 1e-3,
        }
    }
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let b = PrivacyBudget { epsilon, delta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Privacy(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Privacy(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Base of the logarithm in the calibration bound.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum LogBase {
    #[default]
    Natural,
    Base(f64),
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Base(b) => x.log(b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationInputs {
    /// Fraction of records used per step, `L / N`.
    pub sampling_probability: f64,
    /// Number of noisy steps.
    pub steps: u64,
    pub c2: f64,
    pub log_base: LogBase,
}

impl CalibrationInputs {
    pub fn new(sampling_probability: f64, steps: u64, c2: f64) -> Result<Self> {
        let c = CalibrationInputs {
            sampling_probability,
            steps,
            c2,
            log_base: LogBase::Natural,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sampling_probability;
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Privacy(format!("sampling probability must lie in (0, 1], got {s}")));
        }
        if self.steps == 0 {
            return Err(Error::Privacy("number of steps must be at least 1".into()));
        }
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::Privacy(format!("c2 must be positive, got {}", self.c2)));
        }
        if let LogBase::Base(b) = self.log_base {
            if !(b > 0.0 && b != 1.0) {
                return Err(Error::Privacy(format!("invalid logarithm base {b}")));
            }
        }
        Ok(())
    }
}

/// Smallest noise multiplier allowed by the moments-accountant style bound
/// `sigma >= c2 * s * sqrt(T * log(1/delta)) / epsilon`, returned with equality.
pub fn calibrate_sigma(budget: &PrivacyBudget, inputs: &CalibrationInputs) -> Result<f64> {
    budget.validate()?;
    inputs.validate()?;
    let t = inputs.steps as f64;
    let log_term = inputs.log_base.log(1.0 / budget.delta);
    Ok(inputs.c2 * inputs.sampling_probability * (t * log_term).sqrt() / budget.epsilon)
}

/// Lower bound on `delta` for which Gaussian noise of multiplier `sigma`
/// gives `(epsilon, delta)`-DP: `0.8 * exp(-sigma^2 epsilon^2 / 2)`.
/// Only meaningful for `0 < epsilon < 1`.
pub fn min_delta_for(sigma: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Privacy(format!(
            "the Gaussian mechanism bound holds only for 0 < epsilon < 1, got {epsilon}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Privacy(format!("sigma must be positive, got {sigma}")));
    }
    Ok(0.8 * (-(sigma * sigma) * (epsilon * epsilon) / 2.0).exp())
}

/// I.i.d. `N(0, stddev^2)` samples.
pub fn gaussian_noise<R: Rng + ?Sized>(dim: usize, stddev: f64, rng: &mut R) -> Vec<f64> {
    if stddev == 0.0 {
        return vec![0.0; dim];
    }
    (0..dim)
        .map(|_| stddev * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// L2 sensitivity of a sum of per-record gradients clipped to norm `clip_bound`.
pub fn global_sensitivity(clip_bound: f64) -> Result<f64> {
    if !(clip_bound > 0.0) {
        return Err(Error::Privacy(format!("clip bound must be positive, got {clip_bound}")));
    }
    Ok(clip_bound)
}
