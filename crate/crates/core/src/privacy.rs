//! The Gaussian mechanism applied to clipped mini-batch gradients.

use crate::numerics::{gaussian_vector, GradientVector, RandomStream};
use crate::{Error, Result};

/// Per-step `(ε, δ)` budget, both strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let inside = |v: f64| v > 0.0 && v < 1.0;
        if !inside(epsilon) {
            return Err(Error::param(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !inside(delta) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Sensitivity bound and noise scale for one `(budget, G_max, b)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    pub g_max: f64,
    pub batch_size: usize,
    /// ℓ2 sensitivity of the batch-gradient map, `2 G_max / b`.
    pub sensitivity: f64,
    /// Per-coordinate noise standard deviation.
    pub noise_std: f64,
}

/// `s = 2 G_max √(2 ln(1.25/δ)) / (b ε)` with the natural logarithm.
pub fn calibrate(budget: &PrivacyBudget, g_max: f64, b: usize) -> Result<NoiseCalibration> {
    if !(g_max.is_finite() && g_max > 0.0) {
        return Err(Error::param(format!("G_max must be positive and finite, got {g_max}")));
    }
    if b == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    let bf = b as f64;
    let sensitivity = 2.0 * g_max / bf;
    let noise_std = 2.0 * g_max * (2.0 * (1.25 / budget.delta).ln()).sqrt() / (bf * budget.epsilon);
    Ok(NoiseCalibration {
        g_max,
        batch_size: b,
        sensitivity,
        noise_std,
    })
}

/// Adds isotropic Gaussian noise of standard deviation `cal.noise_std`.
pub fn sanitize(g: &GradientVector, cal: &NoiseCalibration, stream: &mut RandomStream) -> Result<GradientVector> {
    let noise = gaussian_vector(stream, g.len(), cal.noise_std)?;
    Ok(g.add(&noise))
}

/// Classical sequential composition: `(T ε, T δ)`.
pub fn compose(per_step: &PrivacyBudget, steps: u64) -> Result<(f64, f64)> {
    if steps == 0 {
        return Err(Error::param("composition over zero steps"));
    }
    let t = steps as f64;
    Ok((t * per_step.epsilon, t * per_step.delta))
}
