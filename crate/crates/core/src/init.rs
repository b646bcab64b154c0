//! Parameter-initialization policies for dense layers.
//!
//! Two families: variance scaling (`m/fan`, with `m = 2` for ReLU stacks,
//! in fan-in or fan-out mode) and a maximum-entropy head init that draws
//! weights from `N(0, γ²λ²/C²)` so the initial estimates are near-uniform,
//! the initial loss is `ln C`, and almost no error energy crosses the head
//! boundary. Biases are zero under every policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Layer, LayerKind};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Gain for ReLU networks in variance-scaling inits.
pub const RELU_GAIN: f64 = 2.0;

/// Initialization strategy for a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    /// `N(0, m/fan_in)`.
    HeFanIn { m: f64 },
    /// `N(0, m/fan_out)`; preserves the variance of the back-propagated
    /// error, and is the default baseline here.
    HeFanOut { m: f64 },
    /// Maximum-entropy head init `N(0, γ²λ²/C²)`.
    Mei {
        gamma: f64,
        lambda: f64,
        classes: usize,
    },
    Zeros,
}

impl InitSpec {
    pub fn he_fan_out() -> Self {
        InitSpec::HeFanOut { m: RELU_GAIN }
    }

    pub fn he_fan_in() -> Self {
        InitSpec::HeFanIn { m: RELU_GAIN }
    }

    /// MEI spec with λ chosen so the weight energy equals `phi_w` at the
    /// given learning rate and class count.
    pub fn mei_from_phi_w(gamma: f64, phi_w: f64, classes: usize) -> Result<Self> {
        if gamma <= 0.0 || phi_w <= 0.0 {
            return Err(Error::arg(format!(
                "mei_from_phi_w: gamma {gamma} and phi_w {phi_w} must be positive"
            )));
        }
        let lambda = phi_w.sqrt() * classes as f64 / gamma;
        Ok(InitSpec::Mei {
            gamma,
            lambda,
            classes,
        })
    }
}

/// Variance-scaling value `m/fan`.
pub fn he_variance(fan: usize, m: f64) -> Result<f64> {
    if fan == 0 {
        return Err(Error::arg("he_variance: fan must be ≥ 1"));
    }
    if m <= 0.0 {
        return Err(Error::arg(format!("he_variance: gain must be positive, got {m}")));
    }
    Ok(m / fan as f64)
}

/// Maximum-entropy weight energy `φ_w = γ²λ²/C²`. Zero γ or λ would leave
/// all head weights identical (and first updates symmetric), so both must
/// be strictly positive.
pub fn mei_variance(gamma: f64, lambda: f64, classes: usize) -> Result<f64> {
    if gamma <= 0.0 {
        return Err(Error::arg(format!("mei_variance: gamma must be > 0, got {gamma}")));
    }
    if lambda <= 0.0 {
        return Err(Error::arg(format!(
            "mei_variance: lambda must be > 0, got {lambda}"
        )));
    }
    if classes < 2 {
        return Err(Error::arg(format!(
            "mei_variance: need ≥ 2 classes, got {classes}"
        )));
    }
    let c = classes as f64;
    Ok((gamma * lambda / c).powi(2))
}

/// Weight variance a spec produces for a dense layer of the given shape.
pub fn weight_variance(spec: &InitSpec, fan_in: usize, fan_out: usize) -> Result<f64> {
    match spec {
        InitSpec::HeFanIn { m } => he_variance(fan_in, *m),
        InitSpec::HeFanOut { m } => he_variance(fan_out, *m),
        InitSpec::Mei {
            gamma,
            lambda,
            classes,
        } => mei_variance(*gamma, *lambda, *classes),
        InitSpec::Zeros => Ok(0.0),
    }
}

/// Draws `W ~ N(0, σ²)` per the spec and zeroes the bias, in place.
pub fn apply_init(layer: &mut Layer, spec: &InitSpec, rng: &mut SeededRng) -> Result<()> {
    let (weights, bias) = match &mut layer.kind {
        LayerKind::Dense { weights, bias } => (weights, bias),
        _ => return Err(Error::arg("apply_init: layer is not dense")),
    };
    let (fan_out, fan_in) = (weights.rows(), weights.cols());
    let variance = weight_variance(spec, fan_in, fan_out)?;
    *weights = rng.normal_tensor(vec![fan_out, fan_in], 0.0, variance)?;
    *bias = Tensor::zeros(vec![1, fan_out]);
    Ok(())
}
