//! Diagnostics for the error energy at the classification head.
//!
//! The total head-error energy `φ = Σⱼ E_N[(Nδⱼ)²]` splits into three
//! quadratic forms: the estimate energy `E_N[ŷŷᵀ]`, the label energy
//! `E_N[yyᵀ]` (always 1 for one-hot labels), and the cross term
//! `E_N[ŷyᵀ]` which is the average probability mass on the correct class.
//! Only the cross term tracks accuracy; at initialization the estimate
//! term is noise, and its share of `φ` is what the noise-fraction metric
//! reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{BackwardTrace, ForwardTrace};
use crate::tensor::Tensor;

/// The three quadratic forms and their signed sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDecomposition {
    pub phi_total: f64,
    pub e_est: f64,
    pub e_lab: f64,
    pub e_cross: f64,
}

/// One recorded training step of head-boundary diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub step: usize,
    pub phi_total: f64,
    pub e_est: f64,
    pub e_lab: f64,
    pub e_cross: f64,
    pub noise_fraction_pct: f64,
    /// Mean squared element of the error back-propagated past the head.
    pub delta_prev_energy: f64,
    /// Variance of the head's input features on this batch.
    pub var_xl: f64,
    pub loss: f64,
    /// Train-batch accuracy.
    pub accuracy: f64,
}

/// Slack for the closed-form bounds; they are exact in real arithmetic.
const BOUND_SLACK: f64 = 1e-9;

impl EnergyReport {
    /// Asserts the decomposition identity and the closed-form bounds. The
    /// experiment runner calls this on every recorded step and aborts the
    /// run on violation.
    pub fn validate(&self, classes: usize) -> Result<()> {
        let identity = self.e_est + self.e_lab - 2.0 * self.e_cross;
        if (self.phi_total - identity).abs() > 1e-12 {
            return Err(Error::Numeric(format!(
                "energy decomposition broken: φ={} vs components {}",
                self.phi_total, identity
            )));
        }
        if !(-BOUND_SLACK..=2.0 + BOUND_SLACK).contains(&self.phi_total) {
            return Err(Error::Numeric(format!("φ={} outside [0,2]", self.phi_total)));
        }
        let lower = 1.0 / classes as f64;
        if !(lower - BOUND_SLACK..=1.0 + BOUND_SLACK).contains(&self.e_est) {
            return Err(Error::Numeric(format!(
                "estimate energy {} outside [1/{classes}, 1]",
                self.e_est
            )));
        }
        if (self.e_lab - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric(format!("label energy {} ≠ 1", self.e_lab)));
        }
        if !(-BOUND_SLACK..=1.0 + BOUND_SLACK).contains(&self.e_cross) {
            return Err(Error::Numeric(format!(
                "cross energy {} outside [0,1]",
                self.e_cross
            )));
        }
        Ok(())
    }
}

/// Batch expectations of the three quadratic forms. `phi_total` is computed
/// directly from `(ŷ − y)²` so the decomposition identity is a real
/// cross-check of the algebra, not a restatement.
pub fn energy_decomposition(probs: &Tensor, labels: &Tensor) -> Result<EnergyDecomposition> {
    if probs.shape() != labels.shape() {
        return Err(Error::dim(format!(
            "energy_decomposition: estimates {:?} vs labels {:?}",
            probs.shape(),
            labels.shape()
        )));
    }
    let (n, c) = (probs.rows(), probs.cols());
    let mut phi = 0.0;
    let mut e_est = 0.0;
    let mut e_lab = 0.0;
    let mut e_cross = 0.0;
    for i in 0..n {
        for j in 0..c {
            let p = probs.get2(i, j);
            let y = labels.get2(i, j);
            phi += (p - y) * (p - y);
            e_est += p * p;
            e_lab += y * y;
            e_cross += p * y;
        }
    }
    let nf = n as f64;
    Ok(EnergyDecomposition {
        phi_total: phi / nf,
        e_est: e_est / nf,
        e_lab: e_lab / nf,
        e_cross: e_cross / nf,
    })
}

/// Share of the head-error energy contributed by the estimate term, as a
/// percentage. Undefined for a perfect predictor (`φ = 0`).
pub fn noise_fraction(decomp: &EnergyDecomposition) -> Result<f64> {
    if decomp.phi_total <= 0.0 {
        return Err(Error::arg(
            "noise_fraction: total error energy is zero (perfect predictor)",
        ));
    }
    Ok(100.0 * decomp.e_est / decomp.phi_total)
}

/// Closed-form bounds of the estimate energy for row-stochastic estimates:
/// the minimum `1/C` is attained exactly when each example's estimates are
/// all equal.
pub fn estimate_energy_bounds(classes: usize) -> Result<(f64, f64)> {
    if classes < 2 {
        return Err(Error::arg(format!(
            "estimate_energy_bounds: need ≥ 2 classes, got {classes}"
        )));
    }
    Ok((1.0 / classes as f64, 1.0))
}

/// Mean squared element of the error that crossed the head boundary.
pub fn boundary_error_energy(bt: &BackwardTrace) -> Result<f64> {
    let prev = bt
        .prev_delta()
        .ok_or_else(|| Error::state("boundary_error_energy: network has no layer below the head"))?;
    Ok(prev.reduce_stats()?.energy)
}

/// Total head-error energy via its definition `Σⱼ E_N[(Nδⱼ)²]`, from the
/// backward trace. Cross-checks the decomposition route.
pub fn phi_from_backward(bt: &BackwardTrace) -> f64 {
    let d = bt.head_delta();
    let (n, c) = (d.rows(), d.cols());
    let nf = n as f64;
    let mut phi = 0.0;
    for j in 0..c {
        let mut acc = 0.0;
        for i in 0..n {
            let scaled = nf * d.get2(i, j);
            acc += scaled * scaled;
        }
        phi += acc / nf;
    }
    phi
}

/// Appends the variance of the head's input features at the current step.
pub fn track_var_xl(trace: &ForwardTrace, history: &mut Vec<f64>) -> Result<()> {
    history.push(trace.head_input().reduce_stats()?.variance);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{softmax, LayerStack, Mode};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn one_hot(rows: &[usize], classes: usize) -> Tensor {
        let mut t = Tensor::zeros(vec![rows.len(), classes]);
        for (i, &c) in rows.iter().enumerate() {
            t.set2(i, c, 1.0);
        }
        t
    }

    #[test]
    fn perfect_prediction_has_zero_energy() {
        let y = one_hot(&[0, 2, 1], 3);
        let d = energy_decomposition(&y, &y).unwrap();
        assert_eq!(d.phi_total, 0.0);
        assert_eq!(d.e_cross, 1.0);
        assert!(noise_fraction(&d).is_err());
    }

    #[test]
    fn confidently_wrong_prediction_attains_supremum() {
        let probs = one_hot(&[1, 0], 3);
        let labels = one_hot(&[0, 1], 3);
        let d = energy_decomposition(&probs, &labels).unwrap();
        assert_eq!(d.phi_total, 2.0);
        assert_eq!(d.e_est, 1.0);
        assert_eq!(d.e_lab, 1.0);
        assert_eq!(d.e_cross, 0.0);
    }

    #[test]
    fn uniform_estimates_hand_values() {
        let probs = Tensor::full(vec![4, 10], 0.1);
        let labels = one_hot(&[0, 3, 5, 9], 10);
        let d = energy_decomposition(&probs, &labels).unwrap();
        assert!((d.e_est - 0.1).abs() < 1e-15);
        assert!((d.e_lab - 1.0).abs() < 1e-15);
        assert!((d.e_cross - 0.1).abs() < 1e-15);
        assert!((d.phi_total - 0.9).abs() < 1e-15);
        let nf = noise_fraction(&d).unwrap();
        assert!((nf - 100.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_values() {
        assert_eq!(estimate_energy_bounds(10).unwrap(), (0.1, 1.0));
        assert_eq!(estimate_energy_bounds(2).unwrap(), (0.5, 1.0));
        assert!(estimate_energy_bounds(1).is_err());
    }

    #[test]
    fn boundary_energy_zero_for_zero_head_weights() {
        let mut rng = SeededRng::new(3);
        let mut net = LayerStack::feed_forward(
            5,
            &[4],
            3,
            &crate::init::InitSpec::he_fan_out(),
            &mut rng,
        )
        .unwrap();
        // Zero the head.
        let last = net.num_layers() - 1;
        if let crate::net::LayerKind::Dense { weights, bias } = &mut net.layers_mut()[last].kind {
            *weights = Tensor::zeros(weights.shape().to_vec());
            *bias = Tensor::zeros(bias.shape().to_vec());
        }
        let x = rng.normal_tensor(vec![6, 5], 0.0, 1.0).unwrap();
        let trace = net.forward(&x, Mode::Train).unwrap();
        let labels = one_hot(&[0, 1, 2, 0, 1, 2], 3);
        let bt = net.backward(&trace, &labels).unwrap();
        assert_eq!(boundary_error_energy(&bt).unwrap(), 0.0);
    }

    #[test]
    fn phi_routes_agree() {
        let mut rng = SeededRng::new(4);
        let mut net = LayerStack::feed_forward(
            6,
            &[5],
            4,
            &crate::init::InitSpec::he_fan_out(),
            &mut rng,
        )
        .unwrap();
        let x = rng.normal_tensor(vec![8, 6], 0.0, 1.0).unwrap();
        let trace = net.forward(&x, Mode::Train).unwrap();
        let labels = one_hot(&(0..8).map(|i| i % 4).collect::<Vec<_>>(), 4);
        let bt = net.backward(&trace, &labels).unwrap();
        let via_def = phi_from_backward(&bt);
        let via_decomp = energy_decomposition(trace.probs(), &labels)
            .unwrap()
            .phi_total;
        assert!((via_def - via_decomp).abs() < 1e-10);
    }

    #[test]
    fn var_xl_history_grows_and_is_constant_for_frozen_net() {
        let mut rng = SeededRng::new(5);
        let mut net = LayerStack::feed_forward(
            4,
            &[3],
            2,
            &crate::init::InitSpec::he_fan_out(),
            &mut rng,
        )
        .unwrap();
        let x = rng.normal_tensor(vec![5, 4], 0.0, 1.0).unwrap();
        let mut history = Vec::new();
        for _ in 0..3 {
            let trace = net.forward(&x, Mode::Train).unwrap();
            track_var_xl(&trace, &mut history).unwrap();
        }
        assert_eq!(history.len(), 3);
        assert_eq!(history[0], history[1]);
        assert_eq!(history[1], history[2]);
    }

    proptest! {
        /// Random stochastic estimates: identity and bounds hold.
        #[test]
        fn decomposition_identity_and_bounds(seed in 0u64..400) {
            let mut rng = SeededRng::new(seed);
            let (n, c) = (6usize, 5usize);
            let logits = rng.normal_tensor(vec![n, c], 0.0, 4.0).unwrap();
            let probs = softmax(&logits).unwrap();
            let classes: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let labels = one_hot(&classes, c);
            let d = energy_decomposition(&probs, &labels).unwrap();
            prop_assert!((d.phi_total - (d.e_est + d.e_lab - 2.0 * d.e_cross)).abs() < 1e-12);
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&d.phi_total));
            prop_assert!((1.0 / c as f64 - 1e-12..=1.0 + 1e-12).contains(&d.e_est));
            prop_assert!((d.e_lab - 1.0).abs() < 1e-15);
            prop_assert!((-1e-15..=1.0 + 1e-12).contains(&d.e_cross));
        }
    }
}
