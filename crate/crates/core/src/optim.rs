//! Gradient-descent and Adam updates over a layer stack, with a per-layer
//! trainability mask so the warm-up phase can freeze pretrained parameters.

use crate::error::{Error, Result};
use crate::net::{BackwardTrace, LayerKind, LayerStack, ParamTag};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Training phase for mask construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Only augmented (new) parameters train.
    Warmup,
    /// Everything trains.
    Joint,
}

/// Per-layer trainability: `true` means the layer's parameters update.
pub fn warmup_mask(net: &LayerStack, phase: Phase) -> Vec<bool> {
    net.layers()
        .iter()
        .map(|l| match phase {
            Phase::Joint => true,
            Phase::Warmup => l.tag == ParamTag::Augmented,
        })
        .collect()
}

#[derive(Debug, Clone)]
struct LayerMoments {
    m_w: Tensor,
    v_w: Tensor,
    m_b: Tensor,
    v_b: Tensor,
}

/// Optimizer state: learning rate, Adam moment estimates per dense layer,
/// and the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimKind,
    gamma: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    moments: Vec<Option<LayerMoments>>,
}

impl Optimizer {
    pub fn sgd(gamma: f64) -> Self {
        Optimizer {
            kind: OptimKind::Sgd,
            gamma,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            t: 0,
            moments: Vec::new(),
        }
    }

    /// Adam with zero-initialized moments shaped to `net`'s dense layers.
    pub fn adam(gamma: f64, net: &LayerStack) -> Self {
        Self::adam_with(gamma, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, net)
    }

    pub fn adam_with(gamma: f64, beta1: f64, beta2: f64, epsilon: f64, net: &LayerStack) -> Self {
        let moments = net
            .layers()
            .iter()
            .map(|l| match &l.kind {
                LayerKind::Dense { weights, bias } => Some(LayerMoments {
                    m_w: Tensor::zeros(weights.shape().to_vec()),
                    v_w: Tensor::zeros(weights.shape().to_vec()),
                    m_b: Tensor::zeros(bias.shape().to_vec()),
                    v_b: Tensor::zeros(bias.shape().to_vec()),
                }),
                _ => None,
            })
            .collect();
        Optimizer {
            kind: OptimKind::Adam,
            gamma,
            beta1,
            beta2,
            epsilon,
            t: 0,
            moments,
        }
    }

    pub fn new(kind: OptimKind, gamma: f64, net: &LayerStack) -> Self {
        match kind {
            OptimKind::Sgd => Self::sgd(gamma),
            OptimKind::Adam => Self::adam(gamma, net),
        }
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update. Layers whose mask entry is `false` are left
    /// bit-identical, moments included.
    pub fn step(
        &mut self,
        net: &mut LayerStack,
        grads: &BackwardTrace,
        mask: &[bool],
    ) -> Result<()> {
        if mask.len() != net.num_layers() {
            return Err(Error::dim(format!(
                "mask has {} entries for {} layers",
                mask.len(),
                net.num_layers()
            )));
        }
        if grads.grads().len() != net.num_layers() {
            return Err(Error::state("gradient trace does not match the network"));
        }
        if self.kind == OptimKind::Adam && self.moments.len() != net.num_layers() {
            return Err(Error::state(
                "adam moments not initialized for this network",
            ));
        }
        self.t += 1;
        for idx in 0..net.num_layers() {
            let Some(g) = &grads.grads()[idx] else {
                continue;
            };
            if !mask[idx] {
                continue;
            }
            let LayerKind::Dense { weights, bias } = &mut net.layers_mut()[idx].kind else {
                continue;
            };
            if g.weights.shape() != weights.shape() || g.bias.shape() != bias.shape() {
                return Err(Error::dim(format!(
                    "gradient shape {:?}/{:?} vs parameter shape {:?}/{:?} at layer {idx}",
                    g.weights.shape(),
                    g.bias.shape(),
                    weights.shape(),
                    bias.shape()
                )));
            }
            match self.kind {
                OptimKind::Sgd => {
                    sgd_update(weights.data_mut(), g.weights.data(), self.gamma);
                    sgd_update(bias.data_mut(), g.bias.data(), self.gamma);
                }
                OptimKind::Adam => {
                    let moments = self.moments[idx]
                        .as_mut()
                        .ok_or_else(|| Error::state("adam moments missing for dense layer"))?;
                    if moments.m_w.shape() != weights.shape() {
                        return Err(Error::state(
                            "adam moments were initialized for a different network",
                        ));
                    }
                    adam_update(
                        weights.data_mut(),
                        g.weights.data(),
                        moments.m_w.data_mut(),
                        moments.v_w.data_mut(),
                        self.gamma,
                        self.beta1,
                        self.beta2,
                        self.epsilon,
                        self.t,
                    );
                    adam_update(
                        bias.data_mut(),
                        g.bias.data(),
                        moments.m_b.data_mut(),
                        moments.v_b.data_mut(),
                        self.gamma,
                        self.beta1,
                        self.beta2,
                        self.epsilon,
                        self.t,
                    );
                }
            }
        }
        Ok(())
    }
}

fn sgd_update(params: &mut [f64], grads: &[f64], gamma: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= gamma * g;
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    gamma: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= gamma * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::InitSpec;
    use crate::net::{Layer, Mode};
    use crate::rng::SeededRng;

    fn tiny_net(rng: &mut SeededRng) -> LayerStack {
        LayerStack::feed_forward(3, &[4], 2, &InitSpec::he_fan_out(), rng).unwrap()
    }

    fn one_hot(rows: &[usize], classes: usize) -> Tensor {
        let mut t = Tensor::zeros(vec![rows.len(), classes]);
        for (i, &c) in rows.iter().enumerate() {
            t.set2(i, c, 1.0);
        }
        t
    }

    fn grads_for(net: &mut LayerStack, rng: &mut SeededRng) -> BackwardTrace {
        let x = rng.normal_tensor(vec![4, 3], 0.0, 1.0).unwrap();
        let trace = net.forward(&x, Mode::Train).unwrap();
        let y = one_hot(&[0, 1, 0, 1], 2);
        net.backward(&trace, &y).unwrap()
    }

    fn dense_params(net: &LayerStack) -> Vec<Vec<f64>> {
        net.layers()
            .iter()
            .filter_map(|l| match &l.kind {
                LayerKind::Dense { weights, bias } => {
                    let mut v = weights.data().to_vec();
                    v.extend_from_slice(bias.data());
                    Some(v)
                }
                _ => None,
            })
            .collect()
    }

    #[test]
    fn sgd_scalar_update() {
        let mut p = [1.0];
        sgd_update(&mut p, &[0.5], 0.1);
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let mut rng = SeededRng::new(1);
        let mut net = tiny_net(&mut rng);
        let before = dense_params(&net);
        // Zero gradients: labels equal the estimates cannot happen exactly,
        // so use γ = 0 for the all-parameters case...
        let grads = grads_for(&mut net, &mut rng);
        let mut opt = Optimizer::sgd(0.0);
        let mask = warmup_mask(&net, Phase::Joint);
        opt.step(&mut net, &grads, &mask).unwrap();
        assert_eq!(before, dense_params(&net));
    }

    #[test]
    fn masked_layers_stay_bit_identical() {
        let mut rng = SeededRng::new(2);
        let net = tiny_net(&mut rng);
        let mut swapped = net
            .replace_head(2, &InitSpec::mei_from_phi_w(1e-4, 1e-12, 2).unwrap(), false, &mut rng)
            .unwrap();
        let before = dense_params(&swapped);
        let grads = grads_for(&mut swapped, &mut rng);
        let mask = warmup_mask(&swapped, Phase::Warmup);
        let mut opt = Optimizer::adam(1e-2, &swapped);
        opt.step(&mut swapped, &grads, &mask).unwrap();
        let after = dense_params(&swapped);
        // Backbone (first dense group) untouched, head moved.
        assert_eq!(before[0], after[0]);
        assert_ne!(before[1], after[1]);
    }

    #[test]
    fn warmup_mask_selects_augmented_only() {
        let mut rng = SeededRng::new(3);
        let net = tiny_net(&mut rng);
        let swapped = net
            .replace_head(3, &InitSpec::Zeros, true, &mut rng)
            .unwrap();
        let warm = warmup_mask(&swapped, Phase::Warmup);
        let joint = warmup_mask(&swapped, Phase::Joint);
        assert!(joint.iter().all(|&b| b));
        for (layer, &trainable) in swapped.layers().iter().zip(&warm) {
            assert_eq!(trainable, layer.tag == ParamTag::Augmented);
        }
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        // Bias-corrected first step: |Δp| = γ·|g|/(|g| + ε) ≈ γ.
        let mut p = [2.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update(&mut p, &[0.5], &mut m, &mut v, 1e-3, 0.9, 0.999, 1e-8, 1);
        let delta = 2.0 - p[0];
        assert!((delta - 1e-3).abs() < 1e-3 * 1e-6, "delta {delta}");
    }

    #[test]
    fn adam_zero_gradient_first_step_is_identity() {
        let mut p = [2.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update(&mut p, &[0.0], &mut m, &mut v, 1e-3, 0.9, 0.999, 1e-8, 1);
        assert_eq!(p[0], 2.0);
    }

    #[test]
    fn adam_matches_scalar_oracle_for_constant_gradient() {
        // Hand-rolled scalar Adam, written independently of `adam_update`.
        let (gamma, b1, b2, eps): (f64, f64, f64, f64) = (1e-2, 0.9, 0.999, 1e-8);
        let g = 0.37;
        let mut oracle_p = 5.0;
        let mut om = 0.0;
        let mut ov = 0.0;

        let mut p = [5.0];
        let mut m = [0.0];
        let mut v = [0.0];
        for t in 1..=100u64 {
            om = b1 * om + (1.0 - b1) * g;
            ov = b2 * ov + (1.0 - b2) * g * g;
            let mh = om / (1.0 - b1.powi(t as i32));
            let vh = ov / (1.0 - b2.powi(t as i32));
            oracle_p -= gamma * mh / (vh.sqrt() + eps);

            adam_update(&mut p, &[g], &mut m, &mut v, gamma, b1, b2, eps, t);
            assert!((p[0] - oracle_p).abs() < 1e-12, "diverged at t={t}");
        }
    }

    #[test]
    fn adam_requires_matching_moments() {
        let mut rng = SeededRng::new(4);
        let mut net = tiny_net(&mut rng);
        let grads = grads_for(&mut net, &mut rng);
        // Moments built for a different network shape.
        let other = LayerStack::feed_forward(3, &[7], 2, &InitSpec::he_fan_out(), &mut rng).unwrap();
        let mut opt = Optimizer::adam(1e-3, &other);
        let mask = warmup_mask(&net, Phase::Joint);
        assert!(opt.step(&mut net, &grads, &mask).is_err());
    }

    #[test]
    fn step_counter_increments() {
        let mut rng = SeededRng::new(5);
        let mut net = tiny_net(&mut rng);
        let grads = grads_for(&mut net, &mut rng);
        let mask = warmup_mask(&net, Phase::Joint);
        let mut opt = Optimizer::adam(1e-3, &net);
        assert_eq!(opt.step_count(), 0);
        opt.step(&mut net, &grads, &mask).unwrap();
        opt.step(&mut net, &grads, &mask).unwrap();
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn relu_layer_masks_are_ignored() {
        let layers = vec![
            Layer::relu(),
            Layer::dense(Tensor::zeros(vec![2, 2]), Tensor::zeros(vec![1, 2]), ParamTag::Augmented)
                .unwrap(),
        ];
        let net = LayerStack::new(layers).unwrap();
        assert_eq!(warmup_mask(&net, Phase::Warmup), vec![false, true]);
    }
}
