//! Sequential feed-forward network with an explicit forward pass and a
//! hand-derived backward pass.
//!
//! The stack supports dense (affine), ReLU, flatten, and feature-norm
//! layers. The classification head is the final dense layer; its logits go
//! through a max-subtracted softmax and a mean-reduced cross-entropy loss,
//! so the head error is `δ = (ŷ − y)/N` and the error reaching the layer
//! below is `δ·W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitSpec;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const FEATURE_NORM_EPS: f64 = 1e-8;
pub const FEATURE_NORM_MOMENTUM: f64 = 0.9;

/// Whether a layer carries transferred knowledge or was added for the
/// target task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamTag {
    Pretrained,
    Augmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Feature-norm layer state: per-feature running statistics plus the batch
/// size whose 1/√N output scale the layer applies. Running statistics adopt
/// the first train-mode batch outright and track later batches with EMA
/// momentum, so running variances stay strictly positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub scale_batch: Option<usize>,
    pub initialized: bool,
}

impl FeatureNormState {
    pub fn new(width: usize) -> Self {
        FeatureNormState {
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            scale_batch: None,
            initialized: false,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LayerKind {
    /// Affine map `A = X·Wᵀ + 1·b`; `weights` is `[fan_out × fan_in]`,
    /// `bias` is `[1 × fan_out]`.
    Dense { weights: Tensor, bias: Tensor },
    Relu,
    Flatten,
    FeatureNorm(FeatureNormState),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub tag: ParamTag,
}

impl Layer {
    pub fn dense(weights: Tensor, bias: Tensor, tag: ParamTag) -> Result<Self> {
        if weights.ndim() != 2 {
            return Err(Error::dim("dense: weights must be 2-D"));
        }
        if bias.len() != weights.rows() {
            return Err(Error::dim(format!(
                "dense: {} weight rows vs {} bias entries",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Layer {
            kind: LayerKind::Dense { weights, bias },
            tag,
        })
    }

    pub fn relu() -> Self {
        Layer {
            kind: LayerKind::Relu,
            tag: ParamTag::Pretrained,
        }
    }

    pub fn flatten() -> Self {
        Layer {
            kind: LayerKind::Flatten,
            tag: ParamTag::Pretrained,
        }
    }

    pub fn feature_norm(width: usize, tag: ParamTag) -> Self {
        Layer {
            kind: LayerKind::FeatureNorm(FeatureNormState::new(width)),
            tag,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. })
    }
}

/// Per-feature-norm-layer statistics actually used by one forward call;
/// the backward pass must standardize with exactly these.
#[derive(Debug, Clone)]
pub struct FnBatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub scale: f64,
}

/// Everything the backward pass and the telemetry need from one forward
/// call: each layer's input and output, the softmax estimates, and the
/// statistics every feature-norm layer applied.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    layer_inputs: Vec<Tensor>,
    layer_outputs: Vec<Tensor>,
    fn_stats: Vec<Option<FnBatchStats>>,
    probs: Tensor,
    mode: Mode,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        self.layer_outputs.last().expect("trace has layers")
    }

    /// Input to the final (head) layer, i.e. the features the head reads.
    pub fn head_input(&self) -> &Tensor {
        self.layer_inputs.last().expect("trace has layers")
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn batch_size(&self) -> usize {
        self.probs.rows()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn layer_input(&self, idx: usize) -> &Tensor {
        &self.layer_inputs[idx]
    }

    pub fn layer_output(&self, idx: usize) -> &Tensor {
        &self.layer_outputs[idx]
    }
}

/// Per-parameter gradients of one dense layer.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Back-propagated errors and parameter gradients from one backward pass.
/// `deltas[l]` is the loss gradient with respect to layer `l`'s output.
#[derive(Debug, Clone)]
pub struct BackwardTrace {
    deltas: Vec<Tensor>,
    grads: Vec<Option<ParamGrads>>,
    input_grad: Tensor,
}

impl BackwardTrace {
    /// δ at the head output: `(ŷ − y)/N`.
    pub fn head_delta(&self) -> &Tensor {
        self.deltas.last().expect("trace has layers")
    }

    /// Error back-propagated to the layer below the head (`δ·W`), or `None`
    /// for a head-only network.
    pub fn prev_delta(&self) -> Option<&Tensor> {
        let n = self.deltas.len();
        if n >= 2 {
            Some(&self.deltas[n - 2])
        } else {
            None
        }
    }

    pub fn grads(&self) -> &[Option<ParamGrads>] {
        &self.grads
    }

    pub fn input_grad(&self) -> &Tensor {
        &self.input_grad
    }
}

/// Ordered stack of layers ending in the dense classification head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("network needs at least one layer"));
        }
        Ok(LayerStack { layers })
    }

    /// Dense stack `input → hidden… → classes` with ReLU after every hidden
    /// layer and a leading flatten; all weights drawn from `init`, biases 0.
    pub fn feed_forward(
        input_dim: usize,
        hidden: &[usize],
        classes: usize,
        init: &InitSpec,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut layers = vec![Layer::flatten()];
        let mut fan_in = input_dim;
        for &h in hidden {
            let mut layer = Layer::dense(
                Tensor::zeros(vec![h, fan_in]),
                Tensor::zeros(vec![1, h]),
                ParamTag::Pretrained,
            )?;
            crate::init::apply_init(&mut layer, init, rng)?;
            layers.push(layer);
            layers.push(Layer::relu());
            fan_in = h;
        }
        let mut head = Layer::dense(
            Tensor::zeros(vec![classes, fan_in]),
            Tensor::zeros(vec![1, classes]),
            ParamTag::Pretrained,
        )?;
        crate::init::apply_init(&mut head, init, rng)?;
        layers.push(head);
        LayerStack::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// The head's weight matrix (final layer, which must be dense).
    pub fn head_dense(&self) -> Result<(&Tensor, &Tensor)> {
        match &self.layers.last().unwrap().kind {
            LayerKind::Dense { weights, bias } => Ok((weights, bias)),
            _ => Err(Error::state("final layer is not dense")),
        }
    }

    /// Number of classes the head outputs.
    pub fn classes(&self) -> Result<usize> {
        Ok(self.head_dense()?.0.rows())
    }

    /// Runs the batch through every layer, keeping the per-layer tensors the
    /// backward pass and the telemetry need. Train mode lets feature-norm
    /// layers use and record batch statistics; eval mode standardizes with
    /// frozen running statistics.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<ForwardTrace> {
        if x.rows() == 0 {
            return Err(Error::arg("forward: empty batch"));
        }
        let mut cur = x.clone();
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut layer_outputs = Vec::with_capacity(self.layers.len());
        let mut fn_stats = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            layer_inputs.push(cur.clone());
            let mut aux = None;
            let out = match &mut layer.kind {
                LayerKind::Dense { weights, bias } => {
                    cur.matmul_nt(weights)?.add_row_broadcast(bias)?
                }
                LayerKind::Relu => {
                    let data = cur.data().iter().map(|&v| v.max(0.0)).collect();
                    Tensor::new(cur.shape().to_vec(), data)?
                }
                LayerKind::Flatten => {
                    let n = cur.shape()[0];
                    let rest: usize = cur.shape()[1..].iter().product();
                    cur.reshape(vec![n, rest])?
                }
                LayerKind::FeatureNorm(state) => {
                    let (out, stats) = feature_norm_forward(&cur, state, mode)?;
                    aux = Some(stats);
                    out
                }
            };
            if !out.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite activations at layer {idx}"
                )));
            }
            layer_outputs.push(out.clone());
            fn_stats.push(aux);
            cur = out;
        }
        let probs = softmax(&cur)?;
        Ok(ForwardTrace {
            layer_inputs,
            layer_outputs,
            fn_stats,
            probs,
            mode,
        })
    }

    /// Backward pass over a train-mode trace: seeds `δ = (ŷ − y)/N` at the
    /// head output and walks the stack down, producing every layer's δ and
    /// every dense layer's weight gradient `δᵀX` and bias gradient `1ᵀδ`.
    pub fn backward(&self, trace: &ForwardTrace, labels: &Tensor) -> Result<BackwardTrace> {
        if trace.mode != Mode::Train {
            return Err(Error::state("backward requires a train-mode trace"));
        }
        if trace.layer_inputs.len() != self.layers.len() {
            return Err(Error::state("trace does not match this network"));
        }
        validate_one_hot(labels)?;
        if labels.shape() != trace.probs.shape() {
            return Err(Error::dim(format!(
                "labels {:?} vs estimates {:?}",
                labels.shape(),
                trace.probs.shape()
            )));
        }
        let n = trace.batch_size() as f64;
        let head_delta = trace.probs.sub(labels)?.scale(1.0 / n);

        let count = self.layers.len();
        let mut deltas: Vec<Option<Tensor>> = vec![None; count];
        let mut grads: Vec<Option<ParamGrads>> = vec![None; count];
        deltas[count - 1] = Some(head_delta);
        let mut input_grad = None;
        for idx in (0..count).rev() {
            let d_out = deltas[idx].as_ref().unwrap();
            let x = &trace.layer_inputs[idx];
            let d_in = match &self.layers[idx].kind {
                LayerKind::Dense { weights, .. } => {
                    grads[idx] = Some(ParamGrads {
                        weights: d_out.matmul_tn(x)?,
                        bias: d_out.column_sums()?,
                    });
                    d_out.matmul(weights)?
                }
                LayerKind::Relu => {
                    let data = d_out
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    Tensor::new(x.shape().to_vec(), data)?
                }
                LayerKind::Flatten => d_out.reshape(x.shape().to_vec())?,
                LayerKind::FeatureNorm(_) => {
                    let stats = trace.fn_stats[idx]
                        .as_ref()
                        .ok_or_else(|| Error::state("trace is missing feature-norm statistics"))?;
                    feature_norm_backward(x, d_out, stats)?
                }
            };
            if idx > 0 {
                deltas[idx - 1] = Some(d_in);
            } else {
                input_grad = Some(d_in);
            }
        }
        Ok(BackwardTrace {
            deltas: deltas.into_iter().map(Option::unwrap).collect(),
            grads,
            input_grad: input_grad.unwrap(),
        })
    }

    /// Replaces the classification head for a `c_new`-way task. The old head
    /// is dropped, every surviving layer is tagged pretrained, an optional
    /// feature-norm layer is inserted, and a fresh head is drawn from `init`
    /// with zero biases.
    pub fn replace_head(
        &self,
        c_new: usize,
        init: &InitSpec,
        use_fn: bool,
        rng: &mut SeededRng,
    ) -> Result<LayerStack> {
        if c_new < 2 {
            return Err(Error::arg(format!("replace_head: need ≥ 2 classes, got {c_new}")));
        }
        let old_head = self.layers.last().unwrap();
        let fan_in = match &old_head.kind {
            LayerKind::Dense { weights, .. } => weights.cols(),
            _ => return Err(Error::state("replace_head: final layer is not dense")),
        };
        let mut layers: Vec<Layer> = self.layers[..self.layers.len() - 1]
            .iter()
            .cloned()
            .map(|mut l| {
                l.tag = ParamTag::Pretrained;
                l
            })
            .collect();
        if use_fn {
            layers.push(Layer::feature_norm(fan_in, ParamTag::Augmented));
        }
        let mut head = Layer::dense(
            Tensor::zeros(vec![c_new, fan_in]),
            Tensor::zeros(vec![1, c_new]),
            ParamTag::Augmented,
        )?;
        crate::init::apply_init(&mut head, init, rng)?;
        layers.push(head);
        LayerStack::new(layers)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.ndim() != 2 {
        return Err(Error::dim("softmax: logits must be 2-D"));
    }
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        let row = logits.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..c {
            let e = (row[j] - m).exp();
            out[i * c + j] = e;
            sum += e;
        }
        for j in 0..c {
            out[i * c + j] /= sum;
        }
    }
    Tensor::new(vec![n, c], out)
}

fn validate_one_hot(labels: &Tensor) -> Result<()> {
    if labels.ndim() != 2 {
        return Err(Error::arg("labels must be a 2-D one-hot matrix"));
    }
    let (n, c) = (labels.rows(), labels.cols());
    for i in 0..n {
        let mut ones = 0usize;
        for j in 0..c {
            let v = labels.get2(i, j);
            if v == 1.0 {
                ones += 1;
            } else if v != 0.0 {
                return Err(Error::arg(format!("labels row {i} is not one-hot")));
            }
        }
        if ones != 1 {
            return Err(Error::arg(format!("labels row {i} is not one-hot")));
        }
    }
    Ok(())
}

/// Mean over the batch of `−ln ŷ` at the true class.
pub fn ce_loss(probs: &Tensor, labels: &Tensor) -> Result<f64> {
    validate_one_hot(labels)?;
    if probs.shape() != labels.shape() {
        return Err(Error::dim(format!(
            "ce_loss: estimates {:?} vs labels {:?}",
            probs.shape(),
            labels.shape()
        )));
    }
    let (n, c) = (probs.rows(), probs.cols());
    let mut total = 0.0;
    for i in 0..n {
        let mut row_sum = 0.0;
        let mut p_true = 0.0;
        for j in 0..c {
            let p = probs.get2(i, j);
            if p <= 0.0 {
                return Err(Error::arg(format!(
                    "ce_loss: estimate {p} at row {i} is not strictly positive"
                )));
            }
            row_sum += p;
            if labels.get2(i, j) == 1.0 {
                p_true = p;
            }
        }
        if (row_sum - 1.0).abs() > 1e-6 {
            return Err(Error::arg(format!(
                "ce_loss: estimate row {i} sums to {row_sum}, not 1"
            )));
        }
        total -= p_true.ln();
    }
    Ok(total / n as f64)
}

/// Fraction of rows whose estimate argmax matches the label argmax.
pub fn accuracy(probs: &Tensor, labels: &Tensor) -> Result<f64> {
    if probs.shape() != labels.shape() {
        return Err(Error::dim("accuracy: shape mismatch"));
    }
    let (n, c) = (probs.rows(), probs.cols());
    let argmax = |t: &Tensor, i: usize| -> usize {
        let row = t.row(i);
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        best
    };
    let hits = (0..n)
        .filter(|&i| argmax(probs, i) == argmax(labels, i))
        .count();
    Ok(hits as f64 / n as f64)
}

/// Standardizes each feature with batch statistics (train) or running
/// statistics (eval), then scales by 1/√N so the batch-expected per-example
/// feature energy is `K/N`. The eval-mode scale reuses the last train-mode
/// batch size so the map stays frozen.
pub fn feature_norm_forward(
    x: &Tensor,
    state: &mut FeatureNormState,
    mode: Mode,
) -> Result<(Tensor, FnBatchStats)> {
    if x.ndim() != 2 {
        return Err(Error::dim("feature_norm: input must be 2-D"));
    }
    let (n, k) = (x.rows(), x.cols());
    if k != state.width() {
        return Err(Error::dim(format!(
            "feature_norm: {} features vs state width {}",
            k,
            state.width()
        )));
    }
    let (mean, var, scale_n) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::arg(
                    "feature_norm: batch statistics need at least 2 examples",
                ));
            }
            let mut mean = vec![0.0; k];
            for i in 0..n {
                for j in 0..k {
                    mean[j] += x.get2(i, j);
                }
            }
            for m in &mut mean {
                *m /= n as f64;
            }
            let mut var = vec![0.0; k];
            for i in 0..n {
                for j in 0..k {
                    let d = x.get2(i, j) - mean[j];
                    var[j] += d * d;
                }
            }
            for v in &mut var {
                *v /= n as f64;
            }
            if state.initialized {
                for j in 0..k {
                    state.running_mean[j] = FEATURE_NORM_MOMENTUM * state.running_mean[j]
                        + (1.0 - FEATURE_NORM_MOMENTUM) * mean[j];
                    state.running_var[j] = FEATURE_NORM_MOMENTUM * state.running_var[j]
                        + (1.0 - FEATURE_NORM_MOMENTUM) * var[j];
                }
            } else {
                state.running_mean.copy_from_slice(&mean);
                state.running_var.copy_from_slice(&var);
                state.initialized = true;
            }
            state.scale_batch = Some(n);
            (mean, var, n)
        }
        Mode::Eval => {
            if !state.initialized {
                return Err(Error::state(
                    "feature_norm: eval mode before any train-mode batch",
                ));
            }
            if state.running_var.iter().any(|&v| v <= 0.0) {
                return Err(Error::state("feature_norm: non-positive running variance"));
            }
            let scale_n = state.scale_batch.unwrap_or(n);
            (
                state.running_mean.clone(),
                state.running_var.clone(),
                scale_n,
            )
        }
    };
    let scale = 1.0 / (scale_n as f64).sqrt();
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            out[i * k + j] =
                scale * (x.get2(i, j) - mean[j]) / (var[j] + FEATURE_NORM_EPS).sqrt();
        }
    }
    Ok((
        Tensor::new(vec![n, k], out)?,
        FnBatchStats { mean, var, scale },
    ))
}

/// Backward through the standardization, including the batch mean and
/// variance paths, using exactly the statistics the forward pass applied.
pub(crate) fn feature_norm_backward(
    x: &Tensor,
    d_out: &Tensor,
    stats: &FnBatchStats,
) -> Result<Tensor> {
    let (n, k) = (x.rows(), x.cols());
    let nf = n as f64;
    let mut d_in = vec![0.0; n * k];
    for j in 0..k {
        let sigma = (stats.var[j] + FEATURE_NORM_EPS).sqrt();
        // d w.r.t. the standardized value, before the global scale.
        let mut d_var = 0.0;
        let mut d_mean = 0.0;
        for i in 0..n {
            let dxh = stats.scale * d_out.get2(i, j);
            let centered = x.get2(i, j) - stats.mean[j];
            d_var += dxh * centered * (-0.5) / (sigma * sigma * sigma);
            d_mean += -dxh / sigma;
        }
        let mut centered_sum = 0.0;
        for i in 0..n {
            centered_sum += x.get2(i, j) - stats.mean[j];
        }
        d_mean += d_var * (-2.0 / nf) * centered_sum;
        for i in 0..n {
            let dxh = stats.scale * d_out.get2(i, j);
            let centered = x.get2(i, j) - stats.mean[j];
            d_in[i * k + j] = dxh / sigma + d_var * 2.0 * centered / nf + d_mean / nf;
        }
    }
    Tensor::new(vec![n, k], d_in)
}
