//! MLP forward/backward and the two task losses.
//!
//! Every layer is affine; ReLU sits between layers and never after the last
//! one. Weights are stored `out × in`, so a layer computes `x · Wᵀ + b` on a
//! `batch × in` input.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt, Tensor};

/// One affine layer: `weight` is `out × in`, `bias` is `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out, _) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match weight rows {out}",
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Uniform in ±1/√fan_in for both weight and bias.
    pub fn init_uniform<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (in_dim as f32).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(Tensor::new(vec![out_dim, in_dim], w)?, Tensor::vector(b)?)
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor::zeros(self.weight.shape().to_vec()).expect("valid shape"),
            bias: Tensor::zeros(self.bias.shape().to_vec()).expect("valid shape"),
        }
    }
}

/// Parameters of a feed-forward MLP. Adjacent layers always chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Linear>,
}

impl MlpParams {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("an MLP needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::shape(format!(
                    "layer {} expects {} inputs but layer {k} produces {}",
                    k + 1,
                    pair[1].in_dim(),
                    pair[0].out_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Seeded fresh init with the layer widths `dims[0] → dims[1] → … → dims[n]`.
    pub fn init_uniform<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::shape("need at least input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::init_uniform(w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }

    /// Concatenates every layer's weight then bias, in layer order.
    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) against this parameter layout.
    pub fn unflatten_like(&self, flat: &[f32]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "flat vector has {} values, MLP has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let nw = l.weight.len();
            let nb = l.bias.len();
            let w = Tensor::new(l.weight.shape().to_vec(), flat[off..off + nw].to_vec())?;
            let b = Tensor::new(l.bias.shape().to_vec(), flat[off + nw..off + nw + nb].to_vec())?;
            off += nw + nb;
            layers.push(Linear::new(w, b)?);
        }
        Self::new(layers)
    }
}

/// Intermediate values kept for [`mlp_backward`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input to each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Tensor>,
    /// Pre-activation output of each layer; the last one is the network output.
    pre: Vec<Tensor>,
}

impl MlpTrace {
    pub fn output(&self) -> &Tensor {
        self.pre.last().expect("trace has at least one layer")
    }
}

pub fn mlp_forward(params: &MlpParams, x: &Tensor) -> Result<Tensor> {
    Ok(mlp_forward_traced(params, x)?.pre.pop().expect("non-empty"))
}

pub fn mlp_forward_traced(params: &MlpParams, x: &Tensor) -> Result<MlpTrace> {
    let (batch, in_dim) = x.dims2()?;
    if in_dim != params.in_dim() {
        return Err(Error::shape(format!(
            "layer 0 expects {} inputs, batch has {in_dim}",
            params.in_dim()
        )));
    }
    let n = params.layers.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut cur = x.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        let (out, inn) = layer.weight.dims2()?;
        if cur.shape()[1] != inn {
            return Err(Error::shape(format!(
                "layer {k} expects {inn} inputs, got {}",
                cur.shape()[1]
            )));
        }
        let mut y = matmul_nt(cur.data(), layer.weight.data(), batch, inn, out);
        for row in y.chunks_mut(out) {
            for (v, b) in row.iter_mut().zip(layer.bias.data()) {
                *v += b;
            }
        }
        let y = Tensor::new(vec![batch, out], y)?;
        let next = if k + 1 < n {
            let mut a = y.clone();
            a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            Some(a)
        } else {
            None
        };
        inputs.push(cur);
        pre.push(y);
        if let Some(a) = next {
            cur = a;
        } else {
            break;
        }
    }
    Ok(MlpTrace { inputs, pre })
}

/// Gradients of every weight and bias given `grad_out = ∂L/∂output`.
pub fn mlp_backward(params: &MlpParams, trace: &MlpTrace, grad_out: &Tensor) -> Result<MlpParams> {
    if grad_out.shape() != trace.output().shape() {
        return Err(Error::shape(format!(
            "output gradient shape {:?} does not match output {:?}",
            grad_out.shape(),
            trace.output().shape()
        )));
    }
    let batch = grad_out.shape()[0];
    let mut grads = params.zeros_like();
    let mut g = grad_out.data().to_vec();
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let (out, inn) = (layer.out_dim(), layer.in_dim());
        let input = trace.inputs[k].data();

        let gl = &mut grads.layers[k];
        let gw = gl.weight.data_mut();
        for o in 0..out {
            for i in 0..inn {
                let mut acc = 0.0f64;
                for b in 0..batch {
                    acc += g[b * out + o] as f64 * input[b * inn + i] as f64;
                }
                gw[o * inn + i] = acc as f32;
            }
        }
        let gb = gl.bias.data_mut();
        for o in 0..out {
            let acc: f64 = (0..batch).map(|b| g[b * out + o] as f64).sum();
            gb[o] = acc as f32;
        }

        if k > 0 {
            let w = layer.weight.data();
            let pre = trace.pre[k - 1].data();
            let mut prev = vec![0.0f32; batch * inn];
            for b in 0..batch {
                for i in 0..inn {
                    if pre[b * inn + i] <= 0.0 {
                        continue;
                    }
                    let acc: f64 = (0..out)
                        .map(|o| g[b * out + o] as f64 * w[o * inn + i] as f64)
                        .sum();
                    prev[b * inn + i] = acc as f32;
                }
            }
            g = prev;
        }
    }
    Ok(grads)
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let (batch, classes) = logits.dims2()?;
    if labels.len() != batch {
        return Err(Error::input(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::input(format!("label {bad} out of range for {classes} classes")));
    }
    let inv_batch = 1.0 / batch as f64;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(batch * classes);
    for (b, &label) in labels.iter().enumerate() {
        let row = logits.row(b);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total += sum.ln() - (row[label] as f64 - max);
        for (c, e) in exps.iter().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push(((e / sum - onehot) * inv_batch) as f32);
        }
    }
    Ok(((total * inv_batch) as f32, Tensor::new(vec![batch, classes], grad)?))
}

/// Mean squared error over all elements and its gradient.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::input(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = pred.len() as f64;
    let mut total = 0.0f64;
    let grad: Vec<f32> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            total += d * d;
            (2.0 * d / count) as f32
        })
        .collect();
    Ok(((total / count) as f32, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Index of the largest logit in each row; ties resolve to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let cols = logits.shape()[1];
    logits
        .data()
        .chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
