//! Finetune, LoRA, ModelGPT and ModelGPT-F on one task.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{SizeProfile, TaskKind};
use crate::data::{Batch, Dataset, Split, Targets};
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, softmax_cross_entropy, mse_loss, Linear, MlpParams};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::paramgen::{merge_lora, transpose, LoraAdapter};
use crate::tensor::{matmul_nt, Tensor};
use crate::trainer::{evaluate_metric, task_loss, Checkpoint, TaskRequirementPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Finetune,
    Lora,
    ModelGpt,
    ModelGptF,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Finetune, Method::Lora, Method::ModelGpt, Method::ModelGptF];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Lora => "lora",
            Method::ModelGpt => "modelgpt",
            Method::ModelGptF => "modelgpt_f",
        }
    }

    pub fn needs_checkpoint(self) -> bool {
        matches!(self, Method::ModelGpt | Method::ModelGptF)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub lora_r: usize,
    pub lora_alpha: f32,
    pub lora_dropout: f32,
    /// Hidden width of the LoRA baseline's dense two-layer target.
    pub lora_hidden: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 2e-2,
            weight_decay: 1e-4,
            batch_size: 64,
            seed: 2024,
            lora_r: 4,
            lora_alpha: 8.0,
            lora_dropout: 0.1,
            lora_hidden: 32,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.lora_r == 0 || self.lora_hidden == 0 {
            return Err(Error::Config("batch_size, lora_r and lora_hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.lora_dropout) {
            return Err(Error::Config("lora_dropout must be in [0, 1)".into()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 || !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config("lr and weight_decay must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr, self.weight_decay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub train_acc: f64,
    pub eval_acc: f64,
}

/// Mean loss and metric of `params` on a split.
pub fn split_stats(params: &MlpParams, ds: &Dataset, which: Split) -> Result<(f64, f64)> {
    let rows = if ds.split(which).is_empty() { ds.split(Split::Train) } else { ds.split(which) };
    let batch = ds.batch(rows)?;
    let (loss, _) = task_loss(params, &batch)?;
    Ok((loss as f64, evaluate_metric(params, &batch, ds.task.kind())?))
}

fn epoch_stats(params: &MlpParams, ds: &Dataset, epoch: usize, train_loss: f64) -> Result<EpochStats> {
    let (_, train_acc) = split_stats(params, ds, Split::Train)?;
    let (eval_loss, eval_acc) = split_stats(params, ds, Split::Eval)?;
    Ok(EpochStats {
        epoch,
        train_loss,
        eval_loss,
        train_acc,
        eval_acc,
    })
}

fn shuffled_batches(rows: &[usize], batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order = rows.to_vec();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// All-parameter Adam finetuning with fresh optimizer state. When
/// `record` is set, returns one [`EpochStats`] per epoch (numbered from 1).
pub fn finetune_all(
    init: &MlpParams,
    ds: &Dataset,
    cfg: &BaselineConfig,
    epochs: usize,
    seed: u64,
    record: bool,
) -> Result<(MlpParams, Vec<EpochStats>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init.clone();
    let mut state = AdamState::new(params.num_params());
    let adam = cfg.adam();
    let mut curve = Vec::new();
    for epoch in 1..=epochs {
        let mut loss_sum = 0.0;
        let batches = shuffled_batches(ds.split(Split::Train), cfg.batch_size, &mut rng);
        for rows in &batches {
            let batch = ds.batch(rows)?;
            let (loss, grads) = task_loss(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    step: state.step(),
                    message: format!("{}: non-finite finetune loss", ds.name),
                });
            }
            loss_sum += loss as f64;
            let mut flat = params.flatten();
            adam_step(&mut state, &mut flat, &grads.flatten(), &adam)?;
            params = params.unflatten_like(&flat)?;
        }
        if record {
            curve.push(epoch_stats(&params, ds, epoch, loss_sum / batches.len() as f64)?);
        }
    }
    Ok((params, curve))
}

/// Dense MLP with frozen base weights and trainable low-rank adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraMlp {
    pub base: MlpParams,
    /// One adapter per layer, in layer order.
    pub adapters: Vec<LoraAdapter>,
}

struct LoraLayerCache {
    x: Tensor,
    x_drop: Vec<f32>,
    /// Per-input multiplier (0 or 1/(1-p)); `None` without dropout.
    mask: Option<Vec<f32>>,
    ax: Vec<f32>,
    pre: Tensor,
}

impl LoraMlp {
    /// Adapters on every layer with `A ~ U(±1/√in)` and `B = 0`. The rank is
    /// capped at `min(in, out)` per layer.
    pub fn init<R: Rng>(base: MlpParams, r: usize, alpha: f32, dropout: f32, rng: &mut R) -> Result<Self> {
        let adapters = base
            .layers()
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let r = r.min(l.in_dim()).min(l.out_dim());
                let bound = 1.0 / (l.in_dim() as f32).sqrt();
                let a = (0..r * l.in_dim()).map(|_| rng.random_range(-bound..=bound)).collect();
                Ok(LoraAdapter {
                    target_name: crate::paramgen::layer_name(k),
                    a: Tensor::new(vec![r, l.in_dim()], a)?,
                    b: Tensor::zeros(vec![l.out_dim(), r])?,
                    alpha,
                    r,
                    dropout,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { base, adapters })
    }

    pub fn merged(&self) -> Result<MlpParams> {
        let layers = self
            .base
            .layers()
            .iter()
            .zip(&self.adapters)
            .map(|(l, ad)| Linear::new(merge_lora(&l.weight, ad)?, l.bias.clone()))
            .collect::<Result<_>>()?;
        MlpParams::new(layers)
    }

    /// `y = W x + b + (α/r)·B·A·drop(x)` per layer without merging. Dropout
    /// applies only when `rng` is given.
    pub fn forward_unmerged(&self, x: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        Ok(self.forward_cached(x, rng)?.0)
    }

    fn forward_cached(&self, x: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor, Vec<LoraLayerCache>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.adapters.len());
        let last = self.adapters.len() - 1;
        for (k, (layer, ad)) in self.base.layers().iter().zip(&self.adapters).enumerate() {
            let (n, inn) = h.dims2()?;
            if inn != layer.in_dim() {
                return Err(Error::shape(format!("layer {k} expects {} inputs, got {inn}", layer.in_dim())));
            }
            let out = layer.out_dim();
            let mask: Option<Vec<f32>> = match rng.as_deref_mut() {
                Some(r) if ad.dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - ad.dropout);
                    Some(
                        (0..h.len())
                            .map(|_| if r.random::<f32>() < ad.dropout { 0.0 } else { keep })
                            .collect(),
                    )
                }
                _ => None,
            };
            let x_drop: Vec<f32> = match &mask {
                Some(m) => h.data().iter().zip(m).map(|(v, m)| v * m).collect(),
                None => h.data().to_vec(),
            };
            let ax = matmul_nt(&x_drop, ad.a.data(), n, inn, ad.r);
            let bax = matmul_nt(&ax, ad.b.data(), n, ad.r, out);
            let wx = matmul_nt(h.data(), layer.weight.data(), n, inn, out);
            let s = ad.scale();
            let pre: Vec<f32> = wx
                .iter()
                .zip(&bax)
                .enumerate()
                .map(|(i, (&w, &b))| w + s * b + layer.bias.data()[i % out])
                .collect();
            let pre = Tensor::new(vec![n, out], pre)?;
            let next = if k == last {
                pre.clone()
            } else {
                Tensor::new(vec![n, out], pre.data().iter().map(|v| v.max(0.0)).collect())?
            };
            caches.push(LoraLayerCache {
                x: h,
                x_drop,
                mask,
                ax,
                pre,
            });
            h = next;
        }
        Ok((h, caches))
    }

    /// Loss on a training batch (with dropout) and gradients for every `A`
    /// and `B`, flattened in adapter order `A0, B0, A1, B1, ...`.
    fn loss_and_grads(&self, batch: &Batch, rng: &mut ChaCha8Rng) -> Result<(f32, Vec<f32>)> {
        let (out, caches) = self.forward_cached(&batch.x, Some(rng))?;
        let (loss, mut grad) = match &batch.y {
            Targets::Classes(l) => softmax_cross_entropy(&out, l)?,
            Targets::Values(_) => mse_loss(&out, &batch.value_tensor()?)?,
        };
        let mut per_layer: Vec<(Vec<f32>, Vec<f32>)> = Vec::with_capacity(caches.len());
        let last = caches.len() - 1;
        for k in (0..caches.len()).rev() {
            let (layer, ad, c) = (&self.base.layers()[k], &self.adapters[k], &caches[k]);
            let (n, inn) = c.x.dims2()?;
            let out = layer.out_dim();
            if k != last {
                for (g, &p) in grad.data_mut().iter_mut().zip(c.pre.data()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let s = ad.scale();
            let gy = grad.data();
            let gy_t = transpose(gy, n, out);
            let ax_t = transpose(&c.ax, n, ad.r);
            // dB = s · gyᵀ · ax
            let gb: Vec<f32> = matmul_nt(&gy_t, &ax_t, out, n, ad.r).iter().map(|v| v * s).collect();
            // d(ax) = s · gy · B
            let b_t = transpose(ad.b.data(), out, ad.r);
            let gax: Vec<f32> = matmul_nt(gy, &b_t, n, out, ad.r).iter().map(|v| v * s).collect();
            // dA = d(ax)ᵀ · x_drop
            let gax_t = transpose(&gax, n, ad.r);
            let xd_t = transpose(&c.x_drop, n, inn);
            let ga = matmul_nt(&gax_t, &xd_t, ad.r, n, inn);
            per_layer.push((ga, gb));
            if k > 0 {
                let w_t = transpose(layer.weight.data(), out, inn);
                let mut gx = matmul_nt(gy, &w_t, n, out, inn);
                let a_t = transpose(ad.a.data(), ad.r, inn);
                let gxd = matmul_nt(&gax, &a_t, n, ad.r, inn);
                match &c.mask {
                    Some(m) => gx.iter_mut().zip(&gxd).zip(m).for_each(|((g, d), m)| *g += d * m),
                    None => gx.iter_mut().zip(&gxd).for_each(|(g, d)| *g += d),
                }
                grad = Tensor::new(vec![n, inn], gx)?;
            }
        }
        per_layer.reverse();
        let flat = per_layer.into_iter().flat_map(|(a, b)| a.into_iter().chain(b)).collect();
        Ok((loss, flat))
    }

    fn adapter_flat(&self) -> Vec<f32> {
        self.adapters
            .iter()
            .flat_map(|a| a.a.data().iter().chain(a.b.data()).copied())
            .collect()
    }

    fn set_adapter_flat(&mut self, flat: &[f32]) {
        let mut off = 0;
        for ad in &mut self.adapters {
            for t in [&mut ad.a, &mut ad.b] {
                let n = t.len();
                t.data_mut().copy_from_slice(&flat[off..off + n]);
                off += n;
            }
        }
    }
}

/// Trains only the adapters of a LoRA MLP.
pub fn finetune_lora(model: &mut LoraMlp, ds: &Dataset, cfg: &BaselineConfig, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = model.adapter_flat();
    let mut state = AdamState::new(flat.len());
    let adam = cfg.adam();
    for _ in 0..cfg.epochs {
        for rows in shuffled_batches(ds.split(Split::Train), cfg.batch_size, &mut rng) {
            let batch = ds.batch(&rows)?;
            let (loss, grads) = model.loss_and_grads(&batch, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    step: state.step(),
                    message: format!("{}: non-finite lora loss", ds.name),
                });
            }
            adam_step(&mut state, &mut flat, &grads, &adam)?;
            model.set_adapter_flat(&flat);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub task: String,
    /// Test accuracy, or Pearson correlation for regression.
    pub metric: f64,
    pub epochs: usize,
    pub runtime_s: f64,
    pub checkpoint_id: Option<String>,
}

fn test_metric(params: &MlpParams, ds: &Dataset) -> Result<f64> {
    let rows = if ds.splits.test.is_empty() { ds.split(Split::Train) } else { ds.split(Split::Test) };
    let batch = ds.batch(rows)?;
    evaluate_metric(params, &batch, ds.task.kind())
}

/// Runs one method on one pair; the runtime covers everything from model
/// construction or generation through test-set prediction.
pub fn run_baseline(
    method: Method,
    pair: &TaskRequirementPair,
    checkpoint: Option<&Checkpoint>,
    profile: &SizeProfile,
    cfg: &BaselineConfig,
) -> Result<MethodResult> {
    cfg.validate()?;
    let ds = &pair.dataset;
    if method.needs_checkpoint() && checkpoint.is_none() {
        return Err(Error::Config(format!("{method} needs a hypernetwork checkpoint")));
    }
    let seed = cfg.seed ^ crate::encoder::fnv1a64(ds.name.as_bytes());
    let checkpoint_id = if method.needs_checkpoint() { checkpoint.map(Checkpoint::id) } else { None };
    let start = Instant::now();
    let (metric, epochs) = match method {
        Method::Finetune => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = MlpParams::init_uniform(&profile_dims(ds, profile), &mut rng)?;
            let (p, _) = finetune_all(&init, ds, cfg, cfg.epochs, seed, false)?;
            (test_metric(&p, ds)?, cfg.epochs)
        }
        Method::Lora => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = ds.task.out_dim();
            let base = MlpParams::init_uniform(&[ds.n_features(), cfg.lora_hidden, out], &mut rng)?;
            let mut model = LoraMlp::init(base, cfg.lora_r, cfg.lora_alpha, cfg.lora_dropout, &mut rng)?;
            finetune_lora(&mut model, ds, cfg, seed)?;
            (test_metric(&model.merged()?, ds)?, cfg.epochs)
        }
        Method::ModelGpt | Method::ModelGptF => {
            let ckpt = checkpoint.expect("checked above");
            let id = checkpoint_id.as_deref().expect("set above");
            let model = ckpt.generate_with_id(&pair.requirement, &ds.task, id, 0)?;
            if method == Method::ModelGpt {
                (test_metric(&model.params, ds)?, 0)
            } else {
                let (p, _) = finetune_all(&model.params, ds, cfg, 1, seed, false)?;
                (test_metric(&p, ds)?, 1)
            }
        }
    };
    let runtime_s = start.elapsed().as_secs_f64();
    Ok(MethodResult {
        method,
        task: ds.name.clone(),
        metric,
        epochs,
        runtime_s,
        checkpoint_id,
    })
}

/// Layer widths of the generated-target MLP for `ds`.
pub fn profile_dims(ds: &Dataset, profile: &SizeProfile) -> Vec<usize> {
    let mut dims = vec![ds.n_features()];
    dims.extend(std::iter::repeat_n(profile.hidden_dim, profile.n_layers + 1));
    dims.push(ds.task.out_dim());
    dims
}

/// Predictions of a plain MLP; used by the CLI.
pub fn predict_classes(params: &MlpParams, x: &Tensor, kind: TaskKind) -> Result<Vec<f32>> {
    let out = mlp_forward(params, x)?;
    Ok(match kind {
        TaskKind::Classification => crate::nn::argmax_rows(&out).into_iter().map(|c| c as f32).collect(),
        TaskKind::Regression => out.into_data(),
    })
}
