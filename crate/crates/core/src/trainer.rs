//! Meta-training of the hypernetwork over task-requirement pairs.
//!
//! Each batch generates the target tensors from the pair's requirement,
//! takes one optimizer step on them with the task loss, and uses the applied
//! change `Δθt` as the learning signal: the upstream gradient at the
//! generator output is `−Δθt`, i.e. the gradient of `⟨−Δθt, G(M(E(r)))⟩`
//! with `Δθt` held constant. With plain SGD on the target side this is
//! exactly `target_lr` times the true gradient of the task loss.
//!
//! After every epoch the sum over pairs of the mean eval-split loss is
//! computed and the best-scoring parameters are kept.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{infer_task_type, RuleTable, SizeProfile, TaskKind, TaskType};
use crate::data::{Batch, Dataset, Split, Targets};
use crate::encoder::fnv1a64;
use crate::error::{Error, Result};
use crate::hypernet::{HyperForward, Hypernet};
use crate::nn::{mlp_backward, mlp_forward_traced, mse_loss, softmax_cross_entropy, MlpParams};
use crate::optim::{adam_step, sgd_delta, AdamConfig, AdamState};
use crate::paramgen::{assemble_model, register_shapes, GeneratedModel, ParameterSet, Provenance};
use crate::requirement::{Requirement, TaskMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerOptimizer {
    /// Adam with fresh moment estimates for every batch.
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub hyper_lr: f32,
    pub hyper_weight_decay: f32,
    pub target_lr: f32,
    pub target_weight_decay: f32,
    pub seed: u64,
    pub inner_optimizer: InnerOptimizer,
    /// Batches per epoch for a pair with portion 1. Defaults to the largest
    /// pair's natural batch count.
    pub base_batches: Option<usize>,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            batch_size: 64,
            latent_dim: 25,
            hyper_lr: 1e-3,
            hyper_weight_decay: 1e-4,
            target_lr: 2e-2,
            target_weight_decay: 1e-4,
            seed: 2024,
            inner_optimizer: InnerOptimizer::Adam,
            base_batches: None,
            embed_dim: 64,
            vocab_size: 4096,
            hidden_dim: 32,
            n_layers: 1,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("latent_dim", self.latent_dim),
            ("embed_dim", self.embed_dim),
            ("vocab_size", self.vocab_size),
            ("hidden_dim", self.hidden_dim),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.base_batches == Some(0) {
            return Err(Error::Config("base_batches must be positive".into()));
        }
        let rates = [
            ("hyper_lr", self.hyper_lr),
            ("hyper_weight_decay", self.hyper_weight_decay),
            ("target_lr", self.target_lr),
            ("target_weight_decay", self.target_weight_decay),
        ];
        if let Some((k, _)) = rates.iter().find(|(_, v)| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("{k} must be a finite non-negative number")));
        }
        Ok(())
    }

    pub fn profile(&self) -> SizeProfile {
        SizeProfile {
            hidden_dim: self.hidden_dim,
            n_layers: self.n_layers,
        }
    }

    fn inner(&self) -> InnerConfig {
        InnerConfig {
            optimizer: self.inner_optimizer,
            lr: self.target_lr,
            weight_decay: self.target_weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRequirementPair {
    pub dataset: Dataset,
    pub requirement: Requirement,
    pub portion: f64,
}

impl TaskRequirementPair {
    pub fn new(dataset: Dataset, requirement: Requirement) -> Self {
        Self {
            dataset,
            requirement,
            portion: 1.0,
        }
    }

    /// Checks the requirement resolves to the dataset's task.
    pub fn validate(&self, rules: &RuleTable) -> Result<TaskType> {
        if !(self.portion.is_finite() && self.portion > 0.0) {
            return Err(Error::input(format!("{}: portion must be positive", self.dataset.name)));
        }
        if self.dataset.n_rows() == 0 || self.dataset.splits.train.is_empty() {
            return Err(Error::input(format!("{}: dataset is empty", self.dataset.name)));
        }
        let meta = self.dataset.meta();
        let t = infer_task_type(&self.requirement, Some(&meta), rules)?;
        if t != self.dataset.task {
            return Err(Error::Consistency(format!(
                "{}: requirement resolves to {t:?}, dataset is {:?}",
                self.dataset.name, self.dataset.task
            )));
        }
        Ok(t)
    }
}

/// Mean task loss of an MLP on a batch and its gradient for every tensor.
pub fn task_loss(params: &MlpParams, batch: &Batch) -> Result<(f32, MlpParams)> {
    let trace = mlp_forward_traced(params, &batch.x)?;
    let out = trace.output();
    let (loss, grad) = match &batch.y {
        Targets::Classes(labels) => softmax_cross_entropy(out, labels)?,
        Targets::Values(_) => mse_loss(out, &batch.value_tensor()?)?,
    };
    let grads = mlp_backward(params, &trace, &grad)?;
    Ok((loss, grads))
}

/// Target-side optimizer settings for one inner step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub optimizer: InnerOptimizer,
    pub lr: f32,
    pub weight_decay: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerStep {
    pub loss: f32,
    /// `θt′ − θt`, as applied.
    pub delta: ParameterSet,
}

/// One optimizer step on generated full weights. `θt` is not modified.
pub fn inner_step(theta: &ParameterSet, batch: &Batch, cfg: &InnerConfig) -> Result<InnerStep> {
    let mlp = theta.to_mlp()?;
    let (loss, grads) = task_loss(&mlp, batch)?;
    if !loss.is_finite() {
        return Err(Error::Training {
            step: 0,
            message: "non-finite task loss".into(),
        });
    }
    let p = mlp.flatten();
    let g = grads.flatten();
    let delta = match cfg.optimizer {
        InnerOptimizer::Sgd => sgd_delta(&p, &g, cfg.lr, cfg.weight_decay)?,
        InnerOptimizer::Adam => {
            let mut state = AdamState::new(p.len());
            state.delta(&p, &g, &AdamConfig::new(cfg.lr, cfg.weight_decay))?
        }
    };
    Ok(InnerStep {
        loss,
        delta: theta.with_flat(&delta)?,
    })
}

/// Accumulates `∂θp` for the upstream gradient `−Δθt` at the generator output.
pub fn hyper_backward(delta: &ParameterSet, fwd: &HyperForward, net: &Hypernet, grads: &mut Hypernet) -> Result<()> {
    let neg: Vec<f32> = delta.flatten().iter().map(|d| -d).collect();
    let upstream = delta.with_flat(&neg)?;
    net.backward(&upstream, fwd, grads)
}

/// One scheduled mini-batch: train-split rows of one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledBatch {
    pub pair: usize,
    pub batch: usize,
    pub rows: Vec<usize>,
}

/// Per-epoch schedule. Pair `i` contributes `round(portion_i · base_batches)`
/// batches drawn from a seeded shuffle of its train rows, reshuffling when
/// the rows run out. Pairs appear in order.
pub fn balance_tasks<R: Rng>(
    train_rows: &[&[usize]],
    portions: &[f64],
    base_batches: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<ScheduledBatch>> {
    if train_rows.len() != portions.len() {
        return Err(Error::input("one portion per pair is required"));
    }
    if batch_size == 0 {
        return Err(Error::input("batch size must be positive"));
    }
    if portions.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::input("portions must be positive"));
    }
    let counts: Vec<usize> = portions
        .iter()
        .map(|p| (p * base_batches as f64).round() as usize)
        .collect();
    if counts.iter().sum::<usize>() == 0 {
        return Err(Error::input("portions schedule no batches"));
    }
    let mut out = Vec::with_capacity(counts.iter().sum());
    for (pair, (&rows, &count)) in train_rows.iter().zip(&counts).enumerate() {
        if rows.is_empty() {
            return Err(Error::input(format!("pair {pair} has no training rows")));
        }
        let mut order = rows.to_vec();
        order.shuffle(rng);
        let mut cursor = 0;
        for batch in 0..count {
            if cursor >= order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let end = (cursor + batch_size).min(order.len());
            out.push(ScheduledBatch {
                pair,
                batch,
                rows: order[cursor..end].to_vec(),
            });
            cursor = end;
        }
    }
    Ok(out)
}

/// Dataset reads made by the trainer, by dataset name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataAccessLog {
    reads: BTreeMap<String, usize>,
}

impl DataAccessLog {
    pub fn record(&mut self, dataset: &str) {
        *self.reads.entry(dataset.to_string()).or_default() += 1;
    }

    pub fn reads(&self, dataset: &str) -> usize {
        self.reads.get(dataset).copied().unwrap_or(0)
    }

    pub fn datasets(&self) -> impl Iterator<Item = &str> {
        self.reads.keys().map(String::as_str)
    }
}

/// Best hypernetwork parameters seen during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hypernet: Hypernet,
    pub config: TrainConfig,
    pub epoch: usize,
    /// Sum over pairs of each pair's mean eval-split loss.
    pub avg_eval_loss: f64,
    /// Names of the datasets the hypernetwork was trained on.
    pub tasks: Vec<String>,
}

impl Checkpoint {
    /// Content hash of every parameter plus the selection metadata.
    pub fn id(&self) -> String {
        let mut bytes = Vec::with_capacity(self.hypernet.num_params() * 4 + 256);
        for (name, t) in self.hypernet.named_tensors() {
            bytes.extend_from_slice(name.as_bytes());
            for d in t.shape() {
                bytes.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        bytes.extend_from_slice(&self.avg_eval_loss.to_le_bytes());
        format!("{:016x}", fnv1a64(&bytes))
    }

    /// Generates a ready model for `req`. No dataset is involved: the
    /// architecture comes from the sentence (plus optional metadata) and the
    /// weights from one forward pass.
    pub fn generate_model(
        &self,
        req: &Requirement,
        meta: Option<&TaskMeta>,
        rules: &RuleTable,
        timestamp: u64,
    ) -> Result<GeneratedModel> {
        let task = infer_task_type(req, meta, rules)?;
        self.generate_for_task(req, &task, timestamp)
    }

    pub fn generate_for_task(&self, req: &Requirement, task: &TaskType, timestamp: u64) -> Result<GeneratedModel> {
        self.generate_with_id(req, task, &self.id(), timestamp)
    }

    /// [`generate_for_task`](Self::generate_for_task) with a precomputed
    /// [`id`](Self::id), which hashes every parameter.
    pub fn generate_with_id(&self, req: &Requirement, task: &TaskType, id: &str, timestamp: u64) -> Result<GeneratedModel> {
        let fwd = self.hypernet.forward(req, task)?;
        assemble_model(
            &fwd.spec,
            &fwd.params,
            None,
            Provenance {
                requirement: req.sentence().to_string(),
                checkpoint_id: id.to_string(),
                timestamp,
            },
        )
    }
}

/// Everything `train` observed, for reports and tests.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    /// Eval objective after every epoch.
    pub epoch_losses: Vec<f64>,
    /// `(epoch, objective)` for every saved checkpoint, in order.
    pub saved: Vec<(usize, f64)>,
    pub access_log: DataAccessLog,
}

pub fn train(pairs: &[TaskRequirementPair], cfg: &TrainConfig) -> Result<Checkpoint> {
    Ok(train_with_report(pairs, cfg)?.checkpoint)
}

pub fn train_with_report(pairs: &[TaskRequirementPair], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::input("training needs at least one task-requirement pair"));
    }
    let rules = RuleTable::default();
    let tasks: Vec<TaskType> = pairs.iter().map(|p| p.validate(&rules)).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Hypernet::init(cfg.vocab_size, cfg.embed_dim, cfg.latent_dim, cfg.profile(), &mut rng)?;
    for t in &tasks {
        let reg = register_shapes(&net.spec_for(t))?;
        net.generator.ensure_heads(&reg, &mut rng)?;
    }
    let hyper_cfg = AdamConfig::new(cfg.hyper_lr, cfg.hyper_weight_decay);
    let mut states: Vec<AdamState> = net.named_tensors().iter().map(|(_, t)| AdamState::new(t.len())).collect();
    let inner = cfg.inner();

    let base_batches = cfg.base_batches.unwrap_or_else(|| {
        pairs
            .iter()
            .map(|p| p.dataset.splits.train.len().div_ceil(cfg.batch_size))
            .max()
            .unwrap_or(1)
    });
    let portions: Vec<f64> = pairs.iter().map(|p| p.portion).collect();
    let train_rows: Vec<&[usize]> = pairs.iter().map(|p| p.dataset.split(Split::Train)).collect();

    let mut log = DataAccessLog::default();
    let names: Vec<String> = pairs.iter().map(|p| p.dataset.name.clone()).collect();
    let mut best: Option<Checkpoint> = None;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut saved = Vec::new();
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let schedule = balance_tasks(&train_rows, &portions, base_batches, cfg.batch_size, &mut rng)?;
        for sb in &schedule {
            let pair = &pairs[sb.pair];
            log.record(&pair.dataset.name);
            let batch = pair.dataset.batch(&sb.rows)?;
            let fwd = net.forward(&pair.requirement, &tasks[sb.pair])?;
            let st = inner_step(&fwd.params, &batch, &inner).map_err(|e| match e {
                Error::Training { message, .. } => Error::Training {
                    step,
                    message: format!("task {} batch {}: {message}", pair.dataset.name, sb.batch),
                },
                other => other,
            })?;
            let mut grads = net.zeros_like();
            hyper_backward(&st.delta, &fwd, &net, &mut grads)?;
            let grad_data: Vec<Vec<f32>> = grads.named_tensors().iter().map(|(_, t)| t.data().to_vec()).collect();
            let mut failure = None;
            net.visit_mut(|i, t| {
                if failure.is_some() {
                    return;
                }
                if let Err(e) = adam_step(&mut states[i], t.data_mut(), &grad_data[i], &hyper_cfg) {
                    failure = Some(e);
                }
            });
            if let Some(e) = failure {
                return Err(match e {
                    Error::Training { message, .. } => Error::Training {
                        step,
                        message: format!("hypernetwork update: {message}"),
                    },
                    other => other,
                });
            }
            net.touch();
            step += 1;
        }

        let objective = eval_objective(&net, pairs, &tasks, &mut log)?;
        epoch_losses.push(objective);
        if !objective.is_finite() {
            return match best {
                Some(ckpt) => Err(Error::Diverged {
                    epoch,
                    checkpoint: Box::new(ckpt),
                }),
                None => Err(Error::Training {
                    step,
                    message: format!("eval objective is {objective} after the first epoch"),
                }),
            };
        }
        log::debug!("epoch {epoch}: eval objective {objective:.5}");
        if best.as_ref().is_none_or(|b| objective < b.avg_eval_loss) {
            saved.push((epoch, objective));
            best = Some(Checkpoint {
                hypernet: net.clone(),
                config: cfg.clone(),
                epoch,
                avg_eval_loss: objective,
                tasks: names.clone(),
            });
        }
    }

    let checkpoint = match best {
        Some(c) => c,
        // zero epochs: score the initial parameters
        None => {
            let objective = eval_objective(&net, pairs, &tasks, &mut log)?;
            saved.push((0, objective));
            Checkpoint {
                hypernet: net,
                config: cfg.clone(),
                epoch: 0,
                avg_eval_loss: objective,
                tasks: names,
            }
        }
    };
    Ok(TrainReport {
        checkpoint,
        epoch_losses,
        saved,
        access_log: log,
    })
}

/// `Σᵢ Lᵢ` with `Lᵢ` the mean eval-split loss of pair `i`'s generated model.
fn eval_objective(net: &Hypernet, pairs: &[TaskRequirementPair], tasks: &[TaskType], log: &mut DataAccessLog) -> Result<f64> {
    let mut total = 0.0f64;
    for (pair, task) in pairs.iter().zip(tasks) {
        log.record(&pair.dataset.name);
        let split = if pair.dataset.splits.eval.is_empty() {
            Split::Train
        } else {
            Split::Eval
        };
        let batch = pair.dataset.split_batch(split)?;
        let fwd = net.forward(&pair.requirement, task)?;
        let (loss, _) = task_loss(&fwd.params.to_mlp()?, &batch)?;
        total += loss as f64;
    }
    Ok(total)
}

/// Fraction of correct argmax predictions, or Pearson correlation for
/// regression targets.
pub fn evaluate_metric(params: &MlpParams, batch: &Batch, kind: TaskKind) -> Result<f64> {
    let out = crate::nn::mlp_forward(params, &batch.x)?;
    match (&batch.y, kind) {
        (Targets::Classes(labels), TaskKind::Classification) => {
            let pred = crate::nn::argmax_rows(&out);
            let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
            Ok(hits as f64 / labels.len() as f64)
        }
        (Targets::Values(v), TaskKind::Regression) => Ok(pearson(out.data(), v)),
        _ => Err(Error::input("metric kind does not match batch targets")),
    }
}

fn pearson(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::tensor::Tensor;

    fn one_by_one(w: f32) -> ParameterSet {
        ParameterSet::from_mlp(
            &MlpParams::new(vec![Linear::new(
                Tensor::from_rows(&[[w]]).unwrap(),
                Tensor::vector(vec![0.0]).unwrap(),
            )
            .unwrap()])
            .unwrap(),
        )
    }

    fn regression_batch(rows: usize) -> Batch {
        Batch {
            x: Tensor::new(vec![rows, 1], vec![1.0; rows]).unwrap(),
            y: Targets::Values(vec![2.0; rows]),
        }
    }

    #[test]
    fn sgd_inner_step_hand_case() {
        let cfg = InnerConfig {
            optimizer: InnerOptimizer::Sgd,
            lr: 0.1,
            weight_decay: 0.0,
        };
        let st = inner_step(&one_by_one(0.0), &regression_batch(1), &cfg).unwrap();
        assert_eq!(st.loss, 4.0);
        // weight gradient −4 → Δ = +0.4; bias gradient also −4
        assert_eq!(st.delta.flatten(), vec![0.1f32 * 4.0, 0.1f32 * 4.0]);
    }

    #[test]
    fn repeated_samples_match_single() {
        let cfg = InnerConfig {
            optimizer: InnerOptimizer::Adam,
            lr: 0.02,
            weight_decay: 1e-4,
        };
        let a = inner_step(&one_by_one(0.3), &regression_batch(1), &cfg).unwrap();
        let b = inner_step(&one_by_one(0.3), &regression_batch(5), &cfg).unwrap();
        assert_eq!(a.delta, b.delta);
    }

    #[test]
    fn tiny_lr_gives_tiny_delta() {
        let cfg = InnerConfig {
            optimizer: InnerOptimizer::Sgd,
            lr: 1e-9,
            weight_decay: 0.0,
        };
        let st = inner_step(&one_by_one(0.0), &regression_batch(1), &cfg).unwrap();
        assert!(st.delta.flatten().iter().all(|d| d.abs() <= 1e-9 * 4.0 * 1.0001));
    }

    #[test]
    fn zero_classifier_loss_is_ln_c() {
        let mlp = MlpParams::new(vec![Linear::new(
            Tensor::zeros(vec![4, 3]).unwrap(),
            Tensor::zeros(vec![4]).unwrap(),
        )
        .unwrap()])
        .unwrap();
        let batch = Batch {
            x: Tensor::from_rows(&[[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]]).unwrap(),
            y: Targets::Classes(vec![0, 3]),
        };
        let (loss, _) = task_loss(&mlp, &batch).unwrap();
        assert!((loss as f64 - 4f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn balance_examples() {
        let a: Vec<usize> = (0..640).collect();
        let b: Vec<usize> = (0..640).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = balance_tasks(&[&a, &b], &[1.0, 1.0], 10, 64, &mut rng).unwrap();
        assert_eq!(s.iter().filter(|x| x.pair == 0).count(), 10);
        assert_eq!(s.iter().filter(|x| x.pair == 1).count(), 10);
        let s = balance_tasks(&[&a, &b], &[2.0, 1.0], 10, 64, &mut rng).unwrap();
        assert_eq!(s.iter().filter(|x| x.pair == 0).count(), 20);
        assert_eq!(s.iter().filter(|x| x.pair == 1).count(), 10);
        assert!(balance_tasks(&[&a], &[0.0], 10, 64, &mut rng).is_err());
        assert!(balance_tasks(&[&a], &[0.01], 10, 64, &mut rng).is_err());
    }

    #[test]
    fn balance_cycles_small_datasets() {
        // 3 batches' worth of rows, 7 batches requested
        let rows: Vec<usize> = (0..12).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = balance_tasks(&[&rows], &[1.0], 7, 4, &mut rng).unwrap();
        assert_eq!(s.len(), 7);
        for chunk in s.chunks(3) {
            let mut seen: Vec<usize> = chunk.iter().flat_map(|b| b.rows.clone()).collect();
            if chunk.len() == 3 {
                seen.sort();
                assert_eq!(seen, rows);
            }
        }
        let again = balance_tasks(&[&rows], &[1.0], 7, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn config_defaults_and_parsing() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.latent_dim, c.seed), (80, 64, 25, 2024));
        assert_eq!((c.hyper_lr, c.hyper_weight_decay), (1e-3, 1e-4));
        assert_eq!((c.target_lr, c.target_weight_decay), (2e-2, 1e-4));
        assert_eq!(c.inner_optimizer, InnerOptimizer::Adam);
        let parsed = TrainConfig::from_toml("epochs = 3\ninner_optimizer = \"sgd\"\n").unwrap();
        assert_eq!(parsed.epochs, 3);
        assert_eq!(parsed.inner_optimizer, InnerOptimizer::Sgd);
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(TrainConfig::from_toml("batch_size = 0").is_err());
        assert!(TrainConfig::from_toml("unknown = 1").is_err());
    }
}
