//! Module-wise parameter generation.
//!
//! Every named target tensor gets its own affine head mapping the latent `z`
//! to the tensor's flattened values, reshaped row-major. Heads are keyed by
//! tensor name *and* shape, so one generator serves targets of different
//! sizes: tasks whose architectures share a tensor shape share its head.

use std::collections::BTreeMap;

use rand::Rng;

use crate::arch::{AdapterMode, ArchitectureSpec};
use crate::encoder::{affine, affine_backward};
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, Linear, MlpParams};
use crate::tensor::{matmul_nt, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Weight,
    Bias,
    LoraA,
    LoraB,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: EntryKind,
    /// Input width of the layer the tensor belongs to.
    pub fan_in: usize,
}

impl RegistryEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Generator head key: name plus shape, e.g. `layer0.weight:32x4`.
    pub fn head_key(&self) -> String {
        let dims: Vec<String> = self.shape.iter().map(usize::to_string).collect();
        format!("{}:{}", self.name, dims.join("x"))
    }
}

/// Ordered table of the tensors a target architecture needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRegistry {
    entries: Vec<RegistryEntry>,
}

impl ShapeRegistry {
    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(RegistryEntry::numel).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn layer_name(k: usize) -> String {
    format!("layer{k}")
}

/// Canonical registry: layer by layer, weight before bias (or A before B).
pub fn register_shapes(spec: &ArchitectureSpec) -> Result<ShapeRegistry> {
    spec.validate()?;
    let dims = spec.layer_dims();
    let mut entries = Vec::new();
    match spec.adapter_mode {
        AdapterMode::FullWeights => {
            for (k, w) in dims.windows(2).enumerate() {
                let (inn, out) = (w[0], w[1]);
                entries.push(RegistryEntry {
                    name: format!("{}.weight", layer_name(k)),
                    shape: vec![out, inn],
                    kind: EntryKind::Weight,
                    fan_in: inn,
                });
                entries.push(RegistryEntry {
                    name: format!("{}.bias", layer_name(k)),
                    shape: vec![out],
                    kind: EntryKind::Bias,
                    fan_in: inn,
                });
            }
        }
        AdapterMode::Lora => {
            let lora = spec.lora.as_ref().expect("validated");
            let names: Vec<String> = (0..spec.num_layers()).map(layer_name).collect();
            if let Some(t) = lora.targets.iter().find(|t| !names.contains(t)) {
                return Err(Error::Config(format!("lora target {t:?} is not a layer")));
            }
            if lora.r == 0 {
                return Err(Error::Config("lora rank must be positive".into()));
            }
            for (k, w) in dims.windows(2).enumerate() {
                let name = layer_name(k);
                if !lora.targets.contains(&name) {
                    continue;
                }
                let (inn, out) = (w[0], w[1]);
                if lora.r > inn.min(out) {
                    return Err(Error::Config(format!(
                        "lora rank {} exceeds min({inn}, {out}) for {name}",
                        lora.r
                    )));
                }
                entries.push(RegistryEntry {
                    name: format!("{name}.lora_A"),
                    shape: vec![lora.r, inn],
                    kind: EntryKind::LoraA,
                    fan_in: inn,
                });
                entries.push(RegistryEntry {
                    name: format!("{name}.lora_B"),
                    shape: vec![out, lora.r],
                    kind: EntryKind::LoraB,
                    fan_in: lora.r,
                });
            }
        }
    }
    Ok(ShapeRegistry { entries })
}

/// Per-tensor affine heads, `latent_dim → numel`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    latent_dim: usize,
    heads: BTreeMap<String, Linear>,
}

impl GeneratorParams {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            heads: BTreeMap::new(),
        }
    }

    pub fn from_heads(latent_dim: usize, heads: BTreeMap<String, Linear>) -> Result<Self> {
        for (k, h) in &heads {
            if h.in_dim() != latent_dim {
                return Err(Error::Consistency(format!(
                    "head {k} takes {} inputs, latent is {latent_dim}",
                    h.in_dim()
                )));
            }
        }
        Ok(Self { latent_dim, heads })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn heads(&self) -> &BTreeMap<String, Linear> {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> impl Iterator<Item = (&String, &mut Linear)> {
        self.heads.iter_mut()
    }

    pub fn head(&self, key: &str) -> Option<&Linear> {
        self.heads.get(key)
    }

    pub fn insert_head(&mut self, key: String, head: Linear) -> Result<()> {
        if head.in_dim() != self.latent_dim {
            return Err(Error::Consistency(format!(
                "head {key} takes {} inputs, latent is {}",
                head.in_dim(),
                self.latent_dim
            )));
        }
        self.heads.insert(key, head);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.heads.values().map(|h| h.weight.len() + h.bias.len()).sum()
    }

    /// Adds freshly initialized heads for every registry entry that lacks one.
    ///
    /// Head weights are uniform in ±0.01/√d; head biases are uniform in
    /// ±1/√fan_in of the target layer, except LoRA `B` heads whose bias
    /// starts at zero so the initial adapter is a no-op.
    pub fn ensure_heads<R: Rng>(&mut self, registry: &ShapeRegistry, rng: &mut R) -> Result<usize> {
        let mut added = 0;
        for e in registry.entries() {
            let key = e.head_key();
            if self.heads.contains_key(&key) {
                continue;
            }
            let n = e.numel();
            let wb = 0.01 / (self.latent_dim as f32).sqrt();
            let w = (0..n * self.latent_dim)
                .map(|_| rng.random_range(-wb..wb))
                .collect();
            let b = match e.kind {
                EntryKind::LoraB => vec![0.0; n],
                _ => {
                    let bb = 1.0 / (e.fan_in as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-bb..bb)).collect()
                }
            };
            let head = Linear::new(Tensor::new(vec![n, self.latent_dim], w)?, Tensor::vector(b)?)?;
            self.heads.insert(key, head);
            added += 1;
        }
        Ok(added)
    }

    pub fn zeros_like(&self) -> Self {
        let heads = self
            .heads
            .iter()
            .map(|(k, h)| {
                (
                    k.clone(),
                    Linear {
                        weight: Tensor::zeros(h.weight.shape().to_vec()).expect("valid"),
                        bias: Tensor::zeros(h.bias.shape().to_vec()).expect("valid"),
                    },
                )
            })
            .collect();
        Self {
            latent_dim: self.latent_dim,
            heads,
        }
    }

    fn head_for(&self, e: &RegistryEntry) -> Result<&Linear> {
        let key = e.head_key();
        let head = self
            .heads
            .get(&key)
            .ok_or_else(|| Error::Consistency(format!("generator has no head for {key}")))?;
        if head.out_dim() != e.numel() || head.in_dim() != self.latent_dim {
            return Err(Error::Consistency(format!(
                "head {key} is {}×{}, registry needs {}×{}",
                head.out_dim(),
                head.in_dim(),
                e.numel(),
                self.latent_dim
            )));
        }
        Ok(head)
    }
}

/// Generated tensors in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f32> {
        self.entries.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    /// Same names and shapes, new values.
    pub fn with_flat(&self, flat: &[f32]) -> Result<Self> {
        if flat.len() != self.total_elements() {
            return Err(Error::shape(format!(
                "{} values for a parameter set of {}",
                flat.len(),
                self.total_elements()
            )));
        }
        let mut off = 0;
        let mut entries = Vec::with_capacity(self.entries.len());
        for (n, t) in &self.entries {
            let len = t.len();
            entries.push((n.clone(), Tensor::new(t.shape().to_vec(), flat[off..off + len].to_vec())?));
            off += len;
        }
        Ok(Self { entries })
    }

    /// Full-weights parameter set of an MLP, in registry order.
    pub fn from_mlp(mlp: &MlpParams) -> Self {
        let mut entries = Vec::with_capacity(mlp.layers().len() * 2);
        for (k, l) in mlp.layers().iter().enumerate() {
            entries.push((format!("{}.weight", layer_name(k)), l.weight.clone()));
            entries.push((format!("{}.bias", layer_name(k)), l.bias.clone()));
        }
        Self { entries }
    }

    /// Rebuilds an MLP from a full-weights parameter set.
    pub fn to_mlp(&self) -> Result<MlpParams> {
        if self.entries.len() % 2 != 0 || self.entries.is_empty() {
            return Err(Error::Consistency("full-weights parameter set must pair weights with biases".into()));
        }
        let mut layers = Vec::with_capacity(self.entries.len() / 2);
        for (k, pair) in self.entries.chunks(2).enumerate() {
            let (wn, w) = &pair[0];
            let (bn, b) = &pair[1];
            let ln = layer_name(k);
            if *wn != format!("{ln}.weight") || *bn != format!("{ln}.bias") {
                return Err(Error::Consistency(format!(
                    "expected {ln}.weight/{ln}.bias, found {wn}/{bn}"
                )));
            }
            layers.push(Linear::new(w.clone(), b.clone())?);
        }
        MlpParams::new(layers)
    }
}

/// `θt = G(z; θg)`: every head applied to `z`, reshaped to its entry.
pub fn generate(z: &Tensor, gp: &GeneratorParams, registry: &ShapeRegistry) -> Result<ParameterSet> {
    if z.shape() != [gp.latent_dim] {
        return Err(Error::shape(format!(
            "latent has shape {:?}, generator expects [{}]",
            z.shape(),
            gp.latent_dim
        )));
    }
    let mut entries = Vec::with_capacity(registry.len());
    for e in registry.entries() {
        let head = gp.head_for(e)?;
        let flat = affine(head, z.data());
        entries.push((e.name.clone(), Tensor::new(e.shape.clone(), flat)?));
    }
    Ok(ParameterSet { entries })
}

/// Accumulates head gradients for upstream `∂/∂θt`; returns `∂/∂z`.
pub fn generate_backward(
    upstream: &ParameterSet,
    z: &Tensor,
    gp: &GeneratorParams,
    registry: &ShapeRegistry,
    grads: &mut GeneratorParams,
) -> Result<Vec<f32>> {
    if upstream.entries.len() != registry.len() {
        return Err(Error::Consistency(format!(
            "upstream has {} tensors, registry has {}",
            upstream.entries.len(),
            registry.len()
        )));
    }
    let mut grad_z = vec![0.0f32; gp.latent_dim];
    for (e, (name, g)) in registry.entries().iter().zip(&upstream.entries) {
        if *name != e.name || g.shape() != e.shape.as_slice() {
            return Err(Error::Consistency(format!(
                "upstream tensor {name} {:?} does not match registry entry {} {:?}",
                g.shape(),
                e.name,
                e.shape
            )));
        }
        let head = gp.head_for(e)?;
        let key = e.head_key();
        let gh = grads
            .heads
            .get_mut(&key)
            .ok_or_else(|| Error::Consistency(format!("gradient buffer has no head {key}")))?;
        let gz = affine_backward(head, z.data(), g.data(), gh);
        for (a, b) in grad_z.iter_mut().zip(gz) {
            *a += b;
        }
    }
    Ok(grad_z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub target_name: String,
    /// `r × in`
    pub a: Tensor,
    /// `out × r`
    pub b: Tensor,
    pub alpha: f32,
    pub r: usize,
    /// Only used by training-time forward passes.
    pub dropout: f32,
}

impl LoraAdapter {
    pub fn scale(&self) -> f32 {
        self.alpha / self.r as f32
    }

    pub fn validate_for(&self, out: usize, inn: usize) -> Result<()> {
        let (ar, ai) = self.a.dims2()?;
        let (bo, br) = self.b.dims2()?;
        if ar != self.r || br != self.r || ai != inn || bo != out {
            return Err(Error::shape(format!(
                "adapter {} has A {:?}, B {:?}, r={}; target weight is {out}×{inn}",
                self.target_name,
                self.a.shape(),
                self.b.shape(),
                self.r
            )));
        }
        if self.r == 0 || self.r > out.min(inn) {
            return Err(Error::shape(format!(
                "adapter rank {} invalid for a {out}×{inn} weight",
                self.r
            )));
        }
        Ok(())
    }
}

/// `W′ = W + (α/r)·B·A`.
pub fn merge_lora(base: &Tensor, adapter: &LoraAdapter) -> Result<Tensor> {
    let (out, inn) = base.dims2()?;
    adapter.validate_for(out, inn)?;
    if adapter.alpha == 0.0 {
        return Ok(base.clone());
    }
    // B·A = B · (Aᵀ)ᵀ
    let a_t = transpose(adapter.a.data(), adapter.r, inn);
    let ba = matmul_nt(adapter.b.data(), &a_t, out, adapter.r, inn);
    let s = adapter.scale();
    let data = base
        .data()
        .iter()
        .zip(ba)
        .map(|(&w, d)| if d == 0.0 { w } else { w + s * d })
        .collect();
    Tensor::new(vec![out, inn], data)
}

pub(crate) fn transpose(m: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = m[r * cols + c];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub requirement: String,
    pub checkpoint_id: String,
    /// Seconds since the Unix epoch, supplied by the caller.
    pub timestamp: u64,
}

/// A ready-to-use target model.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedModel {
    pub spec: ArchitectureSpec,
    pub params: MlpParams,
    pub provenance: Provenance,
}

impl GeneratedModel {
    pub fn new(spec: ArchitectureSpec, params: MlpParams, provenance: Provenance) -> Result<Self> {
        check_mlp_matches(&spec, &params)?;
        Ok(Self {
            spec,
            params,
            provenance,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        mlp_forward(&self.params, x)
    }
}

fn check_mlp_matches(spec: &ArchitectureSpec, mlp: &MlpParams) -> Result<()> {
    let dims = spec.layer_dims();
    if mlp.layers().len() != dims.len() - 1 {
        return Err(Error::shape(format!(
            "architecture has {} layers, parameters have {}",
            dims.len() - 1,
            mlp.layers().len()
        )));
    }
    for (k, (l, w)) in mlp.layers().iter().zip(dims.windows(2)).enumerate() {
        if l.in_dim() != w[0] || l.out_dim() != w[1] {
            return Err(Error::shape(format!(
                "layer {k} is {}×{}, architecture needs {}×{}",
                l.out_dim(),
                l.in_dim(),
                w[1],
                w[0]
            )));
        }
    }
    Ok(())
}

/// Assembles generated tensors into a model. LoRA mode merges the adapters
/// into `base`; full-weights mode ignores `base`.
pub fn assemble_model(
    spec: &ArchitectureSpec,
    params: &ParameterSet,
    base: Option<&MlpParams>,
    provenance: Provenance,
) -> Result<GeneratedModel> {
    let registry = register_shapes(spec)?;
    if params.entries.len() != registry.len() {
        return Err(Error::Consistency(format!(
            "parameter set has {} tensors, architecture needs {}",
            params.entries.len(),
            registry.len()
        )));
    }
    for (e, (n, t)) in registry.entries().iter().zip(&params.entries) {
        if *n != e.name || t.shape() != e.shape.as_slice() {
            return Err(Error::Consistency(format!(
                "tensor {n} {:?} does not match registry entry {} {:?}",
                t.shape(),
                e.name,
                e.shape
            )));
        }
    }
    let mlp = match spec.adapter_mode {
        AdapterMode::FullWeights => params.to_mlp()?,
        AdapterMode::Lora => {
            let base = base.ok_or_else(|| Error::input("lora assembly needs base parameters"))?;
            check_mlp_matches(spec, base)?;
            let lora = spec.lora.as_ref().expect("validated");
            let mut layers = base.layers().to_vec();
            for (k, layer) in layers.iter_mut().enumerate() {
                let name = layer_name(k);
                if !lora.targets.contains(&name) {
                    continue;
                }
                let adapter = LoraAdapter {
                    target_name: name.clone(),
                    a: params.get(&format!("{name}.lora_A")).expect("registry-checked").clone(),
                    b: params.get(&format!("{name}.lora_B")).expect("registry-checked").clone(),
                    alpha: lora.alpha,
                    r: lora.r,
                    dropout: lora.dropout,
                };
                layer.weight = merge_lora(&layer.weight, &adapter)?;
            }
            MlpParams::new(layers)?
        }
    };
    GeneratedModel::new(spec.clone(), mlp, provenance)
}
