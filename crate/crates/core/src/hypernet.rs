//! The full parameter generator: requirement → `z0` → `z` → target tensors.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::arch::{build_arch_spec, ArchitectureSpec, SizeProfile, TaskType};
use crate::encoder::{
    encode, encode_backward, transform, transform_backward, EncodeCache, EncoderParams, TransformCache,
    TransformParams,
};
use crate::error::{Error, Result};
use crate::paramgen::{generate, generate_backward, register_shapes, GeneratorParams, ParameterSet, ShapeRegistry};
use crate::requirement::Requirement;
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// `θp = (θe, θm, θg)` plus the sizing profile generated targets use.
#[derive(Debug, Clone)]
pub struct Hypernet {
    pub encoder: EncoderParams,
    pub transform: TransformParams,
    pub generator: GeneratorParams,
    pub profile: SizeProfile,
    /// Bumped on every parameter update so stale caches are detectable.
    revision: u64,
    instance: u64,
}

impl PartialEq for Hypernet {
    fn eq(&self, other: &Self) -> bool {
        self.encoder == other.encoder
            && self.transform == other.transform
            && self.generator == other.generator
            && self.profile == other.profile
    }
}

/// Forward-pass values the backward pass consumes.
#[derive(Debug, Clone)]
pub struct HyperForward {
    pub spec: ArchitectureSpec,
    pub registry: ShapeRegistry,
    pub z: Tensor,
    pub params: ParameterSet,
    enc_cache: EncodeCache,
    tf_cache: TransformCache,
    revision: (u64, u64),
}

impl Hypernet {
    pub fn init<R: Rng>(
        vocab: usize,
        embed_dim: usize,
        latent_dim: usize,
        profile: SizeProfile,
        rng: &mut R,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        Ok(Self::from_parts(
            EncoderParams::init(vocab, embed_dim, rng)?,
            TransformParams::init(embed_dim, latent_dim, rng)?,
            GeneratorParams::new(latent_dim),
            profile,
        ))
    }

    pub fn from_parts(
        encoder: EncoderParams,
        transform: TransformParams,
        generator: GeneratorParams,
        profile: SizeProfile,
    ) -> Self {
        Self {
            encoder,
            transform,
            generator,
            profile,
            revision: 0,
            instance: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.transform.in_dim() != self.encoder.dim() {
            return Err(Error::Consistency(format!(
                "transform takes {} inputs, encoder produces {}",
                self.transform.in_dim(),
                self.encoder.dim()
            )));
        }
        if self.transform.second.in_dim() != self.transform.first.out_dim() {
            return Err(Error::Consistency("transform layers do not chain".into()));
        }
        if self.transform.latent_dim() != self.generator.latent_dim() {
            return Err(Error::Consistency(format!(
                "latent is {}, generator heads take {}",
                self.transform.latent_dim(),
                self.generator.latent_dim()
            )));
        }
        Ok(())
    }

    pub fn spec_for(&self, task: &TaskType) -> ArchitectureSpec {
        build_arch_spec(task, &self.profile)
    }

    /// Latent vector for a requirement sentence.
    pub fn latent(&self, req: &Requirement) -> Result<Tensor> {
        let (z0, _) = encode(req.sentence(), &self.encoder)?;
        Ok(transform(&z0, &self.transform)?.0)
    }

    /// Generates the target tensors for `task` from the requirement alone.
    pub fn forward(&self, req: &Requirement, task: &TaskType) -> Result<HyperForward> {
        let spec = self.spec_for(task);
        let registry = register_shapes(&spec)?;
        let (z0, enc_cache) = encode(req.sentence(), &self.encoder)?;
        let (z, tf_cache) = transform(&z0, &self.transform)?;
        let params = generate(&z, &self.generator, &registry)?;
        Ok(HyperForward {
            spec,
            registry,
            z,
            params,
            enc_cache,
            tf_cache,
            revision: (self.instance, self.revision),
        })
    }

    /// Backpropagates an upstream gradient at the generated tensors through
    /// the generator, transform and encoder, accumulating into `grads`.
    pub fn backward(&self, upstream: &ParameterSet, fwd: &HyperForward, grads: &mut Hypernet) -> Result<()> {
        if fwd.revision != (self.instance, self.revision) {
            return Err(Error::Consistency(
                "forward cache was produced by different hypernetwork parameters".into(),
            ));
        }
        let gz = generate_backward(upstream, &fwd.z, &self.generator, &fwd.registry, &mut grads.generator)?;
        let gz0 = transform_backward(&gz, &self.transform, &fwd.tf_cache, &mut grads.transform);
        encode_backward(&gz0, &self.encoder, &fwd.enc_cache, &mut grads.encoder);
        Ok(())
    }

    /// All-zero gradient buffer with this network's layout.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.data_mut().fill(0.0));
        z
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every tensor with a stable name, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("encoder.cls".into(), &self.encoder.cls),
            ("encoder.table".into(), &self.encoder.table),
            ("encoder.mix.weight".into(), &self.encoder.mix.weight),
            ("encoder.mix.bias".into(), &self.encoder.mix.bias),
            ("transform.first.weight".into(), &self.transform.first.weight),
            ("transform.first.bias".into(), &self.transform.first.bias),
            ("transform.second.weight".into(), &self.transform.second.weight),
            ("transform.second.bias".into(), &self.transform.second.bias),
        ];
        for (k, h) in self.generator.heads() {
            out.push((format!("head.{k}.weight"), &h.weight));
            out.push((format!("head.{k}.bias"), &h.bias));
        }
        out
    }

    /// Visits every tensor mutably in the order of [`named_tensors`](Self::named_tensors).
    pub fn visit_mut(&mut self, mut f: impl FnMut(usize, &mut Tensor)) {
        let mut i = 0;
        let mut go = |t: &mut Tensor| {
            f(i, t);
            i += 1;
        };
        go(&mut self.encoder.cls);
        go(&mut self.encoder.table);
        go(&mut self.encoder.mix.weight);
        go(&mut self.encoder.mix.bias);
        go(&mut self.transform.first.weight);
        go(&mut self.transform.first.bias);
        go(&mut self.transform.second.weight);
        go(&mut self.transform.second.bias);
        for (_, h) in self.generator.heads_mut() {
            go(&mut h.weight);
            go(&mut h.bias);
        }
    }

    /// Marks the parameters as changed; outstanding forward caches go stale.
    pub fn touch(&mut self) {
        self.revision += 1;
    }

    /// Bitwise equality of all tensors and the profile.
    pub fn same_weights(&self, other: &Hypernet) -> bool {
        self.profile == other.profile
            && self.generator.latent_dim() == other.generator.latent_dim()
            && self
                .named_tensors()
                .iter()
                .zip(other.named_tensors().iter())
                .all(|((na, a), (nb, b))| {
                    na == nb
                        && a.shape() == b.shape()
                        && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
                })
            && self.named_tensors().len() == other.named_tensors().len()
    }
}
