//! Independent f64 reference implementations shared by the integration tests.
#![allow(dead_code)]

use hypergen::arch::{SizeProfile, TaskType};
use hypergen::data::{Batch, Targets};
use hypergen::encoder::{token_id, tokenize};
use hypergen::gradcheck::{finite_diff_grad, relative_error};
use hypergen::hypernet::Hypernet;
use hypergen::paramgen::register_shapes;
use hypergen::requirement::{Requirement, RequirementSource};
use hypergen::tensor::Tensor;
use hypergen::trainer::{hyper_backward, inner_step, InnerConfig, InnerOptimizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 10] = [
    "tabular", "rows", "from", "sensor", "readings", "flowers", "wine", "measured", "into", "task",
];

/// Flat f64 copy of every hypernetwork tensor, in canonical order.
pub fn flatten_net(net: &Hypernet) -> (Vec<(String, usize, usize)>, Vec<f64>) {
    let mut layout = Vec::new();
    let mut flat = Vec::new();
    for (name, t) in net.named_tensors() {
        layout.push((name, flat.len(), t.len()));
        flat.extend(t.data().iter().map(|&v| v as f64));
    }
    (layout, flat)
}

fn slice<'a>(layout: &[(String, usize, usize)], p: &'a [f64], name: &str) -> &'a [f64] {
    let (_, off, len) = layout.iter().find(|(n, _, _)| n == name).unwrap_or_else(|| panic!("no tensor {name}"));
    &p[*off..off + len]
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + w[o * x.len()..(o + 1) * x.len()].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// Generated target tensors, registry order, computed in f64 from flat `p`.
pub fn generate_f64(
    layout: &[(String, usize, usize)],
    p: &[f64],
    sentence: &str,
    vocab: usize,
    heads: &[String],
) -> Vec<Vec<f64>> {
    let cls = slice(layout, p, "encoder.cls");
    let d0 = cls.len();
    let table = slice(layout, p, "encoder.table");
    let ids: Vec<usize> = tokenize(sentence).iter().map(|t| token_id(t, vocab)).collect();
    let mut pooled = cls.to_vec();
    for &id in &ids {
        for (s, e) in pooled.iter_mut().zip(&table[id * d0..(id + 1) * d0]) {
            *s += e;
        }
    }
    let n = (ids.len() + 1) as f64;
    pooled.iter_mut().for_each(|v| *v /= n);
    let z0 = affine(
        slice(layout, p, "encoder.mix.weight"),
        slice(layout, p, "encoder.mix.bias"),
        &pooled,
    );
    let h: Vec<f64> = affine(
        slice(layout, p, "transform.first.weight"),
        slice(layout, p, "transform.first.bias"),
        &z0,
    )
    .into_iter()
    .map(|v| v.max(0.0))
    .collect();
    let z = affine(
        slice(layout, p, "transform.second.weight"),
        slice(layout, p, "transform.second.bias"),
        &h,
    );
    heads
        .iter()
        .map(|k| {
            affine(
                slice(layout, p, &format!("head.{k}.weight")),
                slice(layout, p, &format!("head.{k}.bias")),
                &z,
            )
        })
        .collect()
}

/// Mean softmax cross-entropy of a ReLU MLP, everything in f64.
/// `dims` lists layer widths from input to output; `p` holds each layer's
/// weight (out × in, row-major) then bias.
pub fn mlp_ce_f64(dims: &[usize], p: &[f64], x: &[f64], labels: &[usize]) -> f64 {
    let batch = labels.len();
    let mut total = 0.0;
    for b in 0..batch {
        let mut cur = x[b * dims[0]..(b + 1) * dims[0]].to_vec();
        let mut off = 0;
        for (k, w) in dims.windows(2).enumerate() {
            let (inn, out) = (w[0], w[1]);
            let weight = &p[off..off + out * inn];
            let bias = &p[off + out * inn..off + out * inn + out];
            off += out * inn + out;
            cur = affine(weight, bias, &cur);
            if k + 2 < dims.len() {
                cur.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let max = cur.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + cur.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - cur[labels[b]];
    }
    total / batch as f64
}

pub fn random_sentence(rng: &mut ChaCha8Rng, n_classes: usize, n_inputs: usize) -> Requirement {
    let mut words: Vec<&str> = (0..rng.random_range(2..6)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    words.push("classification");
    let text = format!("{} into {n_classes} classes on {n_inputs}-dimensional rows.", words.join(" "));
    Requirement::new(&text, RequirementSource::Template).expect("valid sentence")
}

pub fn random_batch(rng: &mut ChaCha8Rng, rows: usize, n_inputs: usize, n_classes: usize) -> Batch {
    let x: Vec<f32> = (0..rows * n_inputs).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<usize> = (0..rows).map(|i| if i < n_classes { i } else { rng.random_range(0..n_classes) }).collect();
    Batch {
        x: Tensor::new(vec![rows, n_inputs], x).unwrap(),
        y: Targets::Classes(y),
    }
}

/// One random small hypernetwork instance: analytic `hyper_backward`
/// against central differences of the f64 surrogate `Σ −Δ·θt(θp)`.
/// Returns the relative error over every coordinate that can receive
/// gradient, and checks the rest are exactly zero.
pub fn hyper_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.random_range(8..24);
    let d0 = rng.random_range(3..7);
    let latent = rng.random_range(2..6);
    let profile = SizeProfile {
        hidden_dim: rng.random_range(2..6),
        n_layers: rng.random_range(1..3),
    };
    let n_classes = rng.random_range(2..4);
    let n_inputs = rng.random_range(2..5);
    let task = TaskType::classification(n_classes, n_inputs).unwrap();

    let mut net = Hypernet::init(vocab, d0, latent, profile, &mut rng).unwrap();
    let registry = register_shapes(&net.spec_for(&task)).unwrap();
    net.generator.ensure_heads(&registry, &mut rng).unwrap();
    // Larger head weights so the gradient reaches z, the transform and encoder.
    net.visit_mut(|_, t| t.data_mut().iter_mut().for_each(|v| *v *= 20.0));
    net.touch();

    let req = random_sentence(&mut rng, n_classes, n_inputs);
    let batch = random_batch(&mut rng, 12, n_inputs, n_classes);
    let optimizer = if seed % 2 == 0 { InnerOptimizer::Adam } else { InnerOptimizer::Sgd };
    let fwd = net.forward(&req, &task).unwrap();
    let step = inner_step(
        &fwd.params,
        &batch,
        &InnerConfig {
            optimizer,
            lr: 0.05,
            weight_decay: 1e-3,
        },
    )
    .unwrap();
    let mut grads = net.zeros_like();
    hyper_backward(&step.delta, &fwd, &net, &mut grads).unwrap();

    let heads: Vec<String> = registry.entries().iter().map(|e| e.head_key()).collect();
    let upstream: Vec<Vec<f64>> = step
        .delta
        .entries()
        .iter()
        .map(|(_, t)| t.data().iter().map(|&d| -(d as f64)).collect())
        .collect();
    let (layout, p0) = flatten_net(&net);
    let surrogate = |p: &[f64]| -> f64 {
        generate_f64(&layout, p, req.sentence(), vocab, &heads)
            .iter()
            .zip(&upstream)
            .map(|(theta, u)| theta.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };

    let (_, analytic) = flatten_net(&grads);
    // Only table rows of the sentence's tokens can have gradient.
    let table = layout.iter().find(|(n, _, _)| n == "encoder.table").unwrap();
    let used: Vec<usize> = tokenize(req.sentence()).iter().map(|t| token_id(t, vocab)).collect();
    let live: Vec<usize> = (0..p0.len())
        .filter(|&i| {
            if i < table.1 || i >= table.1 + table.2 {
                return true;
            }
            used.contains(&((i - table.1) / d0))
        })
        .collect();
    for (i, g) in analytic.iter().enumerate() {
        if !live.contains(&i) {
            assert_eq!(*g, 0.0, "unused table entry {i} has gradient");
        }
    }
    let project = |q: &[f64]| -> Vec<f64> {
        let mut full = p0.clone();
        for (k, &i) in live.iter().enumerate() {
            full[i] = q[k];
        }
        full
    };
    let start: Vec<f64> = live.iter().map(|&i| p0[i]).collect();
    let numeric = finite_diff_grad(|q| surrogate(&project(q)), &start, 1e-6);
    let analytic_live: Vec<f64> = live.iter().map(|&i| analytic[i]).collect();
    relative_error(&analytic_live, &numeric)
}

/// The 40-case template grid: 30 classification and 10 regression tasks.
pub fn template_grid() -> Vec<hypergen::requirement::TaskMeta> {
    use hypergen::arch::TaskKind;
    use hypergen::requirement::TaskMeta;
    const DOMAINS: [&str; 8] = [
        "iris flowers",
        "wine cultivars",
        "patient vitals",
        "retail baskets",
        "turbine sensors",
        "loan applicants",
        "soil samples",
        "network traffic",
    ];
    let mut grid = Vec::with_capacity(40);
    let mut i = 0;
    for k in [2, 3, 4, 7, 12, 40] {
        for f in [1, 4, 13, 64, 300] {
            grid.push(TaskMeta {
                kind: TaskKind::Classification,
                n_features: f,
                n_classes: Some(k),
                domain_tag: Some(DOMAINS[i % DOMAINS.len()].into()),
            });
            i += 1;
        }
    }
    for f in [1, 2, 3, 5, 8, 11, 16, 32, 100, 1000] {
        grid.push(TaskMeta {
            kind: TaskKind::Regression,
            n_features: f,
            n_classes: None,
            domain_tag: Some(DOMAINS[i % DOMAINS.len()].into()),
        });
        i += 1;
    }
    grid
}

/// Template sentence re-parsed without metadata; `Err` describes a mismatch.
pub fn template_round_trip(meta: &hypergen::requirement::TaskMeta) -> Result<(), String> {
    use hypergen::arch::{infer_task_type, RuleTable};
    use hypergen::requirement::fallback_template;
    let req = fallback_template(meta).map_err(|e| e.to_string())?;
    let t = infer_task_type(&req, None, &RuleTable::default()).map_err(|e| e.to_string())?;
    if t.kind() == meta.kind && t.n_classes() == meta.n_classes && t.n_inputs() == meta.n_features {
        Ok(())
    } else {
        Err(format!("{:?} parsed as {t:?}", req.sentence()))
    }
}

/// One random LoRA draw: unmerged forward against the merged network,
/// within 1e-5 relative to max(1, |y|). Also checks zero-B and α = 0 merges
/// are bitwise identity.
pub fn lora_draw(seed: u64) -> Result<(), String> {
    use hypergen::baselines::LoraMlp;
    use hypergen::nn::{mlp_forward, MlpParams};
    use hypergen::paramgen::merge_lora;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inn = rng.random_range(1..9);
    let hidden = rng.random_range(1..12);
    let out = rng.random_range(1..7);
    let r = rng.random_range(1..9);
    let alpha: f32 = rng.random_range(-8.0..16.0);
    let random = |rng: &mut ChaCha8Rng, shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };

    let base = MlpParams::init_uniform(&[inn, hidden, out], &mut rng).unwrap();
    let mut model = LoraMlp::init(base, r, alpha, 0.1, &mut rng).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for (layer, ad) in model.base.layers().iter().zip(&model.adapters) {
        if bits(&merge_lora(&layer.weight, ad).unwrap()) != bits(&layer.weight) {
            return Err(format!("draw {seed}: zero-B merge changed the weight"));
        }
        let mut silent = ad.clone();
        silent.b = random(&mut rng, ad.b.shape().to_vec());
        silent.alpha = 0.0;
        if bits(&merge_lora(&layer.weight, &silent).unwrap()) != bits(&layer.weight) {
            return Err(format!("draw {seed}: alpha = 0 merge changed the weight"));
        }
    }
    for ad in &mut model.adapters {
        ad.b = random(&mut rng, ad.b.shape().to_vec());
    }
    let x = random(&mut rng, vec![5, inn]);
    let unmerged = model.forward_unmerged(&x, None).unwrap();
    let merged = mlp_forward(&model.merged().unwrap(), &x).unwrap();
    for (u, m) in unmerged.data().iter().zip(merged.data()) {
        if (u - m).abs() > 1e-5 * u.abs().max(1.0) {
            return Err(format!("draw {seed}: merged {m} vs unmerged {u}"));
        }
    }
    Ok(())
}
