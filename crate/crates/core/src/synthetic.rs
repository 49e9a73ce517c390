//! Gaussian-blob classification tasks and their domain-shifted siblings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::requirement::fallback_template;
use crate::tensor::Tensor;
use crate::trainer::TaskRequirementPair;

const DOMAINS: [&str; 12] = [
    "sensor", "retail", "clinic", "orchard", "harbor", "turbine", "library", "airport", "vineyard", "foundry",
    "observatory", "dairy",
];

/// Shape of one blob task. Within-class noise is unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_features: usize,
    pub n_classes: usize,
    /// Minimum distance between class means, in units of σ.
    pub separation: f32,
    /// Angle of the Givens rotation applied to each consecutive feature pair.
    pub rotation: f32,
    pub n_rows: usize,
}

/// Samples a labelled blob dataset. `means` holds one row per class.
pub fn sample_blobs(spec: &BlobSpec, means: &[Vec<f32>], rng: &mut impl Rng) -> Result<(Tensor, Vec<usize>)> {
    if means.len() != spec.n_classes || means.iter().any(|m| m.len() != spec.n_features) {
        return Err(Error::shape("one mean of width n_features per class is required"));
    }
    if spec.n_rows < spec.n_classes {
        return Err(Error::input("fewer rows than classes"));
    }
    let f = spec.n_features;
    let mut data = Vec::with_capacity(spec.n_rows * f);
    let mut labels = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        let c = i % spec.n_classes;
        let mut row: Vec<f32> = means[c]
            .iter()
            .map(|&m| m + Distribution::<f32>::sample(&StandardNormal, &mut *rng))
            .collect();
        rotate(&mut row, spec.rotation);
        data.extend_from_slice(&row);
        labels.push(c);
    }
    Ok((Tensor::new(vec![spec.n_rows, f], data)?, labels))
}

fn rotate(row: &mut [f32], angle: f32) {
    let (s, c) = angle.sin_cos();
    for pair in row.chunks_exact_mut(2) {
        let (x, y) = (pair[0], pair[1]);
        pair[0] = c * x - s * y;
        pair[1] = s * x + c * y;
    }
}

/// Class means with pairwise distance at least `spec.separation`.
pub fn blob_means(spec: &BlobSpec, rng: &mut impl Rng) -> Vec<Vec<f32>> {
    let mut half = spec.separation * (spec.n_classes as f32).powf(1.0 / spec.n_features as f32);
    loop {
        for _ in 0..200 {
            let means: Vec<Vec<f32>> = (0..spec.n_classes)
                .map(|_| (0..spec.n_features).map(|_| rng.random_range(-half..half)).collect())
                .collect();
            if min_distance(&means) >= spec.separation {
                return means;
            }
        }
        half *= 1.1;
    }
}

fn min_distance(means: &[Vec<f32>]) -> f32 {
    let mut best = f32::INFINITY;
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            let d: f32 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt();
            best = best.min(d);
        }
    }
    best
}

/// One blob task as a dataset with a template requirement.
pub fn blob_pair(name: &str, domain_tag: &str, spec: &BlobSpec, means: &[Vec<f32>], seed: u64) -> Result<TaskRequirementPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = sample_blobs(spec, means, &mut rng)?;
    let class_names = (0..spec.n_classes).map(|c| format!("class_{c}")).collect();
    let dataset = Dataset::from_raw(name, domain_tag, x, Targets::Classes(y), class_names, seed)?;
    let requirement = fallback_template(&dataset.meta())?;
    Ok(TaskRequirementPair::new(dataset, requirement))
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub tasks: Vec<TaskRequirementPair>,
    /// `siblings[i]` shares labels and shape with `tasks[i]`; its class means
    /// are moved by a common offset plus a small per-class jitter.
    pub siblings: Vec<TaskRequirementPair>,
    pub specs: Vec<BlobSpec>,
}

/// Rows per training task.
pub const SUITE_ROWS: usize = 1000;
/// Rows per shifted sibling; small, like a new target domain.
pub const SIBLING_ROWS: usize = 150;

pub fn make_synthetic_suite(seed: u64, k_tasks: usize) -> Result<SyntheticSuite> {
    make_synthetic_suite_sized(seed, k_tasks, SUITE_ROWS, SIBLING_ROWS)
}

pub fn make_synthetic_suite_sized(seed: u64, k_tasks: usize, rows: usize, sibling_rows: usize) -> Result<SyntheticSuite> {
    if k_tasks < 2 {
        return Err(Error::input("a synthetic suite needs at least 2 tasks"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = SyntheticSuite {
        tasks: Vec::with_capacity(k_tasks),
        siblings: Vec::with_capacity(k_tasks),
        specs: Vec::with_capacity(k_tasks),
    };
    for i in 0..k_tasks {
        let spec = BlobSpec {
            n_features: rng.random_range(2..=8),
            n_classes: rng.random_range(2..=5),
            separation: rng.random_range(3.0..5.0),
            rotation: rng.random_range(0.0..std::f32::consts::PI),
            n_rows: rows,
        };
        let means = blob_means(&spec, &mut rng);
        let word = DOMAINS[i % DOMAINS.len()];
        let round = i / DOMAINS.len();
        let tag = if round == 0 {
            format!("synthetic {word} blobs")
        } else {
            format!("synthetic {word} blobs round {}", round + 1)
        };
        let task_seed = rng.random();
        suite.tasks.push(blob_pair(&format!("blobs_{i}"), &tag, &spec, &means, task_seed)?);

        let offset: Vec<f32> = (0..spec.n_features)
            .map(|_| 3.0 * Distribution::<f32>::sample(&StandardNormal, &mut rng))
            .collect();
        let shifted: Vec<Vec<f32>> = means
            .iter()
            .map(|m| {
                m.iter()
                    .zip(&offset)
                    .map(|(&v, &o)| v + o + 0.25 * Distribution::<f32>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        let sibling_seed = rng.random();
        let sibling_spec = BlobSpec {
            n_rows: sibling_rows,
            ..spec.clone()
        };
        suite.siblings.push(blob_pair(
            &format!("blobs_{i}_shifted"),
            &format!("shifted {tag}"),
            &sibling_spec,
            &shifted,
            sibling_seed,
        )?);
        suite.specs.push(spec);
    }
    Ok(suite)
}
