//! Convergence of finetuning from a generated init versus a fresh init.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::SizeProfile;
use crate::baselines::{finetune_all, profile_dims, BaselineConfig, EpochStats};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::MlpParams;

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    /// First epoch (from 1) at which eval accuracy reaches its maximum.
    pub best_epoch: usize,
    pub curve: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitStudy {
    pub ours: Vec<SeedRun>,
    pub baseline: Vec<SeedRun>,
}

/// First epoch (from 1) with the run's highest eval accuracy; 0 for an empty curve.
pub fn best_epoch(curve: &[EpochStats]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for s in curve {
        if s.eval_acc > best.1 {
            best = (s.epoch, s.eval_acc);
        }
    }
    best.0
}

pub fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2] as f64,
        n => (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0,
    }
}

impl InitStudy {
    pub fn median_best_ours(&self) -> f64 {
        median(&self.ours.iter().map(|r| r.best_epoch).collect::<Vec<_>>())
    }

    pub fn median_best_baseline(&self) -> f64 {
        median(&self.baseline.iter().map(|r| r.best_epoch).collect::<Vec<_>>())
    }

    /// `seed,epoch,train_loss,eval_loss,train_acc,eval_acc` rows.
    pub fn curves_csv(runs: &[SeedRun]) -> String {
        let mut s = String::from("seed,epoch,train_loss,eval_loss,train_acc,eval_acc\n");
        for r in runs {
            for p in &r.curve {
                let _ = writeln!(
                    s,
                    "{},{},{:.6},{:.6},{:.6},{:.6}",
                    r.seed, p.epoch, p.train_loss, p.eval_loss, p.train_acc, p.eval_acc
                );
            }
        }
        s
    }

    /// Per-epoch mean and standard deviation of eval accuracy for both inits.
    pub fn summary_markdown(&self) -> String {
        let mut s = String::from("| epoch | generated eval acc | fresh eval acc |\n|---|---|---|\n");
        let epochs = self.ours.first().map_or(0, |r| r.curve.len());
        for e in 0..epochs {
            let (mo, so) = mean_std(self.ours.iter().map(|r| r.curve[e].eval_acc));
            let (mb, sb) = mean_std(self.baseline.iter().map(|r| r.curve[e].eval_acc));
            let _ = writeln!(
                s,
                "| {} | {:.1} ± {:.1} | {:.1} ± {:.1} |",
                e + 1,
                100.0 * mo,
                100.0 * so,
                100.0 * mb,
                100.0 * sb
            );
        }
        let _ = writeln!(
            s,
            "\nMedian epochs to best eval accuracy: generated {}, fresh {}.",
            self.median_best_ours(),
            self.median_best_baseline()
        );
        s
    }
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Finetunes all parameters from `generated` and from a fresh seeded init,
/// with identical hyperparameters, for every seed. The seed drives batch
/// order for both runs and the fresh init.
pub fn weight_init_study(
    generated: &MlpParams,
    ds: &Dataset,
    profile: &SizeProfile,
    cfg: &BaselineConfig,
    seeds: &[u64],
    epochs: usize,
) -> Result<InitStudy> {
    if seeds.is_empty() || epochs == 0 {
        return Err(Error::input("init study needs at least one seed and one epoch"));
    }
    let dims = profile_dims(ds, profile);
    let gen_dims: Vec<usize> = std::iter::once(generated.in_dim())
        .chain(generated.layers().iter().map(|l| l.out_dim()))
        .collect();
    if gen_dims != dims {
        return Err(Error::shape(format!("generated model is {gen_dims:?}, task needs {dims:?}")));
    }
    let mut study = InitStudy {
        ours: Vec::with_capacity(seeds.len()),
        baseline: Vec::with_capacity(seeds.len()),
    };
    for &seed in seeds {
        let (_, curve) = finetune_all(generated, ds, cfg, epochs, seed, true)?;
        study.ours.push(SeedRun {
            seed,
            best_epoch: best_epoch(&curve),
            curve,
        });
        let fresh = MlpParams::init_uniform(&dims, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let (_, curve) = finetune_all(&fresh, ds, cfg, epochs, seed, true)?;
        study.baseline.push(SeedRun {
            seed,
            best_epoch: best_epoch(&curve),
            curve,
        });
    }
    Ok(study)
}
