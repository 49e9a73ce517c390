//! First-order optimizers over flat parameter vectors.
//!
//! Both optimizers expose the update as a delta so callers can apply it and
//! keep the exact applied difference (`θ′ − θ`) without re-subtracting.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl AdamConfig {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Moment estimates and step counter for one parameter vector. Moments are
/// kept in f64: L2 decay shrinks unused parameters geometrically, and in f32
/// their squared gradients fall into the subnormal range.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Advances the moments and returns the bias-corrected update to add to
    /// `params`. L2 weight decay is folded into the gradient.
    pub fn delta(&mut self, params: &[f32], grads: &[f32], cfg: &AdamConfig) -> Result<Vec<f32>> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training {
                step: self.step,
                message: format!("non-finite gradient at index {i}"),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1 as f64, cfg.beta2 as f64);
        let (lr, eps, wd) = (cfg.lr as f64, cfg.eps as f64, cfg.weight_decay as f64);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let mut out = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let g = grads[i] as f64 + wd * params[i] as f64;
            self.m[i] = flush64(b1 * self.m[i] + (1.0 - b1) * g);
            self.v[i] = flush64(b2 * self.v[i] + (1.0 - b2) * g * g);
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            out.push(to_f32(-lr * m_hat / (v_hat.sqrt() + eps)));
        }
        Ok(out)
    }
}

/// One Adam step applied in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f32], grads: &[f32], cfg: &AdamConfig) -> Result<()> {
    let delta = state.delta(params, grads, cfg)?;
    if cfg.lr == 0.0 {
        return Ok(());
    }
    for (p, d) in params.iter_mut().zip(delta) {
        *p = flush(*p + d);
    }
    Ok(())
}

// Subnormal arithmetic is orders of magnitude slower on common CPUs; values
// that small are flushed to zero.

#[inline]
fn flush(x: f32) -> f32 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

#[inline]
fn flush64(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

#[inline]
fn to_f32(x: f64) -> f32 {
    if x.abs() < f32::MIN_POSITIVE as f64 {
        0.0
    } else {
        x as f32
    }
}

/// Plain SGD update: `-lr · (g + weight_decay · p)`.
pub fn sgd_delta(params: &[f32], grads: &[f32], lr: f32, weight_decay: f32) -> Result<Vec<f32>> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!(
            "sgd: {} params, {} grads",
            params.len(),
            grads.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            step: 0,
            message: format!("non-finite gradient at index {i}"),
        });
    }
    Ok(if weight_decay == 0.0 {
        grads.iter().map(|&g| -lr * g).collect()
    } else {
        grads
            .iter()
            .zip(params)
            .map(|(&g, &p)| -lr * (g + weight_decay * p))
            .collect()
    })
}
