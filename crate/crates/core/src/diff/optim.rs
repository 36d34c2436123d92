use serde::{Deserialize, Serialize};

use super::{Matrix, ParamGrads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every array of a store (buffers keep zero moments).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl OptimState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .entries()
                .iter()
                .map(|e| Matrix::zeros(e.value.rows, e.value.cols))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update of every trainable array.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &ParamGrads,
    state: &mut OptimState,
    lr: f64,
) -> Result<()> {
    if grads.0.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Shape(format!(
            "{} gradients / {} moments for {} parameters",
            grads.0.len(),
            state.m.len(),
            store.len()
        )));
    }
    for (g, id) in grads.0.iter().zip(store.ids()) {
        if g.shape() != store.get(id).shape() {
            return Err(Error::Shape(format!(
                "gradient {:?} for parameter {} {:?}",
                g.shape(),
                store.entry(id).name,
                store.get(id).shape()
            )));
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
    let ids: Vec<_> = store.trainable_ids().collect();
    for id in ids {
        let g = &grads.0[id.0].data;
        let (m, v) = (&mut state.m[id.0].data, &mut state.v[id.0].data);
        for (((p, &gi), mi), vi) in store
            .get_mut(id)
            .data
            .iter_mut()
            .zip(g)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// One-cycle cosine schedule shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycle {
    /// Fraction of steps spent warming up.
    pub warmup_frac: f64,
    /// Start at `max_lr / div_factor`.
    pub div_factor: f64,
    /// End at `max_lr / final_div_factor`.
    pub final_div_factor: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        Self {
            warmup_frac: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }
}

impl OneCycle {
    pub fn lr(&self, step: usize, total_steps: usize, max_lr: f64) -> Result<f64> {
        if step > total_steps {
            return Err(Error::Argument(format!(
                "step {step} past total {total_steps}"
            )));
        }
        if !(max_lr > 0.0) || !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Argument(format!(
                "max_lr {max_lr} / warmup fraction {} out of range",
                self.warmup_frac
            )));
        }
        let start = max_lr / self.div_factor;
        let end = max_lr / self.final_div_factor;
        let cos_interp = |from: f64, to: f64, frac: f64| {
            to + (from - to) * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0
        };
        let s = step as f64;
        let peak = self.warmup_frac * total_steps as f64;
        Ok(if s == peak {
            max_lr
        } else if s < peak {
            if s == 0.0 {
                start
            } else {
                cos_interp(start, max_lr, s / peak)
            }
        } else if step == total_steps {
            end
        } else {
            cos_interp(max_lr, end, (s - peak) / (total_steps as f64 - peak))
        })
    }
}

/// [`OneCycle::default`] schedule.
pub fn one_cycle_lr(step: usize, total_steps: usize, max_lr: f64) -> Result<f64> {
    OneCycle::default().lr(step, total_steps, max_lr)
}
