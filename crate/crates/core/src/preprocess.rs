//! Per-channel z-score normalization fitted on the training set, with a
//! separate statistic for turbulent viscosity on wall nodes.
//!
//! Channel mapping is 0-based: inputs are `(x, y, inlet speed, sdf)` and
//! targets `(u_x, u_y, p, nu_t)`, so turbulent viscosity is target channel 3.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{MeshSample, CH_NUT};

/// Added to every standard deviation before dividing.
pub const NORM_EPS: f64 = 1e-8;

/// Streaming population moments (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &Moments) -> Moments {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        Moments {
            count: self.count + other.count,
            mean: self.mean + d * other.count as f64 / n,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * other.count as f64 / n,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu_in: [f64; 4],
    pub sigma_in: [f64; 4],
    pub mu_out: [f64; 4],
    pub sigma_out: [f64; 4],
    pub mu_nut_surf: f64,
    pub sigma_nut_surf: f64,
    pub eps: f64,
}

#[derive(Default, Clone, Copy)]
struct SampleMoments {
    inputs: [Moments; 4],
    targets: [Moments; 4],
    nut_surf: Moments,
}

impl SampleMoments {
    fn of(s: &MeshSample) -> Self {
        let mut m = SampleMoments::default();
        for i in 0..s.n_nodes() {
            let x = s.input_features(i);
            for k in 0..4 {
                m.inputs[k].push(x[k]);
                m.targets[k].push(s.targets[i][k]);
            }
            if s.surface_mask[i] {
                m.nut_surf.push(s.targets[i][CH_NUT]);
            }
        }
        m
    }

    fn merge(&self, o: &Self) -> Self {
        let mut out = *self;
        for k in 0..4 {
            out.inputs[k] = self.inputs[k].merge(&o.inputs[k]);
            out.targets[k] = self.targets[k].merge(&o.targets[k]);
        }
        out.nut_surf = self.nut_surf.merge(&o.nut_surf);
        out
    }
}

/// Population mean/std pooled over every node of every training sample; the
/// wall statistic pools wall nodes only.
pub fn fit_norm_stats(train: &[MeshSample]) -> Result<NormStats> {
    use rayon::prelude::*;
    if train.is_empty() {
        return Err(Error::Stats("empty training set".into()));
    }
    let per_sample: Vec<SampleMoments> = train.par_iter().map(SampleMoments::of).collect();
    let total = pairwise_merge(&per_sample);
    if total.nut_surf.count == 0 {
        return Err(Error::Stats("training set has no surface nodes".into()));
    }
    Ok(NormStats {
        mu_in: total.inputs.map(|m| m.mean),
        sigma_in: total.inputs.map(|m| m.std()),
        mu_out: total.targets.map(|m| m.mean),
        sigma_out: total.targets.map(|m| m.std()),
        mu_nut_surf: total.nut_surf.mean,
        sigma_nut_surf: total.nut_surf.std(),
        eps: NORM_EPS,
    })
}

/// Balanced binary reduction in index order, independent of thread schedule.
fn pairwise_merge(parts: &[SampleMoments]) -> SampleMoments {
    match parts.len() {
        0 => SampleMoments::default(),
        1 => parts[0],
        n => {
            let (a, b) = parts.split_at(n / 2);
            pairwise_merge(a).merge(&pairwise_merge(b))
        }
    }
}

impl NormStats {
    fn target_stats(&self, k: usize, on_surface: bool) -> (f64, f64) {
        if k == CH_NUT && on_surface {
            (self.mu_nut_surf, self.sigma_nut_surf)
        } else {
            (self.mu_out[k], self.sigma_out[k])
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Decimal fields for humans plus an `exact` block of IEEE-754 bit
    /// patterns that [`NormStats::from_json`] prefers.
    pub fn to_json(&self) -> String {
        let v = serde_json::json!({
            "mu_in": self.mu_in,
            "sigma_in": self.sigma_in,
            "mu_out": self.mu_out,
            "sigma_out": self.sigma_out,
            "mu_nut_surf": self.mu_nut_surf,
            "sigma_nut_surf": self.sigma_nut_surf,
            "eps": self.eps,
            "exact": self.flat().iter().map(|x| format!("{:#018x}", x.to_bits())).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&v).expect("stats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fmt = |e: String| Error::Format(format!("norm stats: {e}"));
        let decimal: NormStats = serde_json::from_str(text).map_err(|e| fmt(e.to_string()))?;
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| fmt(e.to_string()))?;
        let Some(exact) = raw.get("exact").and_then(|v| v.as_array()) else {
            return Ok(decimal);
        };
        let bits: Vec<f64> = exact
            .iter()
            .map(|v| {
                let s = v
                    .as_str()
                    .ok_or_else(|| fmt("exact entries must be strings".into()))?;
                let h = s.trim_start_matches("0x");
                u64::from_str_radix(h, 16)
                    .map(f64::from_bits)
                    .map_err(|e| fmt(format!("bad hex {s}: {e}")))
            })
            .collect::<Result<_>>()?;
        if bits.len() != 19 {
            return Err(fmt(format!("expected 19 exact values, got {}", bits.len())));
        }
        Ok(Self::from_flat(&bits))
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(19);
        v.extend(self.mu_in);
        v.extend(self.sigma_in);
        v.extend(self.mu_out);
        v.extend(self.sigma_out);
        v.extend([self.mu_nut_surf, self.sigma_nut_surf, self.eps]);
        v
    }

    fn from_flat(v: &[f64]) -> Self {
        let four = |o: usize| [v[o], v[o + 1], v[o + 2], v[o + 3]];
        Self {
            mu_in: four(0),
            sigma_in: four(4),
            mu_out: four(8),
            sigma_out: four(12),
            mu_nut_surf: v[16],
            sigma_nut_surf: v[17],
            eps: v[18],
        }
    }
}

/// `x'_k = (x_k - mu_k) / (sigma_k + eps)`.
pub fn normalize_inputs(x: [f64; 4], stats: &NormStats) -> [f64; 4] {
    std::array::from_fn(|k| (x[k] - stats.mu_in[k]) / (stats.sigma_in[k] + stats.eps))
}

/// Volume statistics for every channel, except turbulent viscosity on wall
/// nodes which uses the wall statistic.
pub fn normalize_targets(y: [f64; 4], on_surface: bool, stats: &NormStats) -> [f64; 4] {
    std::array::from_fn(|k| {
        let (mu, sigma) = stats.target_stats(k, on_surface);
        (y[k] - mu) / (sigma + stats.eps)
    })
}

pub fn denormalize_targets(y: [f64; 4], on_surface: bool, stats: &NormStats) -> [f64; 4] {
    std::array::from_fn(|k| {
        let (mu, sigma) = stats.target_stats(k, on_surface);
        y[k] * (sigma + stats.eps) + mu
    })
}

/// `Re = V L / nu`, rounded to 15 significant digits so decimal inputs such
/// as `nu = 1e-5` give the decimal result (`10 / 1e-5` alone is `999999.9999999999`).
pub fn reynolds_number(speed: f64, length: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::Argument(format!("viscosity must be > 0, got {nu}")));
    }
    let re = speed * length / nu;
    if !re.is_finite() || re == 0.0 {
        return Ok(re);
    }
    Ok(format!("{re:.14e}")
        .parse()
        .expect("formatted float parses"))
}
