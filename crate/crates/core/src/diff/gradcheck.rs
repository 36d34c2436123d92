use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ParamGrads, ParamStore};
use crate::error::Result;

/// One evaluation of the function under test.
pub struct Probe {
    pub loss: f64,
    /// Analytic gradients; only requested at the base point.
    pub grads: Option<ParamGrads>,
    /// [`super::Tape::relu_signature`] of the pass.
    pub signature: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many entries of each array (seeded choice).
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
    /// Scales the round-off floor `noise_factor * eps_machine * |loss| / step`
    /// added to the error denominator; 0 gives the bare `|a| + 1e-12`.
    pub noise_factor: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_entries_per_param: None,
            seed: 0,
            noise_factor: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
    /// Entries whose ±step probes crossed a ReLU kink.
    pub skipped_kinks: usize,
}

/// Compares analytic gradients of every trainable array with central
/// differences: `max |a - n| / (|a| + floor)`.
///
/// Entries whose perturbed passes change any ReLU branch are skipped, since
/// the difference quotient straddles a kink there.
pub fn finite_diff_check<F>(store: &ParamStore, mut f: F, opts: &FdOptions) -> Result<FdReport>
where
    F: FnMut(&ParamStore, bool) -> Result<Probe>,
{
    let base = f(store, true)?;
    let grads = base.grads.expect("analytic gradients at the base point");
    let h = opts.step;
    let floor = 1e-12 + opts.noise_factor * f64::EPSILON * base.loss.abs().max(1.0) / h;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = store.clone();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: None,
        worst_values: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let ids: Vec<_> = store.trainable_ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(k) if k < n => {
                let mut v = index::sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for k in entries {
            let orig = store.get(id).data[k];
            work.get_mut(id).data[k] = orig + h;
            let plus = f(&work, false)?;
            work.get_mut(id).data[k] = orig - h;
            let minus = f(&work, false)?;
            work.get_mut(id).data[k] = orig;
            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * h);
            let analytic = grads.get(id).data[k];
            let err = (analytic - numeric).abs() / (analytic.abs() + floor);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((store.entry(id).name.clone(), k));
                report.worst_values = Some((analytic, numeric));
            }
        }
    }
    Ok(report)
}
