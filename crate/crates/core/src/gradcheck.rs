//! Finite-difference verification of the full training objective.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{FeatureSequence, ModelParams, TENSOR_NAMES};
use crate::numgrad::{relative_error, Matrix};
use crate::objectives::Variant;
use crate::selection::{ScoreKind, ScoreVector};
use crate::trainer::{loss_and_gradients, TrainConfig};

pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TensorCheck {
    pub name: &'static str,
    pub entries: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GradcheckReport {
    pub frames: usize,
    pub dim: usize,
    pub hidden: usize,
    pub tensors: Vec<TensorCheck>,
    pub max_relative_error: f64,
    pub parameters_checked: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares analytic gradients of the full objective (repelling variant,
/// non-trivial aesthetics) with central differences of step [`STEP`] for
/// every parameter of a random `n x d` instance with hidden size `h`.
pub fn run(n: usize, d: usize, h: usize, seed: u64) -> Result<GradcheckReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = FeatureSequence::new(Matrix::from_vec(n, d, data)?, 1.0, "gradcheck")?;
    let q = ScoreVector::new((0..n).map(|_| rng.gen_range(0.0..1.0)).collect(), ScoreKind::Aesthetic)?;
    let cfg = TrainConfig {
        hidden: h,
        variant: Variant::Rep,
        ..Default::default()
    };
    let params = ModelParams::init(d, h, seed)?;
    let (_, grads) = loss_and_gradients(&params, &x, &q, &cfg)?;
    let loss_at = |p: &ModelParams| loss_and_gradients(p, &x, &q, &cfg).map(|(l, _)| l.total);

    let mut tensors = Vec::with_capacity(grads.len());
    let mut probe = params.clone();
    for (k, grad) in grads.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for e in 0..grad.len() {
            let orig = probe.network().tensors()[k].as_slice()[e];
            probe.network_mut().tensors_mut()[k].as_mut_slice()[e] = orig + STEP;
            let plus = loss_at(&probe)?;
            probe.network_mut().tensors_mut()[k].as_mut_slice()[e] = orig - STEP;
            let minus = loss_at(&probe)?;
            probe.network_mut().tensors_mut()[k].as_mut_slice()[e] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(grad.as_slice()[e], numeric));
        }
        tensors.push(TensorCheck {
            name: TENSOR_NAMES[k],
            entries: grad.len(),
            max_relative_error: worst,
        });
    }
    Ok(GradcheckReport {
        frames: n,
        dim: d,
        hidden: h,
        max_relative_error: tensors.iter().map(|t| t.max_relative_error).fold(0.0, f64::max),
        parameters_checked: tensors.iter().map(|t| t.entries).sum(),
        tensors,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn small_instance_passes() {
        let r = super::run(3, 2, 2, 7).unwrap();
        assert_eq!(r.tensors.len(), 22);
        assert_eq!(r.parameters_checked, r.tensors.iter().map(|t| t.entries).sum::<usize>());
        assert!(r.passes(1e-3), "{r:?}");
    }
}
