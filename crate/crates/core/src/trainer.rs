//! Unsupervised training with a bias-corrected adaptive-moment optimizer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward_graph, FeatureSequence, ModelParams, DEFAULT_HIDDEN};
use crate::numgrad::{Graph, Matrix};
use crate::objectives::{scaled_loss_graph, LossBreakdown, LossWeights, Variant};
use crate::selection::{FusionConfig, ScoreVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub rel_tol: f64,
    pub grad_clip: f64,
    /// Epochs over which the entropy part of the sparsity term is ramped
    /// linearly from 0 to full weight. 0 trains on the full objective from
    /// the start.
    pub entropy_warmup_epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    pub loss_weights: LossWeights,
    pub variant: Variant,
    pub fusion: FusionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            patience: 5,
            rel_tol: 1e-4,
            grad_clip: 5.0,
            entropy_warmup_epochs: 20,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            loss_weights: LossWeights::default(),
            variant: Variant::Rep,
            fusion: FusionConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.step_size > 0.0) {
            return Err(Error::contract("step size must be positive"));
        }
        if !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::contract("moment decay rates must lie in (0,1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::contract("epsilon must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::contract("max_epochs must be at least 1"));
        }
        if !(self.rel_tol > 0.0) || !(self.grad_clip > 0.0) {
            return Err(Error::contract("rel_tol and grad_clip must be positive"));
        }
        if self.hidden == 0 {
            return Err(Error::contract("hidden size must be at least 1"));
        }
        self.loss_weights.validate()?;
        self.fusion.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<LossBreakdown>,
    pub epochs_run: usize,
    pub converged: bool,
    pub final_params: ModelParams,
}

impl TrainReport {
    /// One tab-separated line per epoch: epoch, reconstruction, sparsity,
    /// repelling, total.
    pub fn log_tsv(&self) -> String {
        let mut out = String::new();
        for (e, l) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e + 1,
                l.reconstruction,
                l.sparsity,
                l.repelling,
                l.total
            );
        }
        out
    }

    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.epoch_losses.last()
    }
}

/// Adam state for one parameter set.
struct Adam {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let zeros = || {
            params
                .network()
                .tensors()
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect()
        };
        Adam {
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &[Matrix], cfg: &TrainConfig) {
        self.steps += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.steps);
        let c2 = 1.0 - cfg.beta2.powi(self.steps);
        let tensors = params.network_mut().tensors_mut();
        for (k, w) in tensors.into_iter().enumerate() {
            let m = self.first[k].as_mut_slice();
            let v = self.second[k].as_mut_slice();
            for (e, (wv, &gv)) in w.as_mut_slice().iter_mut().zip(grads[k].as_slice()).enumerate() {
                m[e] = cfg.beta1 * m[e] + (1.0 - cfg.beta1) * gv;
                v[e] = cfg.beta2 * v[e] + (1.0 - cfg.beta2) * gv * gv;
                let m_hat = m[e] / c1;
                let v_hat = v[e] / c2;
                *wv -= cfg.step_size * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Loss breakdown and parameter gradients of the full objective for one video.
pub fn loss_and_gradients(
    params: &ModelParams,
    x: &FeatureSequence,
    q: &ScoreVector,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<Matrix>)> {
    scaled_loss_and_gradients(params, x, q, cfg, 1.0)
}

fn scaled_loss_and_gradients(
    params: &ModelParams,
    x: &FeatureSequence,
    q: &ScoreVector,
    cfg: &TrainConfig,
    entropy_scale: f64,
) -> Result<(LossBreakdown, Vec<Matrix>)> {
    let mut g = Graph::new();
    let net = params.bind(&mut g);
    let xn = g.leaf(x.features().clone());
    let trace = forward_graph(&mut g, &net, xn, q, &cfg.fusion)?;
    let loss = scaled_loss_graph(&mut g, &trace, xn, &cfg.loss_weights, cfg.variant, entropy_scale)?;
    g.backward(loss.objective)?;
    let grads = net.tensors().into_iter().map(|id| g.grad(*id).clone()).collect();
    Ok((loss.breakdown(&g), grads))
}

/// Entropy weight at 1-based `epoch`: 0 at epoch 1, reaching 1 at
/// `warmup + 1`.
pub fn entropy_scale(epoch: usize, warmup: usize) -> f64 {
    if warmup == 0 {
        1.0
    } else {
        ((epoch.saturating_sub(1)) as f64 / warmup as f64).min(1.0)
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|m| m.as_slice())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for m in grads.iter_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

pub fn train_video(x: &FeatureSequence, q: &ScoreVector, cfg: &TrainConfig) -> Result<TrainReport> {
    train_corpus(&[(x.clone(), q.clone())], cfg)
}

/// Trains one shared model, taking one step per video per epoch in the given
/// order. Convergence is judged on the mean epoch loss.
pub fn train_corpus(videos: &[(FeatureSequence, ScoreVector)], cfg: &TrainConfig) -> Result<TrainReport> {
    let Some((first, _)) = videos.first() else {
        return Err(Error::contract("cannot train on an empty corpus"));
    };
    let params = ModelParams::init(first.dim(), cfg.hidden, cfg.seed)?;
    train_from(params, videos, cfg)
}

/// Like [`train_corpus`] but starting from existing parameters.
pub fn train_from(
    mut params: ModelParams,
    videos: &[(FeatureSequence, ScoreVector)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(Error::contract("cannot train on an empty corpus"));
    }
    for (x, q) in videos {
        if x.dim() != params.dim() {
            return Err(Error::dim(
                "train",
                format!("video {:?} has D={}, model has D={}", x.source_id(), x.dim(), params.dim()),
            ));
        }
        if q.len() != x.frames() {
            return Err(Error::contract(format!(
                "video {:?}: {} aesthetic scores for {} frames",
                x.source_id(),
                q.len(),
                x.frames()
            )));
        }
    }

    let mut adam = Adam::new(&params);
    let mut epoch_losses = Vec::new();
    let mut stalled = 0;
    let mut converged = false;

    for epoch in 1..=cfg.max_epochs {
        let entropy_scale = entropy_scale(epoch, cfg.entropy_warmup_epochs);
        let mut mean = LossBreakdown::default();
        for (x, q) in videos {
            let (loss, mut grads) = scaled_loss_and_gradients(&params, x, q, cfg, entropy_scale)?;
            if let Some(term) = loss.non_finite_term() {
                return Err(Error::NonFinite { term, epoch });
            }
            let norm = clip_global_norm(&mut grads, cfg.grad_clip);
            if !norm.is_finite() {
                return Err(Error::NonFinite { term: "gradient", epoch });
            }
            adam.step(&mut params, &grads, cfg);
            mean.reconstruction += loss.reconstruction;
            mean.sparsity += loss.sparsity;
            mean.repelling += loss.repelling;
            mean.total += loss.total;
        }
        let k = videos.len() as f64;
        mean.reconstruction /= k;
        mean.sparsity /= k;
        mean.repelling /= k;
        mean.total /= k;

        // The objective is still moving during warmup, so progress is not judged.
        let warming = entropy_scale < 1.0;
        if let Some(prev) = epoch_losses.last().map(|l: &LossBreakdown| l.total).filter(|_| !warming) {
            let improvement = (prev - mean.total) / prev.abs().max(f64::MIN_POSITIVE);
            if improvement < cfg.rel_tol {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        epoch_losses.push(mean);
        if stalled >= cfg.patience {
            converged = true;
            break;
        }
    }

    if !params.is_finite() {
        return Err(Error::NonFinite {
            term: "parameters",
            epoch: epoch_losses.len(),
        });
    }

    Ok(TrainReport {
        epochs_run: epoch_losses.len(),
        epoch_losses,
        converged,
        final_params: params,
    })
}
