use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::read_json;
use crate::error::Result;
use crate::objectives::Variant;
use crate::trainer::TrainConfig;

/// Optional settings from command-line flags or a JSON config file. Unset
/// fields fall through to the next source.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub variant: Option<Variant>,
    pub budget_seconds: Option<f64>,
    pub budget_fraction: Option<f64>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub hidden: Option<usize>,
    pub max_epochs: Option<usize>,
    pub lambda_sparsity: Option<f64>,
    pub lambda_repel: Option<f64>,
    pub step_size: Option<f64>,
    pub patience: Option<usize>,
    pub rel_tol: Option<f64>,
    pub grad_clip: Option<f64>,
    pub entropy_warmup_epochs: Option<usize>,
    pub aesthetic_threshold: Option<f64>,
    pub discretize_aesthetic: Option<bool>,
    pub penalty_weight: Option<f64>,
    pub max_segments: Option<usize>,
    pub match_threshold: Option<f64>,
}

macro_rules! prefer {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Overrides { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        read_json(path, "config")
    }

    /// Field-wise merge where `self` wins over `lower`.
    pub fn over(&self, lower: &Overrides) -> Overrides {
        prefer!(
            self, lower, delta, alpha, beta, variant, budget_seconds, budget_fraction, m, seed, hidden,
            max_epochs, lambda_sparsity, lambda_repel, step_size, patience, rel_tol, grad_clip,
            entropy_warmup_epochs, aesthetic_threshold, discretize_aesthetic, penalty_weight, max_segments,
            match_threshold
        )
    }

    /// Applies the training-related fields on top of `base`. Setting only
    /// one of alpha/beta fills in the other so they sum to one.
    pub fn train_config(&self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut c = base.clone();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.loss_weights.delta, self.delta);
        set(&mut c.loss_weights.lambda_sparsity, self.lambda_sparsity);
        set(&mut c.loss_weights.lambda_repel, self.lambda_repel);
        set(&mut c.step_size, self.step_size);
        set(&mut c.rel_tol, self.rel_tol);
        set(&mut c.grad_clip, self.grad_clip);
        set(&mut c.fusion.aesthetic_threshold, self.aesthetic_threshold);
        match (self.alpha, self.beta) {
            (Some(a), Some(b)) => (c.fusion.alpha, c.fusion.beta) = (a, b),
            (Some(a), None) => (c.fusion.alpha, c.fusion.beta) = (a, 1.0 - a),
            (None, Some(b)) => (c.fusion.alpha, c.fusion.beta) = (1.0 - b, b),
            (None, None) => {}
        }
        if let Some(v) = self.discretize_aesthetic {
            c.fusion.discretize_aesthetic = v;
        }
        if let Some(v) = self.variant {
            c.variant = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.hidden {
            c.hidden = v;
        }
        if let Some(v) = self.max_epochs {
            c.max_epochs = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        if let Some(v) = self.entropy_warmup_epochs {
            c.entropy_warmup_epochs = v;
        }
        c.validate()?;
        Ok(c)
    }
}
