//! Score fusion, discretization and frame ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Importance,
    Aesthetic,
    Selection,
}

/// Per-frame scores, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    values: Vec<f64>,
    kind: ScoreKind,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if let Some((t, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::input(format!(
                "{kind:?} score at frame {t} is {v}, outside [0,1]"
            )));
        }
        Ok(ScoreVector { values, kind })
    }

    /// Aesthetics-neutral scores: all ones.
    pub fn ones(n: usize, kind: ScoreKind) -> Self {
        ScoreVector {
            values: vec![1.0; n],
            kind,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.values).expect("f64 slice serializes")
    }

    pub fn from_json(s: &str, kind: ScoreKind) -> Result<Self> {
        let values: Vec<f64> =
            serde_json::from_str(s).map_err(|e| Error::input(format!("score JSON: {e}")))?;
        Self::new(values, kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FusionConfig {
    /// Weight on importance scores.
    pub alpha: f64,
    /// Weight on aesthetic scores.
    pub beta: f64,
    pub aesthetic_threshold: f64,
    pub discretize_aesthetic: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: 0.25,
            beta: 0.75,
            aesthetic_threshold: 0.5,
            discretize_aesthetic: false,
        }
    }
}

impl FusionConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = FusionConfig {
            alpha,
            beta,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.alpha) || !unit.contains(&self.beta) {
            return Err(Error::contract(format!(
                "alpha={} and beta={} must lie in [0,1]",
                self.alpha, self.beta
            )));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "alpha + beta must equal 1, got {}",
                self.alpha + self.beta
            )));
        }
        if !unit.contains(&self.aesthetic_threshold) {
            return Err(Error::contract("aesthetic threshold must lie in [0,1]"));
        }
        Ok(())
    }

    /// The aesthetic scores as they enter fusion (thresholded when enabled).
    pub fn effective_aesthetic(&self, q: &ScoreVector) -> ScoreVector {
        if self.discretize_aesthetic {
            discretize_unchecked(q, self.aesthetic_threshold)
        } else {
            q.clone()
        }
    }
}

/// `s_t = alpha * i_t + beta * q_t`.
pub fn fuse(importance: &ScoreVector, aesthetic: &ScoreVector, cfg: &FusionConfig) -> Result<ScoreVector> {
    cfg.validate()?;
    if importance.len() != aesthetic.len() {
        return Err(Error::contract(format!(
            "cannot fuse {} importance scores with {} aesthetic scores",
            importance.len(),
            aesthetic.len()
        )));
    }
    let q = cfg.effective_aesthetic(aesthetic);
    let values = importance
        .values
        .iter()
        .zip(&q.values)
        .map(|(i, q)| (cfg.alpha * i + cfg.beta * q).clamp(0.0, 1.0))
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::Selection,
    })
}

/// Maps every entry to 1 if it is at least `threshold`, else 0.
pub fn discretize(s: &ScoreVector, threshold: f64) -> Result<ScoreVector> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::contract(format!(
            "discretization threshold must lie in (0,1), got {threshold}"
        )));
    }
    Ok(discretize_unchecked(s, threshold))
}

fn discretize_unchecked(s: &ScoreVector, threshold: f64) -> ScoreVector {
    ScoreVector {
        values: s
            .values
            .iter()
            .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
            .collect(),
        kind: s.kind,
    }
}

/// Indices of the `m` highest scores, best first; ties go to the earlier frame.
pub fn top_m(s: &ScoreVector, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > s.len() {
        return Err(Error::contract(format!(
            "top-m needs 1 <= m <= {}, got {m}",
            s.len()
        )));
    }
    Ok(rank(s.values()).into_iter().take(m).collect())
}

/// All frame indices ordered by descending score, ties by index.
pub fn rank(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}
