//! Training objective: squared reconstruction error, the budget + entropy
//! sparsity term, and the pairwise-cosine repelling term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TraceNodes;
use crate::numgrad::{binary_entropy as entropy, Graph, Matrix, NodeId};
use crate::selection::ScoreVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Sparsity regularizer only.
    Base,
    /// Sparsity plus repelling regularizer.
    Rep,
    /// Trained like `Rep`; scores are discretized at inference.
    Disc,
}

impl Variant {
    pub fn uses_repelling(self) -> bool {
        matches!(self, Variant::Rep | Variant::Disc)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "rep" => Ok(Variant::Rep),
            "disc" => Ok(Variant::Disc),
            other => Err(Error::input(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LossWeights {
    pub lambda_sparsity: f64,
    pub lambda_repel: f64,
    /// Target fraction of selected frames.
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_sparsity: 0.1,
            lambda_repel: 1.0,
            delta: 0.15,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::contract(format!("delta must lie in [0,1], got {}", self.delta)));
        }
        if !(self.lambda_sparsity >= 0.0 && self.lambda_repel >= 0.0) {
            return Err(Error::contract("loss weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub sparsity: f64,
    pub repelling: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// First non-finite component, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("reconstruction", self.reconstruction),
            ("sparsity", self.sparsity),
            ("repelling", self.repelling),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// Mean of squared differences over all entries.
pub fn reconstruction_loss(x: &Matrix, xbar: &Matrix) -> Result<f64> {
    if x.shape() != xbar.shape() {
        return Err(Error::contract(format!(
            "reconstruction shape {:?} differs from input {:?}",
            xbar.shape(),
            x.shape()
        )));
    }
    let n = x.len().max(1) as f64;
    Ok(x.as_slice()
        .iter()
        .zip(xbar.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Binary entropy in nats; `0` and `1` map to exactly zero.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::contract(format!("entropy needs p in [0,1], got {p}")));
    }
    Ok(entropy(p))
}

/// `|sum_t (i_t - delta)| + sum_t H(i_t)`.
pub fn sparsity_loss(importance: &[f64], delta: f64) -> Result<f64> {
    let mut ent = 0.0;
    for &p in importance {
        ent += binary_entropy(p)?;
    }
    let budget: f64 = importance.iter().map(|i| i - delta).sum();
    Ok(budget.abs() + ent)
}

/// Mean squared cosine similarity over ordered pairs of distinct rows.
/// Rows with zero norm contribute zero to every pair.
pub fn repelling_loss(hidden: &Matrix) -> Result<f64> {
    let n = hidden.rows();
    if n < 2 {
        return Err(Error::contract(format!(
            "repelling loss needs at least 2 hidden states, got {n}"
        )));
    }
    let norms: Vec<f64> = (0..n)
        .map(|t| hidden.row(t).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut acc = 0.0;
    for t in 0..n {
        for u in 0..n {
            if t == u || norms[t] == 0.0 || norms[u] == 0.0 {
                continue;
            }
            let dot: f64 = hidden.row(t).iter().zip(hidden.row(u)).map(|(a, b)| a * b).sum();
            let cos = dot / (norms[t] * norms[u]);
            acc += cos * cos;
        }
    }
    Ok(acc / (n * (n - 1)) as f64)
}

/// Graph nodes of each loss term.
pub struct LossNodes {
    pub reconstruction: NodeId,
    pub sparsity: NodeId,
    pub repelling: Option<NodeId>,
    /// The full weighted objective.
    pub total: NodeId,
    /// The node to differentiate. Equal to `total` unless the entropy part of
    /// the sparsity term is scaled down.
    pub objective: NodeId,
}

impl LossNodes {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        let scalar = |id: NodeId| g.value(id).get(0, 0);
        LossBreakdown {
            reconstruction: scalar(self.reconstruction),
            sparsity: scalar(self.sparsity),
            repelling: self.repelling.map_or(0.0, scalar),
            total: scalar(self.total),
        }
    }
}

pub fn reconstruction_graph(g: &mut Graph, x: NodeId, xbar: NodeId) -> Result<NodeId> {
    if g.shape(x) != g.shape(xbar) {
        return Err(Error::contract(format!(
            "reconstruction shape {:?} differs from input {:?}",
            g.shape(xbar),
            g.shape(x)
        )));
    }
    let diff = g.sub(x, xbar)?;
    let sq = g.square(diff);
    Ok(g.mean(sq))
}

/// Budget and entropy parts of the sparsity term, as separate scalar nodes.
pub fn sparsity_parts_graph(g: &mut Graph, importance: NodeId, delta: f64) -> Result<(NodeId, NodeId)> {
    let (n, c) = g.shape(importance);
    let target = g.leaf(Matrix::filled(n, c, delta));
    let centered = g.sub(importance, target)?;
    let budget = g.sum(centered);
    let budget = g.abs(budget);
    let ent = g.binary_entropy(importance)?;
    Ok((budget, g.sum(ent)))
}

pub fn sparsity_graph(g: &mut Graph, importance: NodeId, delta: f64) -> Result<NodeId> {
    let (budget, ent) = sparsity_parts_graph(g, importance, delta)?;
    g.add(budget, ent)
}

pub fn repelling_graph(g: &mut Graph, hidden: NodeId) -> Result<NodeId> {
    let n = g.shape(hidden).0;
    if n < 2 {
        return Err(Error::contract(format!(
            "repelling loss needs at least 2 hidden states, got {n}"
        )));
    }
    let unit = g.normalize_rows(hidden);
    let unit_t = g.transpose(unit);
    let gram = g.matmul(unit, unit_t)?;
    let mut mask = Matrix::filled(n, n, 1.0);
    for t in 0..n {
        mask.set(t, t, 0.0);
    }
    let mask = g.leaf(mask);
    let off = g.mul(gram, mask)?;
    let sq = g.square(off);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / (n * (n - 1)) as f64))
}

/// Weighted objective over a forward trace held in `g`. `x` is the target
/// feature node.
pub fn total_loss_graph(
    g: &mut Graph,
    trace: &TraceNodes,
    x: NodeId,
    weights: &LossWeights,
    variant: Variant,
) -> Result<LossNodes> {
    scaled_loss_graph(g, trace, x, weights, variant, 1.0)
}

/// Like [`total_loss_graph`], but the `objective` node multiplies the
/// entropy part of the sparsity term by `entropy_scale` in `[0, 1]`.
pub fn scaled_loss_graph(
    g: &mut Graph,
    trace: &TraceNodes,
    x: NodeId,
    weights: &LossWeights,
    variant: Variant,
    entropy_scale: f64,
) -> Result<LossNodes> {
    weights.validate()?;
    if !(0.0..=1.0).contains(&entropy_scale) {
        return Err(Error::contract(format!(
            "entropy scale must lie in [0,1], got {entropy_scale}"
        )));
    }
    let reconstruction = reconstruction_graph(g, x, trace.reconstruction)?;
    let (budget, ent) = sparsity_parts_graph(g, trace.importance, weights.delta)?;
    let sparsity = g.add(budget, ent)?;
    let repelling = if variant.uses_repelling() {
        Some(repelling_graph(g, trace.enc_hidden)?)
    } else {
        None
    };

    let build = |g: &mut Graph, sp: NodeId| -> Result<NodeId> {
        let scaled = g.scale(sp, weights.lambda_sparsity);
        let mut total = g.add(reconstruction, scaled)?;
        if let Some(rep) = repelling {
            let scaled = g.scale(rep, weights.lambda_repel);
            total = g.add(total, scaled)?;
        }
        Ok(total)
    };
    let total = build(g, sparsity)?;
    let objective = if entropy_scale == 1.0 {
        total
    } else {
        let ent = g.scale(ent, entropy_scale);
        let sp = g.add(budget, ent)?;
        build(g, sp)?
    };
    Ok(LossNodes {
        reconstruction,
        sparsity,
        repelling,
        total,
        objective,
    })
}

/// Value-level objective for an already computed trace.
pub fn total_loss(
    importance: &ScoreVector,
    enc_hidden: &Matrix,
    reconstruction: &Matrix,
    x: &Matrix,
    weights: &LossWeights,
    variant: Variant,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let rec = reconstruction_loss(x, reconstruction)?;
    let sp = sparsity_loss(importance.values(), weights.delta)?;
    let rep = if variant.uses_repelling() {
        repelling_loss(enc_hidden)?
    } else {
        0.0
    };
    let lambda_rep = if variant.uses_repelling() { weights.lambda_repel } else { 0.0 };
    Ok(LossBreakdown {
        reconstruction: rec,
        sparsity: sp,
        repelling: rep,
        total: rec + weights.lambda_sparsity * sp + lambda_rep * rep,
    })
}
