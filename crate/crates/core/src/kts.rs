//! Kernel temporal segmentation.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::FeatureSequence;
use crate::numgrad::Matrix;

/// A partition of `[0, N)` into consecutive non-empty intervals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    boundaries: Vec<usize>,
}

impl Segmentation {
    /// `boundaries` must start at 0 and be strictly increasing with at least
    /// one segment.
    pub fn from_boundaries(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(Error::contract(format!(
                "segment boundaries must start at 0 and hold at least one segment, got {boundaries:?}"
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract(format!(
                "segment boundaries must be strictly increasing, got {boundaries:?}"
            )));
        }
        Ok(Segmentation { boundaries })
    }

    /// Builds from `[start, end)` pairs that tile `[0, N)` in order.
    pub fn from_intervals(intervals: &[(usize, usize)]) -> Result<Self> {
        let mut b = vec![0];
        for &(s, e) in intervals {
            if s != *b.last().unwrap() {
                return Err(Error::contract(format!(
                    "segment [{s}, {e}) does not continue from frame {}",
                    b.last().unwrap()
                )));
            }
            b.push(e);
        }
        Self::from_boundaries(b)
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::from_boundaries(vec![0, n])
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Number of frames covered.
    pub fn frames(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn segment(&self, k: usize) -> (usize, usize) {
        (self.boundaries[k], self.boundaries[k + 1])
    }

    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.boundaries.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

impl Serialize for Segmentation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.segments().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Segmentation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<(usize, usize)>::deserialize(d)?;
        Segmentation::from_intervals(&pairs).map_err(serde::de::Error::custom)
    }
}

/// Gram matrix of the L2-normalized feature rows.
pub fn kernel_matrix(x: &FeatureSequence) -> Matrix {
    let f = x.features();
    let d = f.cols();
    let n = f.rows();
    let mut unit = f.clone();
    for t in 0..n {
        let row = &mut unit.as_mut_slice()[t * d..(t + 1) * d];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    unit.matmul(&unit.transpose()).expect("square by construction")
}

/// Prefix sums of a kernel matrix for constant-time segment scatter.
pub struct CostTable {
    n: usize,
    diag: Vec<f64>,
    // block[(a)*(n+1) + b] = sum of K[t,u] over t < a, u < b
    block: Vec<f64>,
}

impl CostTable {
    pub fn new(k: &Matrix) -> Result<Self> {
        let (n, c) = k.shape();
        if n != c {
            return Err(Error::dim("kernel", format!("expected a square kernel, got {n}x{c}")));
        }
        let w = n + 1;
        let mut diag = vec![0.0; w];
        let mut block = vec![0.0; w * w];
        for t in 0..n {
            diag[t + 1] = diag[t] + k.get(t, t);
            for u in 0..n {
                block[(t + 1) * w + u + 1] =
                    k.get(t, u) + block[t * w + u + 1] + block[(t + 1) * w + u] - block[t * w + u];
            }
        }
        Ok(CostTable { n, diag, block })
    }

    pub fn frames(&self) -> usize {
        self.n
    }

    /// Within-segment scatter of `[a, b)`.
    pub fn cost(&self, a: usize, b: usize) -> Result<f64> {
        if a >= b || b > self.n {
            return Err(Error::contract(format!(
                "segment [{a}, {b}) is empty or exceeds {} frames",
                self.n
            )));
        }
        Ok(self.cost_unchecked(a, b))
    }

    fn cost_unchecked(&self, a: usize, b: usize) -> f64 {
        let w = self.n + 1;
        let inner = self.block[b * w + b] - self.block[a * w + b] - self.block[b * w + a] + self.block[a * w + a];
        let c = self.diag[b] - self.diag[a] - inner / (b - a) as f64;
        c.max(0.0)
    }
}

/// Scatter of `[a, b)` under kernel `k`. Builds a [`CostTable`]; reuse one
/// directly when evaluating many segments.
pub fn segment_cost(k: &Matrix, a: usize, b: usize) -> Result<f64> {
    CostTable::new(k)?.cost(a, b)
}

pub const DEFAULT_PENALTY_WEIGHT: f64 = 1.0;

/// Model-selection penalty `M * (ln(N / M) + 1)`.
pub fn penalty(n: usize, m: usize) -> f64 {
    let m = m as f64;
    m * ((n as f64 / m).ln() + 1.0)
}

/// Upper bound on segment count giving segments of about two seconds.
pub fn default_max_segments(n: usize, fps: f64) -> usize {
    let m = (n as f64 / (fps * 2.0)).ceil();
    if m.is_finite() && m >= 1.0 {
        (m as usize).min(n.max(1))
    } else {
        1
    }
}

/// Optimal segmentation for every segment count `1..=max_segments`. Entry
/// `m - 1` holds the minimal total scatter with exactly `m` segments and
/// its boundaries.
pub fn optimal_per_count(table: &CostTable, max_segments: usize) -> Result<Vec<(f64, Segmentation)>> {
    let n = table.frames();
    if max_segments == 0 || max_segments > n {
        return Err(Error::contract(format!(
            "max segments must lie in [1, {n}], got {max_segments}"
        )));
    }
    let inf = f64::INFINITY;
    // best[m][t]: minimal scatter covering [0, t) with m segments.
    let mut best = vec![vec![inf; n + 1]; max_segments + 1];
    let mut back = vec![vec![0usize; n + 1]; max_segments + 1];
    best[0][0] = 0.0;
    for m in 1..=max_segments {
        for t in m..=n {
            let mut b = inf;
            let mut arg = m - 1;
            for s in (m - 1)..t {
                let prev = best[m - 1][s];
                if prev == inf {
                    continue;
                }
                let v = prev + table.cost_unchecked(s, t);
                if v < b {
                    b = v;
                    arg = s;
                }
            }
            best[m][t] = b;
            back[m][t] = arg;
        }
    }
    (1..=max_segments)
        .map(|m| {
            let mut b = vec![n];
            let mut t = n;
            for k in (1..=m).rev() {
                t = back[k][t];
                b.push(t);
            }
            b.reverse();
            Ok((best[m][n], Segmentation::from_boundaries(b)?))
        })
        .collect()
}

/// Segments `x`, choosing the count that minimizes total scatter plus
/// `penalty_weight * M * (ln(N / M) + 1)`. Ties go to fewer segments.
pub fn segment(x: &FeatureSequence, max_segments: usize, penalty_weight: f64) -> Result<Segmentation> {
    if !(penalty_weight >= 0.0) {
        return Err(Error::contract(format!(
            "penalty weight must be non-negative, got {penalty_weight}"
        )));
    }
    let table = CostTable::new(&kernel_matrix(x))?;
    let n = x.frames();
    let mut chosen: Option<(f64, Segmentation)> = None;
    for (m, (scatter, seg)) in optimal_per_count(&table, max_segments)?.into_iter().enumerate() {
        let objective = scatter + penalty_weight * penalty(n, m + 1);
        if chosen.as_ref().is_none_or(|(o, _)| objective < *o) {
            chosen = Some((objective, seg));
        }
    }
    Ok(chosen.expect("at least one segment count").1)
}
