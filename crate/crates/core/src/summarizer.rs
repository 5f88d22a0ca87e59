//! Thumbnails, animated thumbnails, storyboards and trailers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kts::Segmentation;
use crate::model::{selector_scores, FeatureSequence, ModelParams};
use crate::objectives::Variant;
use crate::selection::{discretize, fuse, rank, top_m, FusionConfig, ScoreVector};
use crate::trainer::TrainConfig;

/// Threshold applied to importance scores by the discretized variant.
pub const DISC_THRESHOLD: f64 = 0.5;
pub const DEFAULT_STORYBOARD_FRACTION: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SummaryKind {
    Thumbnail,
    AnimatedThumbnail,
    Storyboard,
    Trailer,
}

impl SummaryKind {
    pub fn uses_frames(self) -> bool {
        matches!(self, SummaryKind::Thumbnail | SummaryKind::Storyboard)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub kind: SummaryKind,
    pub video_id: String,
    /// Selected frames in temporal order (frame kinds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_indices: Option<Vec<usize>>,
    /// The same frames ordered by descending score (frame kinds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<usize>>,
    /// Selected `[start, end)` segments in temporal order (segment kinds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<(usize, usize)>>,
    pub budget_frames: usize,
}

impl Summary {
    /// Frames in generation order: the ranking when present, otherwise the
    /// temporal order, otherwise every frame of every segment.
    pub fn generated_frames(&self) -> Vec<usize> {
        if let Some(r) = &self.ranking {
            r.clone()
        } else if let Some(f) = &self.frame_indices {
            f.clone()
        } else {
            self.covered_frames()
        }
    }

    /// Every frame covered by the summary, increasing.
    pub fn covered_frames(&self) -> Vec<usize> {
        match (&self.frame_indices, &self.segments) {
            (Some(f), _) => f.clone(),
            (None, Some(s)) => s.iter().flat_map(|&(a, b)| a..b).collect(),
            (None, None) => Vec::new(),
        }
    }

    /// Checks the structural invariants against a video of `n` frames.
    pub fn validate(&self, n: usize) -> Result<()> {
        let frames = self.kind.uses_frames();
        if frames != self.frame_indices.is_some() || frames == self.segments.is_some() {
            return Err(Error::contract(format!(
                "{:?} summary must carry exactly one of frame indices or segments",
                self.kind
            )));
        }
        if let Some(f) = &self.frame_indices {
            if f.windows(2).any(|w| w[0] >= w[1]) || f.last().is_some_and(|&t| t >= n) {
                return Err(Error::contract("frame indices must be strictly increasing and below N"));
            }
        }
        if let Some(s) = &self.segments {
            let ordered = s.iter().all(|&(a, b)| a < b && b <= n) && s.windows(2).all(|w| w[0].1 <= w[1].0);
            if !ordered {
                return Err(Error::contract("segments must be non-empty, disjoint, ordered and within N"));
            }
            let total: usize = s.iter().map(|&(a, b)| b - a).sum();
            if total > self.budget_frames {
                return Err(Error::contract(format!(
                    "segments cover {total} frames, budget is {}",
                    self.budget_frames
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Selection scores used for every summary product. The discretized variant
/// thresholds importance and aesthetic scores before fusion.
pub fn inference_scores(
    params: &ModelParams,
    x: &FeatureSequence,
    q: &ScoreVector,
    fusion: &FusionConfig,
    variant: Variant,
) -> Result<ScoreVector> {
    let i = selector_scores(params, x)?;
    if variant == Variant::Disc {
        let i = discretize(&i, DISC_THRESHOLD)?;
        let fusion = FusionConfig {
            discretize_aesthetic: true,
            ..*fusion
        };
        fuse(&i, q, &fusion)
    } else {
        fuse(&i, q, fusion)
    }
}

/// Training configuration for an `m`-frame thumbnail: `delta = m / N`.
pub fn thumbnail_config(cfg: &TrainConfig, m: usize, n: usize) -> Result<TrainConfig> {
    if m == 0 || m > n {
        return Err(Error::contract(format!("thumbnail needs 1 <= m <= {n}, got {m}")));
    }
    let mut out = cfg.clone();
    out.loss_weights.delta = m as f64 / n as f64;
    Ok(out)
}

/// Sum of selection scores inside each segment.
pub fn segment_scores(sel: &ScoreVector, seg: &Segmentation) -> Result<Vec<f64>> {
    if seg.frames() != sel.len() {
        return Err(Error::contract(format!(
            "segmentation covers {} frames, scores cover {}",
            seg.frames(),
            sel.len()
        )));
    }
    Ok(seg
        .segments()
        .into_iter()
        .map(|(a, b)| sel.values()[a..b].iter().sum())
        .collect())
}

/// Exact 0/1 knapsack over segments: maximizes total score with total length
/// at most `budget_frames`. Among optimal sets prefers fewer frames, then the
/// lexicographically earliest index set. Returns increasing segment indices.
pub fn knapsack_select(lengths: &[usize], scores: &[f64], budget_frames: usize) -> Result<Vec<usize>> {
    if lengths.len() != scores.len() {
        return Err(Error::contract(format!(
            "{} segment lengths but {} scores",
            lengths.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("segment scores must be finite"));
    }
    let k = lengths.len();
    let cap = budget_frames.min(lengths.iter().sum());
    let w = cap + 1;
    // best[i * w + c]: optimum (value, frames) over items i.. with capacity c.
    let mut best = vec![(0.0f64, 0usize); (k + 1) * w];
    let better = |a: (f64, usize), b: (f64, usize)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    for i in (0..k).rev() {
        for c in 0..=cap {
            let skip = best[(i + 1) * w + c];
            let mut pick = skip;
            if lengths[i] <= c {
                let rest = best[(i + 1) * w + c - lengths[i]];
                let take = (scores[i] + rest.0, lengths[i] + rest.1);
                if !better(skip, take) {
                    pick = take;
                }
            }
            best[i * w + c] = pick;
        }
    }
    let mut chosen = Vec::new();
    let mut c = cap;
    for i in 0..k {
        if lengths[i] <= c {
            let rest = best[(i + 1) * w + c - lengths[i]];
            let take = (scores[i] + rest.0, lengths[i] + rest.1);
            if take == best[i * w + c] {
                chosen.push(i);
                c -= lengths[i];
            }
        }
    }
    Ok(chosen)
}

/// The `m` best frames by fused score.
pub fn make_thumbnail(
    x: &FeatureSequence,
    params: &ModelParams,
    q: &ScoreVector,
    cfg: &TrainConfig,
    m: usize,
) -> Result<Summary> {
    let s = inference_scores(params, x, q, &cfg.fusion, cfg.variant)?;
    frame_summary(SummaryKind::Thumbnail, x, &s, m)
}

/// `max(1, round(fraction * N))` frames by fused score, in temporal order.
pub fn make_storyboard(
    x: &FeatureSequence,
    params: &ModelParams,
    q: &ScoreVector,
    cfg: &TrainConfig,
    budget_fraction: f64,
) -> Result<Summary> {
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(Error::contract(format!(
            "budget fraction must lie in (0,1], got {budget_fraction}"
        )));
    }
    let n = x.frames();
    let m = ((budget_fraction * n as f64).round() as usize).clamp(1, n);
    let s = inference_scores(params, x, q, &cfg.fusion, cfg.variant)?;
    frame_summary(SummaryKind::Storyboard, x, &s, m)
}

fn frame_summary(kind: SummaryKind, x: &FeatureSequence, s: &ScoreVector, m: usize) -> Result<Summary> {
    let ranking = top_m(s, m)?;
    let mut frames = ranking.clone();
    frames.sort_unstable();
    Ok(Summary {
        kind,
        video_id: x.source_id().to_string(),
        frame_indices: Some(frames),
        ranking: Some(ranking),
        segments: None,
        budget_frames: m,
    })
}

fn budget_in_frames(x: &FeatureSequence, budget_seconds: f64) -> Result<usize> {
    if !(budget_seconds > 0.0 && budget_seconds.is_finite()) {
        return Err(Error::contract(format!(
            "budget must be a positive number of seconds, got {budget_seconds}"
        )));
    }
    Ok((budget_seconds * x.fps()).round() as usize)
}

/// Knapsack over segment scores with a budget of `round(seconds * fps)` frames.
pub fn make_trailer(
    x: &FeatureSequence,
    params: &ModelParams,
    q: &ScoreVector,
    cfg: &TrainConfig,
    seg: &Segmentation,
    budget_seconds: f64,
) -> Result<Summary> {
    let budget = budget_in_frames(x, budget_seconds)?;
    let s = inference_scores(params, x, q, &cfg.fusion, cfg.variant)?;
    let scores = segment_scores(&s, seg)?;
    let picked = knapsack_select(&seg.lengths(), &scores, budget)?;
    Ok(Summary {
        kind: SummaryKind::Trailer,
        video_id: x.source_id().to_string(),
        frame_indices: None,
        ranking: None,
        segments: Some(picked.into_iter().map(|k| seg.segment(k)).collect()),
        budget_frames: budget,
    })
}

/// A single segment: the one with the highest score per frame among those
/// that fit the budget. When no segment fits, the best-scoring window of
/// budget length inside the densest segment is used instead.
pub fn make_animated_thumbnail(
    x: &FeatureSequence,
    params: &ModelParams,
    q: &ScoreVector,
    cfg: &TrainConfig,
    seg: &Segmentation,
    budget_seconds: f64,
) -> Result<Summary> {
    let budget = budget_in_frames(x, budget_seconds)?;
    if budget == 0 {
        return Err(Error::contract("animated thumbnail budget rounds to zero frames"));
    }
    let s = inference_scores(params, x, q, &cfg.fusion, cfg.variant)?;
    let segment = densest_segment(s.values(), seg, budget)?;
    Ok(Summary {
        kind: SummaryKind::AnimatedThumbnail,
        video_id: x.source_id().to_string(),
        frame_indices: None,
        ranking: None,
        segments: Some(vec![segment]),
        budget_frames: budget,
    })
}

/// Segment choice behind [`make_animated_thumbnail`].
pub fn densest_segment(sel: &[f64], seg: &Segmentation, budget: usize) -> Result<(usize, usize)> {
    let sv = ScoreVector::new(sel.to_vec(), crate::selection::ScoreKind::Selection)?;
    let scores = segment_scores(&sv, seg)?;
    let density: Vec<f64> = scores
        .iter()
        .zip(seg.lengths())
        .map(|(s, l)| s / l as f64)
        .collect();
    let fits: Vec<usize> = (0..seg.len()).filter(|&k| seg.lengths()[k] <= budget).collect();
    if let Some(&k) = fits.iter().min_by(|&&a, &&b| density[b].total_cmp(&density[a]).then(a.cmp(&b))) {
        return Ok(seg.segment(k));
    }
    let k = rank(&density)[0];
    let (a, b) = seg.segment(k);
    let mut best = (f64::NEG_INFINITY, a);
    for start in a..=b - budget {
        let v: f64 = sel[start..start + budget].iter().sum();
        if v > best.0 {
            best = (v, start);
        }
    }
    Ok((best.1, best.1 + budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::Matrix;
    use crate::selection::ScoreKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(lengths: &[usize], scores: &[f64], budget: usize) -> Vec<usize> {
        let k = lengths.len();
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        for mask in 0u32..(1 << k) {
            let set: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
            let len: usize = set.iter().map(|&i| lengths[i]).sum();
            if len > budget {
                continue;
            }
            let val: f64 = set.iter().rev().map(|&i| scores[i]).sum();
            let replace = match &best {
                None => true,
                Some((bv, bl, bs)) => val > *bv || (val == *bv && (len < *bl || (len == *bl && set < *bs))),
            };
            if replace {
                best = Some((val, len, set));
            }
        }
        best.unwrap().2
    }

    fn toy(n: usize, seed: u64) -> (FeatureSequence, ModelParams, ScoreVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        (
            FeatureSequence::new(x, 2.0, "toy").unwrap(),
            ModelParams::init(3, 4, seed).unwrap(),
            ScoreVector::ones(n, ScoreKind::Aesthetic),
        )
    }

    #[test]
    fn segment_scores_examples() {
        let sel = ScoreVector::new(vec![0.1, 0.9, 0.2, 0.3], ScoreKind::Selection).unwrap();
        let seg = Segmentation::from_boundaries(vec![0, 2, 4]).unwrap();
        let s = segment_scores(&sel, &seg).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
        let zero = ScoreVector::new(vec![0.0; 4], ScoreKind::Selection).unwrap();
        assert_eq!(segment_scores(&zero, &seg).unwrap(), vec![0.0, 0.0]);
        let short = Segmentation::from_boundaries(vec![0, 3]).unwrap();
        assert!(segment_scores(&sel, &short).is_err());
    }

    #[test]
    fn knapsack_examples() {
        assert_eq!(knapsack_select(&[3, 4, 5], &[3.0, 4.0, 6.0], 7).unwrap(), vec![0, 1]);
        assert_eq!(knapsack_select(&[3, 4, 5], &[3.0, 4.0, 6.0], 100).unwrap(), vec![0, 1, 2]);
        assert!(knapsack_select(&[3, 4, 5], &[3.0, 4.0, 6.0], 0).unwrap().is_empty());
        // Equal value: fewer frames wins, then the earlier set.
        assert_eq!(knapsack_select(&[2, 1], &[1.0, 1.0], 2).unwrap(), vec![1]);
        assert_eq!(knapsack_select(&[1, 1], &[1.0, 1.0], 1).unwrap(), vec![0]);
        // Zero-valued segments are not padded in.
        assert_eq!(knapsack_select(&[1, 1], &[0.0, 2.0], 5).unwrap(), vec![1]);
        assert!(knapsack_select(&[1], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn thumbnail_contract() {
        let (x, p, q) = toy(6, 1);
        let cfg = TrainConfig::default();
        let t = make_thumbnail(&x, &p, &q, &cfg, 3).unwrap();
        assert_eq!(t.frame_indices.as_ref().unwrap().len(), 3);
        t.validate(6).unwrap();
        let all = make_thumbnail(&x, &p, &q, &cfg, 6).unwrap();
        assert_eq!(all.frame_indices.unwrap(), (0..6).collect::<Vec<_>>());
        assert_eq!(all.ranking.unwrap().len(), 6);
        assert!(make_thumbnail(&x, &p, &q, &cfg, 0).is_err());
        assert!(make_thumbnail(&x, &p, &q, &cfg, 7).is_err());
        let c = thumbnail_config(&cfg, 2, 8).unwrap();
        assert_eq!(c.loss_weights.delta, 0.25);
    }

    #[test]
    fn storyboard_contract() {
        let (x, p, q) = toy(10, 2);
        let cfg = TrainConfig::default();
        let all = make_storyboard(&x, &p, &q, &cfg, 1.0).unwrap();
        assert_eq!(all.frame_indices.unwrap(), (0..10).collect::<Vec<_>>());
        let sb = make_storyboard(&x, &p, &q, &cfg, 0.3).unwrap();
        let f = sb.frame_indices.clone().unwrap();
        assert_eq!(f.len(), 3);
        assert!(f.windows(2).all(|w| w[0] < w[1]));
        let mut r = sb.ranking.clone().unwrap();
        r.sort_unstable();
        assert_eq!(r, f);
        assert_eq!(make_storyboard(&x, &p, &q, &cfg, 0.01).unwrap().budget_frames, 1);
        assert!(make_storyboard(&x, &p, &q, &cfg, 0.0).is_err());
        assert!(make_storyboard(&x, &p, &q, &cfg, 1.5).is_err());
    }

    #[test]
    fn trailer_contract() {
        let (x, p, q) = toy(10, 3);
        let cfg = TrainConfig::default();
        let seg = Segmentation::from_boundaries(vec![0, 3, 5, 10]).unwrap();
        let full = make_trailer(&x, &p, &q, &cfg, &seg, x.duration_seconds()).unwrap();
        assert_eq!(full.segments.clone().unwrap(), seg.segments());
        full.validate(10).unwrap();
        let short = make_trailer(&x, &p, &q, &cfg, &seg, 2.0).unwrap();
        assert_eq!(short.budget_frames, 4);
        short.validate(10).unwrap();
        assert!(make_trailer(&x, &p, &q, &cfg, &seg, 0.0).is_err());
    }

    #[test]
    fn animated_picks_densest_feasible() {
        let sel = [0.9, 0.9, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5];
        let seg = Segmentation::from_boundaries(vec![0, 2, 5, 10]).unwrap();
        assert_eq!(densest_segment(&sel, &seg, 3).unwrap(), (0, 2));
        // The first segment is too long; the last is densest of the rest.
        let seg = Segmentation::from_boundaries(vec![0, 4, 7, 10]).unwrap();
        assert_eq!(densest_segment(&sel, &seg, 3).unwrap(), (7, 10));
        // Nothing fits: best window inside the densest segment.
        let seg = Segmentation::from_boundaries(vec![0, 5, 10]).unwrap();
        assert_eq!(densest_segment(&sel, &seg, 2).unwrap(), (5, 7));

        let (x, p, q) = toy(10, 4);
        let seg = Segmentation::from_boundaries(vec![0, 4, 6, 10]).unwrap();
        let a = make_animated_thumbnail(&x, &p, &q, &TrainConfig::default(), &seg, 2.5).unwrap();
        assert_eq!(a.segments.as_ref().unwrap().len(), 1);
        a.validate(10).unwrap();
    }

    #[test]
    fn disc_variant_uses_binary_scores() {
        let (x, p, q) = toy(8, 5);
        let s = inference_scores(&p, &x, &q, &FusionConfig::default(), Variant::Disc).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.75 || v == 1.0));
    }

    #[test]
    fn summary_json_round_trip() {
        let (x, p, q) = toy(6, 6);
        let t = make_thumbnail(&x, &p, &q, &TrainConfig::default(), 2).unwrap();
        let j = t.to_json();
        assert!(j.contains("\"kind\": \"thumbnail\"") && j.contains("\"videoId\""));
        assert!(!j.contains("segments"));
        assert_eq!(serde_json::from_str::<Summary>(&j).unwrap(), t);
    }

    #[test]
    fn validate_rejects_broken_summaries() {
        let mut s = Summary {
            kind: SummaryKind::Trailer,
            video_id: "v".into(),
            frame_indices: None,
            ranking: None,
            segments: Some(vec![(0, 3), (5, 8)]),
            budget_frames: 5,
        };
        assert!(s.validate(10).is_err());
        s.budget_frames = 6;
        s.validate(10).unwrap();
        s.frame_indices = Some(vec![1]);
        assert!(s.validate(10).is_err());
    }

    proptest! {
        #[test]
        fn knapsack_matches_enumeration(
            items in prop::collection::vec((1usize..6, 0.0f64..1.0), 1..=10),
            budget in 0usize..30,
        ) {
            let (lengths, scores): (Vec<_>, Vec<_>) = items.into_iter().unzip();
            prop_assert_eq!(knapsack_select(&lengths, &scores, budget).unwrap(), brute_force(&lengths, &scores, budget));
        }

        #[test]
        fn knapsack_beats_any_single_segment(
            items in prop::collection::vec((1usize..6, 0.0f64..1.0), 1..=10),
            budget in 0usize..30,
        ) {
            let (lengths, scores): (Vec<_>, Vec<_>) = items.into_iter().unzip();
            let picked = knapsack_select(&lengths, &scores, budget).unwrap();
            let value: f64 = picked.iter().map(|&i| scores[i]).sum();
            let total: usize = picked.iter().map(|&i| lengths[i]).sum();
            prop_assert!(total <= budget);
            for i in 0..lengths.len() {
                if lengths[i] <= budget {
                    prop_assert!(value >= scores[i] - 1e-12);
                }
            }
        }
    }
}
