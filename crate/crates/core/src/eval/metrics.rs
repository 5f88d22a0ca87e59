use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::ssim::{ssim, GrayImage};
use crate::error::{Error, Result};
use crate::summarizer::{Summary, SummaryKind};

/// SSIM above which two frames count as the same.
pub const MATCH_THRESHOLD: f64 = 0.7;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JudgeAnnotation {
    pub frame_selections: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyshots: Option<Vec<(usize, usize)>>,
}

impl JudgeAnnotation {
    /// Keyshot intervals, or one unit interval per selected frame when the
    /// judge gave none.
    pub fn keyshot_intervals(&self) -> Vec<(usize, usize)> {
        match &self.keyshots {
            Some(k) => k.clone(),
            None => self.frame_selections.iter().map(|&t| (t, t + 1)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HumanAnnotation {
    pub video_id: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub judges: Vec<JudgeAnnotation>,
}

impl HumanAnnotation {
    pub fn validate(&self) -> Result<()> {
        if self.judges.is_empty() {
            return Err(Error::input(format!("annotation for {:?} has no judges", self.video_id)));
        }
        for (j, judge) in self.judges.iter().enumerate() {
            if let Some(&t) = judge.frame_selections.iter().find(|&&t| t >= self.n) {
                return Err(Error::input(format!(
                    "{:?} judge {j}: frame {t} outside [0, {})",
                    self.video_id, self.n
                )));
            }
            for &(a, b) in judge.keyshots.iter().flatten() {
                if a >= b || b > self.n {
                    return Err(Error::input(format!(
                        "{:?} judge {j}: keyshot [{a}, {b}) is empty or outside [0, {})",
                        self.video_id, self.n
                    )));
                }
            }
        }
        Ok(())
    }

    /// Frames picked by at least one judge.
    pub fn union(&self) -> BTreeSet<usize> {
        self.judges.iter().flat_map(|j| j.frame_selections.iter().copied()).collect()
    }

    /// The `k` frames picked by the most judges; ties go to the earlier frame.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut votes: HashMap<usize, usize> = HashMap::new();
        for j in &self.judges {
            let distinct: BTreeSet<usize> = j.frame_selections.iter().copied().collect();
            for t in distinct {
                *votes.entry(t).or_default() += 1;
            }
        }
        let mut frames: Vec<(usize, usize)> = votes.into_iter().collect();
        frames.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        frames.into_iter().take(k).map(|(t, _)| t).collect()
    }
}

/// `K = min(|union of judge selections|, |storyboard|)`.
pub fn choose_k(annotation: &HumanAnnotation, sb: &Summary) -> Result<usize> {
    if sb.kind != SummaryKind::Storyboard && sb.kind != SummaryKind::Thumbnail {
        return Err(Error::contract(format!(
            "top-K evaluation needs a frame summary, got {:?}",
            sb.kind
        )));
    }
    if annotation.judges.is_empty() || annotation.judges.iter().all(|j| j.frame_selections.is_empty()) {
        return Err(Error::contract(format!(
            "annotation for {:?} selects no frames",
            annotation.video_id
        )));
    }
    let generated = sb.frame_indices.as_ref().map_or(0, Vec::len);
    Ok(annotation.union().len().min(generated))
}

/// Access to decoded frame images by index.
pub trait FrameSource: Sync {
    fn frame(&self, index: usize) -> Result<GrayImage>;
}

/// Frames stored as `<root>/<video_id>/<index>.png`, decoded on first use.
pub struct DirFrames {
    dir: PathBuf,
    cache: Mutex<HashMap<usize, GrayImage>>,
}

impl DirFrames {
    pub fn new(root: &Path, video_id: &str) -> Self {
        DirFrames {
            dir: root.join(video_id),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("{index}.png"))
    }
}

impl FrameSource for DirFrames {
    fn frame(&self, index: usize) -> Result<GrayImage> {
        if let Some(img) = self.cache.lock().unwrap().get(&index) {
            return Ok(img.clone());
        }
        let img = GrayImage::from_png(&self.path(index))?;
        self.cache.lock().unwrap().insert(index, img.clone());
        Ok(img)
    }
}

impl FrameSource for HashMap<usize, GrayImage> {
    fn frame(&self, index: usize) -> Result<GrayImage> {
        self.get(&index)
            .cloned()
            .ok_or_else(|| Error::input(format!("no image for frame {index}")))
    }
}

/// Fraction of the first `k` generated frames that match a human frame.
///
/// Generated frames are visited in order. Each takes the identical human
/// frame if it is still free, otherwise the free human frame with the
/// highest SSIM above `threshold` (earliest on ties). A human frame is
/// consumed by at most one match.
pub fn top_k_accuracy(
    generated: &[usize],
    human: &[usize],
    frames: &dyn FrameSource,
    k: usize,
    threshold: f64,
) -> Result<f64> {
    if k > generated.len() {
        return Err(Error::contract(format!(
            "K={k} exceeds the {} generated frames",
            generated.len()
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let mut free: BTreeSet<usize> = human.iter().copied().collect();
    let mut hits = 0;
    for &g in &generated[..k] {
        if free.remove(&g) {
            hits += 1;
            continue;
        }
        if free.is_empty() {
            continue;
        }
        let img = frames.frame(g)?;
        let mut best: Option<(f64, usize)> = None;
        for &h in &free {
            let s = ssim(&img, &frames.frame(h)?)?;
            if s > threshold && best.is_none_or(|(b, _)| s > b) {
                best = Some((s, h));
            }
        }
        if let Some((_, h)) = best {
            free.remove(&h);
            hits += 1;
        }
    }
    Ok(hits as f64 / k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

fn covered(segments: &[(usize, usize)]) -> BTreeSet<usize> {
    segments.iter().flat_map(|&(a, b)| a..b).collect()
}

/// Frame-level precision, recall and harmonic-mean F of `a` against `b`.
pub fn keyshot_prf(a: &[(usize, usize)], b: &[(usize, usize)]) -> Prf {
    let fa = covered(a);
    let fb = covered(b);
    let overlap = fa.intersection(&fb).count() as f64;
    let ratio = |den: usize| if den == 0 { 0.0 } else { overlap / den as f64 };
    let (p, r) = (ratio(fa.len()), ratio(fb.len()));
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Prf {
        precision: p,
        recall: r,
        fscore: f,
    }
}

/// Keyshot P/R/F of a summary averaged over judges. Frame summaries count
/// each selected frame as a one-frame interval.
pub fn keyshot_against_judges(summary: &Summary, annotation: &HumanAnnotation) -> Result<Prf> {
    if annotation.judges.is_empty() {
        return Err(Error::input(format!("annotation for {:?} has no judges", annotation.video_id)));
    }
    let ours: Vec<(usize, usize)> = match &summary.segments {
        Some(s) => s.clone(),
        None => summary.covered_frames().into_iter().map(|t| (t, t + 1)).collect(),
    };
    let n = annotation.judges.len() as f64;
    let mut acc = Prf {
        precision: 0.0,
        recall: 0.0,
        fscore: 0.0,
    };
    for j in &annotation.judges {
        let m = keyshot_prf(&ours, &j.keyshot_intervals());
        acc.precision += m.precision / n;
        acc.recall += m.recall / n;
        acc.fscore += m.fscore / n;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn storyboard(frames: Vec<usize>) -> Summary {
        Summary {
            kind: SummaryKind::Storyboard,
            video_id: "v".into(),
            ranking: Some(frames.clone()),
            budget_frames: frames.len(),
            frame_indices: Some(frames),
            segments: None,
        }
    }

    fn annotation(judges: Vec<Vec<usize>>) -> HumanAnnotation {
        HumanAnnotation {
            video_id: "v".into(),
            n: 100,
            judges: judges
                .into_iter()
                .map(|f| JudgeAnnotation {
                    frame_selections: f,
                    keyshots: None,
                })
                .collect(),
        }
    }

    fn noise_frames(n: usize, seed: u64) -> HashMap<usize, GrayImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|t| (t, GrayImage::new(16, 16, (0..256).map(|_| rng.gen()).collect()).unwrap()))
            .collect()
    }

    #[test]
    fn choose_k_examples() {
        let a = annotation(vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6]]);
        assert_eq!(choose_k(&a, &storyboard(vec![1, 2, 3, 4, 5])).unwrap(), 5);
        let a = annotation(vec![vec![0, 1], vec![1, 2]]);
        assert_eq!(choose_k(&a, &storyboard(vec![1, 2, 3, 4, 5])).unwrap(), 3);
        let a = annotation(vec![vec![2, 5, 9]]);
        assert_eq!(choose_k(&a, &storyboard(vec![2, 5, 9])).unwrap(), 3);
        assert!(choose_k(&annotation(vec![]), &storyboard(vec![1])).is_err());
        assert!(choose_k(&annotation(vec![vec![]]), &storyboard(vec![1])).is_err());
    }

    #[test]
    fn human_top_k_by_votes() {
        let a = annotation(vec![vec![4, 1, 7], vec![7, 1], vec![7, 2]]);
        assert_eq!(a.top_k(2), vec![7, 1]);
        assert_eq!(a.top_k(4), vec![7, 1, 2, 4]);
    }

    #[test]
    fn top_k_examples() {
        let frames = noise_frames(10, 1);
        let g = [3, 1, 4];
        assert_eq!(top_k_accuracy(&g, &g, &frames, 3, MATCH_THRESHOLD).unwrap(), 1.0);
        assert_eq!(top_k_accuracy(&[0, 1, 2], &[5, 6, 7], &frames, 3, MATCH_THRESHOLD).unwrap(), 0.0);
        assert_eq!(top_k_accuracy(&[0, 1], &[0, 7], &frames, 2, MATCH_THRESHOLD).unwrap(), 0.5);
        assert!(top_k_accuracy(&[0], &[0], &frames, 2, MATCH_THRESHOLD).is_err());
        assert!(matches!(
            top_k_accuracy(&[0], &[42], &frames, 1, MATCH_THRESHOLD),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn similar_frames_match_once() {
        let mut frames = noise_frames(4, 2);
        // Frame 10 is a near copy of human frame 2.
        let mut copy = frames[&2].pixels().to_vec();
        copy[0] = copy[0].wrapping_add(3);
        frames.insert(10, GrayImage::new(16, 16, copy.clone()).unwrap());
        frames.insert(11, GrayImage::new(16, 16, copy).unwrap());
        assert_eq!(top_k_accuracy(&[10, 11], &[2, 3], &frames, 2, MATCH_THRESHOLD).unwrap(), 0.5);
        assert_eq!(top_k_accuracy(&[10, 2], &[2, 3], &frames, 2, MATCH_THRESHOLD).unwrap(), 0.5);
    }

    #[test]
    fn prf_examples() {
        assert_eq!(
            keyshot_prf(&[(0, 5)], &[(0, 5)]),
            Prf { precision: 1.0, recall: 1.0, fscore: 1.0 }
        );
        assert_eq!(
            keyshot_prf(&[(0, 5)], &[(5, 9)]),
            Prf { precision: 0.0, recall: 0.0, fscore: 0.0 }
        );
        let m = keyshot_prf(&[(0, 10)], &[(5, 25)]);
        assert_eq!((m.precision, m.recall), (0.5, 0.25));
        assert!((m.fscore - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(keyshot_prf(&[], &[(0, 3)]).fscore, 0.0);
        // Overlapping intervals count each frame once.
        assert_eq!(keyshot_prf(&[(0, 4), (2, 6)], &[(0, 6)]).fscore, 1.0);
    }

    #[test]
    fn keyshot_averages_judges() {
        let mut a = annotation(vec![vec![0, 1], vec![]]);
        a.judges[1].keyshots = Some(vec![(0, 4)]);
        let s = Summary {
            kind: SummaryKind::Trailer,
            video_id: "v".into(),
            frame_indices: None,
            ranking: None,
            segments: Some(vec![(0, 2)]),
            budget_frames: 2,
        };
        let m = keyshot_against_judges(&s, &a).unwrap();
        // Judge 0: P=R=F=1. Judge 1: P=1, R=0.5, F=2/3.
        assert!((m.precision - 1.0).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.fscore - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn annotation_json_and_validation() {
        let j = r#"{"videoId":"v1","N":10,"judges":[{"frameSelections":[1,2]},{"frameSelections":[3],"keyshots":[[0,4]]}]}"#;
        let a: HumanAnnotation = serde_json::from_str(j).unwrap();
        a.validate().unwrap();
        assert_eq!(a.judges[1].keyshots, Some(vec![(0, 4)]));
        let bad: HumanAnnotation = serde_json::from_str(&j.replace("[1,2]", "[1,12]")).unwrap();
        assert!(bad.validate().is_err());
        let bad: HumanAnnotation = serde_json::from_str(&j.replace("[0,4]", "[4,4]")).unwrap();
        assert!(bad.validate().is_err());
    }
}
