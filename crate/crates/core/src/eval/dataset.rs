use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{choose_k, keyshot_against_judges, top_k_accuracy, DirFrames, FrameSource, HumanAnnotation};
use crate::error::{Error, Result};
use crate::summarizer::Summary;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "RSUM_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    FrameTopk,
    Keyshot,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame-topk" => Ok(Protocol::FrameTopk),
            "keyshot" => Ok(Protocol::Keyshot),
            other => Err(Error::input(format!("unknown protocol {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VideoResult {
    pub video_id: String,
    /// Top-K accuracy or keyshot F-score, depending on the protocol.
    pub metric: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub protocol: Protocol,
    pub videos: Vec<VideoResult>,
    /// Unweighted mean of the per-video metric.
    pub mean: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table, one row per video plus the mean.
    pub fn to_table(&self) -> String {
        let width = self
            .videos
            .iter()
            .map(|v| v.video_id.len())
            .chain(["video".len(), "mean".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        match self.protocol {
            Protocol::FrameTopk => {
                let _ = writeln!(out, "{:<width$}  {:>4}  {:>8}", "video", "K", "top-K");
                for v in &self.videos {
                    let k = v.k.map_or("-".to_string(), |k| k.to_string());
                    let _ = writeln!(out, "{:<width$}  {:>4}  {:>8.4}", v.video_id, k, v.metric);
                }
                let _ = writeln!(out, "{:<width$}  {:>4}  {:>8.4}", "mean", "", self.mean);
            }
            Protocol::Keyshot => {
                let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}", "video", "P", "R", "F");
                for v in &self.videos {
                    let _ = writeln!(
                        out,
                        "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}",
                        v.video_id,
                        v.precision.unwrap_or(0.0),
                        v.recall.unwrap_or(0.0),
                        v.metric
                    );
                }
                let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8.4}", "mean", "", "", self.mean);
            }
        }
        out
    }
}

/// Runs `f` on a pool capped by `RSUM_THREADS` when set.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::input(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn align<'a>(
    summaries: &'a [Summary],
    annotations: &'a [HumanAnnotation],
) -> Result<Vec<(&'a Summary, &'a HumanAnnotation)>> {
    let mut by_id: HashMap<&str, &HumanAnnotation> = HashMap::new();
    for a in annotations {
        a.validate()?;
        if by_id.insert(a.video_id.as_str(), a).is_some() {
            return Err(Error::input(format!("duplicate annotation for {:?}", a.video_id)));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut pairs = Vec::new();
    for s in summaries {
        if !seen.insert(s.video_id.as_str()) {
            return Err(Error::input(format!("duplicate summary for {:?}", s.video_id)));
        }
        let a = by_id
            .get(s.video_id.as_str())
            .ok_or_else(|| Error::input(format!("no annotation for video {:?}", s.video_id)))?;
        s.validate(a.n)?;
        pairs.push((s, *a));
    }
    if let Some(a) = annotations.iter().find(|a| !seen.contains(a.video_id.as_str())) {
        return Err(Error::input(format!("no summary for annotated video {:?}", a.video_id)));
    }
    Ok(pairs)
}

/// Per-video metrics and their unweighted mean, with frame images read from
/// `<frame_root>/<videoId>/<index>.png` when SSIM matching needs them.
pub fn evaluate_dataset(
    summaries: &[Summary],
    annotations: &[HumanAnnotation],
    protocol: Protocol,
    frame_root: Option<&Path>,
    threshold: f64,
) -> Result<Report> {
    let root = frame_root.map(Path::to_path_buf);
    evaluate_with_frames(summaries, annotations, protocol, threshold, move |id| {
        Box::new(match &root {
            Some(r) => DirFrames::new(r, id),
            None => DirFrames::new(Path::new(""), id),
        })
    })
}

/// [`evaluate_dataset`] with a caller-supplied frame source per video id.
pub fn evaluate_with_frames<F>(
    summaries: &[Summary],
    annotations: &[HumanAnnotation],
    protocol: Protocol,
    threshold: f64,
    frames: F,
) -> Result<Report>
where
    F: Fn(&str) -> Box<dyn FrameSource> + Sync,
{
    let pairs = align(summaries, annotations)?;
    if pairs.is_empty() {
        return Err(Error::input("nothing to evaluate"));
    }
    let videos = with_workers(|| {
        pairs
            .par_iter()
            .map(|(s, a)| evaluate_video(s, a, protocol, threshold, &frames))
            .collect::<Result<Vec<_>>>()
    })??;
    let mean = videos.iter().map(|v| v.metric).sum::<f64>() / videos.len() as f64;
    Ok(Report { protocol, videos, mean })
}

fn evaluate_video<F>(
    s: &Summary,
    a: &HumanAnnotation,
    protocol: Protocol,
    threshold: f64,
    frames: &F,
) -> Result<VideoResult>
where
    F: Fn(&str) -> Box<dyn FrameSource> + Sync,
{
    match protocol {
        Protocol::FrameTopk => {
            let k = choose_k(a, s)?;
            let human = a.top_k(k);
            let src = frames(&s.video_id);
            let metric = top_k_accuracy(&s.generated_frames(), &human, src.as_ref(), k, threshold)?;
            Ok(VideoResult {
                video_id: s.video_id.clone(),
                metric,
                k: Some(k),
                precision: None,
                recall: None,
            })
        }
        Protocol::Keyshot => {
            let m = keyshot_against_judges(s, a)?;
            Ok(VideoResult {
                video_id: s.video_id.clone(),
                metric: m.fscore,
                k: None,
                precision: Some(m.precision),
                recall: Some(m.recall),
            })
        }
    }
}
