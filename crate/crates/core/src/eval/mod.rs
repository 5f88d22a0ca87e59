//! Frame-level top-K and keyshot-level evaluation.

mod dataset;
mod metrics;
mod ssim;

pub use dataset::{evaluate_dataset, evaluate_with_frames, with_workers, Protocol, Report, VideoResult, THREADS_VAR};
pub use metrics::{
    choose_k, keyshot_against_judges, keyshot_prf, top_k_accuracy, DirFrames, FrameSource, HumanAnnotation,
    JudgeAnnotation, Prf, MATCH_THRESHOLD,
};
pub use ssim::{ssim, GrayImage, SIGMA, WINDOW};
