use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reconstsum::eval::{evaluate_dataset, Protocol, MATCH_THRESHOLD};
use reconstsum::io::{
    export_frames, read_aesthetic, read_annotations, read_checkpoint, read_features, read_json, read_summaries,
    write_checkpoint, Overrides,
};
use reconstsum::kts::{self, Segmentation};
use reconstsum::model::FeatureSequence;
use reconstsum::objectives::Variant;
use reconstsum::selection::ScoreVector;
use reconstsum::summarizer::{self, Summary, DEFAULT_STORYBOARD_FRACTION};
use reconstsum::trainer::{train_corpus, TrainConfig};
use reconstsum::{gradcheck, Error, Result};

const DEFAULT_ANIMATED_SECONDS: f64 = 3.0;

#[derive(Parser)]
#[command(name = "reconstsum", version, about = "Unsupervised video summarization")]
struct Cli {
    #[command(flatten)]
    knobs: Knobs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Flags win over `--config`, which wins
/// over built-in defaults.
#[derive(Args)]
struct Knobs {
    /// JSON file with default settings (camelCase keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Target fraction of selected frames.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Weight of the importance score in fusion.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Weight of the aesthetic score in fusion.
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true)]
    budget_seconds: Option<f64>,
    #[arg(long, global = true)]
    budget_fraction: Option<f64>,
    /// Number of thumbnail frames; in `train` also sets delta = m / N.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    lambda_sparsity: Option<f64>,
    #[arg(long, global = true)]
    lambda_repel: Option<f64>,
    #[arg(long, global = true)]
    step_size: Option<f64>,
    #[arg(long, global = true)]
    penalty_weight: Option<f64>,
    #[arg(long, global = true)]
    max_segments: Option<usize>,
    #[arg(long, global = true)]
    match_threshold: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Base,
    Rep,
    Disc,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Base => Variant::Base,
            VariantArg::Rep => Variant::Rep,
            VariantArg::Disc => Variant::Disc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Thumbnail,
    Animated,
    Storyboard,
    Trailer,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    FrameTopk,
    Keyshot,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on one or more feature files and write a checkpoint.
    Train {
        /// FSEQ feature file; repeat for corpus training.
        #[arg(long = "features", required = true)]
        features: Vec<PathBuf>,
        /// ASCR file per feature file. Defaults to the `.ascr` companion,
        /// or neutral scores when that is missing.
        #[arg(long = "aesthetics")]
        aesthetics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Tab-separated per-epoch loss log. Printed to stdout when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Produce a summary from a trained checkpoint.
    Summarize {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        aesthetics: Option<PathBuf>,
        /// Segmentation JSON; computed with KTS when omitted.
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Directory of `<index>.png` frames to copy into `--export`.
        #[arg(long, requires = "export")]
        frame_dir: Option<PathBuf>,
        #[arg(long, requires = "frame_dir")]
        export: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel temporal segmentation of a feature file.
    Segment {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score summaries against human annotations.
    Eval {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long)]
        summaries: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Root holding `<videoId>/<index>.png` frames for SSIM matching.
        #[arg(long)]
        frame_root: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every model gradient. `--hidden` defaults
    /// to 3 here.
    Gradcheck {
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
}

impl Knobs {
    fn resolve(&self) -> Result<Overrides> {
        let flags = Overrides {
            delta: self.delta,
            alpha: self.alpha,
            beta: self.beta,
            variant: self.variant.map(Variant::from),
            budget_seconds: self.budget_seconds,
            budget_fraction: self.budget_fraction,
            m: self.m,
            seed: self.seed,
            hidden: self.hidden,
            max_epochs: self.max_epochs,
            lambda_sparsity: self.lambda_sparsity,
            lambda_repel: self.lambda_repel,
            step_size: self.step_size,
            penalty_weight: self.penalty_weight,
            max_segments: self.max_segments,
            match_threshold: self.match_threshold,
            ..Default::default()
        };
        match &self.config {
            Some(p) => Ok(flags.over(&Overrides::from_file(p)?)),
            None => Ok(flags),
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn aesthetics_for(features: &Path, explicit: Option<&PathBuf>, n: usize) -> Result<ScoreVector> {
    match explicit {
        Some(p) => read_aesthetic(p, n, false),
        None => read_aesthetic(&features.with_extension("ascr"), n, true),
    }
}

fn segmentation(x: &FeatureSequence, file: Option<&PathBuf>, o: &Overrides) -> Result<Segmentation> {
    let seg = match file {
        Some(p) => read_json::<Segmentation>(p, "segmentation")?,
        None => {
            let max = o.max_segments.unwrap_or_else(|| kts::default_max_segments(x.frames(), x.fps()));
            kts::segment(x, max, o.penalty_weight.unwrap_or(kts::DEFAULT_PENALTY_WEIGHT))?
        }
    };
    if seg.frames() != x.frames() {
        return Err(Error::Input(format!(
            "segmentation covers {} frames, video has {}",
            seg.frames(),
            x.frames()
        )));
    }
    Ok(seg)
}

fn run(cli: Cli) -> Result<()> {
    let o = cli.knobs.resolve()?;
    match cli.command {
        Command::Train {
            features,
            aesthetics,
            out,
            log,
        } => {
            if !aesthetics.is_empty() && aesthetics.len() != features.len() {
                return Err(Error::Input(format!(
                    "{} aesthetic files for {} feature files",
                    aesthetics.len(),
                    features.len()
                )));
            }
            let mut videos = Vec::with_capacity(features.len());
            for (k, f) in features.iter().enumerate() {
                let x = read_features(f)?;
                let q = aesthetics_for(f, aesthetics.get(k), x.frames())?;
                videos.push((x, q));
            }
            let mut cfg = o.train_config(&TrainConfig::default())?;
            if let Some(m) = o.m {
                if videos.len() != 1 {
                    return Err(Error::Input("--m applies to single-video training only".into()));
                }
                cfg = summarizer::thumbnail_config(&cfg, m, videos[0].0.frames())?;
            }
            let report = train_corpus(&videos, &cfg)?;
            write_checkpoint(&report.final_params, &out)?;
            emit(report.log_tsv().trim_end(), log.as_deref())
        }
        Command::Summarize {
            kind,
            checkpoint,
            features,
            aesthetics,
            segments,
            frame_dir,
            export,
            out,
        } => {
            let params = read_checkpoint(&checkpoint)?;
            let x = read_features(&features)?;
            let q = aesthetics_for(&features, aesthetics.as_ref(), x.frames())?;
            let cfg = o.train_config(&TrainConfig::default())?;
            let summary: Summary = match kind {
                KindArg::Thumbnail => summarizer::make_thumbnail(&x, &params, &q, &cfg, o.m.unwrap_or(1))?,
                KindArg::Storyboard => summarizer::make_storyboard(
                    &x,
                    &params,
                    &q,
                    &cfg,
                    o.budget_fraction.unwrap_or(DEFAULT_STORYBOARD_FRACTION),
                )?,
                KindArg::Animated => {
                    let seg = segmentation(&x, segments.as_ref(), &o)?;
                    let secs = o.budget_seconds.unwrap_or(DEFAULT_ANIMATED_SECONDS);
                    summarizer::make_animated_thumbnail(&x, &params, &q, &cfg, &seg, secs)?
                }
                KindArg::Trailer => {
                    let secs = o
                        .budget_seconds
                        .ok_or_else(|| Error::Input("trailer needs --budget-seconds".into()))?;
                    let seg = segmentation(&x, segments.as_ref(), &o)?;
                    summarizer::make_trailer(&x, &params, &q, &cfg, &seg, secs)?
                }
            };
            if let (Some(dir), Some(dst)) = (frame_dir, export) {
                export_frames(&summary, &dir, &dst)?;
            }
            emit(&summary.to_json(), out.as_deref())
        }
        Command::Segment { features, out } => {
            let x = read_features(&features)?;
            let seg = segmentation(&x, None, &o)?;
            emit(&serde_json::to_string(&seg).expect("segmentation serializes"), out.as_deref())
        }
        Command::Eval {
            protocol,
            summaries,
            annotations,
            frame_root,
            format,
            out,
        } => {
            let protocol = match protocol {
                ProtocolArg::FrameTopk => Protocol::FrameTopk,
                ProtocolArg::Keyshot => Protocol::Keyshot,
            };
            let s = read_summaries(&summaries)?;
            let a = read_annotations(&annotations)?;
            let threshold = o.match_threshold.unwrap_or(MATCH_THRESHOLD);
            let report = evaluate_dataset(&s, &a, protocol, frame_root.as_deref(), threshold)?;
            let text = match format {
                ReportFormat::Json => report.to_json(),
                ReportFormat::Table => report.to_table().trim_end().to_string(),
            };
            emit(&text, out.as_deref())
        }
        Command::Gradcheck {
            frames,
            dim,
            tolerance,
        } => {
            let report = gradcheck::run(frames, dim, o.hidden.unwrap_or(3), o.seed.unwrap_or(0))?;
            for t in &report.tensors {
                println!("{:<28} {:>5} {:.3e}", t.name, t.entries, t.max_relative_error);
            }
            println!(
                "max relative error {:.3e} over {} parameters in {:.2?}",
                report.max_relative_error, report.parameters_checked, report.elapsed
            );
            if report.passes(tolerance) {
                Ok(())
            } else {
                Err(Error::Contract(format!(
                    "gradient check failed: {:.3e} >= {tolerance}",
                    report.max_relative_error
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
