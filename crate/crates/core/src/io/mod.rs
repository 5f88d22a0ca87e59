//! File formats, JSON inputs and configuration layering.

mod config;
mod formats;
mod json;

pub use config::Overrides;
pub use formats::*;
pub use json::{export_frames, parse_json, read_annotations, read_json, read_summaries, write_json};
