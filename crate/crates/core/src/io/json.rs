use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::HumanAnnotation;
use crate::summarizer::Summary;

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)) as u64
}

/// Parses JSON, reporting syntax and schema errors as format errors.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str, what: &'static str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        field: what,
        offset: byte_offset(text, e.line(), e.column()),
        expected: format!("valid {what} JSON"),
        found: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(path, &text, what)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::Many(v) => v,
            OneOrMany::One(x) => vec![x],
        }
    }
}

/// Reads one annotation object or an array of them, validating each.
pub fn read_annotations(path: &Path) -> Result<Vec<HumanAnnotation>> {
    let all = read_json::<OneOrMany<HumanAnnotation>>(path, "annotation")?.into_vec();
    for a in &all {
        a.validate()?;
    }
    Ok(all)
}

/// Reads one summary object or an array of them.
pub fn read_summaries(path: &Path) -> Result<Vec<Summary>> {
    Ok(read_json::<OneOrMany<Summary>>(path, "summary")?.into_vec())
}

/// Copies the PNG of every frame covered by `summary` from `frame_dir` into
/// `out_dir`, returning the written paths.
pub fn export_frames(summary: &Summary, frame_dir: &Path, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    summary
        .covered_frames()
        .into_iter()
        .map(|t| {
            let name = format!("{t}.png");
            let src = frame_dir.join(&name);
            if !src.exists() {
                return Err(Error::input(format!("frame image {} not found", src.display())));
            }
            let dst = out_dir.join(&name);
            std::fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
            Ok(dst)
        })
        .collect()
}
