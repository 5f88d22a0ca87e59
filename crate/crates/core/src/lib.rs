//! Unsupervised video summarization by sparse, aesthetics-weighted frame
//! selection trained to reconstruct the original feature sequence.

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod kts;
pub mod model;
pub mod numgrad;
pub mod objectives;
pub mod selection;
pub mod summarizer;
pub mod trainer;

pub use error::{Error, Result};
