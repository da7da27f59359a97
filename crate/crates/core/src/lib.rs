pub mod dynamics;
pub mod engine;
pub mod error;
pub mod integrate;
pub mod nlp;
pub mod numfmt;
pub mod oracle;
pub mod pareto;
pub mod transcription;

pub use error::{Error, Result};
