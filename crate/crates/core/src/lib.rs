pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod neural;
pub mod training;

pub use error::{Error, Result};
