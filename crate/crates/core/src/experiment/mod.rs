//! The four input-representation experiments: configuration, feature
//! pipelines, and train/evaluate/predict runs.

mod config;
mod pipeline;
mod run;

pub use config::*;
pub use pipeline::*;
pub use run::*;
