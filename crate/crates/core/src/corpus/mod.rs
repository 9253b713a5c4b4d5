//! Corpus data model, file formats, and dataset preparation.

mod dataset;
mod formats;
mod layout;
mod types;

pub use dataset::*;
pub use formats::*;
pub use layout::*;
pub use types::*;
