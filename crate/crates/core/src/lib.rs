//! Reconstruction of vocal-tract articulator contours from speech-derived
//! frame features.
//!
//! The crate covers the whole pipeline: corpus ingestion ([`corpus`]), input
//! features ([`dsp`] for MFCCs, [`phonfeat`] for phonetic encodings), the
//! Dense-Dense-BiLSTM-BiLSTM-Dense regression network trained from scratch
//! ([`net`]), millimeter-scale evaluation with significance tests ([`eval`]),
//! a synthetic corpus generator ([`synth`]) and the experiment runner used by
//! the command-line tool ([`experiment`]).

pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod net;
pub mod numfmt;
pub mod phonfeat;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
