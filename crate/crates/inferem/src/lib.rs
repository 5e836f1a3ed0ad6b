//! Empathetic dialogue generation with last-utterance intention fusion.
//!
//! The model encodes the dialogue history and its last utterance separately
//! through knowledge-enriched encoders, predicts a virtual next utterance
//! from the earlier turns, fuses real and virtual last-utterance encodings
//! into the history via multi-head cross attention, and decodes an
//! emotion-conditioned response. Four losses (prediction, response, emotion
//! classification, attention regularization) combine under an adaptive
//! weight that trains the prediction branch fast early on.
//!
//! Everything is CPU-only `f64` on a small tape-based autodiff
//! ([`autograd`]); every backward rule is finite-difference checked. See the
//! `examples/` directory for runnable walkthroughs and the `inferem` binary
//! for the train/eval/generate workflow.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod diagnostics;
pub mod embedding;
pub mod encoder;
pub mod evalmetrics;
pub mod fusion;
pub mod layers;
pub mod objective;
pub mod pipeline;
