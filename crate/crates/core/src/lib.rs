//! Data-side toolkit for two-pass span boundary calibration.
//!
//! The modules cover the whole data path: text and dataset formats
//! ([`textcore`]), anchor-text passage mining ([`corpus`]), noisy-span and
//! question synthesis ([`synth`]), prediction/gold pairing ([`pairing`]),
//! multilingual stage manifests ([`schedule`]) and boundary-error evaluation
//! ([`eval`]).

pub mod corpus;
pub mod eval;
pub mod pairing;
pub mod rng;
pub mod schedule;
pub mod synth;
pub mod textcore;

pub use textcore::{CalibrationExample, LabeledSentence, Span, TokenSeq};
