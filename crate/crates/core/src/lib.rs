//! Acoustic scene classification: log-mel front ends, a small CNN engine,
//! training, segment fusion and geometric-mean ensembles.

pub mod audio;
pub mod classes;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod models;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod synth;
