//! Dual-stream Bayesian LoG segmentation toolkit for tubular structures in
//! 3D volumes: a regular encoder-decoder stream plus a hierarchical bank of
//! variational Laplacian-of-Gaussian layers, fused by dilated convolutions,
//! trained with a Dice + KL objective under a foreground/background
//! balancing gate, with Monte-Carlo confidence intervals at inference.

pub mod bayeslayer;
pub mod cli;
pub mod error;
pub mod gate;
pub mod logkernel;
pub mod metrics;
pub mod network;
pub mod tape;
pub mod trainer;
pub mod uqinfer;
pub mod tensor;
pub mod voxelio;

pub use error::{Error, Result};
