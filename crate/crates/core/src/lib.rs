//! Batch-shared negative data augmentation, corruption-prototype offset
//! debiasing, and entropy-minimization test-time adaptation — at desk scale
//! against synthetic encoders, with an executable, Monte-Carlo-verified
//! realization of the underlying Gaussian theory.
//!
//! Module map:
//!
//! * [`tensor`] — dense H×W×C images, TNS1 and PPM formats
//! * [`nda`] — patch pools: cut, shuffle, recompose
//! * [`debias`] — embeddings, corruption prototype, offset, logits
//! * [`theory`] — closed-form accuracy and the Monte Carlo verifier
//! * [`world`] — the synthetic classification world and frozen encoder
//! * [`adapt`] — the adaptation loop with analytic affine gradients
//! * [`metrics`] — L1 prediction bias, histograms
//! * [`report`] — JSON/CSV report serialization
//! * [`rng`] — named deterministic substreams

pub mod adapt;
pub mod debias;
pub mod error;
pub mod metrics;
pub mod nda;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod world;

pub use error::{Error, Result};
