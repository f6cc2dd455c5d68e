//! Category-level pose estimation for transparent objects, minus the neural
//! networks.
//!
//! The crate covers the geometric and numerical parts of a two-stage
//! pipeline: camera rays and normals from depth, generalized point clouds,
//! pose and scale decoding from predicted axes and residuals, the training
//! losses with analytic gradients, and the evaluation metrics. A synthetic
//! RGB-D generator and simple stand-in estimators let the whole pipeline run
//! end to end; see the `glasspose` binary.

pub mod camera;
pub mod error;
pub mod estimator;
pub mod features;
pub mod gradcheck;
pub mod grid;
pub mod harness;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod pose;
pub mod recovery;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    mod conventions {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
