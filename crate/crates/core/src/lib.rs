//! Deployment planning and detection post-processing for tiny CNN object
//! detectors: graph analysis, int8 post-training quantization with a
//! reference executor, memory planning, a calibrated performance and energy
//! model, and SSD/FOMO decoding with an mAP evaluator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod detect;
pub mod error;
pub mod exec;
pub mod graph;
pub mod perfmodel;
pub mod planner;
pub mod profile;
pub mod quant;
pub mod tensor;
pub mod weights;
pub mod zoo;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    pub mod quantization {}
    #[doc = include_str!("../../../book/src/planning.md")]
    pub mod planning {}
    #[doc = include_str!("../../../book/src/performance.md")]
    pub mod performance {}
    #[doc = include_str!("../../../book/src/detection.md")]
    pub mod detection {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
