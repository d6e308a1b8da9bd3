//! Phase-modulated feedback models for quaternion movement primitives.
//!
//! The guide in `book/` walks through the pipeline; its Rust examples are
//! compiled as doc-tests of this crate.

pub mod canonical;
pub mod error;
pub mod feedback;
pub mod pipeline;
pub mod primitives;
pub mod sensors;
pub mod simulator;
pub mod so3;
pub mod training;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    struct Quickstart;
    #[doc = include_str!("../../../book/src/rotations.md")]
    struct Rotations;
    #[doc = include_str!("../../../book/src/primitives.md")]
    struct Primitives;
    #[doc = include_str!("../../../book/src/feedback.md")]
    struct Feedback;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/simulator.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct CommandLine;
}
