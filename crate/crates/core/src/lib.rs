//! Planner and simulator for pipelined collaborative LLM inference over a
//! chain of LEO satellites.
//!
//! The crate covers:
//! - scenario definition and validation ([`scenario`])
//! - the closed-form pipeline delay model ([`delay`])
//! - bit-exact activation compression ([`codec`])
//! - learnable Gumbel-mask sparsification ([`mask`])
//! - accuracy/memory calibration ([`calibration`])
//! - joint layer-split and compression-ratio optimization ([`optimizer`])
//! - a discrete-event pipeline simulator used as an independent oracle
//!   ([`sim`])
//! - CSV/SVG reporting and the CLI command layer ([`report`], [`cli`])

pub mod calibration;
pub mod cli;
pub mod codec;
pub mod delay;
pub mod error;
pub mod mask;
pub mod optimizer;
pub mod report;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
