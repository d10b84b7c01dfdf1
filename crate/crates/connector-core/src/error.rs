//! Error type shared across the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor shapes incompatible for an operation. Carries both shapes.
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Patch-grid / windowing arithmetic failure.
    Geometry(String),
    /// Invalid configuration (spec fields, CLI-level parameters).
    Config(String),
    /// A NaN or Inf appeared where finite values are required.
    NonFinite { context: &'static str },
    /// API contract violation (e.g. backward from a non-scalar node).
    Contract(String),
    /// Training loss became non-finite at the given step.
    Diverged { step: usize },
    /// Unknown (benchmark, sub-task) pair; carries nearest known names.
    UnknownSubTask {
        benchmark: String,
        sub_task: String,
        nearest: Vec<String>,
    },
    /// Malformed checkpoint or record input.
    Parse(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: incompatible shapes {left:?} and {right:?}")
            }
            CoreError::Geometry(msg) => write!(f, "geometry error: {msg}"),
            CoreError::Config(msg) => write!(f, "config error: {msg}"),
            CoreError::NonFinite { context } => {
                write!(f, "non-finite value encountered in {context}")
            }
            CoreError::Contract(msg) => write!(f, "contract violation: {msg}"),
            CoreError::Diverged { step } => {
                write!(f, "training diverged: non-finite loss at step {step}")
            }
            CoreError::UnknownSubTask {
                benchmark,
                sub_task,
                nearest,
            } => {
                write!(
                    f,
                    "unknown sub-task ({benchmark}, {sub_task}); nearest known: {}",
                    nearest.join(", ")
                )
            }
            CoreError::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
