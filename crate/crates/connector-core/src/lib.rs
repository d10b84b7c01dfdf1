#![cfg_attr(not(feature = "std"), no_std)]

//! Core library for studying vision-language connectors at desk scale.
//!
//! A connector maps encoder patch features `f ∈ R^{P×d_v}` to LLM-space
//! tokens `x ∈ R^{Q×D}`. Feature-preserving connectors (linear, two-layer
//! MLP) keep `Q = P`; feature-compressing connectors (average pooling,
//! attention pooling, convolutional mapping) reduce to `Q < P`.
//!
//! The crate provides:
//! - a minimal dense-tensor reverse-mode autodiff engine ([`autodiff`]),
//! - patch-grid geometry and position-embedding interpolation ([`geometry`]),
//! - the five connector architectures ([`connector`]),
//! - an analytic FLOP/parameter cost model ([`cost`]),
//! - a synthetic planted-signal training harness ([`train`]),
//! - the coarse/fine/reasoning benchmark taxonomy and a connector
//!   selection advisor ([`taxonomy`]).
//!
//! Everything is 64-bit float, single-threaded, and deterministic: a fixed
//! seed yields bit-identical parameters, forward outputs, and gradients.

extern crate alloc;

pub mod autodiff;
pub mod checkpoint;
pub mod connector;
pub mod cost;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod rng;
pub mod taxonomy;
pub mod tensor;
pub mod train;

pub use autodiff::{NodeId, Tape};
pub use connector::{ConnectorKind, ConnectorParams, ConnectorSpec};
pub use error::CoreError;
pub use geometry::GridShape;
pub use tensor::Tensor;
