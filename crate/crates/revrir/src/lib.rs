//! Room fingerprinting from reverberant audio.
//!
//! The pipeline: enumerate a catalog of shoebox rooms, simulate room impulse
//! responses with the image-source method, synthesize reverberant speech,
//! pre-train a dual encoder (speech and RIR) with a class-aware contrastive
//! objective into a joint unit-sphere embedding space, then fine-tune linear
//! heads for room and room-type classification and compare against a
//! hand-crafted RIR-feature baseline.
//!
//! Numeric kernels (`dsp`, `nn`) are generic over [`scalar::Scalar`]; the
//! pipeline itself runs in [`Real`] (`f64`).

pub mod catalog;
pub mod contrastive;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod hash;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod tasks;

pub use error::{Error, Result};

/// Scalar type of the concrete pipeline.
pub type Real = f64;

/// Tensor specialization used by the pipeline.
pub type RealTensor = nn::Tensor<Real>;
