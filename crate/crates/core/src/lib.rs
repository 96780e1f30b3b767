//! Thickness-aware E(3)-equivariant mesh neural networks.
//!
//! The crate is organized along the pipeline:
//!
//! - [`mesh`]: triangle-mesh storage, OFF/OBJ parsing, watertightness, normals
//! - [`frame`]: the data-driven canonical frame and its inverse mapping
//! - [`thickness`]: opposing-surface node pairs and the sigmoid thickness gate
//! - [`features`]: graph assembly, invariant node/edge features, sample bundles
//! - [`autodiff`]: a small reverse-mode tape over dense `f64` matrices
//! - [`model`]: encoders, surface/thickness processors and decoder
//! - [`train`]: Adam, plateau scheduling, metrics, training and evaluation
//! - [`synth`]: watertight shape generator and an equivariant target field
//! - [`cli`]: command implementations behind the `temnn` binary

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod features;
pub mod frame;
pub mod mesh;
pub mod model;
pub mod synth;
pub mod thickness;
pub mod train;
pub mod transform;

pub use error::{Error, Result};
