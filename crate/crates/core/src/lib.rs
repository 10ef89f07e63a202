//! Concise, neuron-conditional explanations for small convolutional
//! classifiers.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`relprop`] propagates relevance backward through a [`net::NetworkSpec`]
//!    once per neuron, masking every other channel at the conditioned layer,
//!    and keeps the top-`n` maps as the explanation set of an image.
//! 2. [`factorize`] flattens that set into a matrix and factorizes it with
//!    non-negative matrix factorization; the coefficient rows, reshaped to
//!    the image grid, are the concise maps.
//! 3. [`cluster`] projects concise maps back onto the neuron maps by cosine
//!    similarity and groups them across a class with DBSCAN.
//! 4. [`evalbench`] scores any collection of maps against binary feature
//!    masks with thresholded IoU.
//!
//! [`pipeline`] wires these into the commands of the `dcne` binary.

pub mod cluster;
pub mod error;
pub mod evalbench;
pub mod factorize;
pub mod io;
pub mod net;
pub mod pipeline;
pub mod relprop;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
