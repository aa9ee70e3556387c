//! Cascade (coarse-to-fine) detection of sparse objects in multiresolution
//! chunked grids of any dimension.
//!
//! - [`pyramid`]: chunk-grid geometry and parent/child addressing.
//! - [`stats`]: closed-form accuracy and classifier-call model.
//! - [`simulate`]: Monte Carlo and exact-enumeration checks of the model.
//! - [`cascade`]: the execution engine for single-level and cascade runs.
//! - [`synth`]: synthetic scenes, threshold classifiers, connected
//!   components and the end-to-end benchmark.
//! - [`store`]: on-disk chunk directories.
//! - [`cli`]: the `chunk-cascade` command-line front end.

pub mod cascade;
pub mod cli;
mod error;
pub mod image;
pub mod pyramid;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod store;
pub mod synth;

pub use cascade::{ChunkClassifier, ChunkSource, RunReport};
pub use error::{Error, Result};
pub use pyramid::{ChunkIndex, PyramidSpec};
pub use stats::{CascadeMetrics, CascadeModel, DetectorProfile};
