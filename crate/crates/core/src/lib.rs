//! Solving small Euclidean TSP instances as an image-to-image problem.
//!
//! The pipeline:
//!
//! ```text
//! coords -> normalize -> full-graph RGB image -> FCN -> 2-channel probabilities
//!        -> black/white class mask -> density-greedy decode -> tour
//! ```
//!
//! Labels come from the exact Held-Karp solver in [`solvers`]; [`eval`]
//! scores produced tours against them and benchmarks every solver.
//!
//! Batch work (instances, samples, departures) goes through [`par`], which
//! uses rayon when the `parallel` feature is enabled and plain iteration
//! otherwise.

pub mod dataset;
pub mod decode;
pub mod error;
pub mod eval;
pub mod instance;
pub mod net;
pub mod par;
pub mod raster;
pub mod solvers;

pub use error::{Error, Result};
pub use instance::{PixelCoords, Tour, TspInstance};
pub use par::Execution;
