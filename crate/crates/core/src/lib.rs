//! Few-shot classification over embedding vectors with fuzzy simplicial
//! complexes as class representations.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: simplices, volumes, point-to-hull distances.
//! - [`representations`]: class heads (centroid, nearest neighbour, single
//!   simplex, PCA subspace, fuzzy simplicial complex) and classification.
//! - [`episodes`]: episode sampling, evaluation, loss, confidence intervals.
//! - [`encoder`]: a small trainable encoder and episodic training.
//! - [`labelstats`]: mutual information between labelings.
//! - [`analysis`]: energy curves, mean-centering, Grassmannian distances.
//! - [`cli`]: file formats and the command-line runs.

pub mod analysis;
pub mod cli;
pub mod encoder;
pub mod episodes;
pub mod error;
pub mod geometry;
pub mod labelstats;
pub mod representations;
pub mod synthetic;

pub use error::{FsnError, Result};
pub use geometry::{AffineSubspace, EmbeddingVector, Simplex};
pub use representations::{ClassRepresentation, FuzzyComplex, HeadConfig, HeadKind};
