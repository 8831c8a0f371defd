//! Convex hierarchical clustering on similarity matrices.
//!
//! Given a symmetric positive (semi)definite similarity kernel `K` on `N`
//! items, the centroid matrix `π(λ)` minimises
//!
//! ```text
//! Tr(πᵀ K π − 2 K π) + λ (α ‖π δ_K‖₂,₁ + (1 − α) ‖π δ_K‖₁)
//! ```
//!
//! over the doubly stochastic matrices. As `λ` grows the solution moves from
//! the identity (every item its own cluster) to the consensus matrix
//! `(1/N) 11ᵀ` (one cluster), tracing a convex analogue of a dendrogram.
//!
//! The crate is `no_std` (with `alloc`); file formats, the command line and
//! timing live in the `graphcoalesce` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod admm;
pub mod error;
pub mod fista;
pub mod kernel;
pub mod linalg;
pub mod linearized;
pub mod metrics;
pub mod path;
pub mod projection;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use kernel::{
    apply_difference, apply_difference_adjoint, lipschitz_constant, two_hop_kernel, DifferenceImage, Edge,
    EdgeBlocks, PsdMargin, SimilarityKernel,
};
pub use linalg::Matrix;
