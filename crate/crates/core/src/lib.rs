//! Simulator and analysis toolkit for self-stabilizing iterative solution of
//! linear systems `W u = v` under dynamically changing inputs.
//!
//! The system matrix comes from a weighted communication graph; each node
//! repeatedly recomputes its output from its own input reading and its
//! neighbors' previous outputs (the Jacobi update). The crate provides:
//!
//! - [`linalg`]: dense matrices/vectors, infinity norms, the Jacobi split,
//!   and a direct elimination solver used as the exact-solution oracle;
//! - [`topology`]: circle, random unit-disc, and file-loaded graphs, all
//!   normalized diagonally dominant by construction;
//! - [`inputs`]: constant, box-bounded, and Gaussian input sequences from
//!   deterministic counter-based streams;
//! - [`sync_engine`]: synchronous rounds over node-local state;
//! - [`async_engine`]: atomic-step interleaving over shared single-writer
//!   registers, with fair schedules and round detection;
//! - [`analysis`]: error traces, convergence envelopes, the closed-form
//!   error recursion, and output-distribution estimates.

pub mod analysis;
pub mod async_engine;
pub mod inputs;
pub mod linalg;
pub mod sync_engine;
pub mod topology;

pub use linalg::{JacobiSplit, Matrix, Vector};
pub use topology::{NodeWeights, WeightedGraph};
