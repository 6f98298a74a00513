//! Exact-arithmetic workbench for the ring of weak Jacobi forms and the
//! homological machinery that sits on top of it: sparse q,zeta-expansions
//! with guaranteed precision, graded ring presentations with Smith-normal-form
//! degree pieces, cobar cohomology of graded Hopf algebroids, and replay of
//! multigraded spectral sequences from explicit differential rules.
//!
//! Everything is computed over exact rational/integer arithmetic; there are no
//! floating point numbers anywhere in the engine. All outputs are
//! deterministic: identical inputs yield byte-identical artifacts regardless
//! of thread count.

pub mod chart;
pub mod config;
pub mod coeffs;
pub mod forms;
pub mod graded;
pub mod hopf;
pub mod sseq;
pub mod linalg;
pub mod series;

pub use coeffs::Coefficients;
pub use linalg::GroupDescriptor;
