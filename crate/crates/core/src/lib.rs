//! Pointwise tensor machinery for second-order superintegrable systems.
//!
//! The crate evaluates, at sample points, everything needed to test a
//! second-order (maximally) superintegrable system: the structure tensor
//! extracted from Killing tensors, its decomposition and derivatives, all
//! integrability residuals, structure functions on constant-curvature
//! spaces, the structure connection, and the variety of cubic forms.

pub mod expr;
pub mod tensor;
pub mod geometry;
pub mod linalg;
pub mod si;
pub mod variety;
pub mod catalog;
pub mod report;
pub mod cli;
