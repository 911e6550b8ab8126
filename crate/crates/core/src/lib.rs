//! Iterative refinement of approximate symmetric eigendecompositions,
//! including a variant that stays well defined for multiple eigenvalues,
//! and a numerical laboratory for the fixed-point map behind it.

pub mod fixedpoint;
pub mod harness;
pub mod matkit;
pub mod refine;
