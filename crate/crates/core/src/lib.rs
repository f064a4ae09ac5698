//! Exact linear-programming checks for hidden-variable models of planar
//! qubit states and of the two-qubit Bell state.
//!
//! Arithmetic runs over `a + b√2` with rational `a`, `b` ([`scalar`]), which
//! covers every probability arising from angles that are multiples of π/4,
//! or over `f64` for arbitrary angles.

pub mod cli;
pub mod feasibility;
pub mod ontology;
pub mod qubit;
pub mod scalar;
pub mod simplex;
pub mod transform;
