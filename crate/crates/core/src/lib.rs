//! Model selection for systems of ordinary differential equations.
//!
//! Models are written in a small text format ([`dsl`]), integrated together
//! with their first and second parameter sensitivities ([`integrator`]),
//! fitted by maximum likelihood ([`likelihood`]) and compared pairwise with
//! a regularized likelihood-ratio test ([`swtest`],
//! [`tournament`]). [`simulation`] checks the size and power of the test.

pub mod bundled;
pub mod cli;
pub mod dsl;
pub mod error;
pub mod integrator;
pub mod likelihood;
pub mod report;
pub mod simulation;
pub mod swtest;
pub mod tournament;
