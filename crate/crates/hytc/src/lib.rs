//! Executable refinement types: evaluation with dynamic casts, hybrid type checking
//! with cast insertion, type reconstruction, compositional checking over existential
//! and self types, and a counterexample database.

pub mod ast;
pub mod cexdb;
pub mod comp;
pub mod eval;
pub mod htc;
pub mod prover;
pub mod recon;
pub mod subtyping;
pub mod surface;
