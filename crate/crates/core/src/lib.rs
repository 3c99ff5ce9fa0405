//! Security-typed object language with reference capabilities, and a
//! step-wise refinement engine that constructs well-typed method bodies.
pub mod cli;
pub mod diagnostics;
pub mod fuzz;
pub mod lattice;
pub mod parser;
pub mod pretty;
pub mod program;
pub mod refiner;
pub mod service;
pub mod syntax;
pub mod typechecker;
