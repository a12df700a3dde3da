//! Apricot: parser, conformance checker, small-step interpreter and hybrid
//! simulator for object-oriented hybrid-system models.

pub mod analyzer;
pub mod ast;
pub mod config;
pub mod diag;
pub mod eval;
pub mod lexer;
pub mod ode;
pub mod parser;
pub mod pretty;
pub mod scalar;
pub mod sim;
pub mod sos;
pub mod special;
pub mod store;
pub mod types;
pub mod value;

/// Real numbers of the modeling language.
pub type Real = f64;
/// The integrator used by the simulator.
pub type Rk4f64 = ode::Rk4<f64>;
/// Single-precision integrator for callers that want it.
pub type Rk4f32 = ode::Rk4<f32>;
