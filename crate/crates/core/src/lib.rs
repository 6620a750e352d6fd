//! Offline POMDP solvers built on state-space fixed-point operators.
//!
//! The crate provides the QMDP and fast-informed-bound operators with
//! optional entropy or KL regularization ([`operators`]), plain
//! fixed-point iteration and safeguarded Anderson acceleration ([`accel`]),
//! a reader and writer for the Cassandra `.pomdp` format ([`parser`]),
//! simulation-based operators driven by a generative model ([`sim`]), and
//! rollout evaluation of the resulting α-vector policies ([`eval`]).

pub mod accel;
pub mod eval;
pub mod generators;
pub mod model;
pub mod operators;
pub mod parser;
pub mod sim;

pub use accel::{solve, Mode, SolveError, SolveReport, SolverConfig};
pub use model::{Belief, ModelError, PomdpModel};
pub use operators::{AlphaMatrix, Operator, OperatorSpec};
