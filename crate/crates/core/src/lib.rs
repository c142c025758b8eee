//! Algebraic decision diagrams and structured value iteration for
//! factored Markov decision processes.
//!
//! The kernel is generic over the terminal type (see [`Scalar`]); the
//! aliases below fix it to `f64`, which is what the solver and the
//! command-line tool use.

pub mod bench;
pub mod diagram;
pub mod flat;
pub mod mdp;
pub mod parser;
pub mod scalar;
pub mod solver;

pub use diagram::{AddNode, BinaryOp, DiagramError, DiagramRef, DiagramStats, DiagramStore, VarId};
pub use flat::{compare, flat_value_iteration, FlatMdp, FlatSolution};
pub use mdp::{build_dual_diagram, build_partitions, validate, ActionPartition, ActionSpec, MdpSpec, ValidationReport};
pub use parser::{emit, parse, ParseError, SourceSpan};
pub use scalar::{Scalar, TwoFloat};
pub use solver::{
    bellman_backup, extract_policy, regress, value_iteration, Policy, SolveConfig, SolveError, SolveResult,
};

/// Store with double-precision terminals.
pub type Store = DiagramStore<f64>;
/// Single-precision store.
pub type Store32 = DiagramStore<f32>;
/// Double-double store, the accumulator for [`Store`].
pub type WideStore = DiagramStore<TwoFloat>;
