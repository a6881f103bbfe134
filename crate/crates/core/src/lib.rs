//! Symbolic and numeric toolkit for first-order Lagrangian field theories
//! with nonholonomic constraints and vertical symmetry groups.
//!
//! The crate derives covariant field equations, builds covariant and
//! nonholonomic momentum maps, machine-checks the structural identities they
//! satisfy, and integrates the time evolution of the fields on a periodic
//! spatial grid while monitoring the induced conservation and balance laws.

pub mod cauchy;
pub mod chart;
pub mod cli;
pub mod expr;
pub mod forms;
pub mod linalg;
pub mod model;
pub mod nonholonomic;
pub mod symmetry;
pub mod verify;
pub mod variational;

pub use chart::{ChartError, Coord, JetChart};
pub use expr::{ExprError, ScalarExpr, Symbol, Value};
