//! Numerical laboratory for random conductance models on periodic lattices.
//!
//! The crate computes the modified corrector `phi_T` and Green's function
//! `G_T` of the operator `1/T + div a grad`, chemical distances and the
//! weights built from them, derivatives of `phi_T` with respect to single
//! conductances, and Monte Carlo estimators for the moment, spectral-gap,
//! Caccioppoli and decay statements about these objects.

// `!(x > y)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod ensembles;
pub mod error;
pub mod estimators;
pub mod graph_metric;
pub mod inequalities;
pub mod io;
pub mod lattice;
pub mod par;
pub mod report;
pub mod seed;
pub mod sensitivity;
pub mod solver;
pub mod stats;

pub use ensembles::{ConductanceField, EnsembleSpec, SingleBondLaw};
pub use error::{Error, Result};
pub use graph_metric::ExtReal;
pub use lattice::{Bond, BondField, DirectionVector, ScalarField, Shape, TorusLattice};
pub use report::{CheckReport, IdentityCheck, Verdict};
pub use solver::{CorrectorSolution, GreenFunction, SolverConfig};
