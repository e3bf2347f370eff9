//! Finite-difference solvers for the Dirichlet problem of the 2-Hessian
//! equation `σ₂(D²u) = f` on subsets of the unit cube.
//!
//! Two discretizations are provided: a compact centred-difference scheme
//! ([`naive`]) and a monotone wide-stencil scheme ([`monotone`]) built from
//! orthogonal lattice triplets ([`directions`]). The [`solvers`] module runs
//! Jacobi, semi-implicit, damped Newton and explicit pseudo-time iterations
//! on either, and [`harness`] drives convergence studies.

pub mod directions;
pub mod error;
pub mod grid;
pub mod harness;
pub mod monotone;
pub mod naive;
pub mod problems;
pub mod solvers;
pub mod sparse;

pub use directions::{generate_directions, DirectionSet};
pub use error::{Error, Result};
pub use grid::{max_norm_error, Domain, Grid3, ScalarField};
pub use problems::{catalog, validate_problem, Problem};
pub use solvers::{solve, Discretization, Init, Method, Scheme, SolveReport, SolverConfig};
pub use sparse::{linear_solve, SparseOperator};
