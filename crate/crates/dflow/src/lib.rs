//! dflow: nonlinear Dirichlet forms on finite weighted measure spaces.
//!
//! The crate instantiates convex energy functionals on finite graphs,
//! evolves their gradient-flow semigroups by implicit Euler proximal
//! stepping, and provides numerical checkers for the structural
//! inequalities of Dirichlet-form theory: submodularity, the truncation
//! inequality, semigroup domination, norm-capacity estimates, and a
//! constructive Riesz–Markov reconstruction that recovers the zero-order
//! perturbation integrand `B(x, s)` from a black-box local monotone
//! functional.

pub mod capacity;
pub mod config;
pub mod forms;
pub mod properties;
pub mod rieszmarkov;
pub mod runner;
pub mod semigroup;
pub mod solver;
pub mod space;

pub use forms::{luxemburg_norm, BProfile, FormError, FunctionalSpec, VertexMeasure};
pub use solver::{prox, ProxError};
pub use space::{Field, FiniteSpace, SpaceError, VertexSet};
