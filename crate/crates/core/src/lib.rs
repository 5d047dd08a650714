//! Discrete multi-marginal optimal transport.
//!
//! The crate solves the Monge-Kantorovich linear program over the product of
//! finitely supported marginals, recovers optimal potentials and the
//! associated c-splitting set, measures how many points of that set share a
//! first coordinate and a first-variable cost gradient (the twist
//! cardinality), and decomposes plans into weighted unions of Monge maps.

pub mod cost;
pub mod decompose;
pub mod error;
pub mod measure;
pub mod plan;
pub mod scenario;
pub mod solver;
pub mod splitting;
pub mod tolerance;
pub mod twist;
pub mod union_find;

pub use cost::{BoundCost, BuiltinId, CostOracle, Gradient1};
pub use error::{Error, Result};
pub use measure::{Atom, DiscreteMeasure, ProductIndex, ProductShape, WeightMode};
pub use plan::{Spaces, TransportPlan};
pub use solver::{ExactSolution, PotentialTuple, SolveCertificate, SolverOptions};
