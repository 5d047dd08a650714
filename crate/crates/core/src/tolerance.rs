//! Scale-aware tolerances. Every threshold is relative to `1 + max|c|`.

use serde::{Deserialize, Serialize};

/// Feasibility tolerance for `sum u_i <= c`.
pub fn feastol(max_abs_cost: f64) -> f64 {
    1e-9 * (1.0 + max_abs_cost)
}

/// Tolerance for detecting `sum u_i = c`.
pub fn eqtol(max_abs_cost: f64) -> f64 {
    1e-8 * (1.0 + max_abs_cost)
}

/// Default radius under which two first-variable gradients count as equal.
pub fn grouping_radius(max_gradient_norm: f64) -> f64 {
    1e-6 * (1.0 + max_gradient_norm)
}

/// Relative duality-gap tolerance at optimality.
pub fn gap_tol(primal: f64) -> f64 {
    1e-8 * (1.0 + primal.abs())
}

/// Tolerances actually in effect for one instance, embedded in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feastol: f64,
    pub eqtol: f64,
    pub grouping_radius: Option<f64>,
    pub proximity_radius: Option<f64>,
    pub size_cap: usize,
    pub k_cap: usize,
    pub degeneracy_threshold: usize,
}
