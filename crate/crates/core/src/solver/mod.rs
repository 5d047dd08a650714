//! Primal-dual solution of the discrete multi-marginal transport LP
//!
//! `min sum_x c(x) pi(x)` over nonnegative `pi` on `X_1 x ... x X_n` whose
//! axis marginals are the given measures.

mod entropic;
mod simplex;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use entropic::{solve_entropic, solve_entropic_with, EntropicOptions, EntropicResult};

use crate::cost::{BoundCost, CostOracle, DEFAULT_SIZE_CAP};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, ProductIndex};
use crate::plan::{Spaces, TransportPlan};
use crate::tolerance::{feastol, gap_tol};

/// One potential vector per marginal, indexed by atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialTuple {
    pub values: Vec<Vec<f64>>,
}

impl PotentialTuple {
    pub fn zeros(spaces: &[DiscreteMeasure]) -> Self {
        Self {
            values: spaces.iter().map(|m| vec![0.0; m.len()]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `sum_i u_i(x_i)`
    pub fn sum_at(&self, idx: &[usize]) -> f64 {
        idx.iter().zip(&self.values).map(|(&i, u)| u[i]).sum()
    }

    /// `sum_i <u_i, mu_i>`
    pub fn dual_value(&self, spaces: &[DiscreteMeasure]) -> f64 {
        self.values
            .iter()
            .zip(spaces)
            .map(|(u, m)| u.iter().zip(m.atoms()).map(|(v, a)| v * a.weight).sum::<f64>())
            .sum()
    }

    pub fn check_shape(&self, spaces: &[DiscreteMeasure]) -> Result<()> {
        let ok = self.values.len() == spaces.len()
            && self.values.iter().zip(spaces).all(|(u, m)| u.len() == m.len());
        if ok {
            Ok(())
        } else {
            let got: Vec<usize> = self.values.iter().map(Vec::len).collect();
            let want: Vec<usize> = spaces.iter().map(DiscreteMeasure::len).collect();
            Err(Error::Shape(format!("potential lengths {got:?} vs marginal sizes {want:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveCertificate {
    #[serde(rename = "primal")]
    pub primal_value: f64,
    #[serde(rename = "dual")]
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub vertex: bool,
}

#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    pub potentials: PotentialTuple,
    pub certificate: SolveCertificate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub size_cap: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degeneracy_threshold: usize,
    /// Defaults to a multiple of the problem size.
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            size_cap: DEFAULT_SIZE_CAP,
            degeneracy_threshold: 50,
            max_iterations: None,
            refactor_every: 64,
        }
    }
}

/// Optimal vertex plan, optimal potentials and a duality certificate.
pub fn solve_exact(cost: &CostOracle, marginals: &[DiscreteMeasure]) -> Result<ExactSolution> {
    let options = SolverOptions::default();
    let bound = cost.bind(Arc::from(marginals.to_vec()), options.size_cap)?;
    solve_exact_bound(&bound, &options)
}

pub fn solve_exact_bound(cost: &BoundCost, options: &SolverOptions) -> Result<ExactSolution> {
    if cost.shape().len() > options.size_cap {
        return Err(Error::InstanceTooLarge {
            size: cost.shape().len(),
            cap: options.size_cap,
        });
    }
    let spaces: Spaces = cost.spaces().clone();
    let lp = simplex::run(cost, options)?;
    let plan = TransportPlan::from_entries(spaces.clone(), lp.entries)?;
    let potentials = PotentialTuple { values: lp.potentials };
    let primal_value = plan.integrate(cost.tensor());
    let dual_value = potentials.dual_value(&spaces);
    Ok(ExactSolution {
        plan,
        potentials,
        certificate: SolveCertificate {
            primal_value,
            dual_value,
            gap: primal_value - dual_value,
            iterations: lp.iterations,
            vertex: true,
        },
    })
}

/// Most violated product point of `sum u_i <= c` (largest `sum u_i - c`).
pub fn worst_violation(potentials: &PotentialTuple, cost: &BoundCost) -> Result<(ProductIndex, f64)> {
    potentials.check_shape(cost.spaces())?;
    let shape = cost.shape();
    let mut idx = vec![0; shape.ndim()];
    let mut worst = (idx.clone(), f64::NEG_INFINITY);
    let mut flat = 0;
    loop {
        let v = potentials.sum_at(&idx) - cost.at_flat(flat);
        if v > worst.1 {
            worst = (idx.clone(), v);
        }
        flat += 1;
        if !shape.increment(&mut idx) {
            break;
        }
    }
    Ok((ProductIndex(worst.0), worst.1))
}

/// `I_c(plan) - sum_i <u_i, mu_i>` after checking that the potentials are
/// feasible everywhere.
pub fn duality_gap(plan: &TransportPlan, potentials: &PotentialTuple, cost: &BoundCost) -> Result<f64> {
    if plan.spaces().len() != cost.spaces().len() {
        return Err(Error::Shape("plan and cost live on different products".into()));
    }
    let (point, violation) = worst_violation(potentials, cost)?;
    if violation > feastol(cost.max_abs()) {
        return Err(Error::CertificateInvalid {
            point: point.0,
            violation,
        });
    }
    Ok(plan.integrate(cost.tensor()) - potentials.dual_value(cost.spaces()))
}

/// True when the certificate meets the optimality gap tolerance.
pub fn certifies_optimality(cert: &SolveCertificate) -> bool {
    cert.gap.abs() <= gap_tol(cert.primal_value)
}

#[cfg(test)]
mod tests;
