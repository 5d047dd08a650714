//! Entropic approximation by log-domain multi-marginal Sinkhorn scaling,
//! followed by a rounding step that makes the plan exactly feasible.

use std::sync::Arc;

use crate::cost::{BoundCost, CostOracle, DEFAULT_SIZE_CAP};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::plan::TransportPlan;

#[derive(Clone, Debug, PartialEq)]
pub struct EntropicOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop once every marginal is within this L1 distance.
    pub tol: f64,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EntropicResult {
    /// Feasible after rounding, whether or not scaling converged.
    pub plan: TransportPlan,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Worst L1 marginal error of the scaled plan before rounding.
    pub marginal_error: f64,
    pub warning: Option<String>,
}

pub fn solve_entropic(
    cost: &CostOracle,
    marginals: &[DiscreteMeasure],
    epsilon: f64,
    max_iter: usize,
) -> Result<EntropicResult> {
    let bound = cost.bind(Arc::from(marginals.to_vec()), DEFAULT_SIZE_CAP)?;
    solve_entropic_with(
        &bound,
        &EntropicOptions {
            epsilon,
            max_iter,
            ..EntropicOptions::default()
        },
    )
}

pub fn solve_entropic_with(cost: &BoundCost, options: &EntropicOptions) -> Result<EntropicResult> {
    let eps = options.epsilon;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
    }
    let spaces = cost.spaces().clone();
    let shape = cost.shape();
    let n = shape.ndim();
    let log_mu: Vec<Vec<f64>> = spaces
        .iter()
        .map(|m| m.atoms().iter().map(|a| a.weight.ln()).collect())
        .collect();
    let mut u: Vec<Vec<f64>> = spaces.iter().map(|m| vec![0.0; m.len()]).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut marginal_error = f64::INFINITY;
    while iterations < options.max_iter {
        for axis in 0..n {
            let lse = axis_logsumexp(cost, &u, eps, axis);
            for (a, l) in lse.into_iter().enumerate() {
                u[axis][a] += eps * (log_mu[axis][a] - l);
            }
        }
        iterations += 1;
        let kernel = scaled_kernel(cost, &u, eps);
        marginal_error = (0..n)
            .map(|axis| {
                marginal(cost, &kernel, axis)
                    .iter()
                    .zip(spaces[axis].atoms())
                    .map(|(p, a)| (p - a.weight).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        if marginal_error <= options.tol {
            converged = true;
            break;
        }
    }

    let mut kernel = scaled_kernel(cost, &u, eps);
    round_to_feasible(cost, &mut kernel);
    let entries = kernel
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(j, &p)| (shape.unflatten(j), p));
    let plan = TransportPlan::from_entries(spaces, entries)?;
    let objective = plan.integrate(cost.tensor());
    let warning = (!converged).then(|| {
        format!(
            "sinkhorn did not reach marginal tolerance {:e} in {} iterations (error {:e}); plan was rounded",
            options.tol, iterations, marginal_error
        )
    });
    Ok(EntropicResult {
        plan,
        objective,
        converged,
        iterations,
        marginal_error,
        warning,
    })
}

fn for_each_point(cost: &BoundCost, mut f: impl FnMut(usize, &[usize])) {
    let shape = cost.shape();
    let mut idx = vec![0; shape.ndim()];
    let mut flat = 0;
    loop {
        f(flat, &idx);
        flat += 1;
        if !shape.increment(&mut idx) {
            break;
        }
    }
}

fn exponent(cost: &BoundCost, u: &[Vec<f64>], eps: f64, flat: usize, idx: &[usize]) -> f64 {
    let s: f64 = idx.iter().zip(u).map(|(&a, ua)| ua[a]).sum();
    (s - cost.at_flat(flat)) / eps
}

fn axis_logsumexp(cost: &BoundCost, u: &[Vec<f64>], eps: f64, axis: usize) -> Vec<f64> {
    let len = cost.shape().sizes()[axis];
    let mut max = vec![f64::NEG_INFINITY; len];
    for_each_point(cost, |flat, idx| {
        let e = exponent(cost, u, eps, flat, idx);
        let a = idx[axis];
        if e > max[a] {
            max[a] = e;
        }
    });
    let mut sum = vec![0.0; len];
    for_each_point(cost, |flat, idx| {
        let a = idx[axis];
        sum[a] += (exponent(cost, u, eps, flat, idx) - max[a]).exp();
    });
    max.iter().zip(sum).map(|(m, s)| m + s.ln()).collect()
}

fn scaled_kernel(cost: &BoundCost, u: &[Vec<f64>], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; cost.shape().len()];
    for_each_point(cost, |flat, idx| {
        out[flat] = exponent(cost, u, eps, flat, idx).exp();
    });
    out
}

fn marginal(cost: &BoundCost, p: &[f64], axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; cost.shape().sizes()[axis]];
    for_each_point(cost, |flat, idx| out[idx[axis]] += p[flat]);
    out
}

/// Scales each axis down so no marginal exceeds its target, then spreads the
/// missing mass as a product of the per-axis residuals. For two marginals
/// this is the usual row/column rounding.
fn round_to_feasible(cost: &BoundCost, p: &mut [f64]) {
    let spaces = cost.spaces();
    let n = spaces.len();
    for axis in 0..n {
        let marg = marginal(cost, p, axis);
        let factor: Vec<f64> = marg
            .iter()
            .zip(spaces[axis].atoms())
            .map(|(&m, a)| if m > a.weight { a.weight / m } else { 1.0 })
            .collect();
        for_each_point(cost, |flat, idx| p[flat] *= factor[idx[axis]]);
    }
    let residuals: Vec<Vec<f64>> = (0..n)
        .map(|axis| {
            marginal(cost, p, axis)
                .iter()
                .zip(spaces[axis].atoms())
                .map(|(&m, a)| (a.weight - m).max(0.0))
                .collect()
        })
        .collect();
    let deficits: Vec<f64> = residuals.iter().map(|r| r.iter().sum()).collect();
    if deficits.iter().all(|&d| d > 0.0) {
        // sum_a e_i(a) is the same deficit on every axis up to rounding; the
        // correction for axis i scales by prod_{j != i} (e_j / deficit_j).
        for_each_point(cost, |flat, idx| {
            let mut add = residuals[0][idx[0]];
            for k in 1..n {
                add *= residuals[k][idx[k]] / deficits[k];
            }
            p[flat] += add;
        });
    }
}
