//! c-splitting sets: product points where a feasible potential tuple is
//! tight, `sum_i u_i(x_i) = c(x)`.

use serde::{Deserialize, Serialize};

use crate::cost::{BoundCost, Gradient1};
use crate::error::{Error, Result};
use crate::measure::ProductIndex;
use crate::plan::TransportPlan;
use crate::solver::{worst_violation, PotentialTuple};
use crate::tolerance::{eqtol, feastol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleCheck {
    pub feasible: bool,
    /// Largest `sum u_i - c` over the product.
    pub worst_violation: f64,
    pub worst_point: ProductIndex,
    pub feastol: f64,
}

/// Checks `sum u_i(x_i) <= c(x) + feastol` on the whole product.
pub fn verify_tuple(tuple: &PotentialTuple, cost: &BoundCost) -> Result<TupleCheck> {
    let (worst_point, worst_violation) = worst_violation(tuple, cost)?;
    let feastol = feastol(cost.max_abs());
    Ok(TupleCheck {
        feasible: worst_violation <= feastol,
        worst_violation,
        worst_point,
        feastol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractMode {
    /// Tight points among the plan's support.
    Support,
    /// Every tight point of the product.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingSet {
    pub points: Vec<ProductIndex>,
    /// `sum u_i(x_i) - c(x)` at each point.
    pub slack: Vec<f64>,
    pub tuple: PotentialTuple,
    pub eqtol: f64,
}

impl SplittingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, point: &ProductIndex) -> bool {
        self.points.binary_search(point).is_ok()
    }
}

/// Tight set of `tuple` at the default `eqtol`.
pub fn extract_splitting_set(
    plan: &TransportPlan,
    tuple: &PotentialTuple,
    cost: &BoundCost,
    mode: ExtractMode,
) -> Result<SplittingSet> {
    extract_splitting_set_at(plan, tuple, cost, mode, eqtol(cost.max_abs()))
}

/// Tight set with an explicit equality tolerance. Points come out sorted.
pub fn extract_splitting_set_at(
    plan: &TransportPlan,
    tuple: &PotentialTuple,
    cost: &BoundCost,
    mode: ExtractMode,
    tol: f64,
) -> Result<SplittingSet> {
    let check = verify_tuple(tuple, cost)?;
    if !check.feasible {
        return Err(Error::CertificateInvalid {
            point: check.worst_point.0,
            violation: check.worst_violation,
        });
    }
    let shape = cost.shape();
    let mut points = Vec::new();
    let mut slack = Vec::new();
    match mode {
        ExtractMode::Support => {
            for (idx, _) in plan.entries() {
                let s = tuple.sum_at(idx.as_slice()) - cost.evaluate(idx)?;
                if s.abs() <= tol {
                    points.push(idx.clone());
                    slack.push(s);
                }
            }
        }
        ExtractMode::Full => {
            let mut idx = vec![0; shape.ndim()];
            let mut flat = 0;
            loop {
                let s = tuple.sum_at(&idx) - cost.at_flat(flat);
                if s.abs() <= tol {
                    points.push(ProductIndex(idx.clone()));
                    slack.push(s);
                }
                flat += 1;
                if !shape.increment(&mut idx) {
                    break;
                }
            }
        }
    }
    Ok(SplittingSet {
        points,
        slack,
        tuple: tuple.clone(),
        eqtol: tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub x1_index: usize,
    pub members: Vec<ProductIndex>,
    /// Largest Euclidean distance between the members' `D_1 c`.
    pub gradient_spread: f64,
    /// Members left out because `D_1 c` is undefined there.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub nondifferentiable: Vec<ProductIndex>,
}

/// One report per first-marginal atom present in the set, in atom order.
pub fn fiber_reports(set: &SplittingSet, cost: &BoundCost) -> Result<Vec<FiberReport>> {
    let mut order: Vec<usize> = (0..set.points.len()).collect();
    order.sort_by(|&a, &b| set.points[a].cmp(&set.points[b]));
    let mut reports: Vec<FiberReport> = Vec::new();
    let mut grads: Vec<Gradient1> = Vec::new();
    for i in order {
        let point = &set.points[i];
        let x1 = point.first();
        if reports.last().is_none_or(|r| r.x1_index != x1) {
            close_fiber(reports.last_mut(), &grads);
            grads.clear();
            reports.push(FiberReport {
                x1_index: x1,
                members: Vec::new(),
                gradient_spread: 0.0,
                nondifferentiable: Vec::new(),
            });
        }
        let report = reports.last_mut().expect("pushed above");
        report.members.push(point.clone());
        match cost.gradient_d1(point)? {
            Some(g) => grads.push(g),
            None => report.nondifferentiable.push(point.clone()),
        }
    }
    close_fiber(reports.last_mut(), &grads);
    Ok(reports)
}

fn close_fiber(report: Option<&mut FiberReport>, grads: &[Gradient1]) {
    if let Some(report) = report {
        let mut spread: f64 = 0.0;
        for (i, a) in grads.iter().enumerate() {
            for b in &grads[i + 1..] {
                spread = spread.max(a.distance(b));
            }
        }
        report.gradient_spread = spread;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cost::{tabulate, BuiltinId, CostOracle, DEFAULT_SIZE_CAP};
    use crate::measure::{grid_measure, DiscreteMeasure, WeightMode};
    use crate::solver::{solve_exact_bound, SolverOptions};

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(1, points.iter().map(|&p| vec![p]).collect()).unwrap()
    }

    fn bind(id: BuiltinId, spaces: Vec<DiscreteMeasure>) -> BoundCost {
        CostOracle::builtin(id).bind(Arc::from(spaces), DEFAULT_SIZE_CAP).unwrap()
    }

    #[test]
    fn zero_tuple_is_feasible_for_nonnegative_cost() {
        let cost = bind(BuiltinId::Quadratic, vec![line(&[0.0, 0.5]), line(&[0.2, 1.0])]);
        let check = verify_tuple(&PotentialTuple::zeros(cost.spaces()), &cost).unwrap();
        assert!(check.feasible);
        assert!(check.worst_violation <= 0.0);
    }

    #[test]
    fn perturbed_duals_fail_verification() {
        let cost = bind(BuiltinId::Quadratic, vec![line(&[0.9, 0.1, 0.5]), line(&[0.15, 0.95, 0.2])]);
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        assert!(verify_tuple(&sol.potentials, &cost).unwrap().feasible);
        let mut bumped = sol.potentials.clone();
        bumped.values[0].iter_mut().for_each(|u| *u += 1.0);
        let check = verify_tuple(&bumped, &cost).unwrap();
        assert!(!check.feasible);
        assert!((check.worst_violation - 1.0).abs() < 1e-9);
        assert!(sol.plan.mass_at(&check.worst_point) > 0.0);

        let wrong = PotentialTuple { values: vec![vec![0.0; 3]] };
        assert!(matches!(verify_tuple(&wrong, &cost), Err(Error::Shape(_))));
        assert!(matches!(
            extract_splitting_set(&sol.plan, &bumped, &cost, ExtractMode::Full),
            Err(Error::CertificateInvalid { .. })
        ));
    }

    #[test]
    fn singleton_set() {
        let cost = bind(BuiltinId::Quadratic, vec![line(&[0.3]), line(&[0.9])]);
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        for mode in [ExtractMode::Support, ExtractMode::Full] {
            let set = extract_splitting_set(&sol.plan, &sol.potentials, &cost, mode).unwrap();
            assert_eq!(set.points, vec![ProductIndex(vec![0, 0])]);
        }
    }

    #[test]
    fn monotone_instance_support_set_is_the_matching() {
        let cost = bind(
            BuiltinId::Quadratic,
            vec![line(&[0.9, 0.1, 0.5, 0.3, 0.7]), line(&[0.15, 0.95, 0.2, 0.6, 0.4])],
        );
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        let support = extract_splitting_set(&sol.plan, &sol.potentials, &cost, ExtractMode::Support).unwrap();
        let expected: Vec<ProductIndex> = [[0, 1], [1, 0], [2, 4], [3, 2], [4, 3]]
            .iter()
            .map(|p| ProductIndex(p.to_vec()))
            .collect();
        assert_eq!(support.points, expected);
        let full = extract_splitting_set(&sol.plan, &sol.potentials, &cost, ExtractMode::Full).unwrap();
        assert!(support.points.iter().all(|p| full.contains(p)));
    }

    #[test]
    fn enlarging_eqtol_never_shrinks_the_set() {
        let cost = bind(BuiltinId::Quadratic, vec![line(&[0.1, 0.4, 0.8]), line(&[0.2, 0.3, 0.9])]);
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        let mut previous = 0;
        for tol in [1e-12, 1e-8, 1e-4, 1e-2, 1.0] {
            let set = extract_splitting_set_at(&sol.plan, &sol.potentials, &cost, ExtractMode::Full, tol).unwrap();
            assert!(set.len() >= previous);
            previous = set.len();
        }
        assert_eq!(previous, 9);
    }

    #[test]
    fn map_graph_fibers_have_zero_spread() {
        let cost = bind(BuiltinId::Quadratic, vec![line(&[0.1, 0.6]), line(&[0.2, 0.7])]);
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        let set = extract_splitting_set(&sol.plan, &sol.potentials, &cost, ExtractMode::Support).unwrap();
        let fibers = fiber_reports(&set, &cost).unwrap();
        assert_eq!(fibers.len(), 2);
        assert!(fibers.iter().all(|f| f.members.len() == 1 && f.gradient_spread == 0.0));
    }

    #[test]
    fn two_level_fiber_has_equal_gradients() {
        let cost = bind(BuiltinId::TwoLevel, vec![line(&[0.25]), line(&[0.5, -0.5])]);
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        let set = extract_splitting_set(&sol.plan, &sol.potentials, &cost, ExtractMode::Full).unwrap();
        let fibers = fiber_reports(&set, &cost).unwrap();
        assert_eq!(fibers.len(), 1);
        assert_eq!(fibers[0].members.len(), 2);
        assert_eq!(fibers[0].gradient_spread, 0.0);
    }

    #[test]
    fn fibers_on_a_non_grid_table_propagate_the_gradient_error() {
        let spaces = vec![line(&[0.0, 0.3, 0.9]), line(&[0.1, 0.7])];
        let table = tabulate(&CostOracle::builtin(BuiltinId::Quadratic), &spaces).unwrap();
        let cost = table.bind(Arc::from(spaces), DEFAULT_SIZE_CAP).unwrap();
        let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
        let set = extract_splitting_set(&sol.plan, &sol.potentials, &cost, ExtractMode::Support).unwrap();
        assert!(matches!(fiber_reports(&set, &cost), Err(Error::GradientUnavailable(_))));
    }

    #[test]
    fn support_fibers_refine_with_resolution() {
        // one x-atom feeds two neighbouring y-atoms; their gradients differ
        // by twice the y spacing, which halves with the grid.
        let spread_at = |r: usize| {
            let mu = grid_measure(r, 0.0, 0, WeightMode::Uniform).unwrap();
            let nu = grid_measure(2 * r, 0.0, 0, WeightMode::Uniform).unwrap();
            let cost = bind(BuiltinId::Quadratic, vec![mu, nu]);
            let sol = solve_exact_bound(&cost, &SolverOptions::default()).unwrap();
            let set = extract_splitting_set(&sol.plan, &sol.potentials, &cost, ExtractMode::Support).unwrap();
            fiber_reports(&set, &cost)
                .unwrap()
                .iter()
                .map(|f| f.gradient_spread)
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (spread_at(6), spread_at(12));
        assert!((coarse - 2.0 / 12.0).abs() < 1e-12, "{coarse}");
        assert!(fine < coarse);
    }
}
