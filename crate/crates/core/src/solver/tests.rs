use super::*;
use crate::cost::BuiltinId;
use crate::measure::{random_measure, total_variation, project_weights, WeightMode};

fn line(points: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::uniform(1, points.iter().map(|&p| vec![p]).collect()).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_two(cost: &CostOracle, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let spaces = [mu.clone(), nu.clone()];
    permutations(mu.len())
        .iter()
        .map(|p| {
            (0..mu.len())
                .map(|i| cost.evaluate(&ProductIndex(vec![i, p[i]]), &spaces).unwrap())
                .sum::<f64>()
                / mu.len() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn singleton_polytope() {
    let spaces = [line(&[0.3]), line(&[0.9])];
    let sol = solve_exact(&CostOracle::builtin(BuiltinId::Quadratic), &spaces).unwrap();
    assert_eq!(sol.plan.entries(), &[(ProductIndex(vec![0, 0]), 1.0)]);
    assert!((sol.certificate.primal_value - 0.36).abs() < 1e-15);
    assert!(sol.certificate.gap.abs() < 1e-15);
}

#[test]
fn identity_coupling_for_equal_marginals() {
    let mu = line(&[0.0, 1.0]);
    let sol = solve_exact(&CostOracle::builtin(BuiltinId::Quadratic), &[mu.clone(), mu]).unwrap();
    assert_eq!(sol.certificate.primal_value, 0.0);
    assert_eq!(
        sol.plan.entries(),
        &[(ProductIndex(vec![0, 0]), 0.5), (ProductIndex(vec![1, 1]), 0.5)]
    );
}

#[test]
fn monotone_matching_matches_permutation_minimum() {
    let mu = line(&[0.9, 0.1, 0.5, 0.3, 0.7]);
    let nu = line(&[0.15, 0.95, 0.2, 0.6, 0.4]);
    let cost = CostOracle::builtin(BuiltinId::Quadratic);
    let sol = solve_exact(&cost, &[mu.clone(), nu.clone()]).unwrap();
    let brute = brute_force_two(&cost, &mu, &nu);
    assert!((sol.certificate.primal_value - brute).abs() <= 1e-12);
    // sorted-to-sorted: rank of x equals rank of y
    let rank = |m: &DiscreteMeasure, i: usize| {
        (0..m.len()).filter(|&j| m.coords(j)[0] < m.coords(i)[0]).count()
    };
    assert_eq!(sol.plan.support_len(), 5);
    for (idx, mass) in sol.plan.entries() {
        assert!((mass - 0.2).abs() < 1e-15);
        assert_eq!(rank(&mu, idx.0[0]), rank(&nu, idx.0[1]));
    }
}

#[test]
fn three_marginal_product_cost_matches_assignment_minimum() {
    let a = line(&[0.2, 0.9, 0.5]);
    let b = line(&[0.7, 0.1, 0.4]);
    let c = line(&[0.3, 0.8, 0.6]);
    let spaces = [a, b, c];
    let cost = CostOracle::builtin(BuiltinId::Product);
    let sol = solve_exact(&cost, &spaces).unwrap();
    let mut best = f64::INFINITY;
    for p in permutations(3) {
        for q in permutations(3) {
            let v: f64 = (0..3)
                .map(|i| cost.evaluate(&ProductIndex(vec![i, p[i], q[i]]), &spaces).unwrap())
                .sum::<f64>()
                / 3.0;
            best = best.min(v);
        }
    }
    assert!((sol.certificate.primal_value - best).abs() <= 1e-12);
}

#[test]
fn random_instances_certify_and_are_sparse() {
    for seed in 0..12u64 {
        let n = 2 + (seed % 2) as usize;
        let spaces: Vec<DiscreteMeasure> = (0..n)
            .map(|k| random_measure(3 + k + seed as usize % 4, 2, seed * 10 + k as u64, WeightMode::Random).unwrap())
            .collect();
        let sol = solve_exact(&CostOracle::builtin(BuiltinId::Quadratic), &spaces).unwrap();
        assert!(certifies_optimality(&sol.certificate), "{:?}", sol.certificate);
        let bound: usize = spaces.iter().map(|m| m.len()).sum::<usize>() - n + 1;
        assert!(sol.plan.support_len() <= bound);
        for axis in 0..n {
            let w = project_weights(&sol.plan, axis).unwrap();
            assert!(total_variation(&w, &spaces[axis].weights()) <= 1e-9);
        }
        let bound_cost = CostOracle::builtin(BuiltinId::Quadratic)
            .bind(Arc::from(spaces.clone()), DEFAULT_SIZE_CAP)
            .unwrap();
        let (_, v) = worst_violation(&sol.potentials, &bound_cost).unwrap();
        assert!(v <= feastol(bound_cost.max_abs()));
    }
}

#[test]
fn solve_is_deterministic() {
    let spaces: Vec<DiscreteMeasure> =
        (0..3).map(|k| random_measure(5, 1, 70 + k, WeightMode::Random).unwrap()).collect();
    let cost = CostOracle::builtin(BuiltinId::Quadratic);
    let a = solve_exact(&cost, &spaces).unwrap();
    let b = solve_exact(&cost, &spaces).unwrap();
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.potentials, b.potentials);
    assert_eq!(a.certificate, b.certificate);
}

#[test]
fn bland_rule_from_the_first_pivot_still_terminates() {
    let spaces: Vec<DiscreteMeasure> =
        (0..2).map(|k| random_measure(8, 1, 5 + k, WeightMode::Uniform).unwrap()).collect();
    let cost = CostOracle::builtin(BuiltinId::Quadratic);
    let bound = cost.bind(Arc::from(spaces.clone()), DEFAULT_SIZE_CAP).unwrap();
    let eager = SolverOptions {
        degeneracy_threshold: 0,
        ..SolverOptions::default()
    };
    let a = solve_exact_bound(&bound, &eager).unwrap();
    let b = solve_exact_bound(&bound, &SolverOptions::default()).unwrap();
    assert!((a.certificate.primal_value - b.certificate.primal_value).abs() < 1e-12);
}

#[test]
fn iteration_limit_reports_failure() {
    let spaces: Vec<DiscreteMeasure> =
        (0..2).map(|k| random_measure(6, 1, 11 + k, WeightMode::Random).unwrap()).collect();
    let bound = CostOracle::builtin(BuiltinId::Quadratic)
        .bind(Arc::from(spaces), DEFAULT_SIZE_CAP)
        .unwrap();
    let options = SolverOptions {
        max_iterations: Some(0),
        ..SolverOptions::default()
    };
    match solve_exact_bound(&bound, &options) {
        Err(Error::SolverFailure { dump, .. }) => assert!(dump.contains("basic")),
        Ok(sol) => assert_eq!(sol.certificate.iterations, 0, "staircase start happened to be optimal"),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn size_cap_exceeded() {
    let spaces: Vec<DiscreteMeasure> = (0..3).map(|k| random_measure(4, 1, k, WeightMode::Uniform).unwrap()).collect();
    let bound = CostOracle::builtin(BuiltinId::Zero)
        .bind(Arc::from(spaces), DEFAULT_SIZE_CAP)
        .unwrap();
    let options = SolverOptions {
        size_cap: 63,
        ..SolverOptions::default()
    };
    assert!(matches!(
        solve_exact_bound(&bound, &options),
        Err(Error::InstanceTooLarge { size: 64, cap: 63 })
    ));
}

#[test]
fn duality_gap_examples() {
    let mu = line(&[0.9, 0.1, 0.5, 0.3, 0.7]);
    let nu = line(&[0.15, 0.95, 0.2, 0.6, 0.4]);
    let spaces: Spaces = Arc::from(vec![mu.clone(), nu.clone()]);
    let cost = CostOracle::builtin(BuiltinId::Quadratic);
    let bound = cost.bind(spaces.clone(), DEFAULT_SIZE_CAP).unwrap();
    let sol = solve_exact_bound(&bound, &SolverOptions::default()).unwrap();
    let gap = duality_gap(&sol.plan, &sol.potentials, &bound).unwrap();
    assert!(gap.abs() <= gap_tol(sol.certificate.primal_value));

    // zero potentials: the gap is the plan's cost
    let zeros = PotentialTuple::zeros(&spaces);
    let product = TransportPlan::product(spaces.clone()).unwrap();
    let g = duality_gap(&product, &zeros, &bound).unwrap();
    assert!((g - product.integrate(bound.tensor())).abs() < 1e-15);

    // suboptimal identity-index permutation: gap equals the excess over the optimum
    let ident = TransportPlan::from_entries(
        spaces.clone(),
        (0..5).map(|i| (ProductIndex(vec![i, i]), 0.2)),
    )
    .unwrap();
    let excess = ident.integrate(bound.tensor()) - brute_force_two(&cost, &mu, &nu);
    let g = duality_gap(&ident, &sol.potentials, &bound).unwrap();
    assert!((g - excess).abs() < 1e-12);

    // infeasible potentials are rejected with the violating point
    let mut bad = sol.potentials.clone();
    bad.values[0][2] += 1.0;
    match duality_gap(&ident, &bad, &bound) {
        Err(Error::CertificateInvalid { point, violation }) => {
            assert_eq!(point[0], 2);
            assert!(violation > 0.5);
        }
        other => panic!("expected certificate error, got {other:?}"),
    }
}

#[test]
fn entropic_singleton_and_limits() {
    let spaces = [line(&[0.3]), line(&[0.9])];
    let r = solve_entropic(&CostOracle::builtin(BuiltinId::Quadratic), &spaces, 0.1, 100).unwrap();
    assert_eq!(r.plan.entries(), &[(ProductIndex(vec![0, 0]), 1.0)]);

    let mu = line(&[0.9, 0.1, 0.5, 0.3, 0.7]);
    let nu = line(&[0.15, 0.95, 0.2, 0.6, 0.4]);
    let cost = CostOracle::builtin(BuiltinId::Quadratic);
    let exact = solve_exact(&cost, &[mu.clone(), nu.clone()]).unwrap();
    let approx = solve_entropic(&cost, &[mu.clone(), nu.clone()], 1e-3, 10_000).unwrap();
    assert!(approx.plan.is_feasible(1e-12));
    let v = exact.certificate.primal_value;
    assert!(approx.objective >= v - 1e-9);
    assert!((approx.objective - v).abs() <= 0.01 * v, "{} vs {v}", approx.objective);

    let hot = solve_entropic(&cost, &[mu.clone(), nu.clone()], 1e3, 1000).unwrap();
    let product = TransportPlan::product(Arc::from(vec![mu, nu])).unwrap();
    assert!(hot.plan.max_abs_diff(&product) <= 1e-3);
}

#[test]
fn entropic_rounding_is_feasible_for_three_marginals() {
    let spaces: Vec<DiscreteMeasure> =
        (0..3).map(|k| random_measure(4, 1, 30 + k, WeightMode::Random).unwrap()).collect();
    let cost = CostOracle::builtin(BuiltinId::Quadratic);
    let r = solve_entropic(&cost, &spaces, 0.05, 3).unwrap();
    assert!(!r.converged);
    assert!(r.warning.is_some());
    assert!(r.plan.is_feasible(1e-12), "{}", r.plan.marginal_error());
    let exact = solve_exact(&cost, &spaces).unwrap();
    assert!(r.objective >= exact.certificate.primal_value - 1e-9);
}
