//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use mmot_core::cost::BuiltinId;
use mmot_core::{DiscreteMeasure, ProductIndex, Spaces, TransportPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed-form cost, written out separately from the library.
pub fn cost_value(id: BuiltinId, x: &[&[f64]]) -> f64 {
    match id {
        BuiltinId::Quadratic => {
            let mut s = 0.0;
            for i in 0..x.len() {
                for j in 0..i {
                    for d in 0..x[i].len() {
                        s += (x[i][d] - x[j][d]).powi(2);
                    }
                }
            }
            s
        }
        BuiltinId::Product => -x.iter().fold(1.0, |p, c| p * c[0]),
        BuiltinId::TwoLevel => (x[1][0].powi(2) - x[0][0]).powi(2),
        BuiltinId::Cosine => (2.0 * PI * (x[0][0] - x[1][0])).cos(),
        BuiltinId::Zero => 0.0,
    }
}

/// Closed-form first-variable gradient.
pub fn cost_gradient(id: BuiltinId, x: &[&[f64]]) -> Vec<f64> {
    match id {
        BuiltinId::Quadratic => (0..x[0].len())
            .map(|d| x[1..].iter().map(|y| 2.0 * (x[0][d] - y[d])).sum())
            .collect(),
        BuiltinId::Product => vec![-x[1..].iter().fold(1.0, |p, c| p * c[0])],
        BuiltinId::TwoLevel => vec![-2.0 * (x[1][0].powi(2) - x[0][0])],
        BuiltinId::Cosine => vec![-2.0 * PI * (2.0 * PI * (x[0][0] - x[1][0])).sin()],
        BuiltinId::Zero => vec![0.0; x[0].len()],
    }
}

pub fn coords_at<'a>(spaces: &'a [DiscreteMeasure], p: &ProductIndex) -> Vec<&'a [f64]> {
    p.as_slice().iter().zip(spaces).map(|(&i, m)| m.coords(i)).collect()
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Minimum of `(1/s) sum_a c(a, s2(a), ..., sn(a))` over all permutation
/// tuples, for n uniform marginals of equal size s.
pub fn brute_force_assignment(id: BuiltinId, spaces: &[DiscreteMeasure]) -> f64 {
    let s = spaces[0].len();
    let perms = permutations(s);
    let tails = spaces.len() - 1;
    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; tails];
    loop {
        let mut total = 0.0;
        for a in 0..s {
            let mut x: Vec<&[f64]> = vec![spaces[0].coords(a)];
            for (t, &pi) in choice.iter().enumerate() {
                x.push(spaces[t + 1].coords(perms[pi][a]));
            }
            total += cost_value(id, &x);
        }
        best = best.min(total / s as f64);
        // odometer over permutation choices
        let mut t = 0;
        loop {
            if t == tails {
                return best;
            }
            choice[t] += 1;
            if choice[t] < perms.len() {
                break;
            }
            choice[t] = 0;
            t += 1;
        }
    }
}

/// Pairwise twist classes: same x1 atom, gradients within `radius`, closed
/// under chaining. Returns the sorted partition.
pub fn pairwise_twist(
    id: BuiltinId,
    spaces: &[DiscreteMeasure],
    points: &[ProductIndex],
    radius: f64,
) -> Vec<Vec<ProductIndex>> {
    let grads: Vec<Vec<f64>> = points.iter().map(|p| cost_gradient(id, &coords_at(spaces, p))).collect();
    let n = points.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if points[i].first() != points[j].first() {
                continue;
            }
            let d: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d <= radius {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut classes = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut members = BTreeSet::new();
        while let Some(v) = stack.pop() {
            members.insert(points[v].clone());
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        classes.push(members.into_iter().collect::<Vec<_>>());
    }
    classes.sort();
    classes
}

/// Distinct random 1-D or d-D points with the given weights.
pub fn random_space(r: &mut ChaCha8Rng, dim: usize, weights: Vec<f64>) -> DiscreteMeasure {
    let coords = (0..weights.len())
        .map(|_| (0..dim).map(|_| r.random::<f64>()).collect())
        .collect();
    DiscreteMeasure::from_parts(dim, coords, weights).expect("valid measure")
}

/// A random feasible (usually non-optimal) plan on a product of the given
/// sizes; its spaces carry exactly the plan's marginals.
pub fn random_plan(r: &mut ChaCha8Rng, sizes: &[usize]) -> TransportPlan {
    let n = sizes.len();
    let density: f64 = r.random_range(0.05..0.9);
    let total: usize = sizes.iter().product();
    let mut cells: BTreeSet<Vec<usize>> = BTreeSet::new();
    for flat in 0..total {
        if r.random::<f64>() < density {
            let mut idx = vec![0; n];
            let mut f = flat;
            for k in (0..n).rev() {
                idx[k] = f % sizes[k];
                f /= sizes[k];
            }
            cells.insert(idx);
        }
    }
    // every atom of every axis carries mass
    for (axis, &s) in sizes.iter().enumerate() {
        for a in 0..s {
            let mut idx: Vec<usize> = sizes.iter().map(|&m| r.random_range(0..m)).collect();
            idx[axis] = a;
            cells.insert(idx);
        }
    }
    let raw: Vec<(Vec<usize>, f64)> = cells.into_iter().map(|c| (c, r.random_range(0.01..1.0))).collect();
    let z: f64 = raw.iter().map(|(_, m)| m).sum();
    let entries: Vec<(ProductIndex, f64)> = raw.into_iter().map(|(c, m)| (ProductIndex(c), m / z)).collect();
    let mut marg: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    for (p, m) in &entries {
        for (k, &i) in p.as_slice().iter().enumerate() {
            marg[k][i] += m;
        }
    }
    let spaces: Spaces = Arc::from(
        marg.into_iter()
            .map(|w| random_space(r, 1, w))
            .collect::<Vec<_>>(),
    );
    TransportPlan::from_entries(spaces, entries).expect("valid plan")
}

pub fn scenarios_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}
