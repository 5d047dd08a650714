//! Revised simplex on the flattened transport tensor.
//!
//! Rows are the marginal constraints. One row per marginal beyond the first
//! is redundant (all marginals carry unit mass); the row of atom 0 is dropped
//! for axes `1..n` and its dual is zero. The basis inverse is kept dense and
//! updated by eta pivots, with a fresh Gauss-Jordan factorisation every
//! `refactor_every` iterations.

use std::fmt::Write as _;

use crate::cost::BoundCost;
use crate::error::{Error, Result};
use crate::measure::ProductIndex;
use crate::solver::SolverOptions;

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const DEGENERATE_STEP: f64 = 1e-14;
/// Basic values at or below this are treated as zero in the returned plan.
const MASS_FLOOR: f64 = 1e-13;

pub(crate) struct LpSolution {
    pub entries: Vec<(ProductIndex, f64)>,
    pub potentials: Vec<Vec<f64>>,
    pub iterations: usize,
}

struct Layout {
    offsets: Vec<usize>,
    rows: usize,
}

impl Layout {
    fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut rows = 0;
        for (axis, &s) in sizes.iter().enumerate() {
            offsets.push(rows);
            rows += if axis == 0 { s } else { s - 1 };
        }
        Self {
            offsets,
            rows,
        }
    }

    fn row(&self, axis: usize, atom: usize) -> Option<usize> {
        match (axis, atom) {
            (0, a) => Some(a),
            (_, 0) => None,
            (k, a) => Some(self.offsets[k] + a - 1),
        }
    }

    fn column_rows(&self, idx: &[usize], out: &mut Vec<usize>) {
        out.clear();
        out.extend(idx.iter().enumerate().filter_map(|(k, &a)| self.row(k, a)));
    }
}

struct State<'a> {
    cost: &'a BoundCost,
    layout: Layout,
    rhs: Vec<f64>,
    m: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    x: Vec<f64>,
    binv: Vec<f64>,
    scratch_idx: Vec<usize>,
    scratch_rows: Vec<usize>,
}

pub(crate) fn run(cost: &BoundCost, options: &SolverOptions) -> Result<LpSolution> {
    let spaces = cost.spaces();
    let sizes = cost.shape().sizes().to_vec();
    let layout = Layout::new(&sizes);
    let m = layout.rows;
    let mut rhs = vec![0.0; m];
    for (axis, space) in spaces.iter().enumerate() {
        for (a, atom) in space.atoms().iter().enumerate() {
            if let Some(r) = layout.row(axis, a) {
                rhs[r] = atom.weight;
            }
        }
    }
    let ncols = cost.shape().len();
    let (basis, x) = staircase_basis(cost);
    debug_assert_eq!(basis.len(), m);
    let mut is_basic = vec![false; ncols];
    for &j in &basis {
        is_basic[j] = true;
    }
    let mut state = State {
        cost,
        layout,
        rhs,
        m,
        basis,
        is_basic,
        x,
        binv: vec![0.0; m * m],
        scratch_idx: vec![0; sizes.len()],
        scratch_rows: Vec::with_capacity(sizes.len()),
    };
    state.refactor()?;

    let opt_tol = 1e-11 * (1.0 + cost.max_abs());
    let max_iter = options
        .max_iterations
        .unwrap_or_else(|| 1000 + 50 * (m + ncols));
    let mut iterations = 0;
    let mut degenerate_run = 0;
    let mut bland = false;
    let mut fresh = true;
    let mut y = vec![0.0; m];
    loop {
        state.duals(&mut y);
        let entering = state.price(&y, opt_tol, bland);
        let Some(q) = entering else {
            if fresh {
                break;
            }
            state.refactor()?;
            fresh = true;
            continue;
        };
        if iterations >= max_iter {
            return Err(state.failure("iteration limit reached (cycling guard)", iterations, bland));
        }
        let d = state.ftran(q);
        let Some(r) = state.ratio_test(&d, bland) else {
            return Err(state.failure("unbounded direction in a bounded polytope", iterations, bland));
        };
        let theta = state.x[r].max(0.0) / d[r];
        state.pivot(r, q, &d, theta);
        iterations += 1;
        fresh = false;
        if theta <= DEGENERATE_STEP {
            degenerate_run += 1;
            if degenerate_run >= options.degeneracy_threshold {
                bland = true;
            }
        } else {
            degenerate_run = 0;
            bland = false;
        }
        if iterations % options.refactor_every.max(1) == 0 {
            state.refactor()?;
            fresh = true;
        }
    }

    let shape = cost.shape();
    let mut entries = Vec::new();
    for (pos, &j) in state.basis.iter().enumerate() {
        let v = state.x[pos];
        if v < -1e-9 {
            return Err(state.failure("final basis is primal infeasible", iterations, bland));
        }
        if v > MASS_FLOOR {
            entries.push((shape.unflatten(j), v));
        }
    }
    state.duals(&mut y);
    let potentials = spaces
        .iter()
        .enumerate()
        .map(|(axis, space)| {
            (0..space.len())
                .map(|a| state.layout.row(axis, a).map_or(0.0, |r| y[r]))
                .collect()
        })
        .collect();
    Ok(LpSolution {
        entries,
        potentials,
        iterations,
    })
}

/// North-west-corner staircase through the product: start at the origin,
/// place the largest mass the current atoms allow, then advance exactly one
/// exhausted axis. Produces `sum(s_i) - n + 1` cells, which form a basis
/// (each new cell introduces a row not seen before).
fn staircase_basis(cost: &BoundCost) -> (Vec<usize>, Vec<f64>) {
    let spaces = cost.spaces();
    let shape = cost.shape();
    let n = spaces.len();
    let mut idx = vec![0usize; n];
    let mut remaining: Vec<f64> = spaces.iter().map(|m| m.weight(0)).collect();
    let mut basis = Vec::new();
    let mut x = Vec::new();
    loop {
        let t = remaining.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        basis.push(shape.flatten(&idx));
        x.push(t);
        for r in remaining.iter_mut() {
            *r -= t;
        }
        let advance = (0..n)
            .filter(|&k| idx[k] + 1 < shape.sizes()[k])
            .min_by(|&a, &b| remaining[a].total_cmp(&remaining[b]));
        let Some(k) = advance else { break };
        idx[k] += 1;
        remaining[k] = spaces[k].weight(idx[k]);
    }
    (basis, x)
}

impl State<'_> {
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (col, &j) in self.basis.iter().enumerate() {
            self.cost.shape().unflatten_into(j, &mut self.scratch_idx);
            self.layout.column_rows(&self.scratch_idx, &mut self.scratch_rows);
            for &r in &self.scratch_rows {
                a[r * m + col] = 1.0;
            }
        }
        self.binv = invert(a, m).ok_or_else(|| Error::SolverFailure {
            reason: "singular basis".into(),
            iterations: 0,
            dump: format!("basis columns {:?}", self.basis),
        })?;
        for i in 0..m {
            let v: f64 = (0..m).map(|r| self.binv[i * m + r] * self.rhs[r]).sum();
            self.x[i] = if v < 0.0 && v > -1e-12 { 0.0 } else { v };
        }
        Ok(())
    }

    /// `y^T = c_B^T B^{-1}`
    fn duals(&self, y: &mut [f64]) {
        let m = self.m;
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = self.cost.at_flat(j);
            if cb == 0.0 {
                continue;
            }
            let row = &self.binv[i * m..(i + 1) * m];
            for (yr, b) in y.iter_mut().zip(row) {
                *yr += cb * b;
            }
        }
    }

    /// Entering column: most negative reduced cost, or the lowest-index
    /// improving column under Bland's rule.
    fn price(&mut self, y: &[f64], opt_tol: f64, bland: bool) -> Option<usize> {
        let shape = self.cost.shape();
        let n = shape.ndim();
        let u: Vec<Vec<f64>> = (0..n)
            .map(|axis| {
                (0..shape.sizes()[axis])
                    .map(|a| self.layout.row(axis, a).map_or(0.0, |r| y[r]))
                    .collect()
            })
            .collect();
        let idx = &mut self.scratch_idx;
        idx.iter_mut().for_each(|v| *v = 0);
        let mut best: Option<(usize, f64)> = None;
        let mut flat = 0;
        loop {
            if !self.is_basic[flat] {
                let s: f64 = idx.iter().zip(&u).map(|(&a, ua)| ua[a]).sum();
                let rc = self.cost.at_flat(flat) - s;
                if rc < -opt_tol {
                    if bland {
                        return Some(flat);
                    }
                    if best.is_none_or(|(_, b)| rc < b) {
                        best = Some((flat, rc));
                    }
                }
            }
            flat += 1;
            if !shape.increment(idx) {
                break;
            }
        }
        best.map(|(j, _)| j)
    }

    /// `d = B^{-1} a_q`
    fn ftran(&mut self, q: usize) -> Vec<f64> {
        let m = self.m;
        self.cost.shape().unflatten_into(q, &mut self.scratch_idx);
        self.layout.column_rows(&self.scratch_idx, &mut self.scratch_rows);
        (0..m)
            .map(|i| self.scratch_rows.iter().map(|&r| self.binv[i * m + r]).sum())
            .collect()
    }

    fn ratio_test(&self, d: &[f64], bland: bool) -> Option<usize> {
        let mut theta_min = f64::INFINITY;
        for (i, &di) in d.iter().enumerate() {
            if di > PIVOT_TOL {
                theta_min = theta_min.min(self.x[i].max(0.0) / di);
            }
        }
        if !theta_min.is_finite() {
            return None;
        }
        let mut chosen: Option<usize> = None;
        for (i, &di) in d.iter().enumerate() {
            if di <= PIVOT_TOL || self.x[i].max(0.0) / di > theta_min + RATIO_TIE {
                continue;
            }
            chosen = match chosen {
                None => Some(i),
                Some(c) if bland && self.basis[i] < self.basis[c] => Some(i),
                Some(c) if !bland && di > d[c] => Some(i),
                keep => keep,
            };
        }
        chosen
    }

    fn pivot(&mut self, r: usize, q: usize, d: &[f64], theta: f64) {
        let m = self.m;
        for i in 0..m {
            if i != r {
                let v = self.x[i] - theta * d[i];
                self.x[i] = if v < 0.0 && v > -1e-12 { 0.0 } else { v };
            }
        }
        self.x[r] = theta;
        let pivot = d[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|v| *v /= pivot);
        for (i, row) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let di = d[if i < r { i } else { i + 1 }];
            if di != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= di * p;
                }
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }

    fn failure(&self, reason: &str, iterations: usize, bland: bool) -> Error {
        let mut dump = String::new();
        let _ = writeln!(dump, "bland rule engaged: {bland}");
        for (pos, &j) in self.basis.iter().enumerate() {
            let _ = writeln!(
                dump,
                "  basic {} = {:e}",
                self.cost.shape().unflatten(j),
                self.x[pos]
            );
        }
        Error::SolverFailure {
            reason: reason.into(),
            iterations,
            dump,
        }
    }
}

/// Dense Gauss-Jordan inverse with partial pivoting; `None` when singular.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()))?;
        if a[piv * m + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
                inv.swap(piv * m + k, col * m + k);
            }
        }
        let p = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= p;
            inv[col * m + k] /= p;
        }
        for row in 0..m {
            if row == col {
                continue;
            }
            let f = a[row * m + col];
            if f != 0.0 {
                for k in 0..m {
                    a[row * m + k] -= f * a[col * m + k];
                    inv[row * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    Some(inv)
}
