//! Decomposition of a plan into `sum_i alpha_i (Id x G_i)_# mu_1` by peeling
//! one map per round off every fiber.
//!
//! Round `i` takes the `i`-th heaviest tail of every first-marginal atom
//! that still has one. The atoms reached in round `i` form the nested sets
//! `B_1 ⊇ B_2 ⊇ ...`, and the number of rounds `k` is the largest fiber.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, ProductIndex};
use crate::plan::{Spaces, TransportPlan};
use crate::twist::TwistReport;

pub const DEFAULT_K_CAP: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MongeDecomposition {
    pub k: usize,
    /// `maps[i][x]` is the tail `G_i(x)`.
    pub maps: Vec<Vec<ProductIndex>>,
    /// `alphas[i][x]`; sums to one over `i` at every atom.
    pub alphas: Vec<Vec<f64>>,
    #[serde(skip)]
    spaces: Option<Spaces>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelingTrace {
    #[serde(rename = "B")]
    pub b_sets: Vec<Vec<usize>>,
    /// `mu_1(B_i)`
    pub masses: Vec<f64>,
}

impl MongeDecomposition {
    /// Number of tails actually carrying mass at `x1`.
    pub fn fiber_count(&self, x1: usize) -> usize {
        self.alphas.iter().filter(|a| a[x1] > 0.0).count()
    }

    pub fn atoms(&self) -> usize {
        self.maps.first().map_or(0, Vec::len)
    }
}

/// Peels `plan` with the default cap on `k`.
pub fn peel(plan: &TransportPlan) -> Result<(MongeDecomposition, PeelingTrace)> {
    peel_capped(plan, DEFAULT_K_CAP)
}

pub fn peel_capped(plan: &TransportPlan, k_cap: usize) -> Result<(MongeDecomposition, PeelingTrace)> {
    let mu1 = &plan.spaces()[0];
    let mut fibers: Vec<Vec<(ProductIndex, f64)>> = vec![Vec::new(); mu1.len()];
    for (idx, mass) in plan.entries() {
        fibers[idx.first()].push((idx.tail(), *mass));
    }
    if let Some(a) = fibers.iter().position(Vec::is_empty) {
        return Err(Error::InfeasiblePlan(format!(
            "atom {a} of the first marginal has weight {} but no plan entry",
            mu1.weight(a)
        )));
    }
    for fiber in &mut fibers {
        fiber.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    }
    let k = fibers.iter().map(Vec::len).max().unwrap_or(0);
    if k > k_cap {
        return Err(Error::KCapExceeded { k, cap: k_cap });
    }

    let mut maps = vec![Vec::with_capacity(mu1.len()); k];
    let mut alphas = vec![Vec::with_capacity(mu1.len()); k];
    for fiber in &fibers {
        let total: f64 = fiber.iter().map(|(_, m)| m).sum();
        for i in 0..k {
            match fiber.get(i) {
                Some((tail, mass)) => {
                    maps[i].push(tail.clone());
                    alphas[i].push(mass / total);
                }
                None => {
                    maps[i].push(fiber[0].0.clone());
                    alphas[i].push(0.0);
                }
            }
        }
    }
    let b_sets: Vec<Vec<usize>> = (0..k)
        .map(|i| (0..fibers.len()).filter(|&a| fibers[a].len() > i).collect())
        .collect();
    let masses = b_sets
        .iter()
        .map(|b| b.iter().map(|&a| mu1.weight(a)).sum())
        .collect();
    Ok((
        MongeDecomposition {
            k,
            maps,
            alphas,
            spaces: Some(plan.spaces().clone()),
        },
        PeelingTrace { b_sets, masses },
    ))
}

/// `sum_i alpha_i(x) mu_1(x)` placed at `(x, G_i(x))`.
pub fn reconstruct(dec: &MongeDecomposition, mu1: &DiscreteMeasure) -> Result<TransportPlan> {
    if dec.maps.len() != dec.k || dec.alphas.len() != dec.k {
        return Err(Error::Shape(format!(
            "decomposition declares k = {} but carries {} maps and {} weight vectors",
            dec.k,
            dec.maps.len(),
            dec.alphas.len()
        )));
    }
    if dec.maps.iter().any(|m| m.len() != mu1.len())
        || dec.alphas.iter().any(|a| a.len() != mu1.len())
    {
        return Err(Error::Shape(format!(
            "decomposition tables do not cover the {} atoms of mu_1",
            mu1.len()
        )));
    }
    let mut spaces: Vec<DiscreteMeasure> = vec![mu1.clone()];
    match &dec.spaces {
        Some(s) => spaces.extend(s.iter().skip(1).cloned()),
        None => {
            return Err(Error::Shape("decomposition has no tail spaces attached".into()));
        }
    }
    let entries = (0..dec.k).flat_map(|i| {
        (0..mu1.len())
            .filter(move |&a| dec.alphas[i][a] > 0.0)
            .map(move |a| (ProductIndex::join(a, &dec.maps[i][a]), dec.alphas[i][a] * mu1.weight(a)))
    });
    TransportPlan::from_entries(Arc::from(spaces), entries)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBoundWitness {
    pub x1: usize,
    pub fiber_count: usize,
    /// Largest gradient class over `x1` in the twist report.
    pub max_class_size: usize,
    pub tails: Vec<ProductIndex>,
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBoundReport {
    pub verdict: Verdict,
    pub k: usize,
    pub m_observed: usize,
    pub witness: Option<KBoundWitness>,
}

/// Compares the number of maps with the observed twist cardinality.
pub fn verify_k_bound(dec: &MongeDecomposition, twist: &TwistReport) -> KBoundReport {
    if dec.k <= twist.m_observed {
        return KBoundReport {
            verdict: Verdict::Consistent,
            k: dec.k,
            m_observed: twist.m_observed,
            witness: None,
        };
    }
    let class_max = |x1: usize| {
        twist
            .classes
            .iter()
            .filter(|c| c.x1 == x1)
            .map(|c| c.members.len())
            .max()
            .unwrap_or(0)
    };
    let x1 = (0..dec.atoms())
        .find(|&a| dec.fiber_count(a) == dec.k)
        .expect("some atom attains the largest fiber");
    let live: Vec<usize> = (0..dec.k).filter(|&i| dec.alphas[i][x1] > 0.0).collect();
    KBoundReport {
        verdict: Verdict::Inconsistent,
        k: dec.k,
        m_observed: twist.m_observed,
        witness: Some(KBoundWitness {
            x1,
            fiber_count: dec.fiber_count(x1),
            max_class_size: class_max(x1),
            tails: live.iter().map(|&i| dec.maps[i][x1].clone()).collect(),
            alphas: live.iter().map(|&i| dec.alphas[i][x1]).collect(),
        }),
    }
}
