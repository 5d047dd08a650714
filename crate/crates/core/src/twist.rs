//! Twist cardinality of a cost on a splitting set.
//!
//! Two points of a set are gradient-equivalent when they share the first
//! atom and their first-variable gradients lie within `grouping_radius`.
//! Proximity is not transitive, so classes are the connected components of
//! the proximity graph. The largest class size is the observed `m`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{BoundCost, Gradient1};
use crate::error::Result;
use crate::measure::ProductIndex;
use crate::splitting::SplittingSet;
use crate::tolerance::grouping_radius;
use crate::union_find::UnionFind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistClass {
    pub x1: usize,
    pub members: Vec<ProductIndex>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistReport {
    pub m_observed: usize,
    pub classes: Vec<TwistClass>,
    pub excluded_nondifferentiable: Vec<ProductIndex>,
    /// Classed points, sorted.
    pub points: Vec<ProductIndex>,
    /// Class size of each entry of `points`.
    pub per_point: Vec<usize>,
    pub grouping_radius: f64,
    /// "Same x1" is exact atom identity.
    pub x1_radius: f64,
}

/// First-variable gradients of the set's points, sorted by point. Points
/// without a gradient are returned separately.
pub fn set_gradients(
    set: &SplittingSet,
    cost: &BoundCost,
) -> Result<(Vec<(ProductIndex, Gradient1)>, Vec<ProductIndex>)> {
    let mut points = set.points.clone();
    points.sort();
    let mut with = Vec::with_capacity(points.len());
    let mut without = Vec::new();
    for p in points {
        match cost.gradient_d1(&p)? {
            Some(g) => with.push((p, g)),
            None => without.push(p),
        }
    }
    Ok((with, without))
}

/// Default grouping radius for a list of gradients.
pub fn default_grouping_radius(grads: &[(ProductIndex, Gradient1)]) -> f64 {
    grouping_radius(grads.iter().map(|(_, g)| g.norm()).fold(0.0, f64::max))
}

pub fn twist_cardinality(set: &SplittingSet, cost: &BoundCost, radius: Option<f64>) -> Result<TwistReport> {
    let (grads, excluded) = set_gradients(set, cost)?;
    let radius = radius.unwrap_or_else(|| default_grouping_radius(&grads));
    Ok(classify(grads, excluded, radius))
}

fn classify(grads: Vec<(ProductIndex, Gradient1)>, excluded: Vec<ProductIndex>, radius: f64) -> TwistReport {
    let mut uf = UnionFind::new(grads.len());
    // Points are sorted, so each fiber is a contiguous run.
    let mut start = 0;
    while start < grads.len() {
        let x1 = grads[start].0.first();
        let end = start + grads[start..].iter().take_while(|(p, _)| p.first() == x1).count();
        link_fiber(&grads, start..end, radius, &mut uf);
        start = end;
    }

    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..grads.len() {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    let mut classes: Vec<TwistClass> = by_root
        .into_values()
        .map(|members| TwistClass {
            x1: grads[members[0]].0.first(),
            members: members.into_iter().map(|i| grads[i].0.clone()).collect(),
        })
        .collect();
    classes.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    let per_point: Vec<usize> = (0..grads.len()).map(|i| uf.set_size(i)).collect();
    TwistReport {
        m_observed: per_point.iter().copied().max().unwrap_or(0),
        classes,
        excluded_nondifferentiable: excluded,
        points: grads.into_iter().map(|(p, _)| p).collect(),
        per_point,
        grouping_radius: radius,
        x1_radius: 0.0,
    }
}

/// Joins every pair of a fiber whose gradients are within `radius`, sweeping
/// in order of the first gradient component.
fn link_fiber(
    grads: &[(ProductIndex, Gradient1)],
    range: std::ops::Range<usize>,
    radius: f64,
    uf: &mut UnionFind,
) {
    let mut order: Vec<usize> = range.collect();
    order.sort_by(|&a, &b| grads[a].1 .0[0].total_cmp(&grads[b].1 .0[0]).then(a.cmp(&b)));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if grads[j].1 .0[0] - grads[i].1 .0[0] > radius {
                break;
            }
            if grads[i].1.distance(&grads[j].1) <= radius {
                uf.union(i, j);
            }
        }
    }
}

/// On a finite set every class is finite, so this only fails on a malformed
/// report. The informative signal is the trend of `m_observed` under
/// refinement, see [`refinement_trend`].
pub fn check_generalized_twist(report: &TwistReport) -> bool {
    report.classes.iter().all(|c| !c.members.is_empty())
        && report.per_point.iter().all(|&k| k >= 1 && k <= report.points.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementTrend {
    /// Same `m_observed` at every resolution.
    Constant,
    /// Grows at every refinement step: no finite bound in the limit.
    StrictlyIncreasing,
    Mixed,
}

pub fn refinement_trend(m_observed: &[usize]) -> RefinementTrend {
    if m_observed.windows(2).all(|w| w[0] == w[1]) {
        RefinementTrend::Constant
    } else if m_observed.windows(2).all(|w| w[0] < w[1]) {
        RefinementTrend::StrictlyIncreasing
    } else {
        RefinementTrend::Mixed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum AccumulationVerdict {
    LocallyOneTwisted,
    Violation {
        witness: (ProductIndex, ProductIndex),
        gradient_distance: f64,
        tail_distance: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccumulationReport {
    /// Components (size >= 2) of the graph joining same-x1 points with equal
    /// gradients and tails closer than the proximity radius.
    pub clusters: Vec<Vec<ProductIndex>>,
    #[serde(flatten)]
    pub verdict: AccumulationVerdict,
    pub proximity_radius: f64,
    pub grouping_radius: f64,
}

/// Discrete stand-in for accumulation points: two distinct points over the
/// same first atom with equal gradients whose tails are closer than
/// `proximity_radius` witness a failure of local 1-twistedness at that scale.
pub fn accumulation_scan(
    set: &SplittingSet,
    cost: &BoundCost,
    proximity_radius: f64,
    radius: Option<f64>,
) -> Result<AccumulationReport> {
    let (grads, _) = set_gradients(set, cost)?;
    let radius = radius.unwrap_or_else(|| default_grouping_radius(&grads));
    let spaces = cost.spaces();
    let tail_distance = |a: &ProductIndex, b: &ProductIndex| -> f64 {
        a.as_slice()[1..]
            .iter()
            .zip(&b.as_slice()[1..])
            .enumerate()
            .map(|(k, (&i, &j))| {
                let space = &spaces[k + 1];
                space
                    .coords(i)
                    .iter()
                    .zip(space.coords(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };

    let mut uf = UnionFind::new(grads.len());
    let mut witness: Option<AccumulationVerdict> = None;
    for i in 0..grads.len() {
        for j in i + 1..grads.len() {
            if grads[j].0.first() != grads[i].0.first() {
                break;
            }
            let gd = grads[i].1.distance(&grads[j].1);
            if gd > radius {
                continue;
            }
            let td = tail_distance(&grads[i].0, &grads[j].0);
            if td < proximity_radius {
                uf.union(i, j);
                if witness.is_none() {
                    witness = Some(AccumulationVerdict::Violation {
                        witness: (grads[i].0.clone(), grads[j].0.clone()),
                        gradient_distance: gd,
                        tail_distance: td,
                    });
                }
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<ProductIndex>> = BTreeMap::new();
    for (i, (p, _)) in grads.iter().enumerate() {
        by_root.entry(uf.find(i)).or_default().push(p.clone());
    }
    let mut clusters: Vec<Vec<ProductIndex>> = by_root.into_values().filter(|c| c.len() > 1).collect();
    clusters.sort();
    Ok(AccumulationReport {
        clusters,
        verdict: witness.unwrap_or(AccumulationVerdict::LocallyOneTwisted),
        proximity_radius,
        grouping_radius: radius,
    })
}
