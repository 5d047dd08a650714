//! Finite probability measures on boxes of `R^d`, product-space addressing,
//! marginal projection and pushforward.
//!
//! Atoms are identified by position. Plans, maps and potentials all refer to
//! atoms by index, never by coordinates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::TransportPlan;

/// Tolerance on the total mass of a measure read from outside.
pub const LOAD_MASS_TOL: f64 = 1e-9;
/// Weights below this (after normalisation) are culled.
pub const CULL_WEIGHT: f64 = 1e-15;
/// Two atoms closer than this in every coordinate are considered the same point.
pub const COINCIDENT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub coords: Vec<f64>,
    pub weight: f64,
}

/// A probability measure with finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(raw.dim, raw.atoms)
    }
}

impl DiscreteMeasure {
    /// Builds a measure whose weights already sum to one (within
    /// [`LOAD_MASS_TOL`]). The weights are renormalised exactly.
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > LOAD_MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1 within {LOAD_MASS_TOL:e}"
            )));
        }
        Self::normalized(dim, atoms)
    }

    /// Builds a measure from arbitrary positive weights, normalising them.
    pub fn normalized(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        for (i, atom) in atoms.iter().enumerate() {
            if atom.coords.len() != dim {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i} has {} coordinates, expected {dim}",
                    atom.coords.len()
                )));
            }
            if atom.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom {i} has non-finite coordinates")));
            }
            if !(atom.weight.is_finite() && atom.weight >= 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {i} has invalid weight {}",
                    atom.weight
                )));
            }
        }
        let mut atoms = renormalize(atoms)?;
        // Culling can only shift the total by a few ulps, one more pass settles it.
        if atoms.iter().any(|a| a.weight < CULL_WEIGHT) {
            atoms = renormalize(atoms)?;
        }
        check_distinct(&atoms)?;
        Ok(Self { dim, atoms })
    }

    /// Measure from parallel coordinate and weight lists.
    pub fn from_parts(dim: usize, coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if coords.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} coordinate rows but {} weights",
                coords.len(),
                weights.len()
            )));
        }
        let atoms = coords
            .into_iter()
            .zip(weights)
            .map(|(coords, weight)| Atom { coords, weight })
            .collect();
        Self::normalized(dim, atoms)
    }

    /// Dirac mass at a point.
    pub fn dirac(coords: Vec<f64>) -> Result<Self> {
        let dim = coords.len();
        Self::new(dim, vec![Atom { coords, weight: 1.0 }])
    }

    /// Uniform measure on the given points.
    pub fn uniform(dim: usize, coords: Vec<Vec<f64>>) -> Result<Self> {
        let weights = vec![1.0; coords.len()];
        Self::from_parts(dim, coords, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.atoms[i].coords
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.atoms[i].weight
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// Largest coordinate-wise extent of the support.
    pub fn diameter(&self) -> f64 {
        let mut d2 = 0.0;
        for k in 0..self.dim {
            let (lo, hi) = self.atoms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                (lo.min(a.coords[k]), hi.max(a.coords[k]))
            });
            d2 += (hi - lo) * (hi - lo);
        }
        d2.sqrt()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("measure", e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure serialisation is infallible")
    }
}

fn renormalize(atoms: Vec<Atom>) -> Result<Vec<Atom>> {
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if atoms.is_empty() || total <= 0.0 {
        return Err(Error::EmptyMeasure);
    }
    let kept: Vec<Atom> = atoms
        .into_iter()
        .map(|a| Atom {
            weight: a.weight / total,
            coords: a.coords,
        })
        .filter(|a| a.weight >= CULL_WEIGHT)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let total: f64 = kept.iter().map(|a| a.weight).sum();
    Ok(kept
        .into_iter()
        .map(|a| Atom {
            weight: a.weight / total,
            coords: a.coords,
        })
        .collect())
}

fn check_distinct(atoms: &[Atom]) -> Result<()> {
    // Sweep over atoms sorted by their first coordinate.
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&a, &b| atoms[a].coords[0].total_cmp(&atoms[b].coords[0]));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if atoms[j].coords[0] - atoms[i].coords[0] > COINCIDENT_TOL {
                break;
            }
            let same = atoms[i]
                .coords
                .iter()
                .zip(&atoms[j].coords)
                .all(|(a, b)| (a - b).abs() <= COINCIDENT_TOL);
            if same {
                return Err(Error::InvalidMeasure(format!(
                    "atoms {} and {} coincide",
                    i.min(j),
                    i.max(j)
                )));
            }
        }
    }
    Ok(())
}

/// A point of `X_1 x ... x X_n`, one atom index per factor. The same type is
/// used for tails `(i_2, ..., i_n)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductIndex(pub Vec<usize>);

impl ProductIndex {
    pub fn new(idx: Vec<usize>) -> Self {
        Self(idx)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> usize {
        self.0[0]
    }

    pub fn tail(&self) -> ProductIndex {
        ProductIndex(self.0[1..].to_vec())
    }

    /// `(head, tail...)`
    pub fn join(head: usize, tail: &ProductIndex) -> Self {
        let mut v = Vec::with_capacity(tail.len() + 1);
        v.push(head);
        v.extend_from_slice(&tail.0);
        Self(v)
    }
}

impl fmt::Display for ProductIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for ProductIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Row-major layout of the product of the marginal supports, last axis fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductShape {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl ProductShape {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut strides = vec![1usize; sizes.len()];
        for k in (0..sizes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1].saturating_mul(sizes[k + 1]);
        }
        let len = sizes.iter().fold(1usize, |acc, &s| acc.saturating_mul(s));
        Self { sizes, strides, len }
    }

    pub fn of(spaces: &[DiscreteMeasure]) -> Self {
        Self::new(spaces.iter().map(DiscreteMeasure::len).collect())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn ndim(&self) -> usize {
        self.sizes.len()
    }

    /// Number of product points (saturating).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn check(&self, idx: &[usize]) -> Result<()> {
        if idx.len() != self.sizes.len() {
            return Err(Error::Shape(format!(
                "product index has {} components, expected {}",
                idx.len(),
                self.sizes.len()
            )));
        }
        for (&i, &s) in idx.iter().zip(&self.sizes) {
            if i >= s {
                return Err(Error::IndexOutOfRange {
                    what: "marginal",
                    index: i,
                    len: s,
                });
            }
        }
        Ok(())
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten_into(&self, mut flat: usize, out: &mut [usize]) {
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = flat / s;
            flat %= s;
        }
    }

    pub fn unflatten(&self, flat: usize) -> ProductIndex {
        let mut out = vec![0; self.sizes.len()];
        self.unflatten_into(flat, &mut out);
        ProductIndex(out)
    }

    /// Advances a multi-index in row-major order; false once it wraps.
    pub fn increment(&self, idx: &mut [usize]) -> bool {
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < self.sizes[k] {
                return true;
            }
            idx[k] = 0;
        }
        false
    }
}

/// Dense axis marginal of a plan, indexed by atom.
pub fn project_weights(plan: &TransportPlan, axis: usize) -> Result<Vec<f64>> {
    let n = plan.n();
    if axis >= n {
        return Err(Error::IndexOutOfRange {
            what: "axis",
            index: axis,
            len: n,
        });
    }
    let mut w = vec![0.0; plan.spaces()[axis].len()];
    for (idx, mass) in plan.entries() {
        w[idx.0[axis]] += mass;
    }
    Ok(w)
}

/// Marginal of `plan` on `axis` (0-based). Atoms carry the coordinates of the
/// axis space; atoms receiving no mass are omitted.
pub fn project(plan: &TransportPlan, axis: usize) -> Result<DiscreteMeasure> {
    let w = project_weights(plan, axis)?;
    let space = &plan.spaces()[axis];
    let atoms = w
        .into_iter()
        .enumerate()
        .filter(|(_, w)| *w > 0.0)
        .map(|(i, weight)| Atom {
            coords: space.coords(i).to_vec(),
            weight,
        })
        .collect();
    DiscreteMeasure::normalized(space.dim(), atoms)
}

/// `(Id x map)_# measure`: the mass of atom `j` is placed at `(j, map[j])`.
///
/// `tail_spaces` are the spaces `X_2, ..., X_n` the tails index into.
pub fn pushforward(
    measure: &DiscreteMeasure,
    map: &[Option<ProductIndex>],
    tail_spaces: &[DiscreteMeasure],
) -> Result<TransportPlan> {
    if map.len() < measure.len() {
        return Err(Error::MissingAssignment(map.len()));
    }
    let mut spaces = Vec::with_capacity(tail_spaces.len() + 1);
    spaces.push(measure.clone());
    spaces.extend_from_slice(tail_spaces);
    let mut entries = Vec::with_capacity(measure.len());
    for j in 0..measure.len() {
        let tail = map[j].as_ref().ok_or(Error::MissingAssignment(j))?;
        entries.push((ProductIndex::join(j, tail), measure.weight(j)));
    }
    TransportPlan::from_entries(Arc::from(spaces), entries)
}

/// Half the L1 distance between two weight vectors on the same atoms.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "weight vectors on different supports");
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Uniform,
    /// Weights drawn from `U[0.1, 1)` then normalised; breaks ties between atoms.
    Random,
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw_weights(rng: &mut ChaCha8Rng, size: usize, mode: WeightMode) -> Vec<f64> {
    match mode {
        WeightMode::Uniform => vec![1.0; size],
        WeightMode::Random => (0..size).map(|_| rng.random_range(0.1..1.0)).collect(),
    }
}

/// `size` atoms sampled uniformly in `[0,1]^dim`. Deterministic in `seed`.
pub fn random_measure(size: usize, dim: usize, seed: u64, weights: WeightMode) -> Result<DiscreteMeasure> {
    if size == 0 {
        return Err(Error::EmptyMeasure);
    }
    if dim == 0 {
        return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(size);
    while coords.len() < size {
        let p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let clash = coords
            .iter()
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= 1e-9));
        if !clash {
            coords.push(p);
        }
    }
    let w = draw_weights(&mut rng, size, weights);
    DiscreteMeasure::from_parts(dim, coords, w)
}

/// One-dimensional grid with atoms at `offset + (i + 1/2) / size`.
pub fn grid_measure(size: usize, offset: f64, seed: u64, weights: WeightMode) -> Result<DiscreteMeasure> {
    if size == 0 {
        return Err(Error::EmptyMeasure);
    }
    let mut rng = seeded_rng(seed);
    let coords = (0..size)
        .map(|i| vec![offset + (i as f64 + 0.5) / size as f64])
        .collect();
    let w = draw_weights(&mut rng, size, weights);
    DiscreteMeasure::from_parts(1, coords, w)
}

/// One-dimensional measure whose sorted atoms carry the weights of the sorted
/// atoms of `source`: the increasing rearrangement of `source` onto fresh
/// random points is then a Monge map.
pub fn monotone_image(source: &DiscreteMeasure, seed: u64) -> Result<DiscreteMeasure> {
    if source.dim() != 1 {
        return Err(Error::InvalidMeasure("monotone image needs a 1-d source".into()));
    }
    let fresh = random_measure(source.len(), 1, seed, WeightMode::Uniform)?;
    let mut points: Vec<f64> = fresh.atoms().iter().map(|a| a.coords[0]).collect();
    points.sort_by(f64::total_cmp);
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.sort_by(|&a, &b| source.coords(a)[0].total_cmp(&source.coords(b)[0]));
    let coords = points.into_iter().map(|p| vec![p]).collect();
    let weights = order.iter().map(|&i| source.weight(i)).collect();
    DiscreteMeasure::from_parts(1, coords, weights)
}

/// Symmetric square roots: for each atom `x > 0` of `source` the two atoms
/// `+sqrt(x)` and `-sqrt(x)`, each with half the weight of `x`.
pub fn symmetric_roots(source: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    if source.dim() != 1 {
        return Err(Error::InvalidMeasure("symmetric roots need a 1-d source".into()));
    }
    let mut coords = Vec::with_capacity(2 * source.len());
    let mut weights = Vec::with_capacity(2 * source.len());
    for a in source.atoms() {
        let x = a.coords[0];
        if x <= COINCIDENT_TOL {
            return Err(Error::InvalidMeasure(format!(
                "symmetric roots need positive atoms, found {x}"
            )));
        }
        let r = x.sqrt();
        coords.push(vec![r]);
        coords.push(vec![-r]);
        weights.push(0.5 * a.weight);
        weights.push(0.5 * a.weight);
    }
    DiscreteMeasure::from_parts(1, coords, weights)
}
