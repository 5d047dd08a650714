//! Sparse transport plans on a product of discrete spaces.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{project_weights, total_variation, DiscreteMeasure, ProductIndex, ProductShape};

/// Shared list of the coordinate spaces `X_1, ..., X_n`.
pub type Spaces = Arc<[DiscreteMeasure]>;

/// Nonnegative measure on `X_1 x ... x X_n` stored as a sorted list of
/// strictly positive entries.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    spaces: Spaces,
    entries: Vec<(ProductIndex, f64)>,
}

impl TransportPlan {
    /// Collects entries, summing repeated indices and dropping nonpositive
    /// masses.
    pub fn from_entries(
        spaces: Spaces,
        entries: impl IntoIterator<Item = (ProductIndex, f64)>,
    ) -> Result<Self> {
        let shape = ProductShape::of(&spaces);
        let mut raw: Vec<(ProductIndex, f64)> = Vec::new();
        for (idx, mass) in entries {
            shape.check(idx.as_slice())?;
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::InfeasiblePlan(format!("mass {mass} at {idx}")));
            }
            raw.push((idx, mass));
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(ProductIndex, f64)> = Vec::with_capacity(raw.len());
        for (idx, mass) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == idx => last.1 += mass,
                _ => merged.push((idx, mass)),
            }
        }
        merged.retain(|(_, m)| *m > 0.0);
        Ok(Self {
            spaces,
            entries: merged,
        })
    }

    /// Independent coupling of the spaces' own weights.
    pub fn product(spaces: Spaces) -> Result<Self> {
        let shape = ProductShape::of(&spaces);
        let mut idx = vec![0; shape.ndim()];
        let mut entries = Vec::with_capacity(shape.len());
        loop {
            let mass: f64 = idx
                .iter()
                .zip(spaces.iter())
                .map(|(&i, m)| m.weight(i))
                .product();
            entries.push((ProductIndex(idx.clone()), mass));
            if !shape.increment(&mut idx) {
                break;
            }
        }
        Self::from_entries(spaces, entries)
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn n(&self) -> usize {
        self.spaces.len()
    }

    pub fn shape(&self) -> ProductShape {
        ProductShape::of(&self.spaces)
    }

    pub fn entries(&self) -> &[(ProductIndex, f64)] {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, m)| m).sum()
    }

    pub fn mass_at(&self, idx: &ProductIndex) -> f64 {
        self.entries
            .binary_search_by(|(i, _)| i.cmp(idx))
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    /// Largest total-variation distance between a projection and the
    /// corresponding space's weights.
    pub fn marginal_error(&self) -> f64 {
        (0..self.n())
            .map(|axis| {
                let w = project_weights(self, axis).expect("axis in range");
                total_variation(&w, &self.spaces[axis].weights())
            })
            .fold(0.0, f64::max)
    }

    /// True when every projection matches its space within `tol` TV.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.marginal_error() <= tol
    }

    /// `sum c(x) plan(x)` for a dense cost tensor laid out like [`ProductShape`].
    pub fn integrate(&self, tensor: &[f64]) -> f64 {
        let shape = self.shape();
        self.entries
            .iter()
            .map(|(idx, m)| m * tensor[shape.flatten(idx.as_slice())])
            .sum()
    }

    /// Largest pointwise difference against another plan on the same spaces.
    pub fn max_abs_diff(&self, other: &TransportPlan) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut worst: f64 = 0.0;
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Less => {
                    worst = worst.max(a[i].1);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    worst = worst.max(b[j].1);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    worst = worst.max((a[i].1 - b[j].1).abs());
                    i += 1;
                    j += 1;
                }
            }
        }
        worst
    }

    /// CSV with columns `i1,...,in,mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.n()).map(|k| format!("i{k}")).collect();
        let _ = writeln!(out, "{},mass", header.join(","));
        for (idx, mass) in &self.entries {
            for i in idx.as_slice() {
                let _ = write!(out, "{i},");
            }
            let _ = writeln!(out, "{mass:e}");
        }
        out
    }
}
