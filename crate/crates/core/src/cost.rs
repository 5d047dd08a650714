//! Cost functions on product supports and their gradient in the first
//! variable.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, ProductIndex, ProductShape};
use crate::plan::Spaces;

/// Default cap on the number of product points materialised for one instance.
pub const DEFAULT_SIZE_CAP: usize = 1_000_000;

/// Analytic cost families with closed-form first-variable gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinId {
    /// `sum_{i<j} |x_i - x_j|^2`
    Quadratic,
    /// `-x_1 x_2 ... x_n` on one-dimensional factors.
    Product,
    /// `(x_2^2 - x_1)^2`, two one-dimensional marginals.
    TwoLevel,
    /// `cos(2 pi (x_1 - x_2))`, two one-dimensional marginals. Periodic.
    Cosine,
    /// `c = 0`.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinParams {
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

/// A cost `c(x_1, ..., x_n)`, either analytic or a dense table over atom
/// indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostOracle {
    Builtin {
        id: BuiltinId,
        #[serde(default)]
        params: BuiltinParams,
    },
    /// Row-major values, last axis fastest.
    Tabulated { shape: Vec<usize>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gradient1(pub Vec<f64>);

impl Gradient1 {
    pub fn distance(&self, other: &Gradient1) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

impl CostOracle {
    pub fn builtin(id: BuiltinId) -> Self {
        CostOracle::Builtin {
            id,
            params: BuiltinParams::default(),
        }
    }

    pub fn scaled(id: BuiltinId, scale: f64) -> Self {
        CostOracle::Builtin {
            id,
            params: BuiltinParams { scale },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let oracle: CostOracle = serde_json::from_str(text).map_err(|e| Error::json("cost", e))?;
        oracle.validate()?;
        Ok(oracle)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CostOracle::Builtin { params, .. } => {
                if !params.scale.is_finite() {
                    return Err(Error::Evaluation("non-finite scale".into()));
                }
            }
            CostOracle::Tabulated { shape, values } => {
                let len: usize = shape.iter().product();
                if shape.len() < 2 || len != values.len() {
                    return Err(Error::Shape(format!(
                        "table shape {shape:?} does not match {} values",
                        values.len()
                    )));
                }
                if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Evaluation(format!("table entry {pos} is not finite")));
                }
            }
        }
        Ok(())
    }

    /// True for costs whose twist structure depends on the domain wrapping.
    pub fn is_periodic(&self) -> bool {
        matches!(self, CostOracle::Builtin { id: BuiltinId::Cosine, .. })
    }

    /// `c` at the coordinates addressed by `point`.
    pub fn evaluate(&self, point: &ProductIndex, spaces: &[DiscreteMeasure]) -> Result<f64> {
        let shape = ProductShape::of(spaces);
        shape.check(point.as_slice())?;
        match self {
            CostOracle::Builtin { id, params } => {
                check_builtin(*id, spaces)?;
                let coords: Vec<&[f64]> = point
                    .as_slice()
                    .iter()
                    .zip(spaces)
                    .map(|(&i, m)| m.coords(i))
                    .collect();
                finite(builtin_value(*id, params.scale, &coords))
            }
            CostOracle::Tabulated { shape: tshape, values } => {
                if tshape.as_slice() != shape.sizes() {
                    return Err(Error::Shape(format!(
                        "table shape {tshape:?} does not match marginal sizes {:?}",
                        shape.sizes()
                    )));
                }
                Ok(values[shape.flatten(point.as_slice())])
            }
        }
    }

    /// First-variable gradient at `point`. Binds internally; prefer
    /// [`BoundCost::gradient_d1`] in loops.
    pub fn gradient_d1(&self, point: &ProductIndex, spaces: &[DiscreteMeasure]) -> Result<Gradient1> {
        let bound = self.bind(Arc::from(spaces.to_vec()), DEFAULT_SIZE_CAP)?;
        bound.gradient_d1(point)?.ok_or_else(|| {
            Error::GradientUnavailable(format!("grid axis of length 1 at atom {}", point.first()))
        })
    }

    /// Materialises the cost over the product of `spaces`.
    pub fn bind(&self, spaces: Spaces, cap: usize) -> Result<BoundCost> {
        self.validate()?;
        if spaces.len() < 2 {
            return Err(Error::Shape(format!("need at least two marginals, got {}", spaces.len())));
        }
        let shape = ProductShape::of(&spaces);
        if shape.len() > cap {
            return Err(Error::InstanceTooLarge {
                size: shape.len(),
                cap,
            });
        }
        let tensor = match self {
            CostOracle::Builtin { id, params } => {
                check_builtin(*id, &spaces)?;
                let (id, scale) = (*id, params.scale);
                (0..shape.len())
                    .into_par_iter()
                    .map_init(
                        || vec![0usize; shape.ndim()],
                        |idx, flat| {
                            shape.unflatten_into(flat, idx);
                            let coords: Vec<&[f64]> =
                                idx.iter().zip(spaces.iter()).map(|(&i, m)| m.coords(i)).collect();
                            finite(builtin_value(id, scale, &coords))
                        },
                    )
                    .collect::<Result<Vec<f64>>>()?
            }
            CostOracle::Tabulated { shape: tshape, values } => {
                if tshape.as_slice() != shape.sizes() {
                    return Err(Error::Shape(format!(
                        "table shape {tshape:?} does not match marginal sizes {:?}",
                        shape.sizes()
                    )));
                }
                values.clone()
            }
        };
        let max_abs = tensor.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let grid = match self {
            CostOracle::Tabulated { .. } => Some(Grid::detect(&spaces[0])),
            CostOracle::Builtin { .. } => None,
        };
        Ok(BoundCost {
            oracle: self.clone(),
            spaces,
            shape,
            tensor,
            max_abs,
            grid,
        })
    }
}

/// Tabulates `oracle` on the product of `spaces`.
pub fn tabulate(oracle: &CostOracle, spaces: &[DiscreteMeasure]) -> Result<CostOracle> {
    let bound = oracle.bind(Arc::from(spaces.to_vec()), DEFAULT_SIZE_CAP)?;
    Ok(CostOracle::Tabulated {
        shape: bound.shape.sizes().to_vec(),
        values: bound.tensor,
    })
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("cost value {v}")))
    }
}

fn check_builtin(id: BuiltinId, spaces: &[DiscreteMeasure]) -> Result<()> {
    let n = spaces.len();
    let one_d = spaces.iter().all(|m| m.dim() == 1);
    let ok = match id {
        BuiltinId::Quadratic => spaces.iter().all(|m| m.dim() == spaces[0].dim()),
        BuiltinId::Product => one_d,
        BuiltinId::TwoLevel | BuiltinId::Cosine => one_d && n == 2,
        BuiltinId::Zero => true,
    };
    if ok {
        Ok(())
    } else {
        let dims: Vec<usize> = spaces.iter().map(DiscreteMeasure::dim).collect();
        Err(Error::Shape(format!("builtin {id:?} does not accept marginal dimensions {dims:?}")))
    }
}

/// Value of a builtin at explicit coordinates (one slice per marginal).
pub fn builtin_value(id: BuiltinId, scale: f64, x: &[&[f64]]) -> f64 {
    let raw = match id {
        BuiltinId::Quadratic => {
            let mut total = 0.0;
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    total += x[i].iter().zip(x[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                }
            }
            total
        }
        BuiltinId::Product => -x.iter().map(|c| c[0]).product::<f64>(),
        BuiltinId::TwoLevel => {
            let d = x[1][0] * x[1][0] - x[0][0];
            d * d
        }
        BuiltinId::Cosine => (2.0 * PI * (x[0][0] - x[1][0])).cos(),
        BuiltinId::Zero => 0.0,
    };
    scale * raw
}

/// Closed-form gradient of a builtin in the first variable.
pub fn builtin_gradient(id: BuiltinId, scale: f64, x: &[&[f64]]) -> Gradient1 {
    let raw: Vec<f64> = match id {
        BuiltinId::Quadratic => (0..x[0].len())
            .map(|k| x[1..].iter().map(|xj| 2.0 * (x[0][k] - xj[k])).sum())
            .collect(),
        BuiltinId::Product => vec![-x[1..].iter().map(|c| c[0]).product::<f64>()],
        BuiltinId::TwoLevel => vec![-2.0 * (x[1][0] * x[1][0] - x[0][0])],
        BuiltinId::Cosine => vec![-2.0 * PI * (2.0 * PI * (x[0][0] - x[1][0])).sin()],
        BuiltinId::Zero => vec![0.0; x[0].len()],
    };
    Gradient1(raw.into_iter().map(|g| scale * g).collect())
}

/// Axis-aligned uniform grid structure of the first marginal's support.
#[derive(Clone, Debug)]
pub struct Grid {
    steps: Vec<f64>,
    lens: Vec<usize>,
    /// grid cell (row-major) -> atom
    cell_atom: Vec<usize>,
    /// atom -> grid multi-index
    atom_cell: Vec<Vec<usize>>,
}

impl Grid {
    pub fn detect(measure: &DiscreteMeasure) -> std::result::Result<Grid, String> {
        let dim = measure.dim();
        let mut starts = Vec::with_capacity(dim);
        let mut steps = Vec::with_capacity(dim);
        let mut lens = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut vals: Vec<f64> = measure.atoms().iter().map(|a| a.coords[k]).collect();
            vals.sort_by(f64::total_cmp);
            let span = vals[vals.len() - 1] - vals[0];
            let merge = 1e-9 * (1.0 + span);
            vals.dedup_by(|b, a| (*b - *a).abs() <= merge);
            let len = vals.len();
            let step = if len > 1 { span / (len - 1) as f64 } else { 0.0 };
            for w in vals.windows(2) {
                if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
                    return Err(format!("axis {k} of the first marginal is not uniformly spaced"));
                }
            }
            starts.push(vals[0]);
            steps.push(step);
            lens.push(len);
        }
        let cells: usize = lens.iter().product();
        if cells != measure.len() {
            return Err(format!(
                "first marginal has {} atoms but spans a {:?} grid",
                measure.len(),
                lens
            ));
        }
        let layout = ProductShape::new(lens.clone());
        let mut cell_atom = vec![usize::MAX; cells];
        let mut atom_cell = Vec::with_capacity(measure.len());
        for (a, atom) in measure.atoms().iter().enumerate() {
            let mut cell = Vec::with_capacity(dim);
            for k in 0..dim {
                let pos = if lens[k] > 1 {
                    (atom.coords[k] - starts[k]) / steps[k]
                } else {
                    0.0
                };
                let i = pos.round();
                if (pos - i).abs() > 1e-6 {
                    return Err(format!("atom {a} is off the grid"));
                }
                cell.push(i as usize);
            }
            let flat = layout.flatten(&cell);
            if cell_atom[flat] != usize::MAX {
                return Err(format!("atoms {} and {a} share a grid cell", cell_atom[flat]));
            }
            cell_atom[flat] = a;
            atom_cell.push(cell);
        }
        Ok(Grid {
            steps,
            lens,
            cell_atom,
            atom_cell,
        })
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    fn atom_at(&self, cell: &[usize]) -> usize {
        self.cell_atom[ProductShape::new(self.lens.clone()).flatten(cell)]
    }
}

/// A cost materialised on a concrete product of spaces.
#[derive(Clone, Debug)]
pub struct BoundCost {
    oracle: CostOracle,
    spaces: Spaces,
    shape: ProductShape,
    tensor: Vec<f64>,
    max_abs: f64,
    grid: Option<std::result::Result<Grid, String>>,
}

impl BoundCost {
    pub fn oracle(&self) -> &CostOracle {
        &self.oracle
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn shape(&self) -> &ProductShape {
        &self.shape
    }

    /// Dense values, row-major over the product.
    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn evaluate(&self, point: &ProductIndex) -> Result<f64> {
        self.shape.check(point.as_slice())?;
        Ok(self.tensor[self.shape.flatten(point.as_slice())])
    }

    pub fn at_flat(&self, flat: usize) -> f64 {
        self.tensor[flat]
    }

    /// First-variable gradient at `point`.
    ///
    /// `Ok(None)` marks a point outside the differentiability set (a
    /// tabulated first marginal with a single grid line along some axis).
    pub fn gradient_d1(&self, point: &ProductIndex) -> Result<Option<Gradient1>> {
        self.shape.check(point.as_slice())?;
        match &self.oracle {
            CostOracle::Builtin { id, params } => {
                let coords: Vec<&[f64]> = point
                    .as_slice()
                    .iter()
                    .zip(self.spaces.iter())
                    .map(|(&i, m)| m.coords(i))
                    .collect();
                let g = builtin_gradient(*id, params.scale, &coords);
                if g.0.iter().all(|v| v.is_finite()) {
                    Ok(Some(g))
                } else {
                    Err(Error::Evaluation(format!("non-finite gradient at {point}")))
                }
            }
            CostOracle::Tabulated { .. } => {
                let grid = match &self.grid {
                    Some(Ok(grid)) => grid,
                    Some(Err(reason)) => return Err(Error::GradientUnavailable(reason.clone())),
                    None => unreachable!("tabulated costs always carry grid detection"),
                };
                Ok(self.finite_difference(grid, point))
            }
        }
    }

    fn finite_difference(&self, grid: &Grid, point: &ProductIndex) -> Option<Gradient1> {
        let idx = point.as_slice();
        let cell = &grid.atom_cell[idx[0]];
        let mut probe = idx.to_vec();
        let mut value_at = |cell: &[usize]| {
            probe[0] = grid.atom_at(cell);
            self.tensor[self.shape.flatten(&probe)]
        };
        let mut out = Vec::with_capacity(cell.len());
        for k in 0..cell.len() {
            let (len, h, i) = (grid.lens[k], grid.steps[k], cell[k]);
            let mut shifted = |d: isize| {
                let mut c = cell.clone();
                c[k] = (i as isize + d) as usize;
                value_at(&c)
            };
            let d = match len {
                1 => return None,
                2 => {
                    if i == 0 {
                        (shifted(1) - shifted(0)) / h
                    } else {
                        (shifted(0) - shifted(-1)) / h
                    }
                }
                _ if i == 0 => (-3.0 * shifted(0) + 4.0 * shifted(1) - shifted(2)) / (2.0 * h),
                _ if i == len - 1 => (3.0 * shifted(0) - 4.0 * shifted(-1) + shifted(-2)) / (2.0 * h),
                _ => (shifted(1) - shifted(-1)) / (2.0 * h),
            };
            out.push(d);
        }
        Some(Gradient1(out))
    }
}
