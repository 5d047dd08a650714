//! Python bindings. Structured reports are handed over as plain dicts and
//! lists (through their JSON form).

use std::path::PathBuf;
use std::sync::Arc;

use mmot_core::cost::{BuiltinId, DEFAULT_SIZE_CAP};
use mmot_core::decompose::{self, MongeDecomposition, PeelingTrace};
use mmot_core::measure::{self, WeightMode};
use mmot_core::scenario::{self, Scenario};
use mmot_core::solver::{self, EntropicOptions, SolverOptions};
use mmot_core::splitting::{self, ExtractMode};
use mmot_core::twist;
use mmot_core::{BoundCost, CostOracle, DiscreteMeasure, Error, ProductIndex, Spaces, TransportPlan};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

fn spaces_of(marginals: &[PyRef<'_, Measure>]) -> Spaces {
    Arc::from(marginals.iter().map(|m| m.inner.clone()).collect::<Vec<_>>())
}

/// A finite weighted point set.
#[pyclass(module = "mmot", frozen)]
struct Measure {
    inner: DiscreteMeasure,
}

#[pymethods]
impl Measure {
    /// `coords` is a list of points (each a list of floats, or a float for
    /// one-dimensional measures). `weights` must sum to one unless
    /// `normalize` is set.
    #[new]
    #[pyo3(signature = (coords, weights, normalize=false))]
    fn new(coords: Vec<Bound<'_, PyAny>>, weights: Vec<f64>, normalize: bool) -> PyResult<Self> {
        let mut points = Vec::with_capacity(coords.len());
        for c in coords {
            match c.extract::<f64>() {
                Ok(x) => points.push(vec![x]),
                Err(_) => points.push(c.extract::<Vec<f64>>()?),
            }
        }
        let dim = points.first().map_or(1, Vec::len);
        if points.len() != weights.len() {
            return Err(PyValueError::new_err(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let inner = if normalize {
            DiscreteMeasure::from_parts(dim, points, weights)
        } else {
            let atoms = points
                .into_iter()
                .zip(weights)
                .map(|(coords, weight)| measure::Atom { coords, weight })
                .collect();
            DiscreteMeasure::new(dim, atoms)
        };
        inner.map(|inner| Measure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (size, dim=1, seed=0, weights="uniform"))]
    fn random(size: usize, dim: usize, seed: u64, weights: &str) -> PyResult<Self> {
        let mode: WeightMode = parse_enum("weight mode", weights)?;
        measure::random_measure(size, dim, seed, mode).map(|inner| Measure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (size, offset=0.0, seed=0, weights="uniform"))]
    fn grid(size: usize, offset: f64, seed: u64, weights: &str) -> PyResult<Self> {
        let mode: WeightMode = parse_enum("weight mode", weights)?;
        measure::grid_measure(size, offset, seed, mode).map(|inner| Measure { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (source, seed=0))]
    fn monotone_image(source: &Measure, seed: u64) -> PyResult<Self> {
        measure::monotone_image(&source.inner, seed).map(|inner| Measure { inner }).map_err(err)
    }

    #[staticmethod]
    fn symmetric_roots(source: &Measure) -> PyResult<Self> {
        measure::symmetric_roots(&source.inner).map(|inner| Measure { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        DiscreteMeasure::from_json(text).map(|inner| Measure { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn coords(&self) -> Vec<Vec<f64>> {
        self.inner.atoms().iter().map(|a| a.coords.clone()).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Measure(dim={}, atoms={})", self.inner.dim(), self.inner.len())
    }
}

/// A builtin or tabulated cost function.
#[pyclass(module = "mmot", frozen)]
struct Cost {
    inner: CostOracle,
}

#[pymethods]
impl Cost {
    /// One of "quadratic", "product", "two_level", "cosine", "zero".
    #[staticmethod]
    #[pyo3(signature = (name, scale=1.0))]
    fn builtin(name: &str, scale: f64) -> PyResult<Self> {
        let id: BuiltinId = parse_enum("builtin cost", name)?;
        Ok(Cost {
            inner: CostOracle::scaled(id, scale),
        })
    }

    /// Row-major table over the product of the marginals.
    #[staticmethod]
    fn tabulated(shape: Vec<usize>, values: Vec<f64>) -> PyResult<Self> {
        let inner = CostOracle::Tabulated { shape, values };
        inner.validate().map_err(err)?;
        Ok(Cost { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CostOracle::from_json(text).map(|inner| Cost { inner }).map_err(err)
    }

    fn evaluate(&self, point: Vec<usize>, marginals: Vec<PyRef<'_, Measure>>) -> PyResult<f64> {
        self.inner.evaluate(&ProductIndex(point), &spaces_of(&marginals)).map_err(err)
    }

    /// Gradient in the first variable (finite differences for tables).
    fn gradient(&self, point: Vec<usize>, marginals: Vec<PyRef<'_, Measure>>) -> PyResult<Vec<f64>> {
        self.inner
            .gradient_d1(&ProductIndex(point), &spaces_of(&marginals))
            .map(|g| g.0)
            .map_err(err)
    }

    fn tabulate(&self, marginals: Vec<PyRef<'_, Measure>>) -> PyResult<Self> {
        mmot_core::cost::tabulate(&self.inner, &spaces_of(&marginals))
            .map(|inner| Cost { inner })
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            CostOracle::Builtin { id, params } => format!("Cost.builtin({id:?}, scale={})", params.scale),
            CostOracle::Tabulated { shape, .. } => format!("Cost.tabulated(shape={shape:?})"),
        }
    }
}

/// A sparse coupling of the marginals.
#[pyclass(module = "mmot", frozen)]
struct Plan {
    inner: TransportPlan,
}

#[pymethods]
impl Plan {
    fn entries(&self) -> Vec<(Vec<usize>, f64)> {
        self.inner.entries().iter().map(|(p, m)| (p.0.clone(), *m)).collect()
    }

    fn mass_at(&self, point: Vec<usize>) -> f64 {
        self.inner.mass_at(&ProductIndex(point))
    }

    /// Weights of the projection onto `axis` (0-based).
    fn marginal(&self, axis: usize) -> PyResult<Vec<f64>> {
        measure::project_weights(&self.inner, axis).map_err(err)
    }

    #[getter]
    fn support_len(&self) -> usize {
        self.inner.support_len()
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    #[getter]
    fn marginal_error(&self) -> f64 {
        self.inner.marginal_error()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!("Plan(n={}, support={})", self.inner.n(), self.inner.support_len())
    }
}

/// Optimal plan, dual potentials and certificate of an exact solve.
#[pyclass(module = "mmot", frozen)]
struct Solution {
    inner: solver::ExactSolution,
    cost: BoundCost,
}

#[pymethods]
impl Solution {
    #[getter]
    fn plan(&self) -> Plan {
        Plan {
            inner: self.inner.plan.clone(),
        }
    }

    #[getter]
    fn potentials(&self) -> Vec<Vec<f64>> {
        self.inner.potentials.values.clone()
    }

    #[getter]
    fn certificate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.certificate)
    }

    #[getter]
    fn value(&self) -> f64 {
        self.inner.certificate.primal_value
    }

    /// `mode` is "full" (every tight point) or "support" (plan support only).
    #[pyo3(signature = (mode="full", eqtol=None))]
    fn splitting_set(&self, mode: &str, eqtol: Option<f64>) -> PyResult<SplittingSet> {
        let mode: ExtractMode = parse_enum("extraction mode", mode)?;
        let tol = eqtol.unwrap_or_else(|| mmot_core::tolerance::eqtol(self.cost.max_abs()));
        let set = splitting::extract_splitting_set_at(&self.inner.plan, &self.inner.potentials, &self.cost, mode, tol)
            .map_err(err)?;
        Ok(SplittingSet {
            inner: set,
            cost: self.cost.clone(),
        })
    }
}

/// Tight set of a dual tuple, with the cost it was extracted for.
#[pyclass(module = "mmot", frozen)]
struct SplittingSet {
    inner: splitting::SplittingSet,
    cost: BoundCost,
}

#[pymethods]
impl SplittingSet {
    fn points(&self) -> Vec<Vec<usize>> {
        self.inner.points.iter().map(|p| p.0.clone()).collect()
    }

    fn slack(&self) -> Vec<f64> {
        self.inner.slack.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn fibers<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &splitting::fiber_reports(&self.inner, &self.cost).map_err(err)?)
    }

    #[pyo3(signature = (radius=None))]
    fn twist(&self, radius: Option<f64>) -> PyResult<TwistReport> {
        twist::twist_cardinality(&self.inner, &self.cost, radius)
            .map(|inner| TwistReport { inner })
            .map_err(err)
    }

    #[pyo3(signature = (proximity_radius, radius=None))]
    fn accumulation<'py>(
        &self,
        py: Python<'py>,
        proximity_radius: f64,
        radius: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let report = twist::accumulation_scan(&self.inner, &self.cost, proximity_radius, radius).map_err(err)?;
        to_py(py, &report)
    }
}

#[pyclass(module = "mmot", frozen)]
struct TwistReport {
    inner: twist::TwistReport,
}

#[pymethods]
impl TwistReport {
    #[getter]
    fn m_observed(&self) -> usize {
        self.inner.m_observed
    }

    #[getter]
    fn classes(&self) -> Vec<Vec<Vec<usize>>> {
        self.inner
            .classes
            .iter()
            .map(|c| c.members.iter().map(|p| p.0.clone()).collect())
            .collect()
    }

    #[getter]
    fn excluded(&self) -> Vec<Vec<usize>> {
        self.inner.excluded_nondifferentiable.iter().map(|p| p.0.clone()).collect()
    }

    #[getter]
    fn grouping_radius(&self) -> f64 {
        self.inner.grouping_radius
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Plan written as a mixture of k maps from the first marginal.
#[pyclass(module = "mmot", frozen)]
struct Decomposition {
    inner: MongeDecomposition,
    trace: PeelingTrace,
}

#[pymethods]
impl Decomposition {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn maps(&self) -> Vec<Vec<Vec<usize>>> {
        self.inner
            .maps
            .iter()
            .map(|m| m.iter().map(|p| p.0.clone()).collect())
            .collect()
    }

    #[getter]
    fn alphas(&self) -> Vec<Vec<f64>> {
        self.inner.alphas.clone()
    }

    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.trace)
    }

    fn reconstruct(&self, mu1: &Measure) -> PyResult<Plan> {
        decompose::reconstruct(&self.inner, &mu1.inner)
            .map(|inner| Plan { inner })
            .map_err(err)
    }

    fn verify<'py>(&self, py: Python<'py>, twist: &TwistReport) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &decompose::verify_k_bound(&self.inner, &twist.inner))
    }
}

#[pyfunction]
fn solve_exact(cost: &Cost, marginals: Vec<PyRef<'_, Measure>>) -> PyResult<Solution> {
    let bound = cost.inner.bind(spaces_of(&marginals), DEFAULT_SIZE_CAP).map_err(err)?;
    let inner = solver::solve_exact_bound(&bound, &SolverOptions::default()).map_err(err)?;
    Ok(Solution { inner, cost: bound })
}

/// Returns `(plan, info)` where `info` holds the objective, convergence flag,
/// iteration count and any warning.
#[pyfunction]
#[pyo3(signature = (cost, marginals, epsilon, max_iter=10_000))]
fn solve_entropic<'py>(
    py: Python<'py>,
    cost: &Cost,
    marginals: Vec<PyRef<'_, Measure>>,
    epsilon: f64,
    max_iter: usize,
) -> PyResult<(Plan, Bound<'py, PyAny>)> {
    let bound = cost.inner.bind(spaces_of(&marginals), DEFAULT_SIZE_CAP).map_err(err)?;
    let options = EntropicOptions {
        epsilon,
        max_iter,
        ..EntropicOptions::default()
    };
    let r = solver::solve_entropic_with(&bound, &options).map_err(err)?;
    let info = serde_json::json!({
        "objective": r.objective,
        "converged": r.converged,
        "iterations": r.iterations,
        "marginal_error": r.marginal_error,
        "warning": r.warning,
    });
    Ok((Plan { inner: r.plan }, to_py(py, &info)?))
}

#[pyfunction]
#[pyo3(signature = (plan, k_cap=decompose::DEFAULT_K_CAP))]
fn peel(plan: &Plan, k_cap: usize) -> PyResult<Decomposition> {
    let (inner, trace) = decompose::peel_capped(&plan.inner, k_cap).map_err(err)?;
    Ok(Decomposition { inner, trace })
}

/// `(Id x map)_# measure` with `map[j]` the tail index of atom `j`.
#[pyfunction]
fn pushforward(measure: &Measure, map: Vec<Vec<usize>>, tails: Vec<PyRef<'_, Measure>>) -> PyResult<Plan> {
    let map: Vec<Option<ProductIndex>> = map.into_iter().map(|t| Some(ProductIndex(t))).collect();
    let tails: Vec<DiscreteMeasure> = tails.iter().map(|m| m.inner.clone()).collect();
    measure::pushforward(&measure.inner, &map, &tails)
        .map(|inner| Plan { inner })
        .map_err(err)
}

/// Runs a scenario file, writes its reports and returns the summary.
#[pyfunction]
#[pyo3(signature = (path, out=None))]
fn run_scenario<'py>(py: Python<'py>, path: PathBuf, out: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let s = Scenario::load(&path).map_err(err)?;
    let result = scenario::execute(&s).map_err(err)?;
    scenario::write_reports(&result, &s, &scenario::output_dir(&s, out.as_deref())).map_err(err)?;
    to_py(py, &result.summary)
}

#[pyfunction]
#[pyo3(signature = (path, resolutions, out=None))]
fn sweep<'py>(
    py: Python<'py>,
    path: PathBuf,
    resolutions: Vec<usize>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let s = Scenario::load(&path).map_err(err)?;
    let report = scenario::sweep(&s, &resolutions).map_err(err)?;
    if let Some(dir) = out {
        report.write(&dir).map_err(err)?;
    }
    to_py(py, &report)
}

#[pymodule]
fn mmot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Measure>()?;
    m.add_class::<Cost>()?;
    m.add_class::<Plan>()?;
    m.add_class::<Solution>()?;
    m.add_class::<SplittingSet>()?;
    m.add_class::<TwistReport>()?;
    m.add_class::<Decomposition>()?;
    m.add_function(wrap_pyfunction!(solve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(solve_entropic, m)?)?;
    m.add_function(wrap_pyfunction!(peel, m)?)?;
    m.add_function(wrap_pyfunction!(pushforward, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
