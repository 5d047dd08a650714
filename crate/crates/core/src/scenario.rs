//! Self-describing JSON scenarios and the solve, splitting, twist,
//! decompose, verify pipeline that runs them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cost::{BoundCost, CostOracle, DEFAULT_SIZE_CAP};
use crate::decompose::{peel_capped, verify_k_bound, KBoundReport, MongeDecomposition, PeelingTrace, Verdict, DEFAULT_K_CAP};
use crate::error::{Error, Result};
use crate::measure::{grid_measure, monotone_image, random_measure, symmetric_roots, DiscreteMeasure, WeightMode};
use crate::plan::{Spaces, TransportPlan};
use crate::solver::{solve_entropic_with, solve_exact_bound, EntropicOptions, EntropicResult, ExactSolution, SolverOptions};
use crate::splitting::{extract_splitting_set_at, fiber_reports, ExtractMode, FiberReport, SplittingSet};
use crate::tolerance::{eqtol, feastol, Tolerances};
use crate::twist::{accumulation_scan, check_generalized_twist, twist_cardinality, AccumulationReport, TwistReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Solve,
    Entropic,
    Splitting,
    Twist,
    Decompose,
    Verify,
}

impl Stage {
    fn requires(self) -> &'static [&'static [Stage]] {
        match self {
            Stage::Solve | Stage::Entropic => &[],
            Stage::Splitting => &[&[Stage::Solve]],
            Stage::Twist => &[&[Stage::Splitting]],
            Stage::Decompose => &[&[Stage::Solve, Stage::Entropic]],
            Stage::Verify => &[&[Stage::Decompose], &[Stage::Twist]],
        }
    }
}

/// Generated marginals. `size` is the resolution a sweep overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Points uniform in `[0,1]^dim`.
    UniformBox {
        size: usize,
        #[serde(default = "one_usize")]
        dim: usize,
        seed: u64,
        #[serde(default = "uniform_weights")]
        weights: WeightMode,
    },
    /// One-dimensional cell centres `offset + (i + 1/2)/size`.
    Grid {
        size: usize,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "uniform_weights")]
        weights: WeightMode,
    },
    /// Fresh sorted points carrying the sorted weights of marginal `of`.
    MonotoneImage { of: usize, seed: u64 },
    /// `+-sqrt(x)` for every atom `x` of marginal `of`, half weight each.
    SymmetricRoots { of: usize },
}

fn one_usize() -> usize {
    1
}

fn uniform_weights() -> WeightMode {
    WeightMode::Uniform
}

impl GeneratorSpec {
    fn with_size(&self, r: usize) -> GeneratorSpec {
        let mut g = self.clone();
        match &mut g {
            GeneratorSpec::UniformBox { size, .. } | GeneratorSpec::Grid { size, .. } => *size = r,
            GeneratorSpec::MonotoneImage { .. } | GeneratorSpec::SymmetricRoots { .. } => {}
        }
        g
    }

    fn build(&self, earlier: &[DiscreteMeasure]) -> Result<DiscreteMeasure> {
        let source = |of: usize| {
            earlier.get(of).ok_or_else(|| {
                Error::Config(format!("generator refers to marginal {of}, which is not defined before it"))
            })
        };
        match self {
            GeneratorSpec::UniformBox { size, dim, seed, weights } => random_measure(*size, *dim, *seed, *weights),
            GeneratorSpec::Grid { size, offset, seed, weights } => grid_measure(*size, *offset, *seed, *weights),
            GeneratorSpec::MonotoneImage { of, seed } => monotone_image(source(*of)?, *seed),
            GeneratorSpec::SymmetricRoots { of } => symmetric_roots(source(*of)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MarginalSpec {
    Inline(DiscreteMeasure),
    File(PathBuf),
    Generator(GeneratorSpec),
}

impl MarginalSpec {
    fn parse(value: &Value, field: &str) -> Result<Self> {
        let ctx = |e: serde_json::Error| Error::Config(format!("{field}: {e}"));
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config(format!("{field}: expected an object")))?;
        if let Some(file) = obj.get("file") {
            let path = file
                .as_str()
                .ok_or_else(|| Error::Config(format!("{field}.file: expected a path string")))?;
            Ok(MarginalSpec::File(PathBuf::from(path)))
        } else if obj.contains_key("generator") {
            Ok(MarginalSpec::Generator(serde_json::from_value(value.clone()).map_err(ctx)?))
        } else {
            Ok(MarginalSpec::Inline(serde_json::from_value(value.clone()).map_err(ctx)?))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub eqtol: Option<f64>,
    pub grouping_radius: Option<f64>,
    /// Enables the accumulation scan in the twist stage.
    pub proximity_radius: Option<f64>,
    pub size_cap: Option<usize>,
    pub k_cap: Option<usize>,
    pub degeneracy_threshold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropicSpec {
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    marginals: Vec<Value>,
    cost: Value,
    pipeline: Vec<Stage>,
    #[serde(default)]
    tolerances: ToleranceOverrides,
    #[serde(default)]
    entropic: Option<EntropicSpec>,
    #[serde(default)]
    splitting_mode: Option<ExtractMode>,
    #[serde(default)]
    output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub marginals: Vec<MarginalSpec>,
    pub cost: CostOracle,
    pub pipeline: Vec<Stage>,
    pub tolerances: ToleranceOverrides,
    pub entropic: EntropicSpec,
    pub splitting_mode: ExtractMode,
    pub output: Option<PathBuf>,
    /// Directory that relative file references resolve against.
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario")
            .to_string();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &name, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, default_name: &str, base_dir: PathBuf) -> Result<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        let marginals = raw
            .marginals
            .iter()
            .enumerate()
            .map(|(i, v)| MarginalSpec::parse(v, &format!("marginals[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if marginals.len() < 2 {
            return Err(Error::Config(format!("need at least two marginals, got {}", marginals.len())));
        }
        let cost: CostOracle =
            serde_json::from_value(raw.cost).map_err(|e| Error::Config(format!("cost: {e}")))?;
        cost.validate().map_err(|e| Error::Config(format!("cost: {e}")))?;
        validate_pipeline(&raw.pipeline)?;
        let entropic = raw.entropic.unwrap_or(EntropicSpec {
            epsilon: 1e-2,
            max_iter: default_max_iter(),
        });
        if !(entropic.epsilon > 0.0) {
            return Err(Error::Config(format!("entropic.epsilon: must be positive, got {}", entropic.epsilon)));
        }
        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| default_name.to_string()),
            marginals,
            cost,
            pipeline: raw.pipeline,
            tolerances: raw.tolerances,
            entropic,
            splitting_mode: raw.splitting_mode.unwrap_or(ExtractMode::Full),
            output: raw.output,
            base_dir,
        })
    }

    pub fn is_generated(&self) -> bool {
        self.marginals.iter().all(|m| matches!(m, MarginalSpec::Generator(_)))
    }

    /// Copy with every sized generator set to `resolution`.
    pub fn at_resolution(&self, resolution: usize) -> Result<Scenario> {
        if !self.is_generated() {
            return Err(Error::Config(
                "sweeps need generator marginals for every axis".into(),
            ));
        }
        let mut s = self.clone();
        for m in &mut s.marginals {
            if let MarginalSpec::Generator(g) = m {
                *g = g.with_size(resolution);
            }
        }
        Ok(s)
    }

    /// Copy with generator `i` seeded by `seed + i`.
    pub fn reseeded(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        for (i, m) in s.marginals.iter_mut().enumerate() {
            if let MarginalSpec::Generator(
                GeneratorSpec::UniformBox { seed: g, .. }
                | GeneratorSpec::Grid { seed: g, .. }
                | GeneratorSpec::MonotoneImage { seed: g, .. },
            ) = m
            {
                *g = seed.wrapping_add(i as u64);
            }
        }
        s
    }

    pub fn build_marginals(&self) -> Result<Vec<DiscreteMeasure>> {
        let mut built: Vec<DiscreteMeasure> = Vec::with_capacity(self.marginals.len());
        for (i, spec) in self.marginals.iter().enumerate() {
            let m = match spec {
                MarginalSpec::Inline(m) => m.clone(),
                MarginalSpec::File(p) => {
                    let path = self.base_dir.join(p);
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    DiscreteMeasure::from_json(&text)?
                }
                MarginalSpec::Generator(g) => g
                    .build(&built)
                    .map_err(|e| Error::Config(format!("marginals[{i}]: {e}")))?,
            };
            built.push(m);
        }
        Ok(built)
    }
}

fn validate_pipeline(stages: &[Stage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::Config("pipeline is empty".into()));
    }
    for (pos, stage) in stages.iter().enumerate() {
        if stages[..pos].contains(stage) {
            return Err(Error::Config(format!("stage {stage:?} listed twice")));
        }
        for alternatives in stage.requires() {
            if !alternatives.iter().any(|dep| stages[..pos].contains(dep)) {
                let names: Vec<String> = alternatives.iter().map(|s| format!("{s:?}").to_lowercase()).collect();
                return Err(Error::Config(format!(
                    "stage {} requires {} earlier in the pipeline",
                    format!("{stage:?}").to_lowercase(),
                    names.join(" or ")
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub instance_hash: String,
    pub sizes: Vec<usize>,
    pub primal: Option<f64>,
    pub gap: Option<f64>,
    pub entropic_objective: Option<f64>,
    pub m_observed: Option<usize>,
    pub k: Option<usize>,
    pub verdict: Option<Verdict>,
    pub max_gradient_spread: Option<f64>,
    pub tolerances: Tolerances,
}

/// Everything one scenario run produces, in memory.
#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub marginals: Spaces,
    pub cost: BoundCost,
    pub exact: Option<ExactSolution>,
    pub entropic: Option<EntropicResult>,
    pub splitting: Option<SplittingSet>,
    pub fibers: Option<Vec<FiberReport>>,
    pub twist: Option<TwistReport>,
    pub accumulation: Option<AccumulationReport>,
    pub decomposition: Option<(MongeDecomposition, PeelingTrace)>,
    pub k_bound: Option<KBoundReport>,
    pub summary: Summary,
}

impl PipelineResult {
    /// Plan the decomposition stage works on: exact if solved, else entropic.
    pub fn plan(&self) -> Option<&TransportPlan> {
        self.exact
            .as_ref()
            .map(|s| &s.plan)
            .or_else(|| self.entropic.as_ref().map(|e| &e.plan))
    }
}

pub fn instance_hash(marginals: &[DiscreteMeasure], cost: &CostOracle) -> String {
    let canonical = serde_json::to_string(&(marginals, cost)).expect("instance serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn execute(scenario: &Scenario) -> Result<PipelineResult> {
    let marginals = scenario.build_marginals()?;
    let hash = instance_hash(&marginals, &scenario.cost);
    let spaces: Spaces = Arc::from(marginals);
    let overrides = &scenario.tolerances;
    let size_cap = overrides.size_cap.unwrap_or(DEFAULT_SIZE_CAP);
    let k_cap = overrides.k_cap.unwrap_or(DEFAULT_K_CAP);
    let solver_options = SolverOptions {
        size_cap,
        degeneracy_threshold: overrides
            .degeneracy_threshold
            .unwrap_or(SolverOptions::default().degeneracy_threshold),
        ..SolverOptions::default()
    };
    let cost = scenario.cost.bind(spaces.clone(), size_cap)?;
    let eq = overrides.eqtol.unwrap_or_else(|| eqtol(cost.max_abs()));

    let mut exact = None;
    let mut entropic = None;
    let mut splitting: Option<SplittingSet> = None;
    let mut fibers = None;
    let mut twist: Option<TwistReport> = None;
    let mut accumulation = None;
    let mut decomposition: Option<(MongeDecomposition, PeelingTrace)> = None;
    let mut k_bound = None;
    for stage in &scenario.pipeline {
        match stage {
            Stage::Solve => exact = Some(solve_exact_bound(&cost, &solver_options)?),
            Stage::Entropic => {
                let options = EntropicOptions {
                    epsilon: scenario.entropic.epsilon,
                    max_iter: scenario.entropic.max_iter,
                    ..EntropicOptions::default()
                };
                entropic = Some(solve_entropic_with(&cost, &options)?);
            }
            Stage::Splitting => {
                let sol: &ExactSolution = exact.as_ref().expect("validated order");
                let set = extract_splitting_set_at(&sol.plan, &sol.potentials, &cost, scenario.splitting_mode, eq)?;
                fibers = Some(fiber_reports(&set, &cost)?);
                splitting = Some(set);
            }
            Stage::Twist => {
                let set = splitting.as_ref().expect("validated order");
                let report = twist_cardinality(set, &cost, overrides.grouping_radius)?;
                if let Some(radius) = overrides.proximity_radius {
                    accumulation = Some(accumulation_scan(set, &cost, radius, Some(report.grouping_radius))?);
                }
                twist = Some(report);
            }
            Stage::Decompose => {
                let plan = exact
                    .as_ref()
                    .map(|s| &s.plan)
                    .or(entropic.as_ref().map(|e: &EntropicResult| &e.plan))
                    .expect("validated order");
                decomposition = Some(peel_capped(plan, k_cap)?);
            }
            Stage::Verify => {
                let (dec, _) = decomposition.as_ref().expect("validated order");
                k_bound = Some(verify_k_bound(dec, twist.as_ref().expect("validated order")));
            }
        }
    }

    let summary = Summary {
        scenario: scenario.name.clone(),
        instance_hash: hash,
        sizes: cost.shape().sizes().to_vec(),
        primal: exact.as_ref().map(|s| s.certificate.primal_value),
        gap: exact.as_ref().map(|s| s.certificate.gap),
        entropic_objective: entropic.as_ref().map(|e| e.objective),
        m_observed: twist.as_ref().map(|t| t.m_observed),
        k: decomposition.as_ref().map(|(d, _)| d.k),
        verdict: k_bound.as_ref().map(|v| v.verdict),
        max_gradient_spread: fibers
            .as_ref()
            .map(|f| f.iter().map(|r| r.gradient_spread).fold(0.0, f64::max)),
        tolerances: Tolerances {
            feastol: feastol(cost.max_abs()),
            eqtol: eq,
            grouping_radius: twist.as_ref().map(|t| t.grouping_radius),
            proximity_radius: overrides.proximity_radius,
            size_cap,
            k_cap,
            degeneracy_threshold: solver_options.degeneracy_threshold,
        },
    };
    Ok(PipelineResult {
        marginals: spaces,
        cost,
        exact,
        entropic,
        splitting,
        fibers,
        twist,
        accumulation,
        decomposition,
        k_bound,
        summary,
    })
}

#[derive(Serialize)]
struct SolveReport<'a> {
    certificate: &'a crate::solver::SolveCertificate,
    potentials: &'a [Vec<f64>],
    support_size: usize,
    vertex_support_bound: usize,
    tolerances: &'a Tolerances,
}

#[derive(Serialize)]
struct EntropicReport<'a> {
    epsilon: f64,
    max_iter: usize,
    converged: bool,
    iterations: usize,
    marginal_error: f64,
    objective: f64,
    warning: &'a Option<String>,
    tolerances: &'a Tolerances,
}

#[derive(Serialize)]
struct SplittingPoint<'a> {
    point: &'a crate::measure::ProductIndex,
    slack: f64,
}

#[derive(Serialize)]
struct SplittingReport<'a> {
    mode: ExtractMode,
    points: Vec<SplittingPoint<'a>>,
    tuple: &'a [Vec<f64>],
    fibers: &'a [FiberReport],
    tolerances: &'a Tolerances,
}

#[derive(Serialize)]
struct TwistFile<'a> {
    m_observed: usize,
    classes: &'a [crate::twist::TwistClass],
    excluded_nondifferentiable: &'a [crate::measure::ProductIndex],
    grouping_radius: f64,
    x1_radius: f64,
    generalized_twist: bool,
    accumulation: &'a Option<AccumulationReport>,
    tolerances: &'a Tolerances,
}

#[derive(Serialize)]
struct DecompositionFile<'a> {
    k: usize,
    maps: &'a [Vec<crate::measure::ProductIndex>],
    alphas: &'a [Vec<f64>],
    trace: &'a PeelingTrace,
    tolerances: &'a Tolerances,
}

#[derive(Serialize)]
struct VerifyFile<'a> {
    #[serde(flatten)]
    report: &'a KBoundReport,
    tolerances: &'a Tolerances,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(name, e))?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes one report per stage plus `summary.json` into `dir`.
pub fn write_reports(result: &PipelineResult, scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tol = &result.summary.tolerances;
    let mut written = Vec::new();
    let mut emit = |name: &str| written.push(dir.join(name));
    if let Some(sol) = &result.exact {
        let vertex_support_bound =
            result.marginals.iter().map(DiscreteMeasure::len).sum::<usize>() + 1 - result.marginals.len();
        write_json(
            dir,
            "solve.json",
            &SolveReport {
                certificate: &sol.certificate,
                potentials: &sol.potentials.values,
                support_size: sol.plan.support_len(),
                vertex_support_bound,
                tolerances: tol,
            },
        )?;
        write_json(dir, "certificate.json", &sol.certificate)?;
        write_text(dir, "plan.csv", &sol.plan.to_csv())?;
        emit("solve.json");
        emit("certificate.json");
        emit("plan.csv");
    }
    if let Some(e) = &result.entropic {
        write_json(
            dir,
            "entropic.json",
            &EntropicReport {
                epsilon: scenario.entropic.epsilon,
                max_iter: scenario.entropic.max_iter,
                converged: e.converged,
                iterations: e.iterations,
                marginal_error: e.marginal_error,
                objective: e.objective,
                warning: &e.warning,
                tolerances: tol,
            },
        )?;
        write_text(dir, "entropic_plan.csv", &e.plan.to_csv())?;
        emit("entropic.json");
        emit("entropic_plan.csv");
    }
    if let (Some(set), Some(fibers)) = (&result.splitting, &result.fibers) {
        write_json(
            dir,
            "splitting.json",
            &SplittingReport {
                mode: scenario.splitting_mode,
                points: set
                    .points
                    .iter()
                    .zip(&set.slack)
                    .map(|(point, &slack)| SplittingPoint { point, slack })
                    .collect(),
                tuple: &set.tuple.values,
                fibers,
                tolerances: tol,
            },
        )?;
        emit("splitting.json");
    }
    if let Some(t) = &result.twist {
        write_json(
            dir,
            "twist.json",
            &TwistFile {
                m_observed: t.m_observed,
                classes: &t.classes,
                excluded_nondifferentiable: &t.excluded_nondifferentiable,
                grouping_radius: t.grouping_radius,
                x1_radius: t.x1_radius,
                generalized_twist: check_generalized_twist(t),
                accumulation: &result.accumulation,
                tolerances: tol,
            },
        )?;
        emit("twist.json");
    }
    if let Some((dec, trace)) = &result.decomposition {
        write_json(
            dir,
            "decomposition.json",
            &DecompositionFile {
                k: dec.k,
                maps: &dec.maps,
                alphas: &dec.alphas,
                trace,
                tolerances: tol,
            },
        )?;
        emit("decomposition.json");
    }
    if let Some(v) = &result.k_bound {
        write_json(dir, "verify.json", &VerifyFile { report: v, tolerances: tol })?;
        emit("verify.json");
    }
    write_json(dir, "summary.json", &result.summary)?;
    emit("summary.json");
    Ok(written)
}

/// Where a scenario's reports go: `out` if given, else the scenario's own
/// `output`, else `reports/<name>`.
pub fn output_dir(scenario: &Scenario, out: Option<&Path>) -> PathBuf {
    match (out, &scenario.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => scenario.base_dir.join(o),
        (None, None) => PathBuf::from("reports").join(&scenario.name),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub resolution: usize,
    pub m_observed: usize,
    pub k: usize,
    pub max_gradient_spread: f64,
    pub primal: f64,
    pub gap: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
    pub m_trend: crate::twist::RefinementTrend,
}

/// Runs solve, splitting, twist, decompose and verify at every resolution.
pub fn sweep(scenario: &Scenario, resolutions: &[usize]) -> Result<SweepReport> {
    if resolutions.is_empty() {
        return Err(Error::Config("no resolutions given".into()));
    }
    let mut rows = Vec::with_capacity(resolutions.len());
    for &r in resolutions {
        let mut s = scenario.at_resolution(r)?;
        s.pipeline = vec![Stage::Solve, Stage::Splitting, Stage::Twist, Stage::Decompose, Stage::Verify];
        let result = execute(&s)?;
        let summary = &result.summary;
        rows.push(SweepRow {
            resolution: r,
            m_observed: summary.m_observed.expect("twist ran"),
            k: summary.k.expect("decompose ran"),
            max_gradient_spread: summary.max_gradient_spread.expect("splitting ran"),
            primal: summary.primal.expect("solve ran"),
            gap: summary.gap.expect("solve ran"),
            verdict: summary.verdict.expect("verify ran"),
        });
    }
    let ms: Vec<usize> = rows.iter().map(|r| r.m_observed).collect();
    Ok(SweepReport {
        scenario: scenario.name.clone(),
        m_trend: crate::twist::refinement_trend(&ms),
        rows,
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("resolution,m_observed,k,max_gradient_spread,primal,gap,verdict\n");
        for r in &self.rows {
            let verdict = match r.verdict {
                Verdict::Consistent => "consistent",
                Verdict::Inconsistent => "inconsistent",
            };
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{}",
                r.resolution, r.m_observed, r.k, r.max_gradient_spread, r.primal, r.gap, verdict
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(dir, "sweep.csv", &self.to_csv())?;
        write_json(dir, "sweep.json", self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Result<Scenario> {
        Scenario::parse(text, "test", PathBuf::new())
    }

    const SINGLETON: &str = r#"{
        "marginals": [
            {"dim": 1, "atoms": [{"coords": [0.2], "weight": 1.0}]},
            {"dim": 1, "atoms": [{"coords": [0.7], "weight": 1.0}]}
        ],
        "cost": {"kind": "builtin", "id": "quadratic"},
        "pipeline": ["solve", "splitting", "twist", "decompose", "verify"]
    }"#;

    #[test]
    fn singleton_summary() {
        let s = scenario(SINGLETON).unwrap();
        let r = execute(&s).unwrap();
        assert_eq!(r.summary.gap, Some(0.0));
        assert_eq!(r.summary.k, Some(1));
        assert_eq!(r.summary.m_observed, Some(1));
        assert_eq!(r.summary.verdict, Some(Verdict::Consistent));
    }

    #[test]
    fn stage_order_is_checked() {
        let bad = SINGLETON.replace(r#"["solve", "splitting", "twist", "decompose", "verify"]"#, r#"["solve", "twist"]"#);
        match scenario(&bad) {
            Err(Error::Config(msg)) => assert!(msg.contains("requires splitting"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let dup = SINGLETON.replace(r#"["solve", "splitting", "twist", "decompose", "verify"]"#, r#"["solve", "solve"]"#);
        assert!(matches!(scenario(&dup), Err(Error::Config(_))));
        let entropic_only = SINGLETON.replace(
            r#"["solve", "splitting", "twist", "decompose", "verify"]"#,
            r#"["entropic", "decompose"]"#,
        );
        let r = execute(&scenario(&entropic_only).unwrap()).unwrap();
        assert_eq!(r.summary.k, Some(1));
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = SINGLETON.replace(r#""weight": 1.0}]},"#, r#""weight": 0.5}]},"#);
        match scenario(&bad) {
            Err(Error::Config(msg)) => assert!(msg.starts_with("marginals[0]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        match scenario("{\n  \"marginals\": [\n  oops") {
            Err(Error::Config(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let bad_gen = r#"{"marginals": [{"generator": "uniform_box", "size": 3}, {"generator": "grid", "size": 2}],
            "cost": {"kind": "builtin", "id": "zero"}, "pipeline": ["solve"]}"#;
        match scenario(bad_gen) {
            Err(Error::Config(msg)) => assert!(msg.contains("seed"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_needs_generators() {
        let s = scenario(SINGLETON).unwrap();
        assert!(matches!(sweep(&s, &[2, 4]), Err(Error::Config(_))));
    }

    #[test]
    fn generator_references_must_point_backwards() {
        let text = r#"{"marginals": [{"generator": "symmetric_roots", "of": 1}, {"generator": "grid", "size": 2}],
            "cost": {"kind": "builtin", "id": "two_level"}, "pipeline": ["solve"]}"#;
        let s = scenario(text).unwrap();
        assert!(matches!(execute(&s), Err(Error::Config(_))));
    }
}
