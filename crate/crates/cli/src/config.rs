//! TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ocscape_core::expr::{ExprMap, VarGroup};
use ocscape_core::landscape::LqrScenario;
use ocscape_core::model::{BasisKind, InitialCondition};
use ocscape_core::registry::{self, GroundTruth, ProblemFlavor, RegisteredProblem, StateSampleSpec};
use ocscape_core::{ControlProblem, Error, ExpectationEngine, FeasibleSet, NoiseLaw, NoiseModel, PolicyBasis, PolicyClass, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub expectation: ExpectationConfig,
    pub census: CensusConfig,
    pub dp: DpConfig,
    pub certify: CertifyConfig,
    pub grid: GridConfig,
    pub lqr: LqrConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            problem: ProblemConfig::default(),
            solver: SolverConfig::default(),
            expectation: ExpectationConfig::default(),
            census: CensusConfig::default(),
            dp: DpConfig::default(),
            certify: CertifyConfig::default(),
            grid: GridConfig::default(),
            lqr: LqrConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// Registered problem name.
    pub name: Option<String>,
    pub inline: Option<InlineProblem>,
    /// Checked against the problem when given.
    pub flavor: Option<ProblemFlavor>,
}

/// A problem written in the expression DSL; the same maps are used at every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub name: String,
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    #[serde(default)]
    pub noise_dim: usize,
    pub x0: Vec<f64>,
    pub action_lower: Vec<f64>,
    pub action_upper: Vec<f64>,
    pub eval_lower: Vec<f64>,
    pub eval_upper: Vec<f64>,
    /// One expression per state coordinate over `x`, `u` and `w`.
    pub dynamics: Vec<String>,
    /// One expression shared by all stages, or one per stage.
    pub stage_costs: Vec<String>,
    #[serde(default = "zero_text")]
    pub terminal_cost: String,
    /// Symmetric uniform noise half-widths, one per noise coordinate.
    #[serde(default)]
    pub noise_half_width: Vec<f64>,
    pub policy: Option<InlinePolicy>,
    #[serde(default = "default_sample_count")]
    pub samples_per_axis: usize,
}

fn zero_text() -> String {
    "0".into()
}

fn default_sample_count() -> usize {
    41
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InlineBasis {
    Linear,
    Affine1d,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePolicy {
    pub kind: InlineBasis,
    /// Parameter box, shared by all stages.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_stat: f64,
    pub max_iter: usize,
    /// Start of `solve-oneshot` and parameterized `solve-dp`; the projected origin when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol_stat: 1e-7, max_iter: 100_000, start: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationKind {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectationConfig {
    pub mode: ExpectationKind,
    pub quadrature_order: usize,
    pub mc_samples: usize,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        Self { mode: ExpectationKind::Quadrature, quadrature_order: 16, mc_samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CensusConfig {
    pub starts_per_axis: usize,
    pub random_starts: usize,
    pub dedup_tol: f64,
    pub saddle_pass: bool,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self { starts_per_axis: 21, random_starts: 200, dedup_tol: 1e-3, saddle_pass: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyConfig {
    Global,
    Continuation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub stage: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpConfig {
    /// Grid nodes per state axis; the grid spans the problem's evaluation box unless bounds are given.
    pub grid_counts: Option<Vec<usize>>,
    pub grid_lower: Option<Vec<f64>>,
    pub grid_upper: Option<Vec<f64>>,
    pub strategy: StrategyConfig,
    pub anchors: Vec<AnchorConfig>,
    pub starts_per_axis: usize,
    pub max_sweeps: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            grid_counts: None,
            grid_lower: None,
            grid_upper: None,
            strategy: StrategyConfig::Global,
            anchors: Vec::new(),
            starts_per_axis: 41,
            max_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    /// Parameter vectors to certify; the problem's listed points when empty.
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    /// Zero-based coordinate of the decision vector.
    pub coord: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Decision vector holding the coordinates that are not swept; zeros when absent.
    pub base: Option<Vec<f64>>,
    pub axes: Vec<AxisConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrConfig {
    /// Seeds `seed .. seed + seeds`.
    pub seeds: u64,
    pub scenarios: Vec<LqrScenario>,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self { seeds: 20, scenarios: vec![LqrScenario::Unconstrained, LqrScenario::Constrained] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "ocscape-out".into(), format: Format::Json }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.solver.tol_stat > 0.0) {
            return Err(Error::Invalid("solver.tol_stat must be positive".into()));
        }
        if self.expectation.quadrature_order == 0 || self.expectation.mc_samples == 0 {
            return Err(Error::Invalid("expectation order and sample count must be positive".into()));
        }
        if self.problem.name.is_some() && self.problem.inline.is_some() {
            return Err(Error::Invalid("give either problem.name or problem.inline, not both".into()));
        }
        Ok(())
    }

    pub fn engine(&self) -> ExpectationEngine {
        match self.expectation.mode {
            ExpectationKind::Quadrature => ExpectationEngine::quadrature(self.expectation.quadrature_order),
            ExpectationKind::MonteCarlo => ExpectationEngine::monte_carlo(self.expectation.mc_samples, self.seed),
        }
    }

    /// Resolves the problem source; `fallback` names a registered problem when the config has none.
    pub fn resolve_problem(&self, fallback: Option<&str>) -> Result<RegisteredProblem> {
        let reg = match (&self.problem.name, &self.problem.inline, fallback) {
            (Some(name), None, _) => registry::lookup(name)?,
            (None, Some(inline), _) => inline.build()?,
            (None, None, Some(name)) => registry::lookup(name)?,
            (None, None, None) => return Err(Error::Invalid("no problem given (problem.name or problem.inline)".into())),
            (Some(_), Some(_), _) => return Err(Error::Invalid("give either problem.name or problem.inline, not both".into())),
        };
        if let Some(f) = self.problem.flavor {
            if f != reg.flavor {
                return Err(Error::Invalid(format!("problem flavor is {:?}, config says {f:?}", reg.flavor)));
            }
        }
        Ok(reg)
    }
}

impl InlineProblem {
    pub fn build(&self) -> Result<RegisteredProblem> {
        let (n, nx, nu, nw) = (self.horizon, self.state_dim, self.action_dim, self.noise_dim);
        if n == 0 {
            return Err(Error::Invalid("horizon must be positive".into()));
        }
        if self.dynamics.len() != nx {
            return Err(Error::dim("dynamics expressions", nx, self.dynamics.len()));
        }
        if self.stage_costs.len() != 1 && self.stage_costs.len() != n {
            return Err(Error::dim("stage cost expressions", n, self.stage_costs.len()));
        }
        let dyn_texts: Vec<&str> = self.dynamics.iter().map(String::as_str).collect();
        let dynamics = ExprMap::parse(vec![(VarGroup::X, nx), (VarGroup::U, nu), (VarGroup::W, nw)], &dyn_texts)?.into_map();
        let stage_cost = (0..n)
            .map(|k| {
                let text = &self.stage_costs[k.min(self.stage_costs.len() - 1)];
                Ok(ExprMap::parse(vec![(VarGroup::X, nx), (VarGroup::U, nu)], &[text])?.into_map())
            })
            .collect::<Result<Vec<_>>>()?;
        let terminal_cost = ExprMap::parse(vec![(VarGroup::X, nx)], &[&self.terminal_cost])?.into_map();
        let noise = match (nw, self.noise_half_width.len()) {
            (0, 0) => None,
            (w, h) if w == h => Some(NoiseModel::iid(
                NoiseLaw::Uniform { lower: self.noise_half_width.iter().map(|h| -h).collect(), upper: self.noise_half_width.clone() },
                n,
            )),
            (w, h) => return Err(Error::dim("noise half-widths", w, h)),
        };
        let problem = ControlProblem {
            name: format!("inline:{}", self.name),
            horizon: n,
            state_dim: nx,
            action_dim: nu,
            noise_dim: nw,
            dynamics: vec![dynamics; n],
            stage_cost,
            terminal_cost,
            action_set: FeasibleSet::boxed(self.action_lower.clone(), self.action_upper.clone())?,
            initial: InitialCondition::Fixed(self.x0.clone()),
            noise,
            eval_box: FeasibleSet::boxed(self.eval_lower.clone(), self.eval_upper.clone())?,
        };
        problem.validate()?;
        let mut dsl: Vec<(String, String)> = (0..n).map(|k| (format!("c{k}"), self.stage_costs[k.min(self.stage_costs.len() - 1)].clone())).collect();
        dsl.push((format!("c{n}"), self.terminal_cost.clone()));
        dsl.extend(self.dynamics.iter().enumerate().map(|(i, t)| (format!("f[{i}]"), t.clone())));
        let class = match &self.policy {
            None => None,
            Some(pol) => {
                let kind = match pol.kind {
                    InlineBasis::Linear => BasisKind::Linear { action_dim: nu, state_dim: nx },
                    InlineBasis::Affine1d => BasisKind::Affine1d,
                    InlineBasis::Constant => BasisKind::Constant { action_dim: nu },
                };
                let basis = PolicyBasis::new(kind, FeasibleSet::boxed(pol.lower.clone(), pol.upper.clone())?)?;
                Some(PolicyClass::uniform(basis, n))
            }
        };
        let flavor = match (&class, problem.is_stochastic()) {
            (None, false) => ProblemFlavor::Det,
            (None, true) => return Err(Error::Invalid("a stochastic inline problem needs a policy class".into())),
            (Some(_), false) => ProblemFlavor::DetParam,
            (Some(_), true) => ProblemFlavor::StochasticParam,
        };
        let samples = match class {
            Some(_) => Some(StateSampleSpec::uniform(&problem, self.samples_per_axis, flavor == ProblemFlavor::StochasticParam)?),
            None => None,
        };
        Ok(RegisteredProblem { problem, class, flavor, truth: GroundTruth::default(), dsl, samples, lqr: None })
    }
}
