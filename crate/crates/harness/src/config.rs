//! Experiment configuration: a TOML document with the blocks `model`, `grid`,
//! `true_theta`, `quadrature`, `estimator`, `run`, `output` and `assertions`.
//! Unknown keys are rejected everywhere.

use std::fmt;
use std::path::Path;

use gridhit::estimator::{GainSpec, StepSchedule};
use gridhit::moments::{Observable, Response, TimeObservable};
use gridhit::simulator::CrossingRefinement;
use gridhit::{Diffusion, Grid, Link, Neighborhood, Paths, QuadConfig, Space};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub true_theta: Vec<f64>,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub assertions: AssertionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Brownian,
    Cev,
    Cir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpaceName {
    RealLine,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub link_lambda: Link,
    #[serde(default)]
    pub link_sigma: Link,
    /// Optional; must agree with the family when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_space: Option<StateSpaceName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Vec<f64>,
    /// Symmetric neighborhoods `(d - h, d + h)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Explicit `[left, right]` per point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhoods: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Value,
    Time,
    ProjectedVector,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainConfig {
    ConstantSign {
        sign: f64,
    },
    RatioSign,
    TableAlpha,
    #[serde(rename = "matrix_K", alias = "matrix_k")]
    MatrixK {
        k: Vec<Vec<f64>>,
    },
    /// `scale · A⁻¹` with `A` the Hessian at the true parameter under the model stationary law.
    InverseHessian {
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseName {
    Value,
    Time,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub variant: Variant,
    /// Indices into `true_theta` of the estimated coordinates; the rest stay at the truth.
    #[serde(default = "first_coordinate")]
    pub coordinates: Vec<usize>,
    #[serde(default)]
    pub observable: Observable,
    #[serde(default)]
    pub time_observable: TimeObservable,
    /// Uses the response `f(X_ν) + weight (ν - τ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined_weight: Option<f64>,
    /// Response of the normalized recursion; the other variants fix it themselves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ResponseName>,
    #[serde(default)]
    pub schedule: StepSchedule<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<GainConfig>,
    /// Initial iterate; defaults to the box midpoint, or the truth for the normalized recursion, or 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxConfig>,
    #[serde(default = "default_trust_radius")]
    pub trust_radius: f64,
    /// Largest tolerated fraction of skipped updates per replication.
    #[serde(default = "default_skip_budget")]
    pub skip_budget: f64,
}

fn first_coordinate() -> Vec<usize> {
    vec![0]
}

fn default_trust_radius() -> f64 {
    0.05
}

fn default_skip_budget() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cycles: usize,
    pub replications: usize,
    pub seed: u64,
    pub dt: f64,
    pub burn_in: usize,
    /// Starting state; defaults to the first grid point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub crossing_refinement: CrossingRefinement,
    pub bridge_correction: bool,
    pub far_field_steps: bool,
    /// Defaults to `1e6 · dt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_path_time: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cycles: 10_000,
            replications: 1,
            seed: 1,
            dt: 1e-4,
            burn_in: 0,
            x0: None,
            crossing_refinement: CrossingRefinement::LinearInterpolation,
            bridge_correction: true,
            far_field_steps: true,
            max_path_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// Every this many iterates are written to the trajectory files; 0 disables them.
    pub trajectory_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into(), trajectory_stride: 100 }
    }
}

/// Checks evaluated at the end of a command; any failure gives a nonzero exit status.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssertionConfig {
    /// `simulate`: every per-point z-score within this many standard errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_sigma: Option<f64>,
    /// `estimate`: median final error norm below this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_median_error: Option<f64>,
    /// `estimate`: median `|ḡ(Θ_final)|` below this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_median_residual: Option<f64>,
    /// `clt`: empirical over predicted variance inside `[lo, hi]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<[f64; 2]>,
    /// `clt`: standardized 5% and 95% quantiles within this of the normal ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantile_tolerance: Option<f64>,
    /// `diagnose`: `max_d |occupancy_d - p_d|` below this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupancy_tolerance: Option<f64>,
}

/// Every problem found while turning a configuration into an [`Experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A validated, runnable configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Diffusion,
    pub grid: Grid,
    pub theta_star: Vec<f64>,
    pub paths: Paths,
    pub quad: QuadConfig,
    pub estimator: Option<EstimatorSetup>,
}

#[derive(Debug, Clone)]
pub struct EstimatorSetup {
    pub variant: Variant,
    pub coordinates: Vec<usize>,
    pub response: Response<f64>,
    pub schedule: StepSchedule<f64>,
    pub gain: GainConfig,
    pub init: Vec<f64>,
    pub space: Space,
    pub trust_radius: f64,
    pub skip_budget: f64,
    /// Box constraints absent or the parameter multidimensional and unconstrained.
    pub outside_proven_hypotheses: bool,
}

impl EstimatorSetup {
    pub fn truth(&self, theta_star: &[f64]) -> Vec<f64> {
        self.coordinates.iter().map(|&c| theta_star[c]).collect()
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, toml::de::Error> {
    toml::from_str(text)
}

pub fn to_toml(cfg: &ExperimentConfig) -> Result<String, toml::ser::Error> {
    toml::to_string(cfg)
}

impl Experiment {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        let cfg = parse(&text).map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))?;
        Ok(Self::from_config(cfg)?)
    }

    pub fn from_config(config: ExperimentConfig) -> Result<Self, ConfigErrors> {
        let mut errors = Vec::new();
        let model = build_model(&config.model, &mut errors);
        let grid = build_grid(&config.grid, &mut errors);
        if let (Some(m), Some(g)) = (&model, &grid) {
            for v in g.validate(m) {
                errors.push(format!("grid: {}", serde_json::to_string(&v).unwrap_or_default()));
            }
            if g.len() < 2 {
                errors.push("grid: at least two points are needed".into());
            }
            if config.true_theta.len() != m.dimension() {
                errors.push(format!(
                    "true_theta: expected {} values ({}), got {}",
                    m.dimension(),
                    m.parameter_names().join(", "),
                    config.true_theta.len()
                ));
            } else if let Err(e) = m.check_parameters(&config.true_theta) {
                errors.push(format!("true_theta: {e}"));
            }
        }
        if let Err(e) = config.quadrature.validate() {
            errors.push(format!("quadrature: {e}"));
        }
        let paths = build_paths(&config.run);
        if let Err(e) = paths.validate() {
            errors.push(format!("run: {e}"));
        }
        if config.run.cycles == 0 {
            errors.push("run.cycles must be positive".into());
        }
        if config.run.replications == 0 {
            errors.push("run.replications must be positive".into());
        }
        if let (Some(x0), Some(m)) = (config.run.x0, &model) {
            if !m.state_space().in_interior(x0) {
                errors.push(format!("run.x0 = {x0} is outside the state space"));
            }
        }
        let estimator = match (&config.estimator, &model) {
            (Some(e), Some(m)) => build_estimator(e, m, &config.true_theta, &mut errors),
            _ => None,
        };
        if config.output.directory.is_empty() {
            errors.push("output.directory must not be empty".into());
        }
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        Ok(Self {
            theta_star: config.true_theta.clone(),
            model: model.expect("checked"),
            grid: grid.expect("checked"),
            paths,
            quad: config.quadrature,
            estimator,
            config,
        })
    }

    pub fn x0(&self) -> f64 {
        self.config.run.x0.unwrap_or(self.grid.point(0))
    }

    pub fn estimator(&self) -> anyhow::Result<&EstimatorSetup> {
        self.estimator.as_ref().ok_or_else(|| anyhow::anyhow!("the configuration has no [estimator] block"))
    }

    /// Same experiment with a different base step.
    pub fn with_dt(&self, dt: f64) -> Self {
        let mut e = self.clone();
        e.config.run.dt = dt;
        e.config.run.max_path_time = self.config.run.max_path_time;
        e.paths = build_paths(&e.config.run);
        e
    }
}

fn build_model(cfg: &ModelConfig, errors: &mut Vec<String>) -> Option<Diffusion> {
    let expected_space = match cfg.family {
        FamilyName::Brownian => StateSpaceName::RealLine,
        FamilyName::Cev | FamilyName::Cir => StateSpaceName::Positive,
    };
    if let Some(s) = cfg.state_space {
        if s != expected_space {
            errors.push(format!("model.state_space {s:?} does not match family {:?} ({expected_space:?})", cfg.family));
        }
    }
    let unused = |name: &str, v: Option<f64>, errors: &mut Vec<String>| {
        if v.is_some() {
            errors.push(format!("model.{name} does not apply to family {:?}", cfg.family));
        }
    };
    let built = match cfg.family {
        FamilyName::Brownian => {
            unused("gamma", cfg.gamma, errors);
            unused("alpha", cfg.alpha, errors);
            Ok(Diffusion::brownian())
        }
        FamilyName::Cev => {
            unused("alpha", cfg.alpha, errors);
            match cfg.gamma {
                Some(g) => Diffusion::cev(g, cfg.link_lambda, cfg.link_sigma),
                None => {
                    errors.push("model.gamma is required for the CEV family".into());
                    return None;
                }
            }
        }
        FamilyName::Cir => {
            unused("gamma", cfg.gamma, errors);
            match cfg.alpha {
                Some(a) => Diffusion::cir(a, cfg.link_lambda, cfg.link_sigma),
                None => {
                    errors.push("model.alpha is required for the CIR family".into());
                    return None;
                }
            }
        }
    };
    built.map_err(|e| errors.push(format!("model: {e}"))).ok()
}

fn build_grid(cfg: &GridConfig, errors: &mut Vec<String>) -> Option<Grid> {
    let hoods = match (&cfg.half_width, &cfg.neighborhoods) {
        (Some(h), None) => cfg.points.iter().map(|&d| Neighborhood::new(d - h, d + h)).collect(),
        (None, Some(n)) => n.iter().map(|&[l, r]| Neighborhood::new(l, r)).collect(),
        _ => {
            errors.push("grid: give exactly one of half_width and neighborhoods".into());
            return None;
        }
    };
    Grid::new(cfg.points.clone(), hoods).map_err(|e| errors.push(format!("grid: {e}"))).ok()
}

fn build_paths(run: &RunConfig) -> Paths {
    let mut p = Paths::with_dt(run.dt);
    p.crossing_refinement = run.crossing_refinement;
    p.bridge_correction = run.bridge_correction;
    p.far_field_steps = run.far_field_steps;
    if let Some(t) = run.max_path_time {
        p.max_path_time = t;
    }
    p
}

fn build_estimator(cfg: &EstimatorConfig, model: &Diffusion, theta_star: &[f64], errors: &mut Vec<String>) -> Option<EstimatorSetup> {
    let before = errors.len();
    let s = cfg.coordinates.len();
    let dim = model.dimension();
    if s == 0 || cfg.coordinates.iter().any(|&c| c >= dim) {
        errors.push(format!("estimator.coordinates {:?} must be nonempty indices below {dim}", cfg.coordinates));
    }
    let mut sorted = cfg.coordinates.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != s {
        errors.push("estimator.coordinates repeat".into());
    }
    if let Err(e) = cfg.schedule.validate() {
        errors.push(format!("estimator.schedule: {e}"));
    }
    if cfg.response.is_some() && cfg.variant != Variant::Normalized {
        errors.push("estimator.response only applies to the normalized variant".into());
    }
    if cfg.response.is_some() && cfg.combined_weight.is_some() {
        errors.push("estimator.response and estimator.combined_weight are exclusive".into());
    }
    let response = match (cfg.variant, cfg.combined_weight) {
        (Variant::Normalized, None) if cfg.response == Some(ResponseName::Time) => Response::Time { g: cfg.time_observable },
        (_, Some(w)) => {
            if cfg.variant == Variant::Time {
                errors.push("estimator.combined_weight does not apply to the time variant".into());
            }
            Response::Combined { f: cfg.observable, weight: w }
        }
        (Variant::Time, None) => Response::Time { g: cfg.time_observable },
        (_, None) => Response::Value { f: cfg.observable },
    };
    if matches!(response, Response::Combined { .. }) && cfg.time_observable != TimeObservable::Identity {
        errors.push("estimator.combined_weight needs time_observable = \"identity\"".into());
    }
    let gain = match (cfg.variant, cfg.gain.clone()) {
        (Variant::Normalized, None | Some(GainConfig::TableAlpha)) => GainConfig::TableAlpha,
        (Variant::Normalized, Some(g)) => {
            errors.push(format!("estimator.gain {g:?} does not apply to the normalized variant (it uses table_alpha)"));
            GainConfig::TableAlpha
        }
        (Variant::Time, None) => GainConfig::ConstantSign { sign: 1.0 },
        (Variant::Value, None) => GainConfig::RatioSign,
        (Variant::ProjectedVector, None) => GainConfig::InverseHessian { scale: 1.0 },
        (Variant::Value | Variant::Time, Some(g @ (GainConfig::ConstantSign { .. } | GainConfig::RatioSign))) => g,
        (Variant::ProjectedVector, Some(g @ (GainConfig::MatrixK { .. } | GainConfig::InverseHessian { .. }))) => g,
        (v, Some(g)) => {
            errors.push(format!("estimator.gain {g:?} does not apply to the {v:?} variant"));
            g
        }
    };
    let spec = match &gain {
        GainConfig::ConstantSign { sign } => Some((GainSpec::ConstantSign { sign: *sign }, 1)),
        GainConfig::MatrixK { k } => Some((GainSpec::MatrixK { k: k.clone() }, s)),
        _ => None,
    };
    if let Some((spec, dim)) = spec {
        if let Err(e) = spec.validate(dim) {
            errors.push(format!("estimator.gain: {e}"));
        }
    }
    if let GainConfig::InverseHessian { scale } = gain {
        if !(scale > 0.0) {
            errors.push("estimator.gain.scale must be positive".into());
        }
    }
    if cfg.variant != Variant::ProjectedVector && s != 1 {
        errors.push(format!("the {:?} variant estimates one coordinate, got {s}", cfg.variant));
    }
    if cfg.variant == Variant::Normalized && cfg.bounds.is_some() {
        errors.push("the normalized recursion is unconstrained; remove estimator.box".into());
    }
    let space = match &cfg.bounds {
        Some(b) => Space::boxed(b.lower.clone(), b.upper.clone()).map_err(|e| errors.push(format!("estimator.box: {e}"))).ok(),
        None => Space::unconstrained(s.max(1)).ok(),
    };
    if let Some(sp) = &space {
        if sp.dimension() != s {
            errors.push(format!("estimator.box has dimension {}, expected {s}", sp.dimension()));
        }
    }
    let truth: Vec<f64> = cfg.coordinates.iter().filter(|&&c| c < theta_star.len()).map(|&c| theta_star[c]).collect();
    let init = match (&cfg.init, &space) {
        (Some(i), _) => i.clone(),
        (None, _) if cfg.variant == Variant::Normalized => truth,
        (None, Some(sp)) => sp.default_start(),
        (None, None) => vec![0.0; s],
    };
    if init.len() != s {
        errors.push(format!("estimator.init has {} values, expected {s}", init.len()));
    }
    if !(cfg.trust_radius > 0.0) {
        errors.push("estimator.trust_radius must be positive".into());
    }
    if !(0.0..1.0).contains(&cfg.skip_budget) {
        errors.push("estimator.skip_budget must lie in [0, 1)".into());
    }
    if errors.len() > before {
        return None;
    }
    let space = space.expect("checked");
    let outside_proven_hypotheses = s > 1 && !space.is_box();
    Some(EstimatorSetup {
        variant: cfg.variant,
        coordinates: cfg.coordinates.clone(),
        response,
        schedule: cfg.schedule,
        gain,
        init,
        space,
        trust_radius: cfg.trust_radius,
        skip_budget: cfg.skip_budget,
        outside_proven_hypotheses,
    })
}
