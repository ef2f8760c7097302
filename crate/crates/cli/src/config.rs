//! Scenario configuration: a JSON document, optionally expanded from a
//! preset, with command-line overrides applied last.

use crate::error::CliError;
use pyragas_core::continuum::CouplingProfile;
use pyragas_core::hierarchy::{InitialState, RhsVariant};
use pyragas_core::model::{validate, ModelParams, TimeGrid};
use pyragas_core::Regime;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Time step used when `steps_per_tau` is not given.
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_INTERVALS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Analytic,
    Dde,
    Continuum,
    Hierarchy,
    Factorized,
    Benchmark,
}

/// `mirror`: an emitter directly in front of the mirror. `jcm`: an emitter
/// inside a cavity whose output is fed back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Mirror,
    #[default]
    Jcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    /// Hierarchy photon number against `|c_g|²` from the delay equations.
    #[default]
    HierarchyDde,
    /// Reservoir reference against the analytic mirror series, one run per
    /// mode count.
    ContinuumSeries,
    /// Hierarchy against itself.
    SelfCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    #[default]
    EmitterExcited,
    CavityPhotons(f64),
}

impl Initial {
    pub fn state(self) -> InitialState {
        match self {
            Initial::EmitterExcited => InitialState::emitter_excited(),
            Initial::CavityPhotons(n) => InitialState::cavity_photons(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub steps_per_tau: Option<usize>,
    pub intervals: Option<usize>,
    /// Run length; overrides `intervals` with `ceil(t_end / τ)`.
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumSpec {
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    /// Half-width of the mode window in units of `2π/τ`.
    #[serde(default = "default_window_cycles")]
    pub window_cycles: f64,
    #[serde(default = "default_profile")]
    pub profile: CouplingProfile,
    /// Mode counts for the convergence benchmark; the spacing is held at
    /// that of `n_modes`/`window_cycles`.
    #[serde(default = "default_mode_sweep")]
    pub sweep: Vec<usize>,
}

fn default_modes() -> usize {
    4001
}

fn default_window_cycles() -> f64 {
    40.0
}

fn default_profile() -> CouplingProfile {
    CouplingProfile::Structured
}

fn default_mode_sweep() -> Vec<usize> {
    vec![2001, 4001, 8001]
}

impl Default for ContinuumSpec {
    fn default() -> Self {
        Self {
            n_modes: default_modes(),
            window_cycles: default_window_cycles(),
            profile: default_profile(),
            sweep: default_mode_sweep(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// One `t,re,im` file per complex channel where the solver has them.
    #[serde(default = "yes")]
    pub channels: bool,
    /// `t,photon_number,emitter_population`.
    #[serde(default = "yes")]
    pub wide: bool,
    /// Binary dump of every correlator block (hierarchy only).
    #[serde(default)]
    pub dump: bool,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            channels: true,
            wide: true,
            dump: false,
        }
    }
}

/// The file format. Every field except `solver` is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub solver: Option<Solver>,
    pub model: Option<Model>,
    pub preset: Option<Regime>,
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub grid: GridSpec,
    pub initial: Option<Initial>,
    pub continuum: Option<ContinuumSpec>,
    pub variant: Option<RhsVariant>,
    pub benchmark: Option<BenchmarkKind>,
    pub outputs: Option<Outputs>,
}

/// Command-line overrides, applied after preset expansion.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Scenario file (JSON).
    #[arg(long, short)]
    pub config: Option<std::path::PathBuf>,
    /// Regime preset: long_tau, rabi_tau, short_tau.
    #[arg(long)]
    pub preset: Option<Regime>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Emitter–cavity coupling M.
    #[arg(long = "m", allow_negative_numbers = true)]
    pub coupling_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub phase: Option<f64>,
    /// Disable the delayed channel (decay stays).
    #[arg(long)]
    pub no_feedback: bool,
    #[arg(long)]
    pub steps_per_tau: Option<usize>,
    #[arg(long)]
    pub intervals: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Start with this many cavity photons and a ground-state emitter.
    #[arg(long, allow_negative_numbers = true)]
    pub n0: Option<f64>,
    #[arg(long)]
    pub n_modes: Option<usize>,
    #[arg(long, value_enum)]
    pub benchmark: Option<BenchmarkKind>,
    /// Write the binary correlator dump.
    #[arg(long)]
    pub dump: bool,
}

/// A fully explicit scenario. Serialized into every report; feeding that
/// echo back as a config reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub solver: Solver,
    pub model: Model,
    pub params: ModelParams,
    pub grid: ResolvedGrid,
    pub initial: Initial,
    pub continuum: ContinuumSpec,
    pub variant: RhsVariant,
    pub benchmark: BenchmarkKind,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedGrid {
    pub steps_per_tau: usize,
    pub intervals: usize,
}

impl ScenarioConfig {
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(
            self.params.tau,
            self.grid.steps_per_tau,
            self.grid.intervals,
        )
        .expect("validated at resolution")
    }

    /// Mode-window half-width in rad per unit time.
    pub fn window(&self) -> f64 {
        self.continuum.window_cycles * 2.0 * PI / self.params.tau
    }
}

/// Parses a scenario file, reporting the field path and line on failure.
pub fn parse_file(text: &str) -> Result<ScenarioFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "line {}, column {}, field `{}`: {}",
            inner.line(),
            inner.column(),
            path,
            inner
        ))
    })
}

pub fn load_file(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_file(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// File, then preset, then flags.
pub fn resolve(overrides: &Overrides) -> Result<ScenarioConfig, CliError> {
    let file = match &overrides.config {
        Some(p) => load_file(p)?,
        None => ScenarioFile::default(),
    };
    resolve_with(file, overrides)
}

pub fn resolve_with(file: ScenarioFile, o: &Overrides) -> Result<ScenarioConfig, CliError> {
    let preset = o.preset.or(file.preset);
    let mut params = match preset {
        Some(r) => Some(r.params()),
        None => file.params,
    };
    if o.gamma.is_some()
        || o.tau.is_some()
        || o.coupling_m.is_some()
        || o.phase.is_some()
        || o.no_feedback
    {
        let p = params.get_or_insert(ModelParams::new(f64::NAN, f64::NAN, f64::NAN, 0.0));
        if let Some(v) = o.gamma {
            p.gamma = v;
        }
        if let Some(v) = o.tau {
            p.tau = v;
        }
        if let Some(v) = o.coupling_m {
            p.coupling_m = v;
        }
        if let Some(v) = o.phase {
            p.phase = v;
        }
        if o.no_feedback {
            p.feedback = false;
        }
    }
    let params = params.ok_or_else(|| {
        CliError::Config(
            "field `params`: missing (give params, a preset, or --gamma/--tau/--m)".into(),
        )
    })?;
    let missing: Vec<&str> = [
        ("params.gamma", params.gamma),
        ("params.tau", params.tau),
        ("params.coupling_m", params.coupling_m),
    ]
    .iter()
    .filter(|(_, v)| v.is_nan())
    .map(|(n, _)| *n)
    .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("missing {}", missing.join(", "))));
    }
    let solver = o
        .solver
        .or(file.solver)
        .ok_or_else(|| CliError::Config("field `solver`: missing".into()))?;

    let steps_per_tau = o
        .steps_per_tau
        .or(file.grid.steps_per_tau)
        .unwrap_or_else(|| {
            ((params.tau / DEFAULT_DT).ceil() as usize).max(pyragas_core::model::MIN_STEPS_PER_TAU)
        });
    let t_end = o.t_end.or(file.grid.t_end);
    let intervals = match t_end {
        Some(t) if !t.is_finite() || t <= 0.0 => {
            return Err(CliError::Config(format!(
                "field `grid.t_end`: must be positive, got {t}"
            )));
        }
        Some(t) => (t / params.tau - 1e-9).ceil().max(1.0) as usize,
        None => o
            .intervals
            .or(file.grid.intervals)
            .unwrap_or(DEFAULT_INTERVALS),
    };
    if intervals == 0 {
        return Err(CliError::Config(
            "field `grid.intervals`: must be at least 1".into(),
        ));
    }
    let initial = match o.n0 {
        Some(n) => Initial::CavityPhotons(n),
        None => file.initial.unwrap_or_default(),
    };
    let mut continuum = file.continuum.unwrap_or_default();
    if let Some(n) = o.n_modes {
        continuum.n_modes = n;
    }
    let mut outputs = file.outputs.unwrap_or_default();
    if o.dump {
        outputs.dump = true;
    }
    let config = ScenarioConfig {
        solver,
        model: o.model.or(file.model).unwrap_or_default(),
        params,
        grid: ResolvedGrid {
            steps_per_tau,
            intervals,
        },
        initial,
        continuum,
        variant: file.variant.unwrap_or_default(),
        benchmark: o.benchmark.or(file.benchmark).unwrap_or_default(),
        outputs,
    };
    recheck(&config)?;
    Ok(config)
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "M", alias = "m")]
    #[serde(rename = "M")]
    M,
    #[value(name = "gamma")]
    #[serde(rename = "gamma")]
    Gamma,
    #[value(name = "tau")]
    #[serde(rename = "tau")]
    Tau,
    #[value(name = "phase")]
    #[serde(rename = "phase")]
    Phase,
    #[value(name = "N0", alias = "n0")]
    #[serde(rename = "N0")]
    N0,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::M => "M",
            Axis::Gamma => "gamma",
            Axis::Tau => "tau",
            Axis::Phase => "phase",
            Axis::N0 => "N0",
        }
    }

    /// Applies one sweep value. Changing τ keeps the step size, so the
    /// step count per interval is recomputed.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, CliError> {
        let mut c = base.clone();
        match self {
            Axis::M => c.params.coupling_m = value,
            Axis::Gamma => c.params.gamma = value,
            Axis::Phase => c.params.phase = value,
            Axis::N0 => c.initial = Initial::CavityPhotons(value),
            Axis::Tau => {
                let dt = base.params.tau / base.grid.steps_per_tau as f64;
                c.params.tau = value;
                c.grid.steps_per_tau =
                    ((value / dt).round() as usize).max(pyragas_core::model::MIN_STEPS_PER_TAU);
            }
        }
        recheck(&c)?;
        Ok(c)
    }
}

/// Validates an already explicit config (from an echo or a sweep).
pub fn recheck(c: &ScenarioConfig) -> Result<(), CliError> {
    if !c.params.tau.is_finite() || c.params.tau <= 0.0 {
        return Err(CliError::Config(format!(
            "field `params.tau`: must be positive, got {}",
            c.params.tau
        )));
    }
    validate(
        c.params,
        c.params.tau / c.grid.steps_per_tau as f64,
        c.grid.intervals,
    )
    .map_err(|v| CliError::Config(format!("field `params`/`grid`: {v}")))?;
    TimeGrid::new(c.params.tau, c.grid.steps_per_tau, c.grid.intervals)
        .map_err(|e| CliError::Config(format!("field `grid`: {e}")))?;
    if let Initial::CavityPhotons(n) = c.initial {
        if !n.is_finite() || n < 0.0 {
            return Err(CliError::Config(format!(
                "field `initial.cavity_photons`: must be ≥ 0, got {n}"
            )));
        }
    }
    Ok(())
}
