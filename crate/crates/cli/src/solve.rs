//! Runs one resolved scenario and collects everything the writers need.

use crate::config::{BenchmarkKind, Initial, Model, ScenarioConfig, Solver};
use crate::error::CliError;
use pyragas_core::continuum::{self, ContinuumError, CouplingProfile, ModeSpec};
use pyragas_core::hierarchy::{self, CorrelatorBlock, HierarchyOptions};
use pyragas_core::metrics::{self, stabilization_cv, Deviation};
use pyragas_core::model::TimeGrid;
use pyragas_core::{
    integrate, jcm_ground_amplitude, jcm_system, mirror_emitter_amplitude, mirror_system,
    run_factorized, AnalyticError, Complex64, DdeError, FactorizedError, HierarchyError,
};
use serde::Serialize;

/// Intervals at the end of the run over which the stabilization CV is taken.
pub const CV_INTERVALS: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub deviation: Deviation,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub times: Vec<f64>,
    pub channels: Vec<(String, Vec<Complex64>)>,
    /// Real observables sharing `times`, in column order.
    pub observables: Vec<(String, Vec<f64>)>,
    pub memory_counts: Option<Vec<usize>>,
    pub oracle: Vec<OracleCheck>,
    pub stabilization_cv: Option<f64>,
    pub blocks: Vec<CorrelatorBlock>,
    /// Extra scalar results (benchmarks).
    pub summary: Vec<(String, f64)>,
    pub passed: Option<bool>,
}

impl Outcome {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

fn dde_err(e: DdeError) -> CliError {
    match e {
        DdeError::NonFiniteState { .. } => CliError::Solver(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn hierarchy_err(e: HierarchyError) -> CliError {
    match e {
        HierarchyError::NonFiniteState { .. }
        | HierarchyError::Dde(DdeError::NonFiniteState { .. }) => CliError::Solver(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn factorized_err(e: FactorizedError) -> CliError {
    match e {
        FactorizedError::NonFiniteState { .. } => CliError::Solver(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn continuum_err(e: ContinuumError) -> CliError {
    match e {
        ContinuumError::NonFiniteState { .. } => CliError::Solver(e.to_string()),
        other => CliError::Config(format!("field `continuum`: {other}")),
    }
}

fn analytic_err(e: AnalyticError) -> CliError {
    CliError::Config(e.to_string())
}

fn require_jcm(c: &ScenarioConfig) -> Result<(), CliError> {
    if c.model != Model::Jcm {
        return Err(CliError::Config(format!(
            "field `model`: solver `{}` covers the cavity model only",
            serde_json::to_value(c.solver)
                .unwrap()
                .as_str()
                .unwrap_or("?")
        )));
    }
    Ok(())
}

fn one_excitation(c: &ScenarioConfig) -> Result<(), CliError> {
    if c.initial != Initial::EmitterExcited {
        return Err(CliError::Config(
            "field `initial`: this solver starts from the excited emitter".into(),
        ));
    }
    Ok(())
}

pub fn execute(c: &ScenarioConfig) -> Result<Outcome, CliError> {
    let grid = c.time_grid();
    let mut out = match c.solver {
        Solver::Analytic => analytic(c, &grid)?,
        Solver::Dde => dde(c, &grid)?,
        Solver::Continuum => continuum_run(c, &grid)?,
        Solver::Hierarchy => hierarchy_run(c, &grid)?,
        Solver::Factorized => factorized_run(c, &grid)?,
        Solver::Benchmark => benchmark(c, &grid)?,
    };
    if out.times.is_empty() {
        out.times = grid.times().collect();
    }
    for (name, v) in &out.observables {
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(CliError::Solver(format!(
                "{name} is non-finite at t = {}",
                out.times[k]
            )));
        }
    }
    if out.stabilization_cv.is_none()
        && c.model == Model::Jcm
        && c.grid.intervals >= 2 * CV_INTERVALS
    {
        if let Some(photons) = out.observable("photon_number") {
            let n = c.grid.steps_per_tau;
            let to = c.grid.intervals * n;
            if let Ok((cv, peaks)) = stabilization_cv(photons, to - CV_INTERVALS * n, to) {
                if peaks >= 2 {
                    out.stabilization_cv = Some(cv);
                }
            }
        }
    }
    Ok(out)
}

fn analytic(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    one_excitation(c)?;
    let mut out = Outcome::default();
    let times: Vec<f64> = grid.times().collect();
    match c.model {
        Model::Mirror => {
            let ce = times
                .iter()
                .map(|&t| mirror_emitter_amplitude(&c.params, t))
                .collect::<Result<Vec<_>, _>>()
                .map_err(analytic_err)?;
            out.observables.push((
                "emitter_population".into(),
                ce.iter().map(|z| z.norm_sqr()).collect(),
            ));
            out.channels.push(("c_e".into(), ce));
        }
        Model::Jcm => {
            let cg = times
                .iter()
                .map(|&t| jcm_ground_amplitude(&c.params, t))
                .collect::<Result<Vec<_>, _>>()
                .map_err(analytic_err)?;
            out.observables.push((
                "photon_number".into(),
                cg.iter().map(|z| z.norm_sqr()).collect(),
            ));
            out.channels.push(("c_g".into(), cg));
        }
    }
    out.times = times;
    Ok(out)
}

fn dde(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    one_excitation(c)?;
    let mut out = Outcome::default();
    match c.model {
        Model::Mirror => {
            let sol = integrate(&mirror_system(&c.params), grid).map_err(dde_err)?;
            let ce = sol.channel(0).values().to_vec();
            let pop: Vec<f64> = ce.iter().map(|z| z.norm_sqr()).collect();
            let series: Vec<f64> = grid
                .times()
                .map(|t| mirror_emitter_amplitude(&c.params, t).map(|z| z.norm_sqr()))
                .collect::<Result<_, _>>()
                .map_err(analytic_err)?;
            out.oracle.push(OracleCheck {
                name: "series |c_e|^2".into(),
                deviation: metrics::deviation(&pop, &series).expect("same grid"),
            });
            out.observables.push(("emitter_population".into(), pop));
            out.channels.push(("c_e".into(), ce));
        }
        Model::Jcm => {
            let sol = integrate(&jcm_system(&c.params), grid).map_err(dde_err)?;
            let ce = sol.channel(0).values().to_vec();
            let cg = sol.channel(1).values().to_vec();
            out.observables.push((
                "photon_number".into(),
                cg.iter().map(|z| z.norm_sqr()).collect(),
            ));
            out.observables.push((
                "emitter_population".into(),
                ce.iter().map(|z| z.norm_sqr()).collect(),
            ));
            out.channels.push(("c_e".into(), ce));
            out.channels.push(("c_g".into(), cg));
        }
    }
    Ok(out)
}

pub fn mode_spec(c: &ScenarioConfig, n_modes: usize, window: f64) -> ModeSpec {
    ModeSpec {
        gamma: c.params.gamma,
        tau: c.params.tau,
        n_modes,
        window,
        phase: c.params.phase,
        // Without the mirror the reservoir is flat.
        profile: if c.params.feedback {
            c.continuum.profile
        } else {
            CouplingProfile::Flat
        },
    }
}

fn continuum_run(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    one_excitation(c)?;
    let modes = continuum::build_modes_with(mode_spec(c, c.continuum.n_modes, c.window()))
        .map_err(continuum_err)?;
    let mut out = Outcome::default();
    let run = match c.model {
        Model::Mirror => continuum::evolve_emitter_only(&modes, grid),
        Model::Jcm => continuum::evolve_jcm(&modes, &c.params, grid),
    }
    .map_err(continuum_err)?;
    let ce = run.emitter.values().to_vec();
    if let Some(cav) = &run.cavity {
        let cg = cav.values().to_vec();
        out.observables.push((
            "photon_number".into(),
            cg.iter().map(|z| z.norm_sqr()).collect(),
        ));
        out.channels.push(("c_e".into(), ce.clone()));
        out.channels.push(("c_g".into(), cg));
    } else {
        out.channels.push(("c_e".into(), ce.clone()));
    }
    out.observables.push((
        "emitter_population".into(),
        ce.iter().map(|z| z.norm_sqr()).collect(),
    ));
    out.observables.push(("norm".into(), run.norm.clone()));
    out.summary.push(("substeps".into(), run.substeps as f64));
    out.summary
        .push(("mode_spacing".into(), modes.mode_spacing()));
    Ok(out)
}

fn hierarchy_run(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    require_jcm(c)?;
    let h = hierarchy::run_with(
        &c.params,
        &c.initial.state(),
        grid,
        HierarchyOptions {
            variant: c.variant,
            keep_blocks: c.outputs.dump,
        },
    )
    .map_err(hierarchy_err)?;
    let mut out = Outcome::default();
    if c.initial == Initial::EmitterExcited {
        let cg = integrate(&jcm_system(&c.params), grid)
            .map_err(dde_err)?
            .channel(1)
            .norm_sqr();
        out.oracle.push(OracleCheck {
            name: "delay-equation |c_g|^2".into(),
            deviation: metrics::deviation(&h.photon_number, &cg).expect("same grid"),
        });
    }
    out.summary.push(("corner_jump".into(), h.corner_jump));
    out.memory_counts = Some(h.memory_counts);
    out.blocks = h.blocks;
    out.observables
        .push(("photon_number".into(), h.photon_number));
    out.observables
        .push(("emitter_population".into(), h.emitter_population));
    Ok(out)
}

fn factorized_run(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    require_jcm(c)?;
    let f = run_factorized(&c.params, &c.initial.state(), grid).map_err(factorized_err)?;
    let mut out = Outcome::default();
    if c.initial == Initial::EmitterExcited {
        // Closure error at one excitation; informational.
        let cg = integrate(&jcm_system(&c.params), grid)
            .map_err(dde_err)?
            .channel(1)
            .norm_sqr();
        out.oracle.push(OracleCheck {
            name: "delay-equation |c_g|^2".into(),
            deviation: metrics::deviation(&f.photon_number, &cg).expect("same grid"),
        });
    }
    out.memory_counts = Some(f.memory_counts);
    out.observables
        .push(("photon_number".into(), f.photon_number));
    out.observables
        .push(("emitter_population".into(), f.emitter_population));
    Ok(out)
}

/// Tolerance for the hierarchy benchmark.
pub const HIERARCHY_TOL: f64 = 1e-6;

fn benchmark(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    match c.benchmark {
        BenchmarkKind::HierarchyDde => {
            let mut hc = c.clone();
            hc.initial = Initial::EmitterExcited;
            hc.model = Model::Jcm;
            let mut out = hierarchy_run(&hc, grid)?;
            let dev = out.oracle[0].deviation;
            out.passed = Some(dev.max < HIERARCHY_TOL);
            out.summary.push(("max_deviation".into(), dev.max));
            out.summary.push(("tolerance".into(), HIERARCHY_TOL));
            Ok(out)
        }
        BenchmarkKind::ContinuumSeries => continuum_series(c, grid),
        BenchmarkKind::SelfCheck => {
            let mut hc = c.clone();
            hc.model = Model::Jcm;
            let a = hierarchy_run(&hc, grid)?;
            let b = hierarchy_run(&hc, grid)?;
            let n = c.grid.steps_per_tau;
            let budget_ok = a
                .memory_counts
                .as_ref()
                .is_some_and(|m| m.iter().enumerate().all(|(i, &k)| k == 3 * i * n));
            let identical = a.observables == b.observables;
            let mut out = a;
            out.summary
                .push(("repeat_identical".into(), f64::from(u8::from(identical))));
            out.summary
                .push(("memory_budget_exact".into(), f64::from(u8::from(budget_ok))));
            out.passed = Some(identical && budget_ok);
            Ok(out)
        }
    }
}

/// Runs the reservoir reference at each mode count in the sweep with the
/// spacing fixed, so the window widens with the count, and compares the
/// emitter population to the mirror series.
fn continuum_series(c: &ScenarioConfig, grid: &TimeGrid) -> Result<Outcome, CliError> {
    let mut mc = c.clone();
    mc.model = Model::Mirror;
    one_excitation(&mc)?;
    if mc.continuum.sweep.is_empty() {
        return Err(CliError::Config("field `continuum.sweep`: empty".into()));
    }
    let series: Vec<f64> = grid
        .times()
        .map(|t| mirror_emitter_amplitude(&mc.params, t).map(|z| z.norm_sqr()))
        .collect::<Result<_, _>>()
        .map_err(analytic_err)?;
    let spacing = 2.0 * mc.window() / (mc.continuum.n_modes - 1) as f64;
    let mut out = Outcome::default();
    let mut devs = Vec::new();
    for &n in &mc.continuum.sweep {
        let window = spacing * (n - 1) as f64 / 2.0;
        let modes =
            continuum::build_modes_with(mode_spec(&mc, n, window)).map_err(continuum_err)?;
        let run = continuum::evolve_emitter_only(&modes, grid).map_err(continuum_err)?;
        let pop = run.emitter.norm_sqr();
        let d = metrics::deviation(&pop, &series).expect("same grid");
        out.oracle.push(OracleCheck {
            name: format!("series |c_e|^2, {n} modes"),
            deviation: d,
        });
        out.summary.push((format!("deviation_{n}"), d.max));
        devs.push(d.max);
        out.observables
            .push((format!("emitter_population_{n}"), pop));
    }
    out.observables.push(("series".into(), series));
    out.passed = Some(devs.windows(2).all(|w| w[1] < w[0]));
    Ok(out)
}

/// Excitation left at the end of the run.
pub fn retained_excitation(c: &ScenarioConfig, out: &Outcome) -> Option<f64> {
    let last = |name| out.observable(name).and_then(|v| v.last().copied());
    match c.model {
        Model::Jcm => Some(last("photon_number")? + last("emitter_population").unwrap_or(0.0)),
        Model::Mirror => last("emitter_population"),
    }
}
