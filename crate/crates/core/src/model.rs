//! Shared domain types: physical parameters, the delay-aligned time grid and
//! sampled complex trajectories.
//!
//! All equations of motion in this crate are written in the frame rotating at
//! the system frequency. The bare optical frequency survives only through the
//! feedback phase `phase = ω·τ mod 2π`, which enters the complex feedback rate
//! `Γ_τ = Γ·e^{iφ}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Relative tolerance used when checking that `τ / dt` is an integer.
const ALIGNMENT_RTOL: f64 = 1e-9;

/// Physical rates and delay of the feedback model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Cavity (or emitter, for the mirror model) decay rate Γ.
    pub gamma: f64,
    /// Feedback roundtrip delay τ.
    pub tau: f64,
    /// Emitter–cavity coupling strength M.
    #[serde(rename = "coupling_m", alias = "m")]
    pub coupling_m: f64,
    /// Feedback phase φ in radians.
    #[serde(default)]
    pub phase: f64,
    /// When false the mirror is removed: decay stays, `Γ_τ` becomes zero.
    #[serde(default = "default_feedback")]
    pub feedback: bool,
}

fn default_feedback() -> bool {
    true
}

impl ModelParams {
    pub fn new(gamma: f64, tau: f64, coupling_m: f64, phase: f64) -> Self {
        Self {
            gamma,
            tau,
            coupling_m,
            phase,
            feedback: true,
        }
    }

    /// Complex feedback rate `Γ_τ = Γ·(cos φ + i sin φ)`.
    pub fn gamma_tau(&self) -> Complex64 {
        gamma_tau(self)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    /// Same decay rate with the delayed channel removed, for feedback-free
    /// reference runs.
    pub fn without_feedback(mut self) -> Self {
        self.feedback = false;
        self
    }
}

/// Complex feedback rate `Γ·e^{iφ}` (zero for feedback-free runs).
pub fn gamma_tau(params: &ModelParams) -> Complex64 {
    if !params.feedback {
        return Complex64::new(0.0, 0.0);
    }
    let (s, c) = params.phase.sin_cos();
    Complex64::new(params.gamma * c, params.gamma * s)
}

/// A uniform time grid on which `τ` is an exact integer number of steps.
///
/// Times are always computed from integer step indices (interval index plus
/// remainder), so grid corners `t = iτ` are reproduced bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau: f64,
    steps_per_tau: usize,
    n_intervals: usize,
}

impl TimeGrid {
    /// Grid with `steps_per_tau` steps per delay interval.
    pub fn new(tau: f64, steps_per_tau: usize, n_intervals: usize) -> Result<Self, ModelError> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(ModelError::NonPositiveTau(tau));
        }
        if steps_per_tau < MIN_STEPS_PER_TAU {
            return Err(ModelError::TooFewStepsPerTau(steps_per_tau));
        }
        Ok(Self {
            tau,
            steps_per_tau,
            n_intervals,
        })
    }

    /// Grid from an explicit step; fails unless `τ/dt` is an integer.
    pub fn from_dt(tau: f64, dt: f64, n_intervals: usize) -> Result<Self, ModelError> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(ModelError::NonPositiveTau(tau));
        }
        let steps = steps_for(tau, dt)?;
        Self::new(tau, steps, n_intervals)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps_per_tau(&self) -> usize {
        self.steps_per_tau
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.steps_per_tau as f64
    }

    /// Total number of steps covering all intervals.
    pub fn n_steps(&self) -> usize {
        self.steps_per_tau * self.n_intervals
    }

    /// Final time `n_intervals·τ`.
    pub fn t_end(&self) -> f64 {
        self.tau * self.n_intervals as f64
    }

    pub fn time_of(&self, step: usize) -> f64 {
        let interval = step / self.steps_per_tau;
        let rem = step % self.steps_per_tau;
        self.tau * interval as f64 + self.tau * rem as f64 / self.steps_per_tau as f64
    }

    /// Nearest grid index for `t`.
    pub fn index_of(&self, t: f64) -> usize {
        (t * self.steps_per_tau as f64 / self.tau).round().max(0.0) as usize
    }

    /// Index of the τ-interval a step belongs to (corners start a new interval).
    pub fn interval_of(&self, step: usize) -> usize {
        step / self.steps_per_tau
    }

    /// Same grid with a different number of intervals.
    pub fn with_intervals(&self, n_intervals: usize) -> Self {
        Self {
            n_intervals,
            ..*self
        }
    }

    /// Sample times `0, dt, …, t_end` (n_steps + 1 points).
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps()).map(move |s| self.time_of(s))
    }
}

/// Cubic stage interpolation needs four samples inside each interval.
pub const MIN_STEPS_PER_TAU: usize = 3;

fn steps_for(tau: f64, dt: f64) -> Result<usize, ModelError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ModelError::GridMisaligned { tau, dt });
    }
    let ratio = tau / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > ALIGNMENT_RTOL * ratio.max(1.0) {
        return Err(ModelError::GridMisaligned { tau, dt });
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("delay tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("tau = {tau} is not an integer multiple of dt = {dt}")]
    GridMisaligned { tau: f64, dt: f64 },
    #[error("rate `{name}` must be non-negative and finite, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("at least {MIN_STEPS_PER_TAU} steps per delay interval are required, got {0}")]
    TooFewStepsPerTau(usize),
    #[error("phase must be finite, got {0}")]
    NonFinitePhase(f64),
    #[error("time {t} lies outside the trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
}

/// A parameter set that passed [`validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckedConfig {
    pub params: ModelParams,
    pub grid: TimeGrid,
}

/// All violations found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<ModelError>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violations {}

/// Checks a parameter set against a time step `dt`, collecting every
/// violation rather than stopping at the first.
pub fn validate(
    params: ModelParams,
    dt: f64,
    n_intervals: usize,
) -> Result<CheckedConfig, Violations> {
    let mut errs = Vec::new();
    for (name, value) in [("gamma", params.gamma), ("coupling_m", params.coupling_m)] {
        if !value.is_finite() || value < 0.0 {
            errs.push(ModelError::NegativeRate { name, value });
        }
    }
    if !params.phase.is_finite() {
        errs.push(ModelError::NonFinitePhase(params.phase));
    }
    let grid = match TimeGrid::from_dt(params.tau, dt, n_intervals) {
        Ok(g) => Some(g),
        Err(e) => {
            errs.push(e);
            None
        }
    };
    match grid {
        Some(grid) if errs.is_empty() => Ok(CheckedConfig { params, grid }),
        _ => Err(Violations(errs)),
    }
}

/// A single complex channel sampled uniformly from `start_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrajectory {
    start_time: f64,
    dt: f64,
    values: Vec<Complex64>,
}

impl ComplexTrajectory {
    pub fn new(start_time: f64, dt: f64, values: Vec<Complex64>) -> Self {
        Self {
            start_time,
            dt,
            values,
        }
    }

    /// Constant-valued trajectory covering `grid` (n_steps + 1 samples).
    pub fn constant(grid: &TimeGrid, value: Complex64) -> Self {
        Self::new(0.0, grid.dt(), vec![value; grid.n_steps() + 1])
    }

    /// Samples `f(t)` on every grid point.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self::new(0.0, grid.dt(), grid.times().map(f).collect())
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.dt * self.values.len().saturating_sub(1) as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, index: usize) -> Option<Complex64> {
        self.values.get(index).copied()
    }

    /// Value at a grid time; times off the sampling lattice snap to the
    /// nearest sample, times outside the span are an error.
    pub fn at(&self, t: f64) -> Result<Complex64, ModelError> {
        let pos = (t - self.start_time) / self.dt;
        let idx = pos.round();
        if idx < 0.0 || idx as usize >= self.values.len() {
            return Err(ModelError::OutOfSpan {
                t,
                start: self.start_time,
                end: self.end_time(),
            });
        }
        Ok(self.values[idx as usize])
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| self.start_time + self.dt * k as f64)
    }

    pub fn norm_sqr(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn aligned_grid_is_accepted() {
        let cfg = validate(ModelParams::new(1.0, 1.0, 0.0, 0.0), 0.001, 5).unwrap();
        assert_eq!(cfg.grid.steps_per_tau(), 1000);
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        let err = validate(ModelParams::new(1.0, 1.0, 0.0, 0.0), 0.0003, 5).unwrap_err();
        assert!(matches!(err.0[0], ModelError::GridMisaligned { .. }));
    }

    #[test]
    fn zero_tau_is_rejected() {
        let err = validate(ModelParams::new(1.0, 0.0, 0.0, 0.0), 0.001, 5).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|e| matches!(e, ModelError::NonPositiveTau(_))));
    }

    #[test]
    fn all_violations_are_reported() {
        let err = validate(ModelParams::new(-1.0, 1.0, -0.5, 0.0), 0.0003, 5).unwrap_err();
        assert_eq!(err.0.len(), 3, "{err}");
    }

    #[test]
    fn gamma_tau_quarter_turns() {
        let g = |gamma, phase| gamma_tau(&ModelParams::new(gamma, 1.0, 0.0, phase));
        let z = g(1.0, 0.0);
        assert_eq!(z, Complex64::new(1.0, 0.0));
        let z = g(1.0, PI);
        assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let z = g(0.5, PI / 2.0);
        assert!((z - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn trajectory_rejects_out_of_span() {
        let grid = TimeGrid::new(1.0, 10, 1).unwrap();
        let tr = ComplexTrajectory::constant(&grid, Complex64::new(1.0, 0.0));
        assert_eq!(tr.len(), 11);
        assert!(tr.at(1.0).is_ok());
        assert!(tr.at(1.2).is_err());
        assert!(tr.at(-0.2).is_err());
    }

    proptest! {
        #[test]
        fn step_time_round_trip(n in 3usize..5000, s in 0usize..1_000_000, tau in 0.01f64..100.0) {
            let grid = TimeGrid::new(tau, n, 1).unwrap();
            prop_assert_eq!(grid.index_of(grid.time_of(s)), s);
        }

        #[test]
        fn gamma_tau_modulus(gamma in 0.0f64..1e3, phase in -50.0f64..50.0) {
            let z = gamma_tau(&ModelParams::new(gamma, 1.0, 0.0, phase));
            prop_assert!((z.norm() - gamma).abs() <= 1e-15 * gamma.max(1e-300) * 4.0);
        }

        #[test]
        fn corners_are_exact(n in 3usize..4000, i in 0usize..50, tau in 0.01f64..100.0) {
            let grid = TimeGrid::new(tau, n, 1).unwrap();
            prop_assert_eq!(grid.time_of(i * n), tau * i as f64);
        }
    }
}
