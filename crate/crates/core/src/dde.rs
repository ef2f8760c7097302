//! Method-of-steps integration of linear complex delay systems
//!
//! ```text
//! ẋ(t) = A·x(t) + B·x(t−τ)·Θ(t−τ) + d(t)
//! ```
//!
//! on a delay-aligned grid. Every step is a classical fourth-order
//! Runge–Kutta step. Delayed values and drives are read from stored grid
//! samples: the step start and end stages hit grid points exactly, the two
//! midpoint stages use a cubic Lagrange stencil that never crosses a
//! τ-corner, so the kinks of the solution at multiples of τ do not degrade
//! the order. History before `t = 0` is zero and the delayed channel is
//! switched on for the first step that starts at `t = τ`.

use crate::model::{ComplexTrajectory, TimeGrid};
use nalgebra::DMatrix;
use num_complex::Complex64;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Which Runge–Kutta stage a right-hand side is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// `t_s`
    Start,
    /// `t_s + dt/2`
    Mid,
    /// `t_s + dt`
    End,
}

/// Value of a smooth function at a stage point, given its `n + 1` samples on
/// one closed τ-segment. `local` is the step index inside the segment
/// (`0..n`).
#[inline]
pub fn segment_sample(get: impl Fn(usize) -> C64, n: usize, local: usize, stage: Stage) -> C64 {
    debug_assert!(n >= 3 && local < n);
    match stage {
        Stage::Start => get(local),
        Stage::End => get(local + 1),
        Stage::Mid => {
            if local == 0 {
                (get(0) * 5.0 + get(1) * 15.0 - get(2) * 5.0 + get(3)) / 16.0
            } else if local == n - 1 {
                (get(n - 3) - get(n - 2) * 5.0 + get(n - 1) * 15.0 + get(n) * 5.0) / 16.0
            } else {
                ((get(local) + get(local + 1)) * 9.0 - get(local - 1) - get(local + 2)) / 16.0
            }
        }
    }
}

/// A stored τ-segment of `n` samples on `[a, a+τ)` plus its closing value at
/// `a + τ`.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    pub body: &'a [C64],
    pub end: C64,
}

impl<'a> SegmentView<'a> {
    pub fn new(body: &'a [C64], end: C64) -> Self {
        Self { body, end }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> C64 {
        if idx < self.body.len() {
            self.body[idx]
        } else {
            self.end
        }
    }

    #[inline]
    pub fn sample(&self, local: usize, stage: Stage) -> C64 {
        segment_sample(|k| self.get(k), self.body.len(), local, stage)
    }
}

/// Scratch buffers for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![ZERO; dim],
            k2: vec![ZERO; dim],
            k3: vec![ZERO; dim],
            k4: vec![ZERO; dim],
            tmp: vec![ZERO; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }
}

/// One classical RK4 step of `ẋ = rhs(stage, x)` in place.
pub fn rk4_step<F>(x: &mut [C64], dt: f64, ws: &mut Rk4Workspace, mut rhs: F)
where
    F: FnMut(Stage, &[C64], &mut [C64]),
{
    let h2 = 0.5 * dt;
    rhs(Stage::Start, x, &mut ws.k1);
    for ((t, &xi), &k) in ws.tmp.iter_mut().zip(x.iter()).zip(&ws.k1) {
        *t = xi + k * h2;
    }
    rhs(Stage::Mid, &ws.tmp, &mut ws.k2);
    for ((t, &xi), &k) in ws.tmp.iter_mut().zip(x.iter()).zip(&ws.k2) {
        *t = xi + k * h2;
    }
    rhs(Stage::Mid, &ws.tmp, &mut ws.k3);
    for ((t, &xi), &k) in ws.tmp.iter_mut().zip(x.iter()).zip(&ws.k3) {
        *t = xi + k * dt;
    }
    rhs(Stage::End, &ws.tmp, &mut ws.k4);
    let h6 = dt / 6.0;
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += (ws.k1[i] + (ws.k2[i] + ws.k3[i]) * 2.0 + ws.k4[i]) * h6;
    }
}

/// Ring buffer of the most recent state vectors, addressed by global step.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dim: usize,
    capacity: usize,
    data: Vec<C64>,
    /// Number of states pushed so far; the newest one has step `len - 1`.
    len: usize,
    zeros: Vec<C64>,
}

impl HistoryBuffer {
    pub fn new(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            capacity,
            data: vec![ZERO; dim * capacity],
            len: 0,
            zeros: vec![ZERO; dim],
        }
    }

    /// Capacity needed to serve segment-confined stencils one delay back.
    pub fn for_delay(dim: usize, steps_per_tau: usize) -> Self {
        Self::new(dim, 2 * steps_per_tau + 1)
    }

    pub fn push(&mut self, state: &[C64]) {
        debug_assert_eq!(state.len(), self.dim);
        let slot = self.len % self.capacity;
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(state);
        self.len += 1;
    }

    /// State at `step`. Steps before zero read as the zero vector; steps not
    /// yet pushed or already evicted give `None`.
    pub fn get(&self, step: i64) -> Option<&[C64]> {
        if step < 0 {
            return Some(&self.zeros);
        }
        let step = step as usize;
        if step >= self.len || step + self.capacity < self.len {
            return None;
        }
        let slot = step % self.capacity;
        Some(&self.data[slot * self.dim..(slot + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `ẋ = A·x + B·x(t−τ)·Θ(t−τ)` with a state fixed at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDdeSystem {
    pub instantaneous: DMatrix<C64>,
    pub delayed: DMatrix<C64>,
    pub tau: f64,
    pub initial_state: Vec<C64>,
}

impl LinearDdeSystem {
    pub fn new(
        instantaneous: DMatrix<C64>,
        delayed: DMatrix<C64>,
        tau: f64,
        initial_state: Vec<C64>,
    ) -> Result<Self, DdeError> {
        let dim = initial_state.len();
        for m in [&instantaneous, &delayed] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(DdeError::ShapeMismatch {
                    dim,
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(DdeError::NonFiniteCoefficient);
            }
        }
        Ok(Self {
            instantaneous,
            delayed,
            tau,
            initial_state,
        })
    }

    pub fn dim(&self) -> usize {
        self.initial_state.len()
    }

    /// Largest absolute row sum of `A`, used for the step-size warning.
    pub fn instantaneous_norm(&self) -> f64 {
        self.instantaneous
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DdeError {
    #[error("grid delay {grid_tau} does not match system delay {system_tau}")]
    GridMisaligned { grid_tau: f64, system_tau: f64 },
    #[error("state diverged (non-finite value) at step {step}")]
    NonFiniteState { step: usize },
    #[error(
        "drive has {got} samples per channel on {channels} channels, expected {expected} on {dim}"
    )]
    DriveLengthMismatch {
        expected: usize,
        got: usize,
        dim: usize,
        channels: usize,
    },
    #[error("matrix of shape {rows}x{cols} does not match state dimension {dim}")]
    ShapeMismatch {
        dim: usize,
        rows: usize,
        cols: usize,
    },
    #[error("matrix contains non-finite entries")]
    NonFiniteCoefficient,
}

/// Solution channels on the full grid plus a soft step-size diagnostic.
#[derive(Debug, Clone)]
pub struct DdeSolution {
    pub channels: Vec<ComplexTrajectory>,
    /// `‖A‖·dt`; values above [`STIFF_STEP_WARNING`] indicate the step is too
    /// coarse for the fastest instantaneous rate.
    pub stiffness: f64,
}

impl DdeSolution {
    pub fn stiff(&self) -> bool {
        self.stiffness >= STIFF_STEP_WARNING
    }

    pub fn channel(&self, k: usize) -> &ComplexTrajectory {
        &self.channels[k]
    }
}

pub const STIFF_STEP_WARNING: f64 = 0.1;

pub fn integrate(system: &LinearDdeSystem, grid: &TimeGrid) -> Result<DdeSolution, DdeError> {
    run(system, None, grid)
}

/// Like [`integrate`] with an additive drive `d(t)`, one trajectory per state
/// channel sampled on `grid` (n_steps + 1 points each).
pub fn integrate_with_drive(
    system: &LinearDdeSystem,
    drive: &[ComplexTrajectory],
    grid: &TimeGrid,
) -> Result<DdeSolution, DdeError> {
    let expected = grid.n_steps() + 1;
    if drive.len() != system.dim() || drive.iter().any(|d| d.len() != expected) {
        return Err(DdeError::DriveLengthMismatch {
            expected,
            got: drive
                .iter()
                .map(|d| d.len())
                .find(|&l| l != expected)
                .unwrap_or(expected),
            dim: system.dim(),
            channels: drive.len(),
        });
    }
    run(system, Some(drive), grid)
}

fn run(
    system: &LinearDdeSystem,
    drive: Option<&[ComplexTrajectory]>,
    grid: &TimeGrid,
) -> Result<DdeSolution, DdeError> {
    if (grid.tau() - system.tau).abs() > 1e-12 * system.tau.abs().max(1.0) {
        return Err(DdeError::GridMisaligned {
            grid_tau: grid.tau(),
            system_tau: system.tau,
        });
    }
    let dim = system.dim();
    let n = grid.steps_per_tau();
    let dt = grid.dt();
    let n_steps = grid.n_steps();
    let a = &system.instantaneous;
    let b = &system.delayed;
    let has_delay = b.iter().any(|z| *z != ZERO);

    let mut out: Vec<Vec<C64>> = (0..dim).map(|_| Vec::with_capacity(n_steps + 1)).collect();
    let mut history = HistoryBuffer::for_delay(dim, n);
    let mut x = system.initial_state.clone();
    let mut ws = Rk4Workspace::new(dim);
    let mut delayed = vec![ZERO; dim];
    let mut forcing = vec![ZERO; dim];

    history.push(&x);
    for (ch, v) in out.iter_mut().zip(&x) {
        ch.push(*v);
    }

    for s in 0..n_steps {
        let delay_on = has_delay && s >= n;
        let seg = s / n;
        let local = s % n;
        rk4_step(&mut x, dt, &mut ws, |stage, state, dx| {
            if delay_on {
                let h = s - n;
                let base = (h / n) * n;
                let hl = h - base;
                for (c, slot) in delayed.iter_mut().enumerate() {
                    *slot = segment_sample(
                        |k| history.get((base + k) as i64).expect("history window")[c],
                        n,
                        hl,
                        stage,
                    );
                }
            }
            if let Some(d) = drive {
                for (c, slot) in forcing.iter_mut().enumerate() {
                    let v = d[c].values();
                    *slot = segment_sample(|k| v[seg * n + k], n, local, stage);
                }
            }
            for r in 0..dim {
                let mut acc = ZERO;
                for c in 0..dim {
                    acc += a[(r, c)] * state[c];
                }
                if delay_on {
                    for c in 0..dim {
                        acc += b[(r, c)] * delayed[c];
                    }
                }
                if drive.is_some() {
                    acc += forcing[r];
                }
                dx[r] = acc;
            }
        });
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DdeError::NonFiniteState { step: s + 1 });
        }
        history.push(&x);
        for (ch, v) in out.iter_mut().zip(&x) {
            ch.push(*v);
        }
    }

    Ok(DdeSolution {
        channels: out
            .into_iter()
            .map(|v| ComplexTrajectory::new(0.0, dt, v))
            .collect(),
        stiffness: system.instantaneous_norm() * dt,
    })
}

/// Single-channel delay equation of an emitter in front of a mirror:
/// `ċ_e = −Γ c_e + Γ_τ c_e(t−τ)Θ(t−τ)`, `c_e(0) = 1`.
pub fn mirror_system(params: &crate::model::ModelParams) -> LinearDdeSystem {
    LinearDdeSystem {
        instantaneous: DMatrix::from_element(1, 1, C64::new(-params.gamma, 0.0)),
        delayed: DMatrix::from_element(1, 1, params.gamma_tau()),
        tau: params.tau,
        initial_state: vec![C64::new(1.0, 0.0)],
    }
}

/// Emitter–cavity amplitudes `x = (c_e, c_g)` with the cavity coupled to the
/// feedback reservoir; the excitation starts in the emitter.
pub fn jcm_system(params: &crate::model::ModelParams) -> LinearDdeSystem {
    let im = C64::new(0.0, -params.coupling_m);
    let a = DMatrix::from_row_slice(2, 2, &[ZERO, im, im, C64::new(-params.gamma, 0.0)]);
    let b = DMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, params.gamma_tau()]);
    LinearDdeSystem {
        instantaneous: a,
        delayed: b,
        tau: params.tau,
        initial_state: vec![C64::new(1.0, 0.0), ZERO],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn scalar(a: f64, b: C64, tau: f64) -> LinearDdeSystem {
        LinearDdeSystem::new(
            DMatrix::from_element(1, 1, C64::new(a, 0.0)),
            DMatrix::from_element(1, 1, b),
            tau,
            vec![C64::new(1.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn pure_decay_matches_exponential() {
        let gamma = 1.0;
        let sys = scalar(-gamma, ZERO, 1.0);
        let grid = TimeGrid::new(1.0, 1000, 5).unwrap();
        let sol = integrate(&sys, &grid).unwrap();
        let err = sol.channels[0]
            .times()
            .zip(sol.channels[0].values())
            .map(|(t, z)| (z - C64::new((-gamma * t).exp(), 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max error {err}");
        assert!(!sol.stiff());
    }

    #[test]
    fn zero_drive_is_identical_to_integrate() {
        let p = ModelParams::new(1.0, 1.0, 0.7, 0.3);
        let sys = jcm_system(&p);
        let grid = TimeGrid::new(1.0, 200, 4).unwrap();
        let drive = vec![ComplexTrajectory::constant(&grid, ZERO); 2];
        let a = integrate(&sys, &grid).unwrap();
        let b = integrate_with_drive(&sys, &drive, &grid).unwrap();
        assert_eq!(a.channels, b.channels);
    }

    #[test]
    fn constant_drive_is_integrated_exactly() {
        let sys = LinearDdeSystem::new(
            DMatrix::from_element(1, 1, ZERO),
            DMatrix::from_element(1, 1, ZERO),
            1.0,
            vec![C64::new(0.5, -0.25)],
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 100, 3).unwrap();
        let c = C64::new(0.3, 0.7);
        let sol =
            integrate_with_drive(&sys, &[ComplexTrajectory::constant(&grid, c)], &grid).unwrap();
        for (t, z) in sol.channels[0].times().zip(sol.channels[0].values()) {
            assert!((z - (C64::new(0.5, -0.25) + c * t)).norm() < 1e-12);
        }
    }

    #[test]
    fn inhomogeneous_scalar_matches_closed_form() {
        // ẋ = −x + e^{−t}  →  x(t) = (x0 + t)e^{−t}
        let sys = scalar(-1.0, ZERO, 1.0);
        let grid = TimeGrid::new(1.0, 500, 6).unwrap();
        let drive = ComplexTrajectory::from_fn(&grid, |t| C64::new((-t).exp(), 0.0));
        let sol = integrate_with_drive(&sys, &[drive], &grid).unwrap();
        let err = sol.channels[0]
            .times()
            .zip(sol.channels[0].values())
            .map(|(t, z)| (z - C64::new((1.0 + t) * (-t).exp(), 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn drive_length_is_checked() {
        let sys = scalar(-1.0, ZERO, 1.0);
        let grid = TimeGrid::new(1.0, 10, 2).unwrap();
        let short = ComplexTrajectory::new(0.0, 0.1, vec![ZERO; 5]);
        assert!(matches!(
            integrate_with_drive(&sys, &[short], &grid),
            Err(DdeError::DriveLengthMismatch { .. })
        ));
    }

    #[test]
    fn delay_mismatch_is_rejected() {
        let sys = scalar(-1.0, ZERO, 2.0);
        let grid = TimeGrid::new(1.0, 10, 2).unwrap();
        assert!(matches!(
            integrate(&sys, &grid),
            Err(DdeError::GridMisaligned { .. })
        ));
    }

    #[test]
    fn divergence_reports_step() {
        let sys = scalar(1e6, ZERO, 1.0);
        let grid = TimeGrid::new(1.0, 10, 200).unwrap();
        match integrate(&sys, &grid) {
            Err(DdeError::NonFiniteState { step }) => assert!(step > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn delayed_channel_is_gated_before_tau() {
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.4);
        let grid = TimeGrid::new(1.0, 100, 3).unwrap();
        let with = integrate(&jcm_system(&p), &grid).unwrap();
        let without = integrate(&jcm_system(&p.without_feedback()), &grid).unwrap();
        for c in 0..2 {
            assert_eq!(
                with.channels[c].values()[..=100],
                without.channels[c].values()[..=100]
            );
            assert_ne!(
                with.channels[c].values()[101],
                without.channels[c].values()[101]
            );
        }
    }

    #[test]
    fn history_buffer_reads_zero_before_start() {
        let mut h = HistoryBuffer::new(2, 3);
        assert_eq!(h.get(-1).unwrap(), &[ZERO, ZERO]);
        for k in 0..5 {
            h.push(&[C64::new(k as f64, 0.0), ZERO]);
        }
        assert!(h.get(1).is_none());
        assert_eq!(h.get(2).unwrap()[0].re, 2.0);
        assert_eq!(h.get(4).unwrap()[0].re, 4.0);
        assert!(h.get(5).is_none());
    }

    #[test]
    fn midpoint_stencil_reproduces_cubics() {
        let f = |x: f64| C64::new(x * x * x - 2.0 * x * x + 0.5 * x - 3.0, x * x);
        let n = 6;
        for local in 0..n {
            let got = segment_sample(|k| f(k as f64), n, local, Stage::Mid);
            assert!(
                (got - f(local as f64 + 0.5)).norm() < 1e-12,
                "local {local}"
            );
        }
    }
}
