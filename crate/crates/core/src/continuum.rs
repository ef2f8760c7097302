//! First-principles reference: single-excitation Schrödinger dynamics with an
//! explicitly discretized reservoir.
//!
//! The mirror-bounded continuum couples with `g(ω) = g0·sin(ωL/c)`. In the
//! frame rotating at the system frequency `ω_s` a mode with detuning `Δ`
//! carries `sin(φ/2 + Δτ/2)` with `τ = 2L/c` and `φ = ω_s τ`. Units use
//! `c = 1`. A mode grid of spacing `Δω` carries discrete couplings
//! `G_k = g(Δ_k)·√Δω`, so the kernel `Σ_k |G_k|² e^{−iΔ_k s}` approximates
//!
//! ```text
//! f(s) = Γ (2δ(s) − e^{iφ}δ(s−τ) − e^{−iφ}δ(s+τ))
//! ```
//!
//! with `Γ = π⟨|g|²⟩`, where `⟨|g|²⟩` is the window-averaged squared coupling.
//! For the `sin` profile that average is `g0²/2`; for flat couplings it is
//! `g0²`.
//!
//! Time stepping uses the two-stage Gauss–Legendre scheme, i.e. the (2,2)
//! Padé approximant of the propagator, which is fourth order and conserves
//! the norm of this Hermitian problem up to round-off. Each step needs two
//! shifted solves of the arrowhead Hamiltonian, done in O(n_modes).
//! Mode sums run in ascending mode order, so results are bitwise
//! reproducible.

use crate::model::{ComplexTrajectory, ModelParams, TimeGrid};
use num_complex::Complex64;
use std::f64::consts::PI;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Shape of the reservoir coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingProfile {
    /// `g0·sin(kL)`: mirror boundary, produces the delayed feedback.
    Structured,
    /// `g0` for every mode: plain Markovian decay.
    Flat,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContinuumError {
    #[error("window half-width {window} must be at least 20·2π/τ = {min}")]
    WindowTooNarrow { window: f64, min: f64 },
    #[error("{n_modes} modes give Δω·τ = {spacing_tau:.4}, which must stay below 2π/10")]
    TooFewModes { n_modes: usize, spacing_tau: f64 },
    #[error("run end {t_end} reaches the recurrence time 2π/Δω = {recurrence}")]
    RecurrenceReached { t_end: f64, recurrence: f64 },
    #[error("state became non-finite at output step {step}")]
    NonFiniteState { step: usize },
    #[error("rate and delay must be positive and finite")]
    InvalidParameters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    detunings: Vec<f64>,
    couplings: Vec<C64>,
    g0: f64,
    window: f64,
    mode_spacing: f64,
    tau: f64,
    phase: f64,
    profile: CouplingProfile,
}

/// Inputs for [`build_modes_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub gamma: f64,
    pub tau: f64,
    pub n_modes: usize,
    pub window: f64,
    pub phase: f64,
    pub profile: CouplingProfile,
}

/// Structured grid at zero feedback phase.
pub fn build_modes(
    gamma: f64,
    tau: f64,
    n_modes: usize,
    window: f64,
) -> Result<ModeGrid, ContinuumError> {
    build_modes_with(ModeSpec {
        gamma,
        tau,
        n_modes,
        window,
        phase: 0.0,
        profile: CouplingProfile::Structured,
    })
}

pub fn build_modes_with(spec: ModeSpec) -> Result<ModeGrid, ContinuumError> {
    let ModeSpec {
        gamma,
        tau,
        n_modes,
        window,
        phase,
        profile,
    } = spec;
    if gamma < 0.0 || tau <= 0.0 || !gamma.is_finite() || !tau.is_finite() || !window.is_finite() {
        return Err(ContinuumError::InvalidParameters);
    }
    let min = 20.0 * 2.0 * PI / tau;
    if window < min * (1.0 - 1e-12) {
        return Err(ContinuumError::WindowTooNarrow { window, min });
    }
    if n_modes < 2 {
        return Err(ContinuumError::TooFewModes {
            n_modes,
            spacing_tau: f64::INFINITY,
        });
    }
    let spacing = 2.0 * window / (n_modes - 1) as f64;
    if spacing * tau >= 2.0 * PI / 10.0 {
        return Err(ContinuumError::TooFewModes {
            n_modes,
            spacing_tau: spacing * tau,
        });
    }
    let g0 = match profile {
        CouplingProfile::Structured => (2.0 * gamma / PI).sqrt(),
        CouplingProfile::Flat => (gamma / PI).sqrt(),
    };
    let weight = spacing.sqrt();
    let detunings: Vec<f64> = (0..n_modes).map(|k| -window + spacing * k as f64).collect();
    let couplings = detunings
        .iter()
        .map(|&d| {
            let shape = match profile {
                CouplingProfile::Structured => (0.5 * phase + 0.5 * d * tau).sin(),
                CouplingProfile::Flat => 1.0,
            };
            C64::new(g0 * shape * weight, 0.0)
        })
        .collect();
    Ok(ModeGrid {
        detunings,
        couplings,
        g0,
        window,
        mode_spacing: spacing,
        tau,
        phase,
        profile,
    })
}

impl ModeGrid {
    pub fn n_modes(&self) -> usize {
        self.detunings.len()
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn mode_spacing(&self) -> f64 {
        self.mode_spacing
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn profile(&self) -> CouplingProfile {
        self.profile
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    /// Discrete couplings including the `√Δω` weight.
    pub fn couplings(&self) -> &[C64] {
        &self.couplings
    }

    /// `π⟨|g|²⟩` over the grid: the decay rate the grid actually realises.
    pub fn gamma_check(&self) -> f64 {
        let sum: f64 = self.couplings.iter().map(|g| g.norm_sqr()).sum();
        PI * sum / (self.n_modes() as f64 * self.mode_spacing)
    }

    /// Time after which the discrete spectrum revives, `2π/Δω`.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.mode_spacing
    }

    /// Discretized memory kernel `Σ_k |G_k|² e^{−iΔ_k s}`.
    pub fn kernel(&self, s: f64) -> C64 {
        self.detunings
            .iter()
            .zip(&self.couplings)
            .map(|(&d, g)| C64::from_polar(g.norm_sqr(), -d * s))
            .sum()
    }

    /// Exact integral of [`kernel`](Self::kernel) over `[center − w, center + w]`.
    pub fn kernel_weight(&self, center: f64, half_width: f64) -> C64 {
        self.detunings
            .iter()
            .zip(&self.couplings)
            .map(|(&d, g)| {
                let box_ft = if d == 0.0 {
                    2.0 * half_width
                } else {
                    2.0 * (d * half_width).sin() / d
                };
                C64::from_polar(g.norm_sqr() * box_ft, -d * center)
            })
            .sum()
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Upper bound on `W·h` for the internal substep `h`.
    pub max_phase_per_step: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_phase_per_step: 0.1,
        }
    }
}

/// Sampled amplitudes of a reservoir run.
#[derive(Debug, Clone)]
pub struct ContinuumRun {
    pub emitter: ComplexTrajectory,
    /// Cavity amplitude; `None` for the emitter-only model.
    pub cavity: Option<ComplexTrajectory>,
    /// Total single-excitation norm at each output time.
    pub norm: Vec<f64>,
    pub substeps: usize,
}

/// Emitter coupled directly to the reservoir, `c_e(0) = 1`.
pub fn evolve_emitter_only(
    modes: &ModeGrid,
    time: &TimeGrid,
) -> Result<ContinuumRun, ContinuumError> {
    evolve_emitter_only_with(modes, time, OracleOptions::default())
}

pub fn evolve_emitter_only_with(
    modes: &ModeGrid,
    time: &TimeGrid,
    opts: OracleOptions,
) -> Result<ContinuumRun, ContinuumError> {
    let run = evolve(modes, 0.0, time, opts, false)?;
    Ok(run)
}

/// Emitter coupled with strength `M` to a cavity that couples to the
/// reservoir; the excitation starts in the emitter.
pub fn evolve_jcm(
    modes: &ModeGrid,
    params: &ModelParams,
    time: &TimeGrid,
) -> Result<ContinuumRun, ContinuumError> {
    evolve_jcm_with(modes, params, time, OracleOptions::default())
}

pub fn evolve_jcm_with(
    modes: &ModeGrid,
    params: &ModelParams,
    time: &TimeGrid,
    opts: OracleOptions,
) -> Result<ContinuumRun, ContinuumError> {
    evolve(modes, params.coupling_m, time, opts, true)
}

/// State layout: `[aux, sys, modes…]`. `sys` is the site coupled to the
/// reservoir; `aux` couples to `sys` with strength `m`.
struct Arrowhead<'a> {
    m: f64,
    detunings: &'a [f64],
    couplings: &'a [C64],
}

impl Arrowhead<'_> {
    /// `out = −i·H·y`
    fn apply(&self, y: &[C64], out: &mut [C64]) {
        let mi = C64::new(0.0, -1.0);
        let mut acc = C64::new(self.m, 0.0) * y[0];
        for (k, (&d, g)) in self.detunings.iter().zip(self.couplings).enumerate() {
            let yk = y[k + 2];
            acc += g * yk;
            out[k + 2] = mi * (d * yk + g.conj() * y[1]);
        }
        out[0] = mi * self.m * y[1];
        out[1] = mi * acc;
    }
}

/// Precomputed solver for `(I + iβH) y = b`.
struct ShiftedSolve {
    q: C64,
    inv: Vec<C64>,
    denom_inv: C64,
}

impl ShiftedSolve {
    fn new(h: &Arrowhead<'_>, beta: C64) -> Self {
        let q = C64::new(0.0, 1.0) * beta;
        let inv: Vec<C64> = h
            .detunings
            .iter()
            .map(|&d| (C64::new(1.0, 0.0) + q * d).inv())
            .collect();
        let s: C64 = h
            .couplings
            .iter()
            .zip(&inv)
            .map(|(g, w)| g.norm_sqr() * w)
            .sum();
        let denom = C64::new(1.0, 0.0) - q * q * (h.m * h.m) - q * q * s;
        Self {
            q,
            inv,
            denom_inv: denom.inv(),
        }
    }

    fn solve(&self, h: &Arrowhead<'_>, b: &[C64], y: &mut [C64]) {
        let q = self.q;
        let mut proj = ZERO;
        for (k, (g, w)) in h.couplings.iter().zip(&self.inv).enumerate() {
            proj += g * b[k + 2] * w;
        }
        let ys = (b[1] - q * h.m * b[0] - q * proj) * self.denom_inv;
        y[1] = ys;
        y[0] = b[0] - q * h.m * ys;
        for (k, (g, w)) in h.couplings.iter().zip(&self.inv).enumerate() {
            y[k + 2] = (b[k + 2] - q * g.conj() * ys) * w;
        }
    }
}

fn evolve(
    modes: &ModeGrid,
    m: f64,
    time: &TimeGrid,
    opts: OracleOptions,
    jcm: bool,
) -> Result<ContinuumRun, ContinuumError> {
    let t_end = time.t_end();
    if t_end >= modes.recurrence_time() {
        return Err(ContinuumError::RecurrenceReached {
            t_end,
            recurrence: modes.recurrence_time(),
        });
    }
    let h_op = Arrowhead {
        m,
        detunings: &modes.detunings,
        couplings: &modes.couplings,
    };
    let dt = time.dt();
    let substeps = ((modes.window * dt) / opts.max_phase_per_step)
        .ceil()
        .max(1.0) as usize;
    let h = dt / substeps as f64;
    // Roots of 1 − z/2 + z²/12 are 3 ± i√3.
    let r1 = C64::new(3.0, 3f64.sqrt());
    let r2 = r1.conj();
    let s1 = ShiftedSolve::new(&h_op, C64::new(h, 0.0) / r1);
    let s2 = ShiftedSolve::new(&h_op, C64::new(h, 0.0) / r2);

    let dim = modes.n_modes() + 2;
    let mut x = vec![ZERO; dim];
    // Emitter-only runs put the emitter on the reservoir-coupled site.
    if jcm {
        x[0] = C64::new(1.0, 0.0);
    } else {
        x[1] = C64::new(1.0, 0.0);
    }
    let mut u = vec![ZERO; dim];
    let mut v = vec![ZERO; dim];
    let mut p = vec![ZERO; dim];

    let n_out = time.n_steps() + 1;
    let mut emitter = Vec::with_capacity(n_out);
    let mut cavity = Vec::with_capacity(if jcm { n_out } else { 0 });
    let mut norm = Vec::with_capacity(n_out);
    let record = |x: &[C64], emitter: &mut Vec<C64>, cavity: &mut Vec<C64>, norm: &mut Vec<f64>| {
        if jcm {
            emitter.push(x[0]);
            cavity.push(x[1]);
        } else {
            emitter.push(x[1]);
        }
        norm.push(x.iter().map(|z| z.norm_sqr()).sum());
    };
    record(&x, &mut emitter, &mut cavity, &mut norm);

    for step in 0..time.n_steps() {
        for _ in 0..substeps {
            h_op.apply(&x, &mut u);
            h_op.apply(&u, &mut v);
            for i in 0..dim {
                u[i] = x[i] + u[i] * (0.5 * h) + v[i] * (h * h / 12.0);
            }
            s1.solve(&h_op, &u, &mut p);
            s2.solve(&h_op, &p, &mut x);
        }
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(ContinuumError::NonFiniteState { step: step + 1 });
        }
        record(&x, &mut emitter, &mut cavity, &mut norm);
    }

    Ok(ContinuumRun {
        emitter: ComplexTrajectory::new(0.0, dt, emitter),
        cavity: jcm.then(|| ComplexTrajectory::new(0.0, dt, cavity)),
        norm,
        substeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_bounds_arithmetic() {
        let g = build_modes(1.0, 1.0, 4001, 40.0 * PI).unwrap();
        assert!((g.mode_spacing() * g.tau() - 0.0628).abs() < 1e-4);
        assert!((g.gamma_check() - 1.0).abs() < 0.01, "{}", g.gamma_check());
    }

    #[test]
    fn too_few_modes() {
        assert!(matches!(
            build_modes(1.0, 1.0, 10, 40.0 * PI),
            Err(ContinuumError::TooFewModes { .. })
        ));
        assert!(matches!(
            build_modes(1.0, 1.0, 1, 40.0 * PI),
            Err(ContinuumError::TooFewModes { .. })
        ));
    }

    #[test]
    fn narrow_window() {
        assert!(matches!(
            build_modes(1.0, 1.0, 4001, 10.0 * PI),
            Err(ContinuumError::WindowTooNarrow { .. })
        ));
    }

    #[test]
    fn kernel_weights_are_two_to_one() {
        let g = build_modes(1.0, 1.0, 4001, 40.0 * PI).unwrap();
        let w0 = g.kernel_weight(0.0, 0.25);
        let w1 = g.kernel_weight(1.0, 0.25);
        let wm = g.kernel_weight(-1.0, 0.25);
        assert!((w0.norm() / w1.norm() - 2.0).abs() < 0.02, "{w0} {w1}");
        // Finite windows leak a few percent of each peak into sinc tails.
        assert!((w0.re - 2.0).abs() < 0.05, "{w0}");
        // The retarded peak enters with a minus sign: Γ_τ appears with +.
        assert!((w1 + C64::new(1.0, 0.0)).norm() < 0.05, "{w1}");
        assert!((w1 - wm.conj()).norm() < 1e-9);
        // Away from the peaks the kernel is small.
        assert!(g.kernel(0.5).norm() < 0.05 * g.kernel(0.0).norm());
        assert!(g.kernel(0.0).norm() > 10.0 * g.kernel(0.5).norm());
    }

    #[test]
    fn decoupled_emitter_stays_excited() {
        let g = build_modes(0.0, 1.0, 1001, 40.0 * PI).unwrap();
        let time = TimeGrid::new(1.0, 50, 2).unwrap();
        let run = evolve_emitter_only(&g, &time).unwrap();
        assert!(run
            .emitter
            .values()
            .iter()
            .all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn jcm_without_coupling_keeps_emitter() {
        let g = build_modes(1.0, 1.0, 1001, 40.0 * PI).unwrap();
        let time = TimeGrid::new(1.0, 50, 2).unwrap();
        let run = evolve_jcm(&g, &ModelParams::new(1.0, 1.0, 0.0, 0.0), &time).unwrap();
        assert!(run
            .emitter
            .values()
            .iter()
            .all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn norm_is_conserved() {
        let g = build_modes(1.0, 1.0, 1001, 40.0 * PI).unwrap();
        let time = TimeGrid::new(1.0, 200, 3).unwrap();
        let run = evolve_jcm(&g, &ModelParams::new(1.0, 1.0, 0.5, 0.0), &time).unwrap();
        let worst = run.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn recurrence_is_refused() {
        let g = build_modes(1.0, 1.0, 1001, 40.0 * PI).unwrap();
        let time = TimeGrid::new(1.0, 20, 30).unwrap();
        assert!(matches!(
            evolve_emitter_only(&g, &time),
            Err(ContinuumError::RecurrenceReached { .. })
        ));
    }
}
