//! Many-photon closure of the correlator hierarchy.
//!
//! The polarization obeys `Ṗ = −iM (1 − 2P†P) c`. With many photons and one
//! emitter the density factor is replaced by its mean, taken at the
//! operator's own time:
//!
//! ```text
//! ⟨A(t) Ṗ(t−jτ)⟩ ≈ −iM (1 − 2 n_P(t−jτ)) ⟨A(t) c(t−jτ)⟩
//! ```
//!
//! Cavity equations stay linear. The emitter population itself needs no
//! closure: `(1 − 2P†P)` collapses to 1 inside `⟨c†P⟩` and `⟨P†c⟩`, so
//! `ṅ_P = iM(⟨c†P⟩ − ⟨P†c⟩)` exactly. The origin correlators that seed new
//! channels pick up the factor at `t` and are integrated alongside the
//! block, because `n_P(t)` is only known as the run proceeds.
//!
//! Delayed densities `n_P(t−jτ)` are read from the population record.

use crate::dde::{rk4_step, segment_sample, Rk4Workspace, SegmentView, Stage};
use crate::hierarchy::{InitialState, Quad};
use crate::model::{ModelParams, TimeGrid};
use num_complex::Complex64;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorizedError {
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error("factorized run diverged at step {step} of interval {interval}")]
    NonFiniteState { interval: usize, step: usize },
}

/// Delayed values used by one `j ≥ 1` channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FactorizedReads {
    /// `⟨c†(t−τ) c(t−jτ)⟩`
    pub cc: C64,
    /// `⟨c†(t−τ) P(t−jτ)⟩`
    pub cp: C64,
    /// `n_P(t−jτ)`
    pub population: f64,
}

/// Right-hand side of channel `j` in interval `i`. `block[0].pp.re` is the
/// current emitter population.
pub fn factorized_rhs(
    params: &ModelParams,
    i: usize,
    j: usize,
    block: &[Quad],
    reads: FactorizedReads,
) -> Quad {
    let g = params.gamma;
    let im = C64::new(0.0, params.coupling_m);
    let gt = params.gamma_tau();
    let gtc = gt.conj();
    let x = block[j];
    let next = if j < i { block[j + 1] } else { Quad::default() };
    let (d_cc, d_cp) = match (i, j) {
        (0, _) => (ZERO, ZERO),
        (_, 0) => (block[1].cc.conj(), block[1].pc.conj()),
        _ => (reads.cc, reads.cp),
    };
    let n_now = block[0].pp.re;
    let f_now = 1.0 - 2.0 * n_now;
    let f_then = if j == 0 {
        f_now
    } else {
        1.0 - 2.0 * reads.population
    };
    let pp = if j == 0 {
        im * (x.cp - x.pc)
    } else {
        im * f_now * x.cp - im * f_then * x.pc
    };
    Quad {
        cc: x.cc * (-2.0 * g) + gt * next.cc + gtc * d_cc + im * (x.pc - x.cp),
        pc: x.pc * (-g) + gt * next.pc + im * f_now * x.cc - im * x.pp,
        cp: x.cp * (-g) + gtc * d_cp - im * f_then * x.cc + im * x.pp,
        pp,
    }
}

/// Origin correlators `(Z_cc, Z_Pc, Z_cP, Z_PP)` with the factor at `t`.
/// `delayed` holds `Z_cc(t−τ), Z_cP(t−τ)` (zero on the first interval).
fn origin_rhs(params: &ModelParams, z: &[C64], delayed: [C64; 2], population: f64, dz: &mut [C64]) {
    let im = C64::new(0.0, params.coupling_m) * (1.0 - 2.0 * population);
    let g = params.gamma;
    let gtc = params.gamma_tau().conj();
    for (k, (zc, zp)) in [(0, 1), (2, 3)].into_iter().enumerate() {
        dz[zc] = z[zc] * (-g) + gtc * delayed[k] + im * z[zp];
        dz[zp] = im * z[zc];
    }
}

#[derive(Debug, Clone)]
pub struct FactorizedRun {
    pub grid: TimeGrid,
    pub photon_number: Vec<f64>,
    pub emitter_population: Vec<f64>,
    /// Retained values on entry to each interval: `cc[j]`, `cp[j]`, both
    /// records and the two delayed origin channels.
    pub memory_counts: Vec<usize>,
}

pub fn run_factorized(
    params: &ModelParams,
    initial: &InitialState,
    grid: &TimeGrid,
) -> Result<FactorizedRun, FactorizedError> {
    let bad = |m: String| Err(FactorizedError::InvalidInitialState(m));
    if !initial.photons.is_finite() || initial.photons < 0.0 {
        return bad(format!(
            "photon number {} must be finite and ≥ 0",
            initial.photons
        ));
    }
    if !(0.0..=1.0).contains(&initial.emitter_population) {
        return bad(format!(
            "emitter population {} outside [0, 1]",
            initial.emitter_population
        ));
    }
    if !initial.coherence.is_finite()
        || initial.coherence.norm_sqr()
            > initial.photons * initial.emitter_population * (1.0 + 1e-12) + 1e-300
    {
        return bad("|⟨P†c⟩|² exceeds ⟨P†P⟩⟨c†c⟩".into());
    }

    let n = grid.steps_per_tau();
    let dt = grid.dt();
    let mut z = vec![
        C64::new(initial.photons, 0.0),
        initial.coherence,
        initial.coherence.conj(),
        C64::new(initial.emitter_population, 0.0),
    ];
    let mut block = vec![Quad {
        cc: C64::new(initial.photons, 0.0),
        pc: initial.coherence,
        cp: initial.coherence.conj(),
        pp: C64::new(initial.emitter_population, 0.0),
    }];

    let mut photon_number: Vec<f64> = Vec::with_capacity(grid.n_steps() + 1);
    let mut population: Vec<f64> = Vec::with_capacity(grid.n_steps() + 1);
    let mut s_cc: Vec<Vec<C64>> = Vec::new();
    let mut s_cp: Vec<Vec<C64>> = Vec::new();
    let mut z_prev: [Vec<C64>; 2] = [Vec::new(), Vec::new()];
    let mut memory_counts = Vec::with_capacity(grid.n_intervals());

    for i in 0..grid.n_intervals() {
        if i > 0 {
            block.push(Quad {
                cc: z[0],
                pc: z[1],
                cp: z[2],
                pp: z[3],
            });
        }
        memory_counts.push(
            s_cc.iter().chain(&s_cp).map(Vec::len).sum::<usize>()
                + photon_number.len()
                + population.len()
                + z_prev[0].len()
                + z_prev[1].len(),
        );
        let width = i + 1;
        let dim = 4 + 4 * width;
        let mut x = vec![ZERO; dim];
        x[..4].copy_from_slice(&z);
        for (j, q) in block.iter().enumerate() {
            x[4 + 4 * j] = q.cc;
            x[5 + 4 * j] = q.pc;
            x[6 + 4 * j] = q.cp;
            x[7 + 4 * j] = q.pp;
        }
        let mut cc_new: Vec<Vec<C64>> = (0..width).map(|_| Vec::with_capacity(n)).collect();
        let mut cp_new: Vec<Vec<C64>> = (0..width).map(|_| Vec::with_capacity(n)).collect();
        let mut z_new: [Vec<C64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];

        // Stored segments close on the state at iτ.
        let views: Vec<(SegmentView<'_>, SegmentView<'_>)> = (0..i)
            .map(|j| {
                (
                    SegmentView::new(&s_cc[j], block[j].cc),
                    SegmentView::new(&s_cp[j], block[j].cp),
                )
            })
            .collect();
        let z_views = (i > 0).then(|| {
            [
                SegmentView::new(&z_prev[0], z[0]),
                SegmentView::new(&z_prev[1], z[2]),
            ]
        });
        let mut ws = Rk4Workspace::new(dim);
        let mut scratch = vec![Quad::default(); width];

        for local in 0..n {
            for j in 0..width {
                cc_new[j].push(x[4 + 4 * j]);
                cp_new[j].push(x[6 + 4 * j]);
            }
            z_new[0].push(x[0]);
            z_new[1].push(x[2]);
            photon_number.push(x[4].re);
            population.push(x[7].re);

            let pop_ref = &population;
            rk4_step(&mut x, dt, &mut ws, |stage: Stage, state, dx| {
                for (j, q) in scratch.iter_mut().enumerate() {
                    *q = Quad {
                        cc: state[4 + 4 * j],
                        pc: state[5 + 4 * j],
                        cp: state[6 + 4 * j],
                        pp: state[7 + 4 * j],
                    };
                }
                let n_now = scratch[0].pp.re;
                let delayed_z = z_views.as_ref().map_or([ZERO; 2], |v| {
                    [v[0].sample(local, stage), v[1].sample(local, stage)]
                });
                origin_rhs(params, &state[..4], delayed_z, n_now, &mut dx[..4]);
                for j in 0..width {
                    let reads = if j >= 1 {
                        let (vcc, vcp) = &views[j - 1];
                        // Population record segment of interval i − j.
                        let seg = &pop_ref[(i - j) * n..=(i - j + 1) * n];
                        FactorizedReads {
                            cc: vcc.sample(local, stage),
                            cp: vcp.sample(local, stage),
                            population: segment_sample(|k| C64::new(seg[k], 0.0), n, local, stage)
                                .re,
                        }
                    } else {
                        FactorizedReads::default()
                    };
                    let d = factorized_rhs(params, i, j, &scratch, reads);
                    dx[4 + 4 * j] = d.cc;
                    dx[5 + 4 * j] = d.pc;
                    dx[6 + 4 * j] = d.cp;
                    dx[7 + 4 * j] = d.pp;
                }
            });
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FactorizedError::NonFiniteState {
                    interval: i,
                    step: local + 1,
                });
            }
        }
        z.copy_from_slice(&x[..4]);
        for (j, q) in block.iter_mut().enumerate() {
            *q = Quad {
                cc: x[4 + 4 * j],
                pc: x[5 + 4 * j],
                cp: x[6 + 4 * j],
                pp: x[7 + 4 * j],
            };
        }
        s_cc = cc_new;
        s_cp = cp_new;
        z_prev = z_new;
    }
    photon_number.push(block[0].cc.re);
    population.push(block[0].pp.re);

    Ok(FactorizedRun {
        grid: *grid,
        photon_number,
        emitter_population: population,
        memory_counts,
    })
}
