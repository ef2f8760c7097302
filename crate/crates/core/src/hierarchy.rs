//! Two-time correlator hierarchy for a cavity with one emitter and delayed
//! coherent feedback.
//!
//! On interval `i` (`t ∈ [iτ, (i+1)τ)`) the block holds, for each `j ≤ i`,
//!
//! ```text
//! cc[j] = ⟨c†(t) c(t−jτ)⟩    pc[j] = ⟨P†(t) c(t−jτ)⟩
//! cp[j] = ⟨c†(t) P(t−jτ)⟩    pp[j] = ⟨P†(t) P(t−jτ)⟩
//! ```
//!
//! Both operators move with `t`, so the product rule applies to each leg.
//! The leg at `t` picks up `Γ_τ*·⟨c†(t−τ)·⟩`; for `j ≥ 1` that is a value of
//! the previous interval's `cc[j−1]` or `cp[j−1]`, which is all the memory
//! the method needs. For `j = 0` it is the conjugate of the current `cc[1]`
//! or `pc[1]`. The cubic `2iM P†P c` term of the polarization equation is
//! dropped: in the one-excitation sector it vanishes on every tracked value.
//!
//! A newborn `j = i` channel starts at `iτ` from the origin correlators
//! `Z_AB(t) = ⟨A†(t) B(0)⟩`, which obey their own two-channel delay
//! equations.

use crate::dde::{self, integrate, LinearDdeSystem, Rk4Workspace, SegmentView, Stage};
use crate::model::{ComplexTrajectory, ModelParams, TimeGrid};
use nalgebra::DMatrix;
use num_complex::Complex64;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HierarchyError {
    #[error("interval {interval} needs stored correlator j = {j} from the previous interval")]
    MissingMemory { interval: usize, j: usize },
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error("correlator block diverged at step {step} of interval {interval}")]
    NonFiniteState { interval: usize, step: usize },
    #[error(transparent)]
    Dde(#[from] dde::DdeError),
}

/// Which right-hand side to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsVariant {
    /// Product-rule derivation from the operator equations.
    #[default]
    Derived,
    /// The general block as commonly printed: the first-leg feedback term
    /// reads the channel itself (`Γ_τ*·cc[j]`) instead of the delayed
    /// `⟨c†(t−τ) c(t−jτ)⟩`. Kept for comparison runs only.
    Printed,
}

/// The four correlators of one `j`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quad {
    pub cc: C64,
    pub pc: C64,
    pub cp: C64,
    pub pp: C64,
}

impl Quad {
    fn from_slice(x: &[C64]) -> Self {
        Self {
            cc: x[0],
            pc: x[1],
            cp: x[2],
            pp: x[3],
        }
    }

    fn write(&self, out: &mut [C64]) {
        out[0] = self.cc;
        out[1] = self.pc;
        out[2] = self.cp;
        out[3] = self.pp;
    }
}

/// `⟨c†(t−τ) c(t−jτ)⟩` and `⟨c†(t−τ) P(t−jτ)⟩`, read from the previous
/// interval's `cc[j−1]`, `cp[j−1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelayedReads {
    pub cc: C64,
    pub cp: C64,
}

/// Equal-time state at `t = 0`. The reservoir starts in vacuum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InitialState {
    /// `⟨c†c⟩`
    pub photons: f64,
    /// `⟨P†P⟩`
    pub emitter_population: f64,
    /// `⟨P†c⟩`
    #[serde(default)]
    pub coherence: C64,
}

impl InitialState {
    pub fn emitter_excited() -> Self {
        Self {
            photons: 0.0,
            emitter_population: 1.0,
            coherence: ZERO,
        }
    }

    pub fn cavity_photons(n0: f64) -> Self {
        Self {
            photons: n0,
            emitter_population: 0.0,
            coherence: ZERO,
        }
    }

    /// Checks positivity, Cauchy–Schwarz, and (when the emitter is coupled)
    /// the one-excitation bound that the linear closure relies on.
    pub fn validate(&self, params: &ModelParams) -> Result<(), HierarchyError> {
        let bad = |m: String| Err(HierarchyError::InvalidInitialState(m));
        let Self {
            photons,
            emitter_population: pop,
            coherence,
        } = *self;
        if !photons.is_finite() || !pop.is_finite() || !coherence.is_finite() {
            return bad("non-finite value".into());
        }
        if photons < 0.0 {
            return bad(format!("photon number {photons} < 0"));
        }
        if !(0.0..=1.0).contains(&pop) {
            return bad(format!("emitter population {pop} outside [0, 1]"));
        }
        if coherence.norm_sqr() > photons * pop * (1.0 + 1e-12) + 1e-300 {
            return bad("|⟨P†c⟩|² exceeds ⟨P†P⟩⟨c†c⟩".into());
        }
        if params.coupling_m != 0.0 && photons + pop > 1.0 + 1e-12 {
            return bad(format!(
                "total excitation {} > 1 with M ≠ 0; the linear closure is exact only for one excitation",
                photons + pop
            ));
        }
        Ok(())
    }
}

/// Right-hand side of one `j` channel in interval `i`.
///
/// `block` holds the current values of all `j' ≤ i`. `memory` must be given
/// whenever `i ≥ 1` and `j ≥ 1`.
pub fn derive_block_rhs(
    params: &ModelParams,
    variant: RhsVariant,
    i: usize,
    j: usize,
    block: &[Quad],
    memory: Option<DelayedReads>,
) -> Result<Quad, HierarchyError> {
    debug_assert!(j <= i && block.len() == i + 1);
    if i >= 1 && j >= 1 && memory.is_none() {
        return Err(HierarchyError::MissingMemory { interval: i, j });
    }
    Ok(channel_rhs(
        params,
        variant,
        i,
        j,
        block[j],
        block.get(j + 1).copied(),
        block.get(1).copied(),
        memory,
    ))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn channel_rhs(
    params: &ModelParams,
    variant: RhsVariant,
    i: usize,
    j: usize,
    x: Quad,
    next: Option<Quad>,
    first: Option<Quad>,
    memory: Option<DelayedReads>,
) -> Quad {
    let g = params.gamma;
    let im = C64::new(0.0, params.coupling_m);
    let gt = params.gamma_tau();
    let gtc = gt.conj();
    // Θ_{j+1}: c(t−(j+1)τ) is live iff j < i.
    let next = if j < i {
        next.unwrap_or_default()
    } else {
        Quad::default()
    };
    // Θ_1 on the first leg.
    let (mut d_cc, d_cp) = match (i, j) {
        (0, _) => (ZERO, ZERO),
        (_, 0) => {
            let f = first.unwrap_or_default();
            (f.cc.conj(), f.pc.conj())
        }
        _ => {
            let m = memory.unwrap_or_default();
            (m.cc, m.cp)
        }
    };
    if variant == RhsVariant::Printed && i >= 1 {
        d_cc = x.cc;
    }
    Quad {
        cc: x.cc * (-2.0 * g) + gt * next.cc + gtc * d_cc + im * (x.pc - x.cp),
        pc: x.pc * (-g) + gt * next.pc + im * x.cc - im * x.pp,
        cp: x.cp * (-g) + gtc * d_cp - im * x.cc + im * x.pp,
        pp: im * x.cp - im * x.pc,
    }
}

/// Feedback-free cavity with one emitter, in terms of `⟨c†c⟩`, `⟨P†c⟩`,
/// `⟨P†P⟩`. Returns their derivatives in that order.
pub fn dissipative_jcm_rhs(
    params: &ModelParams,
    photons: f64,
    coherence: C64,
    population: f64,
) -> (f64, C64, f64) {
    let g = params.gamma;
    let m = params.coupling_m;
    let im = C64::new(0.0, m);
    (
        -2.0 * g * photons - m * (2.0 * coherence.im),
        coherence * (-g) + im * photons - im * population,
        m * (2.0 * coherence.im),
    )
}

/// `Z_AB(t) = ⟨A†(t) B(0)⟩` over the whole run.
#[derive(Debug, Clone)]
pub struct OriginCorrelators {
    pub z_cc: ComplexTrajectory,
    pub z_pc: ComplexTrajectory,
    pub z_cp: ComplexTrajectory,
    pub z_pp: ComplexTrajectory,
}

impl OriginCorrelators {
    /// Corner seed of the `j = i` channel at `t = iτ`.
    pub fn corner(&self, i: usize, steps_per_tau: usize) -> Quad {
        let k = i * steps_per_tau;
        Quad {
            cc: self.z_cc.values()[k],
            pc: self.z_pc.values()[k],
            cp: self.z_cp.values()[k],
            pp: self.z_pp.values()[k],
        }
    }
}

/// Integrates the origin correlators on `grid`. With the second operator
/// frozen at zero, `Z_cB` follows the conjugated cavity equation and `Z_PB`
/// the conjugated polarization equation:
/// `Ż_cB = −Γ Z_cB + Γ_τ* Z_cB(t−τ)Θ + iM Z_PB`, `Ż_PB = iM Z_cB`.
pub fn evolve_origin_correlators(
    params: &ModelParams,
    initial: &InitialState,
    grid: &TimeGrid,
) -> Result<OriginCorrelators, HierarchyError> {
    let im = C64::new(0.0, params.coupling_m);
    let g = C64::new(-params.gamma, 0.0);
    let gtc = params.gamma_tau().conj();
    // Channels: (Z_cc, Z_Pc, Z_cP, Z_PP).
    let mut a = DMatrix::from_element(4, 4, ZERO);
    let mut b = DMatrix::from_element(4, 4, ZERO);
    for (zc, zp) in [(0, 1), (2, 3)] {
        a[(zc, zc)] = g;
        a[(zc, zp)] = im;
        a[(zp, zc)] = im;
        b[(zc, zc)] = gtc;
    }
    let x0 = vec![
        C64::new(initial.photons, 0.0),
        initial.coherence,
        initial.coherence.conj(),
        C64::new(initial.emitter_population, 0.0),
    ];
    let system = LinearDdeSystem::new(a, b, params.tau, x0)?;
    let sol = integrate(&system, grid)?;
    let mut ch = sol.channels.into_iter();
    Ok(OriginCorrelators {
        z_cc: ch.next().expect("4 channels"),
        z_pc: ch.next().expect("4 channels"),
        z_cp: ch.next().expect("4 channels"),
        z_pp: ch.next().expect("4 channels"),
    })
}

/// All correlators of one interval, `N_Δ + 1` samples per channel including
/// the closing corner.
#[derive(Debug, Clone)]
pub struct CorrelatorBlock {
    pub interval: usize,
    pub start_time: f64,
    pub dt: f64,
    pub cc: Vec<Vec<C64>>,
    pub pc: Vec<Vec<C64>>,
    pub cp: Vec<Vec<C64>>,
    pub pp: Vec<Vec<C64>>,
}

impl CorrelatorBlock {
    pub fn width(&self) -> usize {
        self.cc.len()
    }

    /// Values of every `j` at local step `k`.
    pub fn at(&self, k: usize) -> Vec<Quad> {
        (0..self.width())
            .map(|j| Quad {
                cc: self.cc[j][k],
                pc: self.pc[j][k],
                cp: self.cp[j][k],
                pp: self.pp[j][k],
            })
            .collect()
    }

    pub fn closing(&self) -> Vec<Quad> {
        self.at(self.cc[0].len() - 1)
    }

    /// Channels in dump order: for each `j`, `cc, pc, cp, pp`.
    pub fn channels(&self) -> impl Iterator<Item = (String, &[C64])> + '_ {
        (0..self.width()).flat_map(move |j| {
            [
                (format!("cc{j}"), self.cc[j].as_slice()),
                (format!("pc{j}"), self.pc[j].as_slice()),
                (format!("cp{j}"), self.cp[j].as_slice()),
                (format!("pp{j}"), self.pp[j].as_slice()),
            ]
        })
    }
}

/// What survives a corner: `cc[j]` and `cp[j]` of the finished interval for
/// every `j`, plus the photon-number record so far.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    pub s_cc: Vec<Vec<C64>>,
    pub s_cp: Vec<Vec<C64>>,
    pub photon_record: Vec<f64>,
}

impl MemoryStore {
    /// Number of retained values: `3·i·N_Δ` on entry to interval `i`.
    pub fn retained(&self) -> usize {
        self.s_cc.iter().map(Vec::len).sum::<usize>()
            + self.s_cp.iter().map(Vec::len).sum::<usize>()
            + self.photon_record.len()
    }
}

/// Corner values for interval `i`: continuity for `j < i`, origin
/// correlators for the newborn `j = i`.
pub fn corner_seed(
    previous: Option<&CorrelatorBlock>,
    origin: &OriginCorrelators,
    i: usize,
    n: usize,
) -> Vec<Quad> {
    let mut seed = previous.map(CorrelatorBlock::closing).unwrap_or_default();
    seed.push(origin.corner(i, n));
    seed
}

/// Integrates interval `i` from `seed` using `memory` for the delayed reads.
/// Returns the block and the store to carry into interval `i + 1`.
pub fn advance_interval(
    i: usize,
    seed: &[Quad],
    memory: MemoryStore,
    params: &ModelParams,
    grid: &TimeGrid,
    variant: RhsVariant,
) -> Result<(CorrelatorBlock, MemoryStore), HierarchyError> {
    assert_eq!(seed.len(), i + 1, "seed width");
    let n = grid.steps_per_tau();
    let dt = grid.dt();
    if i >= 1 && (memory.s_cc.len() < i || memory.s_cp.len() < i) {
        return Err(HierarchyError::MissingMemory {
            interval: i,
            j: memory.s_cc.len().min(memory.s_cp.len()) + 1,
        });
    }
    let width = i + 1;
    let dim = 4 * width;
    let mut x = vec![ZERO; dim];
    for (j, q) in seed.iter().enumerate() {
        q.write(&mut x[4 * j..4 * j + 4]);
    }
    let mut out: Vec<Vec<C64>> = (0..dim).map(|_| Vec::with_capacity(n + 1)).collect();
    let push = |out: &mut Vec<Vec<C64>>, x: &[C64]| {
        for (c, v) in out.iter_mut().zip(x) {
            c.push(*v);
        }
    };
    push(&mut out, &x);

    // Stored segments close on this interval's seed values.
    let views: Vec<(SegmentView<'_>, SegmentView<'_>)> = (0..i)
        .map(|j| {
            (
                SegmentView::new(&memory.s_cc[j], seed[j].cc),
                SegmentView::new(&memory.s_cp[j], seed[j].cp),
            )
        })
        .collect();

    let mut ws = Rk4Workspace::new(dim);
    for local in 0..n {
        dde::rk4_step(&mut x, dt, &mut ws, |stage: Stage, state, dx| {
            let first = (width > 1).then(|| Quad::from_slice(&state[4..8]));
            for j in 0..width {
                let q = Quad::from_slice(&state[4 * j..4 * j + 4]);
                let next = (j + 1 < width).then(|| Quad::from_slice(&state[4 * j + 4..4 * j + 8]));
                let mem = (j >= 1).then(|| {
                    let (scc, scp) = &views[j - 1];
                    DelayedReads {
                        cc: scc.sample(local, stage),
                        cp: scp.sample(local, stage),
                    }
                });
                channel_rhs(params, variant, i, j, q, next, first, mem)
                    .write(&mut dx[4 * j..4 * j + 4]);
            }
        });
        if x.iter().any(|z| !z.is_finite()) {
            return Err(HierarchyError::NonFiniteState {
                interval: i,
                step: local + 1,
            });
        }
        push(&mut out, &x);
    }
    drop(views);

    let mut it = out.into_iter();
    let mut block = CorrelatorBlock {
        interval: i,
        start_time: grid.time_of(i * n),
        dt,
        cc: Vec::with_capacity(width),
        pc: Vec::with_capacity(width),
        cp: Vec::with_capacity(width),
        pp: Vec::with_capacity(width),
    };
    for _ in 0..width {
        block.cc.push(it.next().expect("channel"));
        block.pc.push(it.next().expect("channel"));
        block.cp.push(it.next().expect("channel"));
        block.pp.push(it.next().expect("channel"));
    }

    let mut photon_record = memory.photon_record;
    photon_record.extend(block.cc[0][..n].iter().map(|z| z.re));
    let next_memory = MemoryStore {
        s_cc: block.cc.iter().map(|v| v[..n].to_vec()).collect(),
        s_cp: block.cp.iter().map(|v| v[..n].to_vec()).collect(),
        photon_record,
    };
    Ok((block, next_memory))
}

/// Run options.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HierarchyOptions {
    pub variant: RhsVariant,
    /// Keep every block for inspection or dumping.
    pub keep_blocks: bool,
}

#[derive(Debug, Clone)]
pub struct HierarchyRun {
    pub grid: TimeGrid,
    /// `⟨c†c⟩` on every grid point.
    pub photon_number: Vec<f64>,
    /// `⟨P†P⟩` on every grid point.
    pub emitter_population: Vec<f64>,
    /// Retained values counted on entry to each interval.
    pub memory_counts: Vec<usize>,
    /// Largest jump of any continuing channel across a corner (zero by
    /// construction; kept as a consistency check).
    pub corner_jump: f64,
    pub blocks: Vec<CorrelatorBlock>,
    pub origin: OriginCorrelators,
}

impl HierarchyRun {
    pub fn photon_number(&self) -> &[f64] {
        &self.photon_number
    }

    pub fn emitter_population(&self) -> &[f64] {
        &self.emitter_population
    }
}

pub fn run(
    params: &ModelParams,
    initial: &InitialState,
    grid: &TimeGrid,
) -> Result<HierarchyRun, HierarchyError> {
    run_with(params, initial, grid, HierarchyOptions::default())
}

pub fn run_with(
    params: &ModelParams,
    initial: &InitialState,
    grid: &TimeGrid,
    opts: HierarchyOptions,
) -> Result<HierarchyRun, HierarchyError> {
    initial.validate(params)?;
    let origin = evolve_origin_correlators(params, initial, grid)?;
    let n = grid.steps_per_tau();
    let mut memory = MemoryStore::default();
    let mut previous: Option<CorrelatorBlock> = None;
    let mut blocks = Vec::new();
    let mut memory_counts = Vec::with_capacity(grid.n_intervals());
    let mut emitter_population = Vec::with_capacity(grid.n_steps() + 1);
    let mut corner_jump: f64 = 0.0;

    for i in 0..grid.n_intervals() {
        memory_counts.push(memory.retained());
        let seed = if i == 0 {
            vec![Quad {
                cc: C64::new(initial.photons, 0.0),
                pc: initial.coherence,
                cp: initial.coherence.conj(),
                pp: C64::new(initial.emitter_population, 0.0),
            }]
        } else {
            corner_seed(previous.as_ref(), &origin, i, n)
        };
        let (block, next) = advance_interval(i, &seed, memory, params, grid, opts.variant)?;
        if let Some(prev) = &previous {
            for (a, b) in prev.closing().iter().zip(block.at(0)) {
                let d = (a.cc - b.cc)
                    .norm()
                    .max((a.pc - b.pc).norm())
                    .max((a.cp - b.cp).norm())
                    .max((a.pp - b.pp).norm());
                corner_jump = corner_jump.max(d);
            }
        }
        emitter_population.extend(block.pp[0][..n].iter().map(|z| z.re));
        memory = next;
        if opts.keep_blocks {
            if let Some(p) = previous.take() {
                blocks.push(p);
            }
        }
        previous = Some(block);
    }

    let last = previous.expect("at least one interval");
    let mut photon_number = memory.photon_record;
    photon_number.push(last.cc[0][n].re);
    emitter_population.push(last.pp[0][n].re);
    if opts.keep_blocks {
        blocks.push(last);
    }
    Ok(HierarchyRun {
        grid: *grid,
        photon_number,
        emitter_population,
        memory_counts,
        corner_jump,
        blocks,
        origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::empty_cavity_photon_number;
    use crate::dde::jcm_system;
    use proptest::prelude::*;

    fn quad(v: [f64; 8]) -> Quad {
        Quad {
            cc: C64::new(v[0], v[1]),
            pc: C64::new(v[2], v[3]),
            cp: C64::new(v[4], v[5]),
            pp: C64::new(v[6], v[7]),
        }
    }

    #[test]
    fn first_interval_is_dissipative_jcm() {
        let p = ModelParams::new(0.7, 1.3, 1.1, 0.4);
        let pc = C64::new(0.12, -0.31);
        let block = [Quad {
            cc: C64::new(0.4, 0.0),
            pc,
            cp: pc.conj(),
            pp: C64::new(0.5, 0.0),
        }];
        let d = derive_block_rhs(&p, RhsVariant::Derived, 0, 0, &block, None).unwrap();
        let (nc, coh, np) = dissipative_jcm_rhs(&p, 0.4, pc, 0.5);
        assert_eq!(d.cc, C64::new(nc, 0.0));
        assert_eq!(d.pc, coh);
        assert_eq!(d.pp, C64::new(np, 0.0));
        assert_eq!(d.cp, coh.conj());
    }

    #[test]
    fn second_interval_terms() {
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.3);
        let gt = p.gamma_tau();
        let im = C64::new(0.0, 0.5);
        let b0 = quad([0.3, 0.0, 0.1, 0.2, 0.1, -0.2, 0.4, 0.0]);
        let b1 = quad([0.05, 0.02, -0.03, 0.07, 0.01, 0.09, 0.2, -0.1]);
        let block = [b0, b1];
        let mem = DelayedReads {
            cc: C64::new(0.11, -0.04),
            cp: C64::new(-0.02, 0.06),
        };
        let d0 = derive_block_rhs(&p, RhsVariant::Derived, 1, 0, &block, None).unwrap();
        // ∂⟨c†c⟩ = −2Γ⟨c†c⟩ + 2Re[Γ_τ⟨c†₀c₁⟩] + iM(⟨P†c⟩ − ⟨c†P⟩)
        let want = -2.0 * 0.3 + 2.0 * (gt * b1.cc).re + (im * (b0.pc - b0.cp)).re;
        assert!((d0.cc.re - want).abs() < 1e-15 && d0.cc.im.abs() < 1e-15);
        let want_pc = -b0.pc + gt * b1.pc + im * b0.cc - im * b0.pp;
        assert!((d0.pc - want_pc).norm() < 1e-15);
        let d1 = derive_block_rhs(&p, RhsVariant::Derived, 1, 1, &block, Some(mem)).unwrap();
        let want = b1.cc * -2.0 + gt.conj() * mem.cc + im * b1.pc - im * b1.cp;
        assert!((d1.cc - want).norm() < 1e-15);
        let want = -b1.cp + gt.conj() * mem.cp - im * b1.cc + im * b1.pp;
        assert!((d1.cp - want).norm() < 1e-15);
        // No Θ_2 term at j = 1 in interval 1.
        let want = -b1.pc + im * b1.cc - im * b1.pp;
        assert!((d1.pc - want).norm() < 1e-15);
    }

    #[test]
    fn printed_variant_uses_self_coupling() {
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.0);
        let b0 = quad([0.3, 0.0, 0.1, 0.2, 0.1, -0.2, 0.4, 0.0]);
        let b1 = quad([0.05, 0.02, -0.03, 0.07, 0.01, 0.09, 0.2, -0.1]);
        let mem = DelayedReads {
            cc: C64::new(0.11, -0.04),
            cp: C64::new(-0.02, 0.06),
        };
        let derived =
            derive_block_rhs(&p, RhsVariant::Derived, 1, 1, &[b0, b1], Some(mem)).unwrap();
        let printed =
            derive_block_rhs(&p, RhsVariant::Printed, 1, 1, &[b0, b1], Some(mem)).unwrap();
        assert!(((printed.cc - derived.cc) - (b1.cc - mem.cc)).norm() < 1e-15);
        assert_eq!(printed.cp, derived.cp);
    }

    #[test]
    fn missing_memory_is_reported() {
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.0);
        let block = [Quad::default(); 2];
        assert_eq!(
            derive_block_rhs(&p, RhsVariant::Derived, 1, 1, &block, None),
            Err(HierarchyError::MissingMemory { interval: 1, j: 1 })
        );
    }

    #[test]
    fn origin_correlators_match_conjugate_amplitudes() {
        let p = ModelParams::new(1.0, 1.5, 0.8, 0.9);
        let grid = TimeGrid::new(1.5, 300, 4).unwrap();
        let z = evolve_origin_correlators(&p, &InitialState::emitter_excited(), &grid).unwrap();
        let sol = dde::integrate(&jcm_system(&p), &grid).unwrap();
        for k in 0..=grid.n_steps() {
            assert!((z.z_pp.values()[k] - sol.channel(0).values()[k].conj()).norm() < 1e-12);
            assert!((z.z_cp.values()[k] - sol.channel(1).values()[k].conj()).norm() < 1e-12);
            assert_eq!(z.z_cc.values()[k], ZERO);
        }
    }

    #[test]
    fn origin_without_exchange_or_loss() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0);
        let grid = TimeGrid::new(1.0, 100, 3).unwrap();
        let z = evolve_origin_correlators(&p, &InitialState::emitter_excited(), &grid).unwrap();
        assert!(z.z_cp.values().iter().all(|v| *v == ZERO));
        let p = ModelParams::new(0.0, 1.0, 1.3, 0.0);
        let z = evolve_origin_correlators(&p, &InitialState::emitter_excited(), &grid).unwrap();
        for (a, b) in z.z_pp.values().iter().zip(z.z_cp.values()) {
            assert!((a.norm_sqr() + b.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_schrodinger_amplitudes() {
        let p = ModelParams::new(1.0, 2.0, 1.0, 0.7);
        let grid = TimeGrid::new(2.0, 400, 5).unwrap();
        let h = run(&p, &InitialState::emitter_excited(), &grid).unwrap();
        let sol = dde::integrate(&jcm_system(&p), &grid).unwrap();
        let worst = h
            .photon_number
            .iter()
            .zip(sol.channel(1).values())
            .map(|(a, c)| (a - c.norm_sqr()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        assert_eq!(h.photon_number.len(), grid.n_steps() + 1);
        assert_eq!(h.photon_number[0], 0.0);
    }

    #[test]
    fn memory_budget_and_corners() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0);
        let grid = TimeGrid::new(1.0, 50, 6).unwrap();
        let h = run(&p, &InitialState::emitter_excited(), &grid).unwrap();
        for (i, &c) in h.memory_counts.iter().enumerate() {
            assert_eq!(c, 3 * i * 50);
        }
        assert!(h.corner_jump < 1e-9);
    }

    #[test]
    fn empty_cavity_without_emitter_coupling() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.6);
        let grid = TimeGrid::new(1.0, 400, 2).unwrap();
        let h = run(&p, &InitialState::cavity_photons(3.0), &grid).unwrap();
        for (k, n) in h.photon_number[..grid.n_steps()].iter().enumerate() {
            let want = empty_cavity_photon_number(&p, 3.0, grid.time_of(k)).unwrap();
            assert!((n - want).abs() < 1e-9, "{k}: {n} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_initial_states() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0);
        let grid = TimeGrid::new(1.0, 10, 1).unwrap();
        for s in [
            InitialState::cavity_photons(-1.0),
            InitialState::cavity_photons(2.0),
            InitialState {
                photons: 0.5,
                emitter_population: 0.5,
                coherence: C64::new(0.6, 0.0),
            },
        ] {
            assert!(matches!(
                run(&p, &s, &grid),
                Err(HierarchyError::InvalidInitialState(_))
            ));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn excitation_bounded_and_hermitian(
            gamma in 0.2f64..2.0,
            m in 0.1f64..2.0,
            tau in 0.5f64..3.0,
            phase in 0.0f64..std::f64::consts::TAU,
        ) {
            let p = ModelParams::new(gamma, tau, m, phase);
            let grid = TimeGrid::new(tau, 60, 4).unwrap();
            let h = run_with(&p, &InitialState::emitter_excited(), &grid, HierarchyOptions { keep_blocks: true, ..Default::default() }).unwrap();
            let n = grid.steps_per_tau();
            let total: Vec<f64> = h.photon_number.iter().zip(&h.emitter_population).map(|(a, b)| a + b).collect();
            for t in &total {
                prop_assert!(*t <= 1.0 + 1e-9);
            }
            for k in 0..n {
                prop_assert!(total[k + 1] <= total[k] + 1e-12);
            }
            for b in &h.blocks {
                for k in 0..=n {
                    prop_assert!((b.cp[0][k] - b.pc[0][k].conj()).norm() < 1e-9);
                    prop_assert!(b.cc[0][k].im.abs() < 1e-9 && b.pp[0][k].im.abs() < 1e-9);
                }
            }
        }
    }
}
