use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use pyragas_core::continuum;
use pyragas_core::dde::{integrate, jcm_system, mirror_system};
use pyragas_core::hierarchy::{self, HierarchyOptions, InitialState, RhsVariant};
use pyragas_core::metrics::deviation;
use pyragas_core::model::{ModelParams, TimeGrid};
use pyragas_core::{jcm_ground_amplitude, mirror_emitter_amplitude};
use std::f64::consts::PI;

fn mirror_error(p: &ModelParams, n: usize) -> f64 {
    let grid = TimeGrid::new(p.tau, n, 4).unwrap();
    let sol = integrate(&mirror_system(p), &grid).unwrap();
    sol.channel(0)
        .values()
        .iter()
        .enumerate()
        .map(|(k, z)| (z - mirror_emitter_amplitude(p, grid.time_of(k)).unwrap()).norm())
        .fold(0.0, f64::max)
}

#[test]
fn dde_is_fourth_order() {
    let p = ModelParams::new(2.0, 1.0, 0.0, 1.0);
    let errs: Vec<f64> = [10, 20, 40].iter().map(|&n| mirror_error(&p, n)).collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 8.0, "{errs:?}");
    }
}

#[test]
fn dde_is_bitwise_deterministic() {
    let p = ModelParams::new(1.0, 1.3, 0.7, 0.2);
    let grid = TimeGrid::new(1.3, 97, 5).unwrap();
    let a = integrate(&jcm_system(&p), &grid).unwrap();
    let b = integrate(&jcm_system(&p), &grid).unwrap();
    assert_eq!(a.channel(1).values(), b.channel(1).values());
}

#[test]
fn continuum_cavity_approaches_series() {
    let p = ModelParams::new(1.0, 1.0, 0.5, 0.0);
    let grid = TimeGrid::new(1.0, 200, 4).unwrap();
    let mut devs = Vec::new();
    for n_modes in [2001usize, 4001] {
        let modes =
            continuum::build_modes(1.0, 1.0, n_modes, 40.0 * PI * (n_modes - 1) as f64 / 2000.0)
                .unwrap();
        let run = continuum::evolve_jcm(&modes, &p, &grid).unwrap();
        let cav = run.cavity.unwrap();
        let dev = cav
            .values()
            .iter()
            .enumerate()
            .map(|(k, z)| {
                (z.norm() - jcm_ground_amplitude(&p, grid.time_of(k)).unwrap().norm()).abs()
            })
            .fold(0.0, f64::max);
        devs.push(dev);
    }
    assert!(devs[1] < devs[0] && devs[0] < 0.02, "{devs:?}");
}

#[test]
fn wider_window_barely_moves_the_reference() {
    let grid = TimeGrid::new(1.0, 100, 3).unwrap();
    let a = continuum::evolve_emitter_only(
        &continuum::build_modes(1.0, 1.0, 4001, 80.0 * PI).unwrap(),
        &grid,
    )
    .unwrap();
    let b = continuum::evolve_emitter_only(
        &continuum::build_modes(1.0, 1.0, 8001, 160.0 * PI).unwrap(),
        &grid,
    )
    .unwrap();
    let d = deviation(&a.emitter.norm_sqr(), &b.emitter.norm_sqr()).unwrap();
    assert!(d.max < 5e-3, "{}", d.max);
}

#[test]
fn first_rabi_peak_at_quarter_period() {
    let m = 5.0;
    let p = ModelParams::new(0.01, 2.0, m, 0.0);
    let grid = TimeGrid::new(2.0, 2000, 1).unwrap();
    let h = hierarchy::run(&p, &InitialState::emitter_excited(), &grid).unwrap();
    let k = (0..grid.n_steps())
        .max_by(|&a, &b| h.photon_number[a].total_cmp(&h.photon_number[b]))
        .unwrap();
    let first_peak = (1..grid.n_steps())
        .find(|&k| {
            h.photon_number[k] > h.photon_number[k - 1]
                && h.photon_number[k] >= h.photon_number[k + 1]
        })
        .unwrap();
    assert!(h.photon_number[k] > 0.9);
    assert_abs_diff_eq!(
        grid.time_of(first_peak),
        PI / (2.0 * m),
        epsilon = 2.0 * grid.dt()
    );
}

#[test]
fn printed_block_departs_from_oracle() {
    // Only the derived block reproduces the amplitudes; the printed
    // self-coupling shows up as soon as feedback is active.
    let p = ModelParams::new(1.0, 1.0, 1.0, 0.0);
    let grid = TimeGrid::new(1.0, 200, 4).unwrap();
    let cg = integrate(&jcm_system(&p), &grid)
        .unwrap()
        .channel(1)
        .norm_sqr();
    let printed = hierarchy::run_with(
        &p,
        &InitialState::emitter_excited(),
        &grid,
        HierarchyOptions {
            variant: RhsVariant::Printed,
            keep_blocks: false,
        },
    )
    .unwrap();
    let derived = hierarchy::run(&p, &InitialState::emitter_excited(), &grid).unwrap();
    let n = grid.steps_per_tau();
    let dp = deviation(&printed.photon_number, &cg).unwrap();
    let dd = deviation(&derived.photon_number, &cg).unwrap();
    assert!(dd.max < 1e-8);
    assert!(dp.max > 1e-3 && dp.argmax > n, "{dp:?}");
    assert_eq!(&printed.photon_number[..=n], &derived.photon_number[..=n]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jcm_norm_non_increasing_before_feedback(
        gamma in 0.1f64..3.0,
        m in 0.0f64..3.0,
        tau in 0.3f64..3.0,
        phase in 0.0f64..6.3,
    ) {
        let p = ModelParams::new(gamma, tau, m, phase);
        let grid = TimeGrid::new(tau, 100, 1).unwrap();
        let sol = integrate(&jcm_system(&p), &grid).unwrap();
        let norm: Vec<f64> = sol.channel(0).norm_sqr().iter().zip(sol.channel(1).norm_sqr()).map(|(a, b)| a + b).collect();
        for w in norm.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-14);
        }
    }

    #[test]
    fn hierarchy_tracks_schrodinger(
        gamma in 0.2f64..2.0,
        m in 0.1f64..2.0,
        tau in 0.5f64..3.0,
        phase in 0.0f64..6.3,
    ) {
        let p = ModelParams::new(gamma, tau, m, phase);
        let grid = TimeGrid::new(tau, ((tau / 0.01).ceil() as usize).max(3), 6).unwrap();
        let h = hierarchy::run(&p, &InitialState::emitter_excited(), &grid).unwrap();
        let cg = integrate(&jcm_system(&p), &grid).unwrap().channel(1).norm_sqr();
        prop_assert!(deviation(&h.photon_number, &cg).unwrap().max < 1e-6);
    }
}
