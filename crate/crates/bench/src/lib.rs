//! Fixtures shared by the criterion benches.

use pyragas_core::continuum::{self, ModeGrid};
use pyragas_core::model::{ModelParams, TimeGrid};
use pyragas_core::Regime;

/// Regime parameters on the default `dt ≈ 0.01` grid.
pub fn regime(r: Regime, intervals: usize) -> (ModelParams, TimeGrid) {
    let p = r.params();
    let n = ((p.tau / 0.01).ceil() as usize).max(3);
    (p, TimeGrid::new(p.tau, n, intervals).expect("valid grid"))
}

/// Mirror problem at `Γ = τ = 1` with `n_modes` reservoir modes at spacing
/// `Δω = 0.04π`; needs at least 2001 modes to clear the minimum window.
pub fn reservoir(n_modes: usize) -> (ModeGrid, TimeGrid) {
    let window = 0.02 * std::f64::consts::PI * (n_modes - 1) as f64;
    let modes = continuum::build_modes(1.0, 1.0, n_modes, window).expect("valid modes");
    (modes, TimeGrid::new(1.0, 100, 4).expect("valid grid"))
}
