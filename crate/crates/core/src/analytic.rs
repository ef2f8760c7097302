//! Closed-form reference solutions of the feedback models.
//!
//! * [`mirror_emitter_amplitude`]: the emitter in front of a mirror. The same
//!   series describes a single cavity mode decaying into the mirror-bounded
//!   continuum, since in the single-excitation sector a two-level emitter and
//!   a bosonic mode obey identical amplitude equations.
//! * [`jcm_ground_amplitude`]: emitter–cavity system with the cavity under
//!   feedback, at the special coupling `M = Γ/2` where the Laplace inversion
//!   has a finite double-sum form.
//! * [`empty_cavity_photon_number`]: photon number of an uncoupled cavity on
//!   the first two delay intervals.

use crate::model::ModelParams;
use num_complex::Complex64;

type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("closed form requires M = Γ/2 (got M = {m}, Γ = {gamma})")]
    UnsupportedCoupling { m: f64, gamma: f64 },
    #[error("closed form covers t < 2τ = {limit}, got t = {t}")]
    OutOfRangeTime { t: f64, limit: f64 },
    #[error("initial photon number must be non-negative, got {0}")]
    NegativePhotonNumber(f64),
}

/// Highest delay order kept in a series evaluation.
///
/// Orders with `n·τ ≥ t` carry a vanishing Heaviside factor, so
/// `n_max = ⌊t/τ⌋` is exact; larger values change nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTruncation {
    pub n_max: usize,
    /// Absolute bound below which a decreasing tail is dropped (0 disables).
    pub tolerance: f64,
}

impl SeriesTruncation {
    pub fn exact(t: f64, tau: f64) -> Self {
        Self {
            n_max: (t / tau).floor().max(0.0) as usize,
            tolerance: 0.0,
        }
    }
}

/// `ln(n!)` by summation; exact enough for the orders reached here.
fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Emitter amplitude `c_e(t)` for `ċ_e = −Γc_e + Γ_τ c_e(t−τ)Θ(t−τ)`,
/// `c_e(0) = 1`:
///
/// ```text
/// c_e(t) = Σ_n Γ_τⁿ (t−nτ)ⁿ e^{−Γ(t−nτ)} / n! · Θ(t−nτ)
/// ```
pub fn mirror_emitter_amplitude(params: &ModelParams, t: f64) -> Result<C64, AnalyticError> {
    mirror_emitter_amplitude_with(params, t, SeriesTruncation::exact(t, params.tau))
}

pub fn mirror_emitter_amplitude_with(
    params: &ModelParams,
    t: f64,
    trunc: SeriesTruncation,
) -> Result<C64, AnalyticError> {
    if t < 0.0 || t.is_nan() {
        return Err(AnalyticError::NegativeTime(t));
    }
    let gamma = params.gamma;
    let gt = params.gamma_tau();
    let rate = gt.norm();
    let phase = gt.arg();
    let mut sum = C64::new((-gamma * t).exp(), 0.0);
    if rate == 0.0 {
        return Ok(sum);
    }
    let mut peaked = false;
    let mut prev = f64::INFINITY;
    for n in 1..=trunc.n_max {
        let u = t - n as f64 * params.tau;
        if u <= 0.0 {
            break;
        }
        let nf = n as f64;
        let ln_mag = nf * (rate * u).ln() - ln_factorial(n) - gamma * u;
        let mag = ln_mag.exp();
        sum += C64::from_polar(mag, nf * phase);
        if trunc.tolerance > 0.0 {
            peaked |= mag < prev;
            if peaked && mag < trunc.tolerance {
                break;
            }
            prev = mag;
        }
    }
    Ok(sum)
}

/// Cavity amplitude `c_g(t)` of the emitter–cavity system
///
/// ```text
/// ċ_e = −iM c_g,   ċ_g = −Γc_g − iM c_e + Γ_τ c_g(t−τ)Θ(t−τ)
/// ```
///
/// with `c_e(0) = 1`, valid only at `M = Γ/2`. With `a = Γ/2`, `u = t − nτ`,
/// `x = a·u`:
///
/// ```text
/// c_g(t) = −i Σ_n 2ⁿ e^{inφ} Θ(u) Σ_{k=0..n} C(n,k) (−1)^k x^{n+k+1} e^{−x} / (n+k+1)!
/// ```
///
/// The overall `−i` and the `e^{inφ}` factors follow the rotating-frame
/// convention of the delay equation above.
pub fn jcm_ground_amplitude(params: &ModelParams, t: f64) -> Result<C64, AnalyticError> {
    if t < 0.0 || t.is_nan() {
        return Err(AnalyticError::NegativeTime(t));
    }
    let gamma = params.gamma;
    let m = params.coupling_m;
    if (m - gamma / 2.0).abs() > 1e-12 * gamma.max(1.0) {
        return Err(AnalyticError::UnsupportedCoupling { m, gamma });
    }
    if gamma == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let a = gamma / 2.0;
    let feedback = params.gamma_tau().norm() > 0.0;
    let n_max = if feedback {
        SeriesTruncation::exact(t, params.tau).n_max
    } else {
        0
    };
    let mut sum = C64::new(0.0, 0.0);
    for n in 0..=n_max {
        let u = t - n as f64 * params.tau;
        if u <= 0.0 {
            break;
        }
        let x = a * u;
        let lnx = x.ln();
        let ln_nf = ln_factorial(n);
        let mut inner = 0.0;
        for k in 0..=n {
            let p = n + k + 1;
            let ln_binom = ln_nf - ln_factorial(k) - ln_factorial(n - k);
            let mag = (ln_binom + p as f64 * lnx - x - ln_factorial(p)).exp();
            if k % 2 == 0 {
                inner += mag;
            } else {
                inner -= mag;
            }
        }
        let scale = 2f64.powi(n as i32) * inner;
        sum += C64::from_polar(scale, n as f64 * params.phase);
    }
    Ok(C64::new(0.0, -1.0) * sum)
}

/// Photon number `⟨c†c⟩(t)` of an uncoupled cavity with initial photon
/// number `n0`, for `0 ≤ t < 2τ`. The coupling `M` is ignored.
pub fn empty_cavity_photon_number(
    params: &ModelParams,
    n0: f64,
    t: f64,
) -> Result<f64, AnalyticError> {
    if t < 0.0 || t.is_nan() {
        return Err(AnalyticError::NegativeTime(t));
    }
    if n0 < 0.0 {
        return Err(AnalyticError::NegativePhotonNumber(n0));
    }
    let tau = params.tau;
    if t >= 2.0 * tau {
        return Err(AnalyticError::OutOfRangeTime {
            t,
            limit: 2.0 * tau,
        });
    }
    let g = params.gamma;
    let base = n0 * (-2.0 * g * t).exp();
    if t < tau {
        return Ok(base);
    }
    let gt = params.gamma_tau();
    let u = t - tau;
    Ok(n0 * gt.norm_sqr() * (-2.0 * g * u).exp() * u * u
        + 2.0 * n0 * gt.re * (-g * (2.0 * t - tau)).exp() * u
        + base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn mirror_initial_value() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(
            mirror_emitter_amplitude(&p, 0.0).unwrap(),
            C64::new(1.0, 0.0)
        );
    }

    #[test]
    fn mirror_before_first_roundtrip_is_pure_decay() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0);
        let z = mirror_emitter_amplitude(&p, 0.5).unwrap();
        assert!((z - C64::new((-0.5f64).exp(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn mirror_rejects_negative_time() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0);
        assert!(matches!(
            mirror_emitter_amplitude(&p, -0.1),
            Err(AnalyticError::NegativeTime(_))
        ));
    }

    #[test]
    fn mirror_second_interval_by_hand() {
        // c_e = e^{−Γt} + Γ_τ (t−τ) e^{−Γ(t−τ)} on [τ, 2τ)
        let p = ModelParams::new(0.8, 1.3, 0.0, 0.9);
        let t = 2.1;
        let want = C64::new((-0.8f64 * t).exp(), 0.0)
            + p.gamma_tau() * (t - 1.3) * (-0.8 * (t - 1.3)).exp();
        assert!((mirror_emitter_amplitude(&p, t).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn jcm_initial_value_and_coupling_check() {
        let p = ModelParams::new(1.0, 2.0, 0.5, 0.0);
        assert_eq!(jcm_ground_amplitude(&p, 0.0).unwrap(), C64::new(0.0, 0.0));
        let bad = ModelParams::new(1.0, 2.0, 0.7, 0.0);
        assert!(matches!(
            jcm_ground_amplitude(&bad, 1.0),
            Err(AnalyticError::UnsupportedCoupling { .. })
        ));
    }

    #[test]
    fn jcm_first_interval_matches_critically_damped_pair() {
        // Before τ: ċ_e = −iM c_g, ċ_g = −Γc_g − iM c_e. At M = Γ/2 the
        // characteristic polynomial s² + Γs + M² has the double root −Γ/2,
        // giving c_g = −iM t e^{−Γt/2}.
        let p = ModelParams::new(1.0, 10.0, 0.5, 0.0);
        for &t in &[0.3, 1.0, 4.0, 9.5] {
            let want = C64::new(0.0, -0.5 * t * (-0.5f64 * t).exp());
            let got = jcm_ground_amplitude(&p, t).unwrap();
            assert!((got - want).norm() < 1e-14, "t={t}");
        }
    }

    #[test]
    fn empty_cavity_initial_and_continuity() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(empty_cavity_photon_number(&p, 1.0, 0.0).unwrap(), 1.0);
        let left = empty_cavity_photon_number(&p, 1.0, 1.0 - 1e-12).unwrap();
        let at = empty_cavity_photon_number(&p, 1.0, 1.0).unwrap();
        assert!((left - (-2.0f64).exp()).abs() < 1e-11);
        assert!((at - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn empty_cavity_range_is_enforced() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 0.0);
        assert!(matches!(
            empty_cavity_photon_number(&p, 1.0, 2.0),
            Err(AnalyticError::OutOfRangeTime { .. })
        ));
    }

    proptest! {
        #[test]
        fn extra_orders_change_nothing(t in 0.0f64..20.0, tau in 0.2f64..3.0, phase in 0.0f64..(2.0 * PI), extra in 1usize..10) {
            let p = ModelParams::new(1.0, tau, 0.0, phase);
            let exact = SeriesTruncation::exact(t, tau);
            let more = SeriesTruncation { n_max: exact.n_max + extra, tolerance: 0.0 };
            prop_assert_eq!(
                mirror_emitter_amplitude_with(&p, t, exact).unwrap(),
                mirror_emitter_amplitude_with(&p, t, more).unwrap()
            );
        }

        #[test]
        fn mirror_amplitude_is_bounded(t in 0.0f64..30.0, tau in 0.1f64..5.0, phase in 0.0f64..(2.0 * PI), gamma in 0.0f64..3.0) {
            let p = ModelParams::new(gamma, tau, 0.0, phase);
            prop_assert!(mirror_emitter_amplitude(&p, t).unwrap().norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn empty_cavity_is_non_negative(t in 0.0f64..1.999, n0 in 0.0f64..50.0, phase in 0.0f64..(2.0 * PI), gamma in 0.0f64..4.0) {
            let p = ModelParams::new(gamma, 1.0, 0.0, phase);
            prop_assert!(empty_cavity_photon_number(&p, n0, t).unwrap() >= 0.0);
        }

        #[test]
        fn long_delay_decay_is_monotone_on_first_interval(t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let p = ModelParams::new(10.0, 1.0, 0.0, 0.0);
            let t2 = (t1 + dt).min(1.0);
            let a = mirror_emitter_amplitude(&p, t1).unwrap().norm();
            let b = mirror_emitter_amplitude(&p, t2).unwrap().norm();
            prop_assert!(b <= a);
        }
    }
}
