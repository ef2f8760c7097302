//! Comparison and shape metrics on sampled trajectories.

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("trajectories differ in length ({left} vs {right})")]
    GridMismatch { left: usize, right: usize },
    #[error("window [{from}, {to}) is empty or out of range for {len} samples")]
    EmptyWindow { from: usize, to: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Deviation {
    pub max: f64,
    pub mean: f64,
    /// Index of the largest deviation.
    pub argmax: usize,
}

/// Pointwise `|a − b|` statistics.
pub fn deviation(a: &[f64], b: &[f64]) -> Result<Deviation, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::GridMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut out = Deviation::default();
    let mut sum = 0.0;
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let d = (x - y).abs();
        sum += d;
        if d > out.max || (d.is_nan() && !out.max.is_nan()) {
            out.max = d;
            out.argmax = k;
        }
    }
    out.mean = if a.is_empty() {
        0.0
    } else {
        sum / a.len() as f64
    };
    Ok(out)
}

fn check_window(len: usize, from: usize, to: usize) -> Result<(), MetricError> {
    if from >= to || to > len {
        return Err(MetricError::EmptyWindow { from, to, len });
    }
    Ok(())
}

/// Strict interior local maxima of `values[from..to]`, as global indices.
pub fn local_maxima(values: &[f64], from: usize, to: usize) -> Result<Vec<usize>, MetricError> {
    check_window(values.len(), from, to)?;
    let lo = from.max(1);
    let hi = to.min(values.len() - 1);
    Ok((lo..hi)
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .collect())
}

/// Standard deviation over mean (population form). NaN for an empty slice.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Coefficient of variation of the successive maxima inside `[from, to)`.
/// Returns the CV and the number of maxima found.
pub fn stabilization_cv(
    values: &[f64],
    from: usize,
    to: usize,
) -> Result<(f64, usize), MetricError> {
    let peaks: Vec<f64> = local_maxima(values, from, to)?
        .into_iter()
        .map(|k| values[k])
        .collect();
    Ok((coefficient_of_variation(&peaks), peaks.len()))
}

/// Angular frequency in `(0, omega_max]` carrying the most spectral power
/// of the mean-removed window, scanned on `n_freq` points and refined by a
/// parabolic fit.
pub fn dominant_frequency(
    values: &[f64],
    dt: f64,
    from: usize,
    to: usize,
    omega_max: f64,
    n_freq: usize,
) -> Result<f64, MetricError> {
    check_window(values.len(), from, to)?;
    let w = &values[from..to];
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let power = |omega: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in w.iter().enumerate() {
            let (s, c) = (omega * dt * k as f64).sin_cos();
            re += (v - mean) * c;
            im += (v - mean) * s;
        }
        re * re + im * im
    };
    let step = omega_max / n_freq as f64;
    let spectrum: Vec<f64> = (1..=n_freq).map(|k| power(step * k as f64)).collect();
    let (best, _) = spectrum
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc },
        );
    let omega = step * (best + 1) as f64;
    if best == 0 || best + 1 == spectrum.len() {
        return Ok(omega);
    }
    let (a, b, c) = (spectrum[best - 1], spectrum[best], spectrum[best + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 {
        0.5 * (a - c) / denom
    } else {
        0.0
    };
    Ok(omega + shift * step)
}

/// `2π` over the mean spacing of local maxima in `[from, to)`. Robust to a
/// slow envelope that would dominate a spectrum. `None` with fewer than two
/// maxima.
pub fn beat_frequency(
    values: &[f64],
    dt: f64,
    from: usize,
    to: usize,
) -> Result<Option<f64>, MetricError> {
    let peaks = local_maxima(values, from, to)?;
    if peaks.len() < 2 {
        return Ok(None);
    }
    let spacing = (peaks[peaks.len() - 1] - peaks[0]) as f64 * dt / (peaks.len() - 1) as f64;
    Ok(Some(2.0 * PI / spacing))
}

/// Index in `[from, to)` where `|Δ²values|` peaks, i.e. where a first
/// derivative jump sits.
pub fn kink_index(values: &[f64], from: usize, to: usize) -> Result<usize, MetricError> {
    check_window(values.len(), from, to)?;
    let lo = from.max(1);
    let hi = to.min(values.len() - 1);
    if lo >= hi {
        return Err(MetricError::EmptyWindow {
            from,
            to,
            len: values.len(),
        });
    }
    let mut best = (lo, f64::NEG_INFINITY);
    for k in lo..hi {
        let d = (values[k + 1] - 2.0 * values[k] + values[k - 1]).abs();
        if d > best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

/// Period of an angular frequency.
pub fn period(omega: f64) -> f64 {
    2.0 * PI / omega
}
