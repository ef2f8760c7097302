//! Feedback-time regimes for the cavity-emitter benchmark, at `M = Γ = 1`
//! and zero feedback phase. Each fixes `τ·M/(2π)`.

use crate::model::ModelParams;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Feedback returns after the cavity has emptied.
    LongTau,
    /// One Rabi period per round trip.
    RabiTau,
    /// Outgoing and returning light overlap.
    ShortTau,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::LongTau, Regime::RabiTau, Regime::ShortTau];

    /// `τ·M/(2π)`
    pub fn ratio(self) -> f64 {
        match self {
            Regime::LongTau => 4.0,
            Regime::RabiTau => 1.0,
            Regime::ShortTau => 0.1,
        }
    }

    pub fn params(self) -> ModelParams {
        let m = 1.0;
        ModelParams::new(1.0, self.ratio() * 2.0 * PI / m, m, 0.0)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::LongTau => "long_tau",
            Regime::RabiTau => "rabi_tau",
            Regime::ShortTau => "short_tau",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown preset `{0}` (expected long_tau, rabi_tau or short_tau)")]
pub struct UnknownRegime(pub String);

impl FromStr for Regime {
    type Err = UnknownRegime;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| UnknownRegime(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_round_trip() {
        for r in Regime::ALL {
            let p = r.params();
            assert!((p.tau * p.coupling_m / (2.0 * PI) - r.ratio()).abs() < 1e-15);
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
        assert!("medium".parse::<Regime>().is_err());
    }
}
