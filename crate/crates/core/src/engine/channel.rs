//! Broadcast radio channel: a range disk with optional Nakagami-m fading.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::gamma_ur;

use super::time::SimTime;
use super::EngineError;
use crate::kinematics::Position;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    None,
    /// Received power is Gamma distributed with shape `m` and a mean that
    /// falls off with the inverse square of distance; a frame is received
    /// when the power exceeds `threshold_ratio` times the mean power at the
    /// edge of the range.
    Nakagami { m: f64, threshold_ratio: f64 },
}

impl fmt::Display for Fading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fading::None => f.write_str("none"),
            Fading::Nakagami { m, threshold_ratio } => write!(f, "nakagami:{m},{threshold_ratio}"),
        }
    }
}

impl FromStr for Fading {
    type Err = EngineError;

    /// `none`, `nakagami` (m = 1, q = 1) or `nakagami:<m>,<q>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || EngineError::InvalidChannel(format!("cannot parse fading {s:?}"));
        if s == "none" {
            return Ok(Fading::None);
        }
        let rest = s.strip_prefix("nakagami").ok_or_else(bad)?;
        let (m, q) = if rest.is_empty() {
            (1.0, 1.0)
        } else {
            let args = rest.strip_prefix(':').ok_or_else(bad)?;
            let (m, q) = args.split_once(',').unwrap_or((args, "1"));
            (
                m.trim().parse().map_err(|_| bad())?,
                q.trim().parse().map_err(|_| bad())?,
            )
        };
        let fading = Fading::Nakagami {
            m,
            threshold_ratio: q,
        };
        fading.validate()?;
        Ok(fading)
    }
}

impl Fading {
    fn validate(&self) -> Result<(), EngineError> {
        match *self {
            Fading::None => Ok(()),
            Fading::Nakagami { m, threshold_ratio } => {
                if !(m >= 0.5) || !m.is_finite() {
                    return Err(EngineError::InvalidChannel(format!("nakagami m = {m} < 0.5")));
                }
                if !(threshold_ratio > 0.0) || !threshold_ratio.is_finite() {
                    return Err(EngineError::InvalidChannel(format!(
                        "threshold ratio {threshold_ratio} must be positive"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub range: f64,
    pub fading: Fading,
    pub hop_latency: SimTime,
    /// Exclusive upper bound of the uniform per-frame jitter.
    pub max_jitter: SimTime,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            range: 300.0,
            fading: Fading::None,
            hop_latency: SimTime::from_millis(2),
            max_jitter: SimTime::from_millis(1),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.range > 0.0) || !self.range.is_finite() {
            return Err(EngineError::InvalidChannel(format!("range {} must be positive", self.range)));
        }
        self.fading.validate()
    }

    pub fn reception_probability(&self, distance: f64) -> f64 {
        if distance > self.range {
            return 0.0;
        }
        match self.fading {
            Fading::None => 1.0,
            Fading::Nakagami { m, threshold_ratio } => {
                let ratio = distance / self.range;
                let x = m * threshold_ratio * ratio * ratio;
                if x <= 0.0 {
                    1.0
                } else {
                    gamma_ur(m, x)
                }
            }
        }
    }
}

/// Inclusive range test.
pub fn in_range(a: Position, b: Position, range: f64) -> bool {
    a.distance(&b) <= range
}
