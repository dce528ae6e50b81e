//! Dynamic state and recorded trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::params::RssParams;

/// Positions and velocities of the front (POV) and rear (SV) vehicles at one
/// instant, in a 1-D lane coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioState {
    pub x_f: f64,
    pub v_f: f64,
    pub x_r: f64,
    pub v_r: f64,
}

impl ScenarioState {
    /// Validating constructor: finite values, no reversing.
    pub fn new(x_f: f64, v_f: f64, x_r: f64, v_r: f64) -> Result<Self> {
        let s = Self { x_f, v_f, x_r, v_r };
        s.validate()?;
        Ok(s)
    }

    /// Rear vehicle at the origin, front vehicle `gap` ahead.
    pub fn from_gap(gap: f64, v_r: f64, v_f: f64) -> Result<Self> {
        Self::new(gap, v_f, 0.0, v_r)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("x_f", self.x_f)?;
        ensure_finite("v_f", self.v_f)?;
        ensure_finite("x_r", self.x_r)?;
        ensure_finite("v_r", self.v_r)?;
        if self.v_f < 0.0 || self.v_r < 0.0 {
            return Err(Error::Domain(format!(
                "velocities must be >= 0 (v_f = {}, v_r = {})",
                self.v_f, self.v_r
            )));
        }
        Ok(())
    }

    pub fn gap(&self) -> f64 {
        self.x_f - self.x_r
    }

    /// Relative velocity of the rear vehicle with respect to the front one.
    pub fn closing_speed(&self) -> f64 {
        self.v_r - self.v_f
    }
}

/// Which controller is driving the SV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "BC")]
    Bc,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Ac => "AC",
            ControlMode::Bc => "BC",
        }
    }
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AC" => Ok(ControlMode::Ac),
            "BC" => Ok(ControlMode::Bc),
            other => Err(Error::Parse(format!("unknown mode `{other}` (expected AC or BC)"))),
        }
    }
}

/// One timestamped sample. `a_r` is the SV acceleration applied from `t`
/// until the next sample; `mode` is the controller in charge over that span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: ScenarioState,
    pub a_r: f64,
    pub mode: ControlMode,
}

/// A validated, non-empty, strictly time-ordered sequence of samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    params: RssParams,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>, params: RssParams) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        for (i, s) in samples.iter().enumerate() {
            ensure_finite("t", s.t)?;
            ensure_finite("a_r", s.a_r)?;
            s.state
                .validate()
                .map_err(|e| Error::InvalidTrajectory(format!("sample {i}: {e}")))?;
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::InvalidTrajectory(format!(
                    "timestamps not strictly increasing at sample {i} (t = {})",
                    s.t
                )));
            }
        }
        Ok(Self { samples, params })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn params(&self) -> &RssParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Prefix of the first `n` samples (at least one).
    pub fn prefix(&self, n: usize) -> Result<Trajectory> {
        Trajectory::new(self.samples[..n.min(self.samples.len())].to_vec(), self.params)
    }

    /// Nominal sample period: the first interval, or 0 for a single sample.
    pub fn nominal_period(&self) -> f64 {
        match self.samples.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Index of the first sample whose gap is at or below the vehicle length.
    pub fn first_collision_index(&self) -> Option<usize> {
        let len = self.params.vehicle_length();
        self.samples.iter().position(|s| s.state.gap() <= len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, gap: f64) -> TrajectorySample {
        TrajectorySample {
            t,
            state: ScenarioState::from_gap(gap, 10.0, 10.0).unwrap(),
            a_r: 0.0,
            mode: ControlMode::Ac,
        }
    }

    #[test]
    fn negative_velocity_rejected() {
        assert!(ScenarioState::new(10.0, -1.0, 0.0, 3.0).is_err());
        assert!(ScenarioState::new(10.0, 1.0, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        let p = RssParams::reference();
        assert_eq!(Trajectory::new(vec![], p), Err(Error::EmptyTrajectory));
        assert!(Trajectory::new(vec![sample(0.0, 5.0), sample(0.0, 5.0)], p).is_err());
        let t = Trajectory::new(vec![sample(0.0, 5.0), sample(0.1, 0.0)], p).unwrap();
        assert_eq!(t.first_collision_index(), Some(1));
        assert!((t.nominal_period() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("AC".parse::<ControlMode>().unwrap(), ControlMode::Ac);
        assert_eq!(" BC".parse::<ControlMode>().unwrap(), ControlMode::Bc);
        assert!("ac".parse::<ControlMode>().is_err());
    }
}
