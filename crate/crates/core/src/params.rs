//! Static parameters of the safe-distance rule.
//!
//! All quantities are SI. Braking rates are stored as positive magnitudes and
//! applied as negative accelerations.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Unvalidated parameter record, as read from a JSON parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub rho: f64,
    pub a_max: f64,
    pub a_brake_min: f64,
    pub a_brake_max: f64,
    #[serde(default)]
    pub vehicle_length: f64,
}

/// Validated rule parameters.
///
/// * `rho` - maximum response time of the rear vehicle (s)
/// * `a_max` - maximum forward acceleration of the rear vehicle (m/s²)
/// * `a_brake_min` - maximum comfortable braking of the rear vehicle (m/s²)
/// * `a_brake_max` - maximum emergency braking of the front vehicle (m/s²)
/// * `vehicle_length` - collision offset (m); the safe distance itself ignores it
///
/// Invariants: `rho > 0`, `a_max >= 0`, `0 < a_brake_min < a_brake_max`,
/// `vehicle_length >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct RssParams {
    rho: f64,
    a_max: f64,
    a_brake_min: f64,
    a_brake_max: f64,
    vehicle_length: f64,
}

impl RssParams {
    /// Builds parameters with zero vehicle length.
    pub fn new(rho: f64, a_max: f64, a_brake_min: f64, a_brake_max: f64) -> Result<Self> {
        validate_params(RawParams {
            rho,
            a_max,
            a_brake_min,
            a_brake_max,
            vehicle_length: 0.0,
        })
    }

    /// Reference set: ρ = 0.3 s, a_max = 2, a_brake_min = 4, a_brake_max = 8 m/s².
    pub fn reference() -> Self {
        Self {
            rho: 0.3,
            a_max: 2.0,
            a_brake_min: 4.0,
            a_brake_max: 8.0,
            vehicle_length: 0.0,
        }
    }

    pub fn with_vehicle_length(self, vehicle_length: f64) -> Result<Self> {
        validate_params(RawParams {
            vehicle_length,
            ..self.into()
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn a_brake_min(&self) -> f64 {
        self.a_brake_min
    }

    pub fn a_brake_max(&self) -> f64 {
        self.a_brake_max
    }

    pub fn vehicle_length(&self) -> f64 {
        self.vehicle_length
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawParams = serde_json::from_str(text)?;
        validate_params(raw)
    }
}

impl From<RssParams> for RawParams {
    fn from(p: RssParams) -> Self {
        RawParams {
            rho: p.rho,
            a_max: p.a_max,
            a_brake_min: p.a_brake_min,
            a_brake_max: p.a_brake_max,
            vehicle_length: p.vehicle_length,
        }
    }
}

impl TryFrom<RawParams> for RssParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        validate_params(raw)
    }
}

/// Checks a raw record against the parameter invariants.
pub fn validate_params(raw: RawParams) -> Result<RssParams> {
    let rho = ensure_finite("rho", raw.rho)?;
    let a_max = ensure_finite("a_max", raw.a_max)?;
    let a_brake_min = ensure_finite("a_brake_min", raw.a_brake_min)?;
    let a_brake_max = ensure_finite("a_brake_max", raw.a_brake_max)?;
    let vehicle_length = ensure_finite("vehicle_length", raw.vehicle_length)?;

    if rho <= 0.0 {
        return Err(Error::NonPositive { name: "rho", value: rho });
    }
    if a_brake_min <= 0.0 {
        return Err(Error::NonPositive {
            name: "a_brake_min",
            value: a_brake_min,
        });
    }
    if a_max < 0.0 {
        return Err(Error::Negative { name: "a_max", value: a_max });
    }
    if vehicle_length < 0.0 {
        return Err(Error::Negative {
            name: "vehicle_length",
            value: vehicle_length,
        });
    }
    if a_brake_min >= a_brake_max {
        return Err(Error::OrderViolation {
            a_brake_min,
            a_brake_max,
        });
    }
    Ok(RssParams {
        rho,
        a_max,
        a_brake_min,
        a_brake_max,
        vehicle_length,
    })
}
