//! Safe longitudinal distance for two vehicles in one lane, same direction.
//!
//! The rear vehicle (SV) must keep
//!
//! ```text
//! x_f - x_r > max(0, v_r·ρ + ½·a_max·ρ² + (v_r + a_max·ρ)²/(2·a_brake_min) - v_f²/(2·a_brake_max))
//! ```
//!
//! The inequality is strict: a margin of exactly zero is unsafe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::RssParams;
use crate::state::ScenarioState;

/// The safe distance split into the terms of the formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeDistanceTerms {
    /// Distance covered while accelerating at `a_max` for the full response time.
    pub response_travel: f64,
    /// Distance needed to stop from `v_r + a_max·ρ` at `a_brake_min`.
    pub sv_braking: f64,
    /// Distance the front vehicle covers when stopping at `a_brake_max`.
    pub pov_braking: f64,
    /// `response_travel + sv_braking - pov_braking`, before clamping.
    pub unclamped: f64,
    /// `max(0, unclamped)`.
    pub d_min: f64,
}

/// Instantaneous evaluation of the safety condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyEvaluation {
    pub d_min: f64,
    /// Pre-clamp value of the right-hand side, for diagnostics.
    pub d_min_unclamped: f64,
    pub gap: f64,
    /// `gap - d_min`; the per-state safety score.
    pub margin: f64,
    pub condition_holds: bool,
}

fn check_velocity(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("{name} must be a finite velocity >= 0, got {v}")));
    }
    Ok(())
}

// The operation order here matches `dynamics::sv_stop_distance` minus
// `dynamics::pov_stop_distance` bit for bit; boundary tests rely on it.
fn unclamped(params: &RssParams, v_r: f64, v_f: f64) -> f64 {
    let rho = params.rho();
    let a_max = params.a_max();
    let peak = v_r + a_max * rho;
    v_r * rho + 0.5 * a_max * rho * rho + peak * peak / (2.0 * params.a_brake_min())
        - v_f * v_f / (2.0 * params.a_brake_max())
}

/// Term-by-term breakdown of the safe distance.
pub fn safe_distance_terms(params: &RssParams, v_r: f64, v_f: f64) -> Result<SafeDistanceTerms> {
    check_velocity("v_r", v_r)?;
    check_velocity("v_f", v_f)?;
    let rho = params.rho();
    let a_max = params.a_max();
    let peak = v_r + a_max * rho;
    let raw = unclamped(params, v_r, v_f);
    Ok(SafeDistanceTerms {
        response_travel: v_r * rho + 0.5 * a_max * rho * rho,
        sv_braking: peak * peak / (2.0 * params.a_brake_min()),
        pov_braking: v_f * v_f / (2.0 * params.a_brake_max()),
        unclamped: raw,
        d_min: raw.max(0.0),
    })
}

/// Minimum safe gap `d_min` for the given velocities. Always finite and `>= 0`.
pub fn safe_distance(params: &RssParams, v_r: f64, v_f: f64) -> Result<f64> {
    check_velocity("v_r", v_r)?;
    check_velocity("v_f", v_f)?;
    Ok(unclamped(params, v_r, v_f).max(0.0))
}

/// Evaluates the safety condition on a (validated) state.
pub fn evaluate(params: &RssParams, state: &ScenarioState) -> SafetyEvaluation {
    let raw = unclamped(params, state.v_r, state.v_f);
    let d_min = raw.max(0.0);
    let gap = state.gap();
    let margin = gap - d_min;
    SafetyEvaluation {
        d_min,
        d_min_unclamped: raw,
        gap,
        margin,
        condition_holds: gap > d_min,
    }
}

pub fn condition_holds(params: &RssParams, state: &ScenarioState) -> bool {
    evaluate(params, state).condition_holds
}
