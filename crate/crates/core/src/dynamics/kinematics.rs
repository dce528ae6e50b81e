//! Closed-form longitudinal motion under constant acceleration, with the
//! vehicle held at rest once its velocity reaches zero.

use crate::error::{Error, Result};
use crate::params::RssParams;

fn check_velocity(v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("velocity must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Distance the SV covers under the worst-case proper response: `a_max` for
/// `rho`, then `a_brake_min` until it halts.
pub fn sv_stop_distance(params: &RssParams, v_r: f64) -> Result<f64> {
    check_velocity(v_r)?;
    Ok(sv_stop_distance_unchecked(params, v_r))
}

pub(crate) fn sv_stop_distance_unchecked(params: &RssParams, v_r: f64) -> f64 {
    let rho = params.rho();
    let a_max = params.a_max();
    let peak = v_r + a_max * rho;
    let response_travel = v_r * rho + 0.5 * a_max * rho * rho;
    response_travel + peak * peak / (2.0 * params.a_brake_min())
}

/// Distance the POV covers when braking at `a_brake_max` until it halts.
pub fn pov_stop_distance(params: &RssParams, v_f: f64) -> Result<f64> {
    check_velocity(v_f)?;
    Ok(pov_stop_distance_unchecked(params, v_f))
}

pub(crate) fn pov_stop_distance_unchecked(params: &RssParams, v_f: f64) -> f64 {
    v_f * v_f / (2.0 * params.a_brake_max())
}

/// Time at which a vehicle starting at `v` with acceleration `a` comes to
/// rest, if that happens within `span`.
pub fn stop_time_within(v: f64, a: f64, span: f64) -> Option<f64> {
    if a < 0.0 && v + a * span <= 0.0 {
        Some(v / -a)
    } else {
        None
    }
}

/// Exact `(displacement, velocity)` after `tau` seconds.
pub fn advance(v: f64, a: f64, tau: f64) -> (f64, f64) {
    match stop_time_within(v, a, tau) {
        Some(_) => (v * v / (2.0 * -a), 0.0),
        None => (v * tau + 0.5 * a * tau * tau, v + a * tau),
    }
}

/// Semi-implicit Euler step: the velocity is updated first and then used for
/// the position. A zero crossing inside the step is solved exactly.
pub fn advance_semi_implicit(v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v_next = v + a * dt;
    if v_next < 0.0 {
        (v * v / (2.0 * -a), 0.0)
    } else {
        (v_next * dt, v_next)
    }
}

/// Earliest `tau` in `[0, span]` with `gap(tau) <= level`.
///
/// `candidates` must contain every point where `gap` can have a local
/// extremum (piece boundaries and vertices); between consecutive candidates
/// `gap` must be monotone. The returned time always satisfies
/// `gap(tau) <= level`.
pub(crate) fn first_crossing(
    gap: impl Fn(f64) -> f64,
    candidates: &mut [f64],
    span: f64,
    level: f64,
) -> Option<f64> {
    if gap(0.0) <= level {
        return Some(0.0);
    }
    candidates.sort_by(f64::total_cmp);
    let mut lo = 0.0;
    let inside = candidates.iter().copied().filter(|c| *c > 0.0 && *c < span);
    for c in inside.chain(std::iter::once(span)) {
        if gap(c) <= level {
            let mut hi = c;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if gap(mid) <= level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        lo = c;
    }
    None
}

/// Extremum of the relative position inside `[start, end]` when the relative
/// velocity at `start` is `w` and changes at rate `slope`.
pub(crate) fn vertex(start: f64, end: f64, w: f64, slope: f64) -> Option<f64> {
    if slope == 0.0 {
        return None;
    }
    let t = start - w / slope;
    (t > start && t < end).then_some(t)
}
