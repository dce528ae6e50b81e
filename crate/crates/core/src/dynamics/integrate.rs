//! Fixed-step simulation of both vehicles under arbitrary behaviours.

use serde::{Deserialize, Serialize};

use super::kinematics::{advance, advance_semi_implicit, first_crossing, stop_time_within, vertex};
use super::{Collision, ExecutionTrace, PovBehavior, SvPolicy};
use crate::error::{Error, Result};
use crate::params::RssParams;
use crate::state::{ScenarioState, TrajectorySample};

pub const DEFAULT_DT: f64 = 1e-3;

/// Upper bound on simulated time when no `t_end` is given.
const MAX_SIM_TIME: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Velocity first, then position with the new velocity. First order.
    #[default]
    SemiImplicitEuler,
    /// Exact motion under the acceleration held over each step.
    ExactPiecewise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    /// `None`: stop one step after the SV first comes to rest.
    pub t_end: Option<f64>,
    pub scheme: Scheme,
    /// Keep every step in `samples`. When false only the first and last
    /// samples are kept; `min_gap` and collision detection are unaffected.
    pub record: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_end: None,
            scheme: Scheme::SemiImplicitEuler,
            record: true,
        }
    }
}

impl IntegrateOptions {
    pub fn exact(dt: f64, t_end: Option<f64>) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::ExactPiecewise,
            record: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Step(format!("dt must be > 0, got {}", self.dt)));
        }
        if let Some(t_end) = self.t_end {
            if !(t_end >= 0.0 && t_end.is_finite()) {
                return Err(Error::Step(format!("t_end must be >= 0, got {t_end}")));
            }
        }
        Ok(())
    }
}

struct StepResult {
    next: ScenarioState,
    /// Offset of the first contact within the step, and the contact state.
    contact: Option<(f64, ScenarioState)>,
    sv_stop: Option<f64>,
}

fn moved(s: &ScenarioState, df: (f64, f64), dr: (f64, f64)) -> ScenarioState {
    ScenarioState {
        x_f: s.x_f + df.0,
        v_f: df.1,
        x_r: s.x_r + dr.0,
        v_r: dr.1,
    }
}

fn step_exact(s: &ScenarioState, a_f: f64, a_r: f64, dt: f64, level: f64) -> StepResult {
    let stop_f = stop_time_within(s.v_f, a_f, dt);
    let stop_r = stop_time_within(s.v_r, a_r, dt);
    let gap0 = s.gap();
    let gap = |tau: f64| {
        let df = advance(s.v_f, a_f, tau).0;
        let dr = advance(s.v_r, a_r, tau).0;
        gap0 + (df - dr)
    };

    // piece boundaries, then one vertex per piece
    let mut pieces = [0.0, dt, dt, dt];
    let mut n = 2;
    for stop in [stop_f, stop_r].into_iter().flatten() {
        if stop > 0.0 && stop < dt {
            pieces[n] = stop;
            n += 1;
        }
    }
    pieces[..n].sort_by(f64::total_cmp);
    let mut candidates = [dt; 7];
    candidates[..n].copy_from_slice(&pieces[..n]);
    let mut m = n;
    for w in pieces[..n].windows(2) {
        let (a, b) = (w[0], w[1]);
        let (_, vf) = advance(s.v_f, a_f, a);
        let (_, vr) = advance(s.v_r, a_r, a);
        let ea_f = if stop_f.is_some_and(|t| t <= a) { 0.0 } else { a_f };
        let ea_r = if stop_r.is_some_and(|t| t <= a) { 0.0 } else { a_r };
        if let Some(v) = vertex(a, b, vf - vr, ea_f - ea_r) {
            candidates[m] = v;
            m += 1;
        }
    }

    let contact = first_crossing(gap, &mut candidates[..m], dt, level).map(|tau| {
        (
            tau,
            moved(s, advance(s.v_f, a_f, tau), advance(s.v_r, a_r, tau)),
        )
    });
    StepResult {
        next: moved(s, advance(s.v_f, a_f, dt), advance(s.v_r, a_r, dt)),
        contact,
        sv_stop: stop_r,
    }
}

fn step_semi_implicit(s: &ScenarioState, a_f: f64, a_r: f64, dt: f64, level: f64) -> StepResult {
    let next = moved(
        s,
        advance_semi_implicit(s.v_f, a_f, dt),
        advance_semi_implicit(s.v_r, a_r, dt),
    );
    let (g0, g1) = (s.gap() - level, next.gap() - level);
    let contact = (g1 <= 0.0).then(|| {
        let frac = if g0 > g1 { g0 / (g0 - g1) } else { 0.0 };
        (frac.clamp(0.0, 1.0) * dt, next)
    });
    let sv_stop = if s.v_r + a_r * dt < 0.0 {
        Some(s.v_r / -a_r)
    } else if next.v_r == 0.0 && s.v_r > 0.0 {
        Some(dt)
    } else {
        None
    };
    StepResult {
        next,
        contact,
        sv_stop,
    }
}

/// Simulates the closed loop from `start` until `t_end` (or one step past the
/// SV halt), stopping early at the first contact.
///
/// The SV command and POV acceleration are sampled at the start of each step
/// and held over it. Velocities never go negative: a zero crossing inside a
/// step is solved exactly and the vehicle stays at rest.
pub fn integrate(
    params: &RssParams,
    start: &ScenarioState,
    sv: &mut dyn SvPolicy,
    pov: &mut PovBehavior,
    opts: &IntegrateOptions,
) -> Result<ExecutionTrace> {
    opts.validate()?;
    start.validate()?;
    let dt = opts.dt;
    let level = params.vehicle_length();
    let t_end = opts.t_end.unwrap_or(MAX_SIM_TIME);
    let n_steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as u64;

    let mut samples = Vec::new();
    let mut state = *start;
    let mut t = 0.0;
    let mut min_gap = state.gap();
    let mut sv_halt_time = None;
    let mut collision = None;
    let mut last = None;

    if state.gap() <= level {
        let cmd = sv.command(t, &state, dt)?;
        samples.push(TrajectorySample {
            t,
            state,
            a_r: cmd.accel,
            mode: cmd.mode,
        });
        return Ok(ExecutionTrace {
            samples,
            collision: Some(Collision { t, gap: state.gap() }),
            sv_halt_time,
            min_gap,
        });
    }

    let mut halted_at_step = None;
    for k in 0..n_steps {
        let cmd = sv.command(t, &state, dt)?;
        let a_r = cmd.accel;
        let a_f = pov.accel(params, t, &state);
        let sample = TrajectorySample {
            t,
            state,
            a_r,
            mode: cmd.mode,
        };
        if opts.record || k == 0 {
            samples.push(sample);
        }
        last = Some(sample);

        let step = match opts.scheme {
            Scheme::ExactPiecewise => step_exact(&state, a_f, a_r, dt, level),
            Scheme::SemiImplicitEuler => step_semi_implicit(&state, a_f, a_r, dt, level),
        };

        if let Some((tau, contact_state)) = step.contact {
            let t_c = t + tau;
            let recorded = match opts.scheme {
                Scheme::ExactPiecewise => TrajectorySample {
                    t: t_c.max(t + f64::EPSILON * t.abs().max(1.0)),
                    state: contact_state,
                    a_r,
                    mode: cmd.mode,
                },
                Scheme::SemiImplicitEuler => TrajectorySample {
                    t: (k + 1) as f64 * dt,
                    state: step.next,
                    a_r,
                    mode: cmd.mode,
                },
            };
            min_gap = min_gap.min(recorded.state.gap());
            collision = Some(Collision {
                t: t_c,
                gap: recorded.state.gap(),
            });
            samples.push(recorded);
            last = None;
            break;
        }

        if sv_halt_time.is_none() && step.next.v_r == 0.0 && (state.v_r > 0.0 || a_r <= 0.0) {
            sv_halt_time = Some(t + step.sv_stop.unwrap_or(0.0));
            halted_at_step = Some(k);
        }

        let t_next = (k + 1) as f64 * dt;
        sv.after_step(t_next, &step.next, dt);
        state = step.next;
        t = t_next;
        min_gap = min_gap.min(state.gap());

        if opts.t_end.is_none() && halted_at_step.is_some_and(|h| k > h) {
            break;
        }
    }

    if samples.is_empty() {
        let cmd = sv.command(t, &state, dt)?;
        samples.push(TrajectorySample {
            t,
            state,
            a_r: cmd.accel,
            mode: cmd.mode,
        });
    } else if let Some(prev) = last {
        // final state, with the command that produced it
        samples.push(TrajectorySample {
            t,
            state,
            a_r: prev.a_r,
            mode: prev.mode,
        });
    }

    Ok(ExecutionTrace {
        samples,
        collision,
        sv_halt_time,
        min_gap,
    })
}
