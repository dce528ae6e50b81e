//! The proper response as a controller state machine: arbitrary bounded
//! behaviour for at most `rho`, then comfortable braking at `a_brake_min`
//! until the SV halts. A halted SV stays halted for the rest of the episode.

use serde::{Deserialize, Serialize};

use crate::dynamics::{SvCommand, SvPolicy};
use crate::error::Result;
use crate::params::RssParams;
use crate::state::{ControlMode, ScenarioState};

/// Slack used when comparing accumulated step times against `rho`.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    ResponseWindow { elapsed: f64 },
    Braking,
    Halted,
}

/// Progress of one proper-response episode. Stages only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePhase {
    pub stage: Stage,
    pub started_at: f64,
    pub start_state_condition_held: bool,
}

impl ResponsePhase {
    /// A fresh episode engaged at time `t`.
    pub fn engage(t: f64, start_state_condition_held: bool) -> Self {
        Self {
            stage: Stage::ResponseWindow { elapsed: 0.0 },
            started_at: t,
            start_state_condition_held,
        }
    }

    pub fn in_window(&self) -> bool {
        matches!(self.stage, Stage::ResponseWindow { .. })
    }
}

/// What the SV does during the response window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Accelerate at `a_max` for the whole window.
    WorstCase,
    /// Keep applying the last command issued before engagement.
    HoldLast { accel: f64 },
    /// Zero acceleration.
    Coast,
    /// Piecewise-constant acceleration: `(until_elapsed, accel)` pairs in
    /// increasing `until_elapsed` order; the last value holds afterwards.
    Schedule { segments: Vec<(f64, f64)> },
}

impl WindowPolicy {
    fn raw_command(&self, params: &RssParams, elapsed: f64) -> f64 {
        match self {
            WindowPolicy::WorstCase => params.a_max(),
            WindowPolicy::HoldLast { accel } => *accel,
            WindowPolicy::Coast => 0.0,
            WindowPolicy::Schedule { segments } => segments
                .iter()
                .find(|(until, _)| elapsed < *until)
                .or(segments.last())
                .map_or(0.0, |&(_, a)| a),
        }
    }
}

fn braking_command(params: &RssParams, v_r: f64) -> f64 {
    if v_r > 0.0 {
        -params.a_brake_min()
    } else {
        0.0
    }
}

/// Commanded SV acceleration for the current phase.
///
/// Window commands are clamped to `[-a_brake_min, a_max]`.
pub fn proper_response_command(
    params: &RssParams,
    phase: &ResponsePhase,
    v_r: f64,
    policy: &WindowPolicy,
) -> f64 {
    match phase.stage {
        Stage::ResponseWindow { elapsed } => policy
            .raw_command(params, elapsed)
            .clamp(-params.a_brake_min(), params.a_max()),
        Stage::Braking => braking_command(params, v_r),
        Stage::Halted => 0.0,
    }
}

/// Command to hold over a step of length `dt`. A window step that would run
/// past `rho` brakes instead, so the realised response time never exceeds it.
pub fn step_command(
    params: &RssParams,
    phase: &ResponsePhase,
    v_r: f64,
    policy: &WindowPolicy,
    dt: f64,
) -> f64 {
    match phase.stage {
        Stage::ResponseWindow { elapsed } if elapsed + dt > params.rho() + TIME_EPS => {
            braking_command(params, v_r)
        }
        _ => proper_response_command(params, phase, v_r, policy),
    }
}

/// Phase after a step of `dt` that ended with SV velocity `v_r_next`.
pub fn advance_phase(
    params: &RssParams,
    phase: &ResponsePhase,
    dt: f64,
    v_r_next: f64,
) -> ResponsePhase {
    let stage = match phase.stage {
        Stage::ResponseWindow { elapsed } => {
            let elapsed = elapsed + dt;
            if elapsed >= params.rho() - TIME_EPS {
                if v_r_next <= 0.0 {
                    Stage::Halted
                } else {
                    Stage::Braking
                }
            } else {
                Stage::ResponseWindow { elapsed }
            }
        }
        Stage::Braking if v_r_next <= 0.0 => Stage::Halted,
        s => s,
    };
    ResponsePhase { stage, ..*phase }
}

/// The proper response wrapped as an SV policy for the integrator.
#[derive(Debug, Clone)]
pub struct ProperResponse {
    params: RssParams,
    phase: ResponsePhase,
    policy: WindowPolicy,
}

impl ProperResponse {
    pub fn new(params: RssParams, policy: WindowPolicy, start: &ScenarioState, t0: f64) -> Self {
        let held = crate::rule::condition_holds(&params, start);
        Self {
            params,
            phase: ResponsePhase::engage(t0, held),
            policy,
        }
    }

    pub fn phase(&self) -> &ResponsePhase {
        &self.phase
    }
}

impl SvPolicy for ProperResponse {
    fn command(&mut self, _t: f64, state: &ScenarioState, dt: f64) -> Result<SvCommand> {
        Ok(SvCommand {
            accel: step_command(&self.params, &self.phase, state.v_r, &self.policy, dt),
            mode: ControlMode::Bc,
        })
    }

    fn after_step(&mut self, _t_next: f64, next: &ScenarioState, dt: f64) {
        self.phase = advance_phase(&self.params, &self.phase, dt, next.v_r);
    }
}
