//! Longitudinal kinematics: worst-case closed forms, a fixed-step integrator
//! for arbitrary behaviours, POV behaviour models and collision detection.

mod behavior;
mod integrate;
mod kinematics;
mod worst_case;

pub use behavior::{
    adversarial, AccelPolicy, BenignFollower, Constant, GentleCruise, PiecewiseConstant,
    PovBehavior, Unsupervised, DEFAULT_POV_FWD_MAX,
};
pub use integrate::{integrate, IntegrateOptions, Scheme, DEFAULT_DT};
pub use kinematics::{
    advance, advance_semi_implicit, pov_stop_distance, stop_time_within, sv_stop_distance,
};
pub(crate) use kinematics::{
    pov_stop_distance_unchecked, sv_stop_distance_unchecked,
};
pub use worst_case::{classify_case, worst_case_execution, VelocityCase, WorstCaseProfile};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::RssParams;
use crate::state::{ControlMode, ScenarioState, Trajectory, TrajectorySample};

/// Acceleration the SV applies over the next step, and who issued it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvCommand {
    pub accel: f64,
    pub mode: ControlMode,
}

/// A controller in the SV command path.
pub trait SvPolicy {
    /// Command held constant over `[t, t + dt)`.
    fn command(&mut self, t: f64, state: &ScenarioState, dt: f64) -> Result<SvCommand>;

    /// Called once the step has been taken.
    fn after_step(&mut self, _t_next: f64, _next: &ScenarioState, _dt: f64) {}
}

/// First contact of an execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    /// Contact time (refined inside the step).
    pub t: f64,
    /// Gap at the first sample at or below the vehicle length.
    pub gap: f64,
}

/// A simulated or closed-form execution.
///
/// If `collision` is set, the last sample is the first one with
/// `gap <= vehicle_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub samples: Vec<TrajectorySample>,
    pub collision: Option<Collision>,
    pub sv_halt_time: Option<f64>,
    /// Smallest gap over all visited step boundaries, recorded or not.
    pub min_gap: f64,
}

impl ExecutionTrace {
    pub fn collided(&self) -> bool {
        self.collision.is_some()
    }

    /// Number of AC to BC transitions, counting a BC start as one.
    pub fn bc_engagements(&self) -> usize {
        let mut prev = ControlMode::Ac;
        let mut n = 0;
        for s in &self.samples {
            if s.mode == ControlMode::Bc && prev == ControlMode::Ac {
                n += 1;
            }
            prev = s.mode;
        }
        n
    }

    pub fn to_trajectory(&self, params: RssParams) -> Result<Trajectory> {
        Trajectory::new(self.samples.clone(), params)
    }
}
