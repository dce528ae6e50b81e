use crate::dynamics::{SvCommand, SvPolicy};
use crate::error::Result;
use crate::params::RssParams;
use crate::rule::evaluate;
use crate::state::{ControlMode, ScenarioState};

/// POV forward acceleration bound used when none is configured (m/s²).
pub const DEFAULT_POV_FWD_MAX: f64 = 2.0;

/// An acceleration law `(t, state) -> m/s²`, used for POV behaviours and
/// advanced controllers alike.
pub trait AccelPolicy: Send {
    fn accel(&mut self, t: f64, state: &ScenarioState) -> f64;
}

impl<F> AccelPolicy for F
where
    F: FnMut(f64, &ScenarioState) -> f64 + Send,
{
    fn accel(&mut self, t: f64, state: &ScenarioState) -> f64 {
        self(t, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl AccelPolicy for Constant {
    fn accel(&mut self, _t: f64, _state: &ScenarioState) -> f64 {
        self.0
    }
}

/// Always accelerate at `a_max`.
pub fn adversarial(params: &RssParams) -> Constant {
    Constant(params.a_max())
}

/// Time-scheduled accelerations: `(until_t, accel)` pairs sorted by time; the
/// last value holds once the schedule runs out.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    segments: Vec<(f64, f64)>,
}

impl PiecewiseConstant {
    pub fn new(segments: Vec<(f64, f64)>) -> Self {
        Self { segments }
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|(until, _)| t < *until)
            .or(self.segments.last())
            .map_or(0.0, |&(_, a)| a)
    }
}

impl AccelPolicy for PiecewiseConstant {
    fn accel(&mut self, t: f64, _state: &ScenarioState) -> f64 {
        self.at(t)
    }
}

/// Smooth speed variation: `amplitude · sin(2πt / period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GentleCruise {
    pub amplitude: f64,
    pub period: f64,
}

impl Default for GentleCruise {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            period: 8.0,
        }
    }
}

impl AccelPolicy for GentleCruise {
    fn accel(&mut self, t: f64, _state: &ScenarioState) -> f64 {
        self.amplitude * (std::f64::consts::TAU * t / self.period).sin()
    }
}

/// Gap-keeping controller tracking `gap_factor · d_min + standstill`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenignFollower {
    pub params: RssParams,
    pub gap_factor: f64,
    pub standstill: f64,
    pub k_gap: f64,
    pub k_vel: f64,
}

impl BenignFollower {
    pub fn new(params: RssParams) -> Self {
        Self {
            params,
            gap_factor: 1.5,
            standstill: 2.0,
            k_gap: 0.2,
            k_vel: 0.9,
        }
    }
}

impl AccelPolicy for BenignFollower {
    fn accel(&mut self, _t: f64, state: &ScenarioState) -> f64 {
        let e = evaluate(&self.params, state);
        let target = self.gap_factor * e.d_min + self.standstill;
        let a = self.k_gap * (e.gap - target) + self.k_vel * (state.v_f - state.v_r);
        a.clamp(-self.params.a_brake_min(), self.params.a_max())
    }
}

/// Behaviour of the front vehicle. Emitted accelerations are clamped to
/// `[-a_brake_max, a_fwd_max]`; the integrator keeps the velocity `>= 0`.
pub struct PovBehavior {
    policy: Box<dyn AccelPolicy>,
    a_fwd_max: f64,
}

impl std::fmt::Debug for PovBehavior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PovBehavior")
            .field("a_fwd_max", &self.a_fwd_max)
            .finish_non_exhaustive()
    }
}

impl PovBehavior {
    pub fn new(policy: impl AccelPolicy + 'static, a_fwd_max: f64) -> Self {
        Self {
            policy: Box::new(policy),
            a_fwd_max: a_fwd_max.max(0.0),
        }
    }

    /// Emergency braking at `a_brake_max` until at rest.
    pub fn worst_case() -> Self {
        Self::new(Constant(f64::MIN), DEFAULT_POV_FWD_MAX)
    }

    pub fn gentle() -> Self {
        Self::new(GentleCruise::default(), DEFAULT_POV_FWD_MAX)
    }

    pub fn constant(a: f64) -> Self {
        Self::new(Constant(a), DEFAULT_POV_FWD_MAX)
    }

    pub fn a_fwd_max(&self) -> f64 {
        self.a_fwd_max
    }

    pub fn accel(&mut self, params: &RssParams, t: f64, state: &ScenarioState) -> f64 {
        let a = self.policy.accel(t, state);
        if a.is_nan() {
            return 0.0;
        }
        a.clamp(-params.a_brake_max(), self.a_fwd_max)
    }
}

/// Drives the SV directly from an acceleration law, clamped to `bounds`,
/// with no safety supervision.
pub struct Unsupervised<P> {
    pub policy: P,
    pub bounds: (f64, f64),
}

impl<P: AccelPolicy> Unsupervised<P> {
    /// Clamped to the SV capabilities `[-a_brake_min, a_max]`.
    pub fn new(policy: P, params: &RssParams) -> Self {
        Self {
            policy,
            bounds: (-params.a_brake_min(), params.a_max()),
        }
    }
}

impl<P: AccelPolicy> SvPolicy for Unsupervised<P> {
    fn command(&mut self, t: f64, state: &ScenarioState, _dt: f64) -> Result<SvCommand> {
        Ok(SvCommand {
            accel: self.policy.accel(t, state).clamp(self.bounds.0, self.bounds.1),
            mode: ControlMode::Ac,
        })
    }
}
