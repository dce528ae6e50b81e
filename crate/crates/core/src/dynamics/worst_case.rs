//! Closed-form worst-case execution of the proper response.
//!
//! The SV accelerates at `a_max` for exactly `rho`, then brakes at
//! `a_brake_min` until it halts. The POV brakes at `a_brake_max` from the
//! start until it halts. Every quantity is piecewise quadratic in time with
//! breakpoints at `rho`, the POV halt and the SV halt.

use serde::{Deserialize, Serialize};

use super::kinematics::{advance, first_crossing, vertex};
use super::{pov_stop_distance_unchecked, sv_stop_distance_unchecked, Collision, ExecutionTrace};
use crate::error::{Error, Result};
use crate::params::RssParams;
use crate::state::{ControlMode, ScenarioState, TrajectorySample};

/// Velocity patterns of the worst-case execution, by the sign history of the
/// SV's velocity relative to the POV (`v_r - v_f`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VelocityCase {
    /// Relative velocity `>= 0` throughout.
    Case1,
    /// Starts negative and turns positive during the response window.
    Case2,
    /// Starts negative and turns positive after the response window.
    Case3,
    /// Negative until the SV halts.
    Case4,
}

impl VelocityCase {
    pub const ALL: [VelocityCase; 4] = [
        VelocityCase::Case1,
        VelocityCase::Case2,
        VelocityCase::Case3,
        VelocityCase::Case4,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseProfile {
    params: RssParams,
    start: ScenarioState,
    v_peak: f64,
    response_travel: f64,
    sv_halt_time: f64,
    pov_halt_time: f64,
}

impl WorstCaseProfile {
    pub fn new(params: RssParams, start: ScenarioState) -> Result<Self> {
        start.validate()?;
        let rho = params.rho();
        let (response_travel, v_peak) = advance(start.v_r, params.a_max(), rho);
        Ok(Self {
            params,
            start,
            v_peak,
            response_travel,
            sv_halt_time: rho + v_peak / params.a_brake_min(),
            pov_halt_time: start.v_f / params.a_brake_max(),
        })
    }

    pub fn params(&self) -> &RssParams {
        &self.params
    }

    pub fn start(&self) -> &ScenarioState {
        &self.start
    }

    pub fn sv_halt_time(&self) -> f64 {
        self.sv_halt_time
    }

    pub fn pov_halt_time(&self) -> f64 {
        self.pov_halt_time
    }

    /// SV acceleration on the piece starting at `t`.
    pub fn sv_accel(&self, t: f64) -> f64 {
        if t < self.params.rho() {
            self.params.a_max()
        } else if t < self.sv_halt_time {
            -self.params.a_brake_min()
        } else {
            0.0
        }
    }

    pub fn pov_accel(&self, t: f64) -> f64 {
        if t < self.pov_halt_time {
            -self.params.a_brake_max()
        } else {
            0.0
        }
    }

    /// SV `(displacement, velocity)` at time `t`.
    pub fn sv_motion(&self, t: f64) -> (f64, f64) {
        let rho = self.params.rho();
        if t >= self.sv_halt_time && t >= rho {
            (sv_stop_distance_unchecked(&self.params, self.start.v_r), 0.0)
        } else if t <= rho {
            advance(self.start.v_r, self.params.a_max(), t)
        } else {
            let (d, v) = advance(self.v_peak, -self.params.a_brake_min(), t - rho);
            (self.response_travel + d, v)
        }
    }

    /// POV `(displacement, velocity)` at time `t`.
    pub fn pov_motion(&self, t: f64) -> (f64, f64) {
        if t >= self.pov_halt_time {
            (pov_stop_distance_unchecked(&self.params, self.start.v_f), 0.0)
        } else {
            advance(self.start.v_f, -self.params.a_brake_max(), t)
        }
    }

    pub fn gap_at(&self, t: f64) -> f64 {
        let (df, _) = self.pov_motion(t);
        let (dr, _) = self.sv_motion(t);
        self.start.gap() + (df - dr)
    }

    pub fn relative_velocity_at(&self, t: f64) -> f64 {
        self.sv_motion(t).1 - self.pov_motion(t).1
    }

    pub fn state_at(&self, t: f64) -> ScenarioState {
        let (df, vf) = self.pov_motion(t);
        let (dr, vr) = self.sv_motion(t);
        ScenarioState {
            x_f: self.start.x_f + df,
            v_f: vf,
            x_r: self.start.x_r + dr,
            v_r: vr,
        }
    }

    /// Piece boundaries in `[0, sv_halt_time]`, sorted, including both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let end = self.sv_halt_time;
        let mut b = vec![0.0, end];
        for t in [self.params.rho(), self.pov_halt_time] {
            if t > 0.0 && t < end {
                b.push(t);
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Breakpoints plus every interior extremum of the gap.
    fn extremum_candidates(&self) -> Vec<f64> {
        let b = self.breakpoints();
        let mut c = b.clone();
        for w in b.windows(2) {
            let (s, e) = (w[0], w[1]);
            let slope = self.pov_accel(s) - self.sv_accel(s);
            let rel = self.pov_motion(s).1 - self.sv_motion(s).1;
            if let Some(t) = vertex(s, e, rel, slope) {
                c.push(t);
            }
        }
        c.sort_by(f64::total_cmp);
        c
    }

    /// Exact minimum of the gap over `[0, sv_halt_time]`: `(time, gap)`.
    pub fn min_gap(&self) -> (f64, f64) {
        self.extremum_candidates()
            .into_iter()
            .map(|t| (t, self.gap_at(t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0.0, self.start.gap()))
    }

    /// Gap at the SV halt, computed from the two stopping distances.
    pub fn gap_at_sv_halt(&self) -> f64 {
        self.gap_at(self.sv_halt_time)
    }

    /// First time the gap reaches the vehicle length, if before the SV halts.
    pub fn first_contact(&self) -> Option<f64> {
        first_crossing(
            |t| self.gap_at(t),
            &mut self.extremum_candidates(),
            self.sv_halt_time,
            self.params.vehicle_length(),
        )
    }

    /// Analytic classification of the relative-velocity pattern.
    pub fn velocity_case(&self) -> VelocityCase {
        let rel0 = self.start.v_r - self.start.v_f;
        if rel0 >= 0.0 {
            return VelocityCase::Case1;
        }
        // Relative velocity is piecewise linear; find the first time it is > 0.
        let b = self.breakpoints();
        for w in b.windows(2) {
            let (s, e) = (w[0], w[1]);
            let r_s = self.relative_velocity_at(s);
            let slope = self.sv_accel(s) - self.pov_accel(s);
            let r_e = r_s + slope * (e - s);
            if r_e > 0.0 && slope > 0.0 {
                let crossing = s + (-r_s).max(0.0) / slope;
                return if crossing < self.params.rho() {
                    VelocityCase::Case2
                } else {
                    VelocityCase::Case3
                };
            }
        }
        VelocityCase::Case4
    }

    /// Samples the execution every `dt` (plus every breakpoint) up to the SV
    /// halt or the first contact, whichever comes first.
    pub fn sample(&self, dt: f64) -> Result<ExecutionTrace> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Step(format!("dt must be > 0, got {dt}")));
        }
        let contact = self.first_contact();
        let end = contact.unwrap_or(self.sv_halt_time);
        let n = (end / dt).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).filter(|t| *t < end).collect();
        times.extend(self.breakpoints().into_iter().filter(|t| *t < end));
        times.push(end);
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        // keep the exact end time as the final sample
        if let Some(last) = times.last_mut() {
            *last = end;
        }

        let samples: Vec<TrajectorySample> = times
            .iter()
            .map(|&t| TrajectorySample {
                t,
                state: self.state_at(t),
                a_r: self.sv_accel(t),
                mode: ControlMode::Bc,
            })
            .collect();
        let min_gap = samples
            .iter()
            .map(|s| s.state.gap())
            .fold(f64::INFINITY, f64::min);
        Ok(ExecutionTrace {
            collision: contact.map(|t| Collision {
                t,
                gap: self.gap_at(t),
            }),
            sv_halt_time: contact.is_none().then_some(self.sv_halt_time),
            min_gap,
            samples,
        })
    }
}

/// Closed-form worst-case execution sampled every `dt`.
pub fn worst_case_execution(
    params: &RssParams,
    start: &ScenarioState,
    dt: f64,
) -> Result<ExecutionTrace> {
    WorstCaseProfile::new(*params, *start)?.sample(dt)
}

/// Classifies a sampled worst-case trace by its relative-velocity pattern.
///
/// Crossing times are interpolated linearly between samples, which is exact
/// for traces that include every breakpoint.
pub fn classify_case(params: &RssParams, trace: &ExecutionTrace) -> Result<VelocityCase> {
    let first = trace.samples.first().ok_or(Error::Classify)?;
    let t0 = first.t;
    let rel = |s: &TrajectorySample| s.state.v_r - s.state.v_f;
    if rel(first) >= 0.0 {
        return Ok(VelocityCase::Case1);
    }
    for w in trace.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ra, rb) = (rel(a), rel(b));
        if rb > 0.0 {
            let crossing = if ra >= 0.0 {
                a.t
            } else {
                a.t + (b.t - a.t) * (-ra) / (rb - ra)
            };
            return Ok(if crossing - t0 < params.rho() {
                VelocityCase::Case2
            } else {
                VelocityCase::Case3
            });
        }
    }
    Ok(VelocityCase::Case4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::safe_distance;
    use proptest::prelude::*;

    fn p() -> RssParams {
        RssParams::reference()
    }

    fn profile(gap: f64, v_r: f64, v_f: f64) -> WorstCaseProfile {
        WorstCaseProfile::new(p(), ScenarioState::from_gap(gap, v_r, v_f).unwrap()).unwrap()
    }

    #[test]
    fn just_above_boundary_is_collision_free() {
        let trace = worst_case_execution(&p(), &ScenarioState::from_gap(34.136, 20.0, 20.0).unwrap(), 1e-3)
            .unwrap();
        assert!(!trace.collided());
        let last = trace.samples.last().unwrap();
        assert!((last.state.gap() - 0.001).abs() < 1e-9);
        assert!((trace.min_gap - 0.001).abs() < 1e-9);
        assert!((last.t - 5.45).abs() < 1e-12);
    }

    #[test]
    fn below_boundary_collides() {
        let trace = worst_case_execution(&p(), &ScenarioState::from_gap(34.0, 20.0, 20.0).unwrap(), 1e-3)
            .unwrap();
        let c = trace.collision.unwrap();
        assert!(c.t <= 5.45 + 1e-12);
        assert!(trace.samples.last().unwrap().state.gap() <= 0.0);
        // no earlier sample touches
        let n = trace.samples.len();
        assert!(trace.samples[..n - 1].iter().all(|s| s.state.gap() > 0.0));
    }

    #[test]
    fn exact_boundary_touches() {
        let d = safe_distance(&p(), 20.0, 20.0).unwrap();
        let pr = profile(d, 20.0, 20.0);
        assert_eq!(pr.gap_at_sv_halt(), 0.0);
        assert!(pr.first_contact().is_some());
    }

    #[test]
    fn at_rest_start() {
        let trace = worst_case_execution(&p(), &ScenarioState::from_gap(1.0, 0.0, 0.0).unwrap(), 1e-3)
            .unwrap();
        assert!(!trace.collided());
        assert!((trace.min_gap - 0.865).abs() < 1e-12);
    }

    #[test]
    fn cases_of_worked_examples() {
        let classify = |v_r: f64, v_f: f64| {
            let pr = profile(500.0, v_r, v_f);
            let sampled = classify_case(&p(), &pr.sample(1e-3).unwrap()).unwrap();
            assert_eq!(sampled, pr.velocity_case(), "v_r={v_r} v_f={v_f}");
            sampled
        };
        assert_eq!(classify(20.0, 10.0), VelocityCase::Case1);
        assert_eq!(classify(5.0, 30.0), VelocityCase::Case4);
        assert_eq!(classify(20.0, 20.0), VelocityCase::Case1);
        // crossing at 0.2 s, inside the window
        assert_eq!(classify(18.0, 20.0), VelocityCase::Case2);
        // crossing at 0.8 s
        assert_eq!(classify(15.0, 20.0), VelocityCase::Case3);
    }

    #[test]
    fn empty_trace_cannot_be_classified() {
        let empty = ExecutionTrace {
            samples: vec![],
            collision: None,
            sv_halt_time: None,
            min_gap: f64::INFINITY,
        };
        assert_eq!(classify_case(&p(), &empty), Err(Error::Classify));
    }

    #[test]
    fn sampling_rejects_bad_step() {
        assert!(profile(50.0, 10.0, 10.0).sample(0.0).is_err());
    }

    proptest! {
        #[test]
        fn pov_halts_first_outside_case4(v_r in 0.0f64..40.0, v_f in 0.0f64..40.0) {
            let pr = profile(1000.0, v_r, v_f);
            if pr.velocity_case() != VelocityCase::Case4 {
                prop_assert!(pr.pov_halt_time() <= pr.sv_halt_time() + 1e-12);
            }
        }

        #[test]
        fn min_gap_at_start_or_halt(v_r in 0.0f64..40.0, v_f in 0.0f64..40.0, margin in 0.01f64..50.0) {
            let d = safe_distance(&p(), v_r, v_f).unwrap();
            let pr = profile(d + margin, v_r, v_f);
            prop_assert!(pr.first_contact().is_none());
            let (_, min) = pr.min_gap();
            let ends = pr.gap_at(0.0).min(pr.gap_at_sv_halt());
            prop_assert!(min >= ends - 1e-9);
        }

        #[test]
        fn sampled_case_matches_analytic(v_r in 0.0f64..40.0, v_f in 0.0f64..40.0) {
            let pr = profile(1000.0, v_r, v_f);
            let trace = pr.sample(5e-2).unwrap();
            prop_assert_eq!(classify_case(&p(), &trace).unwrap(), pr.velocity_case());
            prop_assert!(trace.samples.iter().all(|s| s.state.v_r >= 0.0 && s.state.v_f >= 0.0));
        }
    }
}
