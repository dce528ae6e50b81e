//! Offline analysis of recorded trajectories: compliance with a list of
//! safety rules, the margin-based safety score, liability for collisions and
//! the responsibility-principle summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::params::RssParams;
use crate::rule::{evaluate, SafetyEvaluation};
use crate::state::{ControlMode, ScenarioState, Trajectory};

pub const DEFAULT_ACCEL_TOL: f64 = 0.2;

/// Slack for judging noisy recorded data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// m/s²
    #[serde(default = "default_accel_tol")]
    pub accel_tol: f64,
    /// s; `None` means one sample period of the audited trajectory.
    #[serde(default)]
    pub time_tol: Option<f64>,
}

fn default_accel_tol() -> f64 {
    DEFAULT_ACCEL_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            accel_tol: DEFAULT_ACCEL_TOL,
            time_tol: None,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("accel_tol", self.accel_tol)?;
        if self.accel_tol < 0.0 {
            return Err(Error::Config(format!("accel_tol must be >= 0, got {}", self.accel_tol)));
        }
        if let Some(t) = self.time_tol {
            ensure_finite("time_tol", t)?;
            if t < 0.0 {
                return Err(Error::Config(format!("time_tol must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Tolerances with `time_tol` fixed for `traj`.
    pub fn resolve(&self, traj: &Trajectory) -> ResolvedTolerances {
        ResolvedTolerances {
            accel_tol: self.accel_tol,
            time_tol: self.time_tol.unwrap_or_else(|| traj.nominal_period()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTolerances {
    pub accel_tol: f64,
    pub time_tol: f64,
}

/// A safety rule: an instantly checkable condition plus the braking part of
/// its proper response.
pub trait SafetyRule: Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, params: &RssParams, state: &ScenarioState) -> SafetyEvaluation;
    /// Longest allowed response window (s).
    fn response_time(&self, params: &RssParams) -> f64;
    /// Deceleration the SV must at least apply after the window (m/s², > 0).
    fn required_braking(&self, params: &RssParams) -> f64;
}

/// Same-lane same-direction following.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlsdRule;

impl SafetyRule for SlsdRule {
    fn name(&self) -> &str {
        "slsd"
    }

    fn evaluate(&self, params: &RssParams, state: &ScenarioState) -> SafetyEvaluation {
        evaluate(params, state)
    }

    fn response_time(&self, params: &RssParams) -> f64 {
        params.rho()
    }

    fn required_braking(&self, params: &RssParams) -> f64 {
        params.a_brake_min()
    }
}

pub fn default_rules() -> Vec<&'static dyn SafetyRule> {
    vec![&SlsdRule]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationReason {
    /// No condition holds and no proper response is running.
    ConditionFalseNoResponse,
    /// A BC episode began in a state where no condition held.
    ResponseStartedUnsafe,
    /// Past the response window the SV was not braking hard enough.
    ResponseNotBraking,
}

/// A maximal run of consecutive failing samples with one reason.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t_start: f64,
    pub t_end: f64,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceResult {
    pub compliant: bool,
    pub violations: Vec<Violation>,
}

/// Per-sample compliance verdicts: `None` for a passing sample.
fn sample_verdicts(
    traj: &Trajectory,
    rules: &[&dyn SafetyRule],
    tol: &ResolvedTolerances,
) -> Vec<Option<ViolationReason>> {
    let params = traj.params();
    let mut episode: Option<(f64, Vec<bool>)> = None;
    let mut prev_mode = ControlMode::Ac;
    let mut out = Vec::with_capacity(traj.len());
    for s in traj.samples() {
        let holds: Vec<bool> = rules
            .iter()
            .map(|r| r.evaluate(params, &s.state).condition_holds)
            .collect();
        if s.mode == ControlMode::Bc && (prev_mode == ControlMode::Ac || episode.is_none()) {
            episode = Some((s.t, holds.clone()));
        }
        if s.mode == ControlMode::Ac {
            episode = None;
        }
        prev_mode = s.mode;

        let verdict = if holds.iter().any(|h| *h) {
            None
        } else {
            match &episode {
                None => Some(ViolationReason::ConditionFalseNoResponse),
                Some((_, held)) if !held.iter().any(|h| *h) => {
                    Some(ViolationReason::ResponseStartedUnsafe)
                }
                Some((t0, held)) => {
                    let elapsed = s.t - t0;
                    let ok = rules.iter().zip(held).filter(|(_, h)| **h).any(|(r, _)| {
                        let in_window = elapsed < r.response_time(params) + tol.time_tol;
                        in_window
                            || s.state.v_r <= 0.0
                            || s.a_r <= -r.required_braking(params) + tol.accel_tol
                    });
                    (!ok).then_some(ViolationReason::ResponseNotBraking)
                }
            }
        };
        out.push(verdict);
    }
    out
}

fn group_violations(traj: &Trajectory, verdicts: &[Option<ViolationReason>]) -> Vec<Violation> {
    let mut out: Vec<Violation> = Vec::new();
    let mut prev: Option<ViolationReason> = None;
    for (s, v) in traj.samples().iter().zip(verdicts) {
        match (v, prev) {
            (Some(reason), Some(p)) if *reason == p => {
                if let Some(last) = out.last_mut() {
                    last.t_end = s.t;
                }
            }
            (Some(reason), _) => out.push(Violation {
                t_start: s.t,
                t_end: s.t,
                reason: *reason,
            }),
            (None, _) => {}
        }
        prev = *v;
    }
    out
}

/// Checks that at every sample some rule's condition holds, or a proper
/// response that began in a safe state is being executed.
pub fn check_compliance(
    traj: &Trajectory,
    rules: &[&dyn SafetyRule],
    tol: &Tolerances,
) -> Result<ComplianceResult> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    tol.validate()?;
    let verdicts = sample_verdicts(traj, rules, &tol.resolve(traj));
    let violations = group_violations(traj, &verdicts);
    Ok(ComplianceResult {
        compliant: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTimeline {
    pub t: Vec<f64>,
    pub margin: Vec<f64>,
    /// Minimum margin over the trajectory.
    pub score: f64,
}

/// Per-sample safety margin (best rule) and its minimum.
pub fn safety_metric(traj: &Trajectory, rules: &[&dyn SafetyRule]) -> Result<MetricTimeline> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let params = traj.params();
    let margin: Vec<f64> = traj
        .samples()
        .iter()
        .map(|s| {
            rules
                .iter()
                .map(|r| r.evaluate(params, &s.state).margin)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(MetricTimeline {
        t: traj.samples().iter().map(|s| s.t).collect(),
        score: margin.iter().copied().fold(f64::INFINITY, f64::min),
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Liability {
    None,
    SvLiable,
    /// The POV braked harder than the model allows.
    PovOutsideModel,
    /// Neither screen explains the collision: a data or numerical problem.
    Inconsistent,
}

/// POV accelerations by finite differences of `v_f`: central inside, one
/// sided at both ends.
pub fn pov_accelerations(traj: &Trajectory) -> Vec<f64> {
    let s = traj.samples();
    let n = s.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let diff = |i: usize, j: usize| (s[j].state.v_f - s[i].state.v_f) / (s[j].t - s[i].t);
    (0..n)
        .map(|i| match i {
            0 => diff(0, 1),
            i if i == n - 1 => diff(n - 2, n - 1),
            i => diff(i - 1, i + 1),
        })
        .collect()
}

/// Who is responsible for the first collision of `traj`.
pub fn attribute_liability(
    traj: &Trajectory,
    rules: &[&dyn SafetyRule],
    tol: &Tolerances,
) -> Result<Liability> {
    let c = traj.first_collision_index().ok_or(Error::NoCollision)?;
    tol.validate()?;
    let before = traj.prefix(c + 1)?;
    let limit = traj.params().a_brake_max() + tol.accel_tol;
    if pov_accelerations(&before).iter().any(|a| -a > limit) {
        return Ok(Liability::PovOutsideModel);
    }
    // the window tolerance follows the full recording, not the prefix
    let fixed = Tolerances {
        time_tol: Some(tol.resolve(traj).time_tol),
        ..*tol
    };
    // samples strictly before the contact; the contact sample itself can
    // never satisfy the condition
    let approach = traj.prefix(c.max(1))?;
    if !check_compliance(&approach, rules, &fixed)?.compliant {
        return Ok(Liability::SvLiable);
    }
    Ok(Liability::Inconsistent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipleStatus {
    Satisfied,
    NotApplicable,
    Violated,
}

/// Status of the five responsibility principles. Only 1 (no rear-ending)
/// and 5 (avoid crashes) concern single-lane following; both fail exactly
/// when the SV is liable for a collision.
pub fn principles_report(
    traj: &Trajectory,
    rules: &[&dyn SafetyRule],
    tol: &Tolerances,
) -> Result<BTreeMap<u8, PrincipleStatus>> {
    let liability = match attribute_liability(traj, rules, tol) {
        Ok(l) => l,
        Err(Error::NoCollision) => Liability::None,
        Err(e) => return Err(e),
    };
    Ok(principles_for(liability))
}

fn principles_for(liability: Liability) -> BTreeMap<u8, PrincipleStatus> {
    let safe = if liability == Liability::SvLiable {
        PrincipleStatus::Violated
    } else {
        PrincipleStatus::Satisfied
    };
    (1..=5)
        .map(|k| match k {
            1 | 5 => (k, safe),
            _ => (k, PrincipleStatus::NotApplicable),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub t: f64,
    pub condition_holds: bool,
    pub margin: f64,
    pub mode: ControlMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub per_sample: Vec<SampleVerdict>,
    pub compliant: bool,
    pub violations: Vec<Violation>,
    pub metric_score: f64,
    pub liability: Liability,
    pub principles: BTreeMap<u8, PrincipleStatus>,
    pub tolerances: ResolvedTolerances,
}

/// Full audit of one trajectory against `R_slsd`.
pub fn audit(traj: &Trajectory, tol: &Tolerances) -> Result<AuditReport> {
    audit_with(traj, &default_rules(), tol)
}

pub fn audit_with(
    traj: &Trajectory,
    rules: &[&dyn SafetyRule],
    tol: &Tolerances,
) -> Result<AuditReport> {
    let compliance = check_compliance(traj, rules, tol)?;
    let metric = safety_metric(traj, rules)?;
    let liability = match attribute_liability(traj, rules, tol) {
        Ok(l) => l,
        Err(Error::NoCollision) => Liability::None,
        Err(e) => return Err(e),
    };
    let params = traj.params();
    let per_sample = traj
        .samples()
        .iter()
        .zip(&metric.margin)
        .map(|(s, m)| SampleVerdict {
            t: s.t,
            condition_holds: rules.iter().any(|r| r.evaluate(params, &s.state).condition_holds),
            margin: *m,
            mode: s.mode,
        })
        .collect();
    Ok(AuditReport {
        per_sample,
        compliant: compliance.compliant,
        violations: compliance.violations,
        metric_score: metric.score,
        liability,
        principles: principles_for(liability),
        tolerances: tol.resolve(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::TrajectorySample;
    use proptest::prelude::*;

    fn p() -> RssParams {
        RssParams::reference()
    }

    fn sample(t: f64, x_f: f64, v_f: f64, x_r: f64, v_r: f64, a_r: f64, mode: ControlMode) -> TrajectorySample {
        TrajectorySample {
            t,
            state: ScenarioState::new(x_f, v_f, x_r, v_r).unwrap(),
            a_r,
            mode,
        }
    }

    fn traj(samples: Vec<TrajectorySample>) -> Trajectory {
        Trajectory::new(samples, p()).unwrap()
    }

    fn rules() -> Vec<&'static dyn SafetyRule> {
        default_rules()
    }

    use ControlMode::{Ac, Bc};

    #[test]
    fn all_safe_ac_is_compliant() {
        let t = traj((0..5).map(|k| sample(k as f64 * 0.1, 100.0 + 2.0 * k as f64, 20.0, 2.0 * k as f64, 20.0, 0.0, Ac)).collect());
        let r = check_compliance(&t, &rules(), &Tolerances::default()).unwrap();
        assert!(r.compliant && r.violations.is_empty());
    }

    #[test]
    fn ac_below_boundary_is_flagged() {
        let t = traj(vec![
            sample(0.0, 40.0, 20.0, 0.0, 20.0, 0.0, Ac),
            sample(0.1, 32.0, 20.0, 0.0, 20.0, 0.0, Ac),
            sample(0.2, 40.0, 20.0, 0.0, 20.0, 0.0, Ac),
        ]);
        let r = check_compliance(&t, &rules(), &Tolerances::default()).unwrap();
        assert!(!r.compliant);
        assert_eq!(
            r.violations,
            vec![Violation {
                t_start: 0.1,
                t_end: 0.1,
                reason: ViolationReason::ConditionFalseNoResponse
            }]
        );
    }

    #[test]
    fn response_started_unsafe() {
        let t = traj(vec![
            sample(0.0, 40.0, 20.0, 0.0, 20.0, 0.0, Ac),
            sample(0.1, 30.0, 20.0, 0.0, 20.0, 0.0, Bc),
            sample(0.2, 30.0, 20.0, 0.0, 20.0, -4.0, Bc),
        ]);
        let r = check_compliance(&t, &rules(), &Tolerances::default()).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].reason, ViolationReason::ResponseStartedUnsafe);
        assert_eq!((r.violations[0].t_start, r.violations[0].t_end), (0.1, 0.2));
    }

    #[test]
    fn braking_required_after_window() {
        // engaged safely at t = 0, condition lost at t = 0.2
        let mk = |a_late: f64| {
            traj(vec![
                sample(0.0, 35.0, 20.0, 0.0, 20.0, 2.0, Bc),
                sample(0.2, 33.0, 20.0, 0.0, 20.0, 2.0, Bc),
                sample(0.4, 33.0, 20.0, 0.0, 20.0, a_late, Bc),
                sample(0.6, 33.0, 20.0, 0.0, 20.0, a_late, Bc),
            ])
        };
        let tol = Tolerances::default();
        assert!(check_compliance(&mk(-4.0), &rules(), &tol).unwrap().compliant);
        assert!(check_compliance(&mk(-3.85), &rules(), &tol).unwrap().compliant);
        let r = check_compliance(&mk(-3.0), &rules(), &tol).unwrap();
        // window 0.3 + one period 0.2: only t = 0.6 must brake
        assert_eq!(
            r.violations,
            vec![Violation {
                t_start: 0.6,
                t_end: 0.6,
                reason: ViolationReason::ResponseNotBraking
            }]
        );
    }

    #[test]
    fn metric_score() {
        let t = traj(vec![sample(0.0, 40.0, 20.0, 0.0, 20.0, 0.0, Ac), sample(1.0, 60.0, 20.0, 20.0, 20.0, 0.0, Ac)]);
        let m = safety_metric(&t, &rules()).unwrap();
        assert!((m.score - 5.865).abs() < 1e-12);
        let t = traj(vec![sample(0.0, 40.0, 20.0, 0.0, 20.0, 0.0, Ac), sample(1.0, 50.0, 20.0, 20.0, 20.0, 0.0, Ac)]);
        assert!(safety_metric(&t, &rules()).unwrap().score < 0.0);
    }

    #[test]
    fn liability_screens() {
        // POV drops 1.2 m/s in 0.1 s: 12 m/s²
        let comet = traj(vec![
            sample(0.0, 30.0, 10.0, 0.0, 10.0, 0.0, Ac),
            sample(0.1, 30.94, 8.8, 1.0, 10.0, 0.0, Ac),
            sample(0.2, 31.76, 7.6, 2.0, 10.0, 0.0, Ac),
            sample(0.3, 2.0, 0.0, 3.0, 10.0, 0.0, Ac),
        ]);
        assert_eq!(pov_accelerations(&comet)[1], (7.6 - 10.0) / 0.2);
        assert_eq!(attribute_liability(&comet, &rules(), &Tolerances::default()).unwrap(), Liability::PovOutsideModel);

        let careless = traj(vec![
            sample(0.0, 10.0, 5.0, 0.0, 15.0, 0.0, Ac),
            sample(0.5, 7.5, 5.0, 7.5, 15.0, 0.0, Ac),
        ]);
        assert_eq!(attribute_liability(&careless, &rules(), &Tolerances::default()).unwrap(), Liability::SvLiable);

        let odd = traj(vec![
            sample(0.0, 100.0, 0.0, 0.0, 0.0, 0.0, Ac),
            sample(0.1, 100.0, 0.0, 100.0, 0.0, 0.0, Ac),
        ]);
        assert_eq!(attribute_liability(&odd, &rules(), &Tolerances::default()).unwrap(), Liability::Inconsistent);

        let none = traj(vec![sample(0.0, 100.0, 0.0, 0.0, 0.0, 0.0, Ac)]);
        assert_eq!(attribute_liability(&none, &rules(), &Tolerances::default()), Err(Error::NoCollision));
    }

    #[test]
    fn principles() {
        let safe = traj(vec![sample(0.0, 100.0, 0.0, 0.0, 0.0, 0.0, Ac)]);
        let map = principles_report(&safe, &rules(), &Tolerances::default()).unwrap();
        assert_eq!(map.len(), 5);
        assert_eq!(map[&1], PrincipleStatus::Satisfied);
        assert_eq!(map[&5], PrincipleStatus::Satisfied);
        assert!((2..=4).all(|k| map[&k] == PrincipleStatus::NotApplicable));
        let careless = traj(vec![
            sample(0.0, 10.0, 5.0, 0.0, 15.0, 0.0, Ac),
            sample(0.5, 7.5, 5.0, 7.5, 15.0, 0.0, Ac),
        ]);
        let map = principles_report(&careless, &rules(), &Tolerances::default()).unwrap();
        assert_eq!(map[&1], PrincipleStatus::Violated);
        assert_eq!(principles_for(Liability::PovOutsideModel)[&1], PrincipleStatus::Satisfied);
    }

    #[test]
    fn report_serializes_with_stable_names() {
        let t = traj(vec![sample(0.0, 40.0, 20.0, 0.0, 20.0, 0.0, Ac), sample(0.1, 32.0, 20.0, 0.0, 20.0, 0.0, Ac)]);
        let r = audit(&t, &Tolerances::default()).unwrap();
        assert!(!r.compliant);
        assert_eq!(r.liability, Liability::None);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["violations"][0]["reason"], "ConditionFalseNoResponse");
        assert_eq!(json["principles"]["1"], "Satisfied");
        assert_eq!(json["per_sample"][0]["mode"], "AC");
        assert!((json["tolerances"]["time_tol"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bad_tolerances_rejected() {
        let t = traj(vec![sample(0.0, 40.0, 20.0, 0.0, 20.0, 0.0, Ac)]);
        let tol = Tolerances { accel_tol: -1.0, time_tol: None };
        assert!(check_compliance(&t, &rules(), &tol).is_err());
    }

    fn arb_samples() -> impl Strategy<Value = Vec<TrajectorySample>> {
        prop::collection::vec((1.0f64..60.0, 0.0f64..25.0, 0.0f64..25.0, -4.5f64..2.0, any::<bool>()), 1..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(k, (gap, vf, vr, a, bc))| {
                    sample(k as f64 * 0.1, gap, vf, 0.0, vr, a, if bc { Bc } else { Ac })
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn compliant_iff_no_violations(s in arb_samples()) {
            let r = check_compliance(&traj(s), &rules(), &Tolerances::default()).unwrap();
            prop_assert_eq!(r.compliant, r.violations.is_empty());
        }

        #[test]
        fn negative_score_iff_some_margin_negative(s in arb_samples()) {
            let t = traj(s);
            let m = safety_metric(&t, &rules()).unwrap();
            let any_neg = t.samples().iter().any(|x| evaluate(&p(), &x.state).margin < 0.0);
            prop_assert_eq!(m.score < 0.0, any_neg);
        }

        #[test]
        fn first_violation_is_prefix_monotone(s in arb_samples()) {
            let t = traj(s);
            let first = |n: usize| {
                check_compliance(&t.prefix(n).unwrap(), &rules(), &Tolerances::default())
                    .unwrap()
                    .violations
                    .first()
                    .map(|v| v.t_start)
            };
            let mut prev = first(1);
            for n in 2..=t.len() {
                let cur = first(n);
                if let (Some(a), Some(b)) = (prev, cur) {
                    prop_assert!(b <= a);
                }
                if prev.is_some() {
                    prop_assert!(cur.is_some());
                }
                prev = cur;
            }
        }
    }
}
