//! Simplex decision module: an advanced controller (AC) drives the SV until a
//! one-period worst-case lookahead says the safety condition could be lost,
//! then the proper response (BC) takes over. Control returns to the AC once
//! the SV is braking or halted and the margin exceeds a hysteresis band.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    advance, integrate, AccelPolicy, ExecutionTrace, IntegrateOptions, PovBehavior, SvCommand,
    SvPolicy,
};
use crate::error::{ensure_finite, Error, Result};
use crate::params::RssParams;
use crate::response::{advance_phase, step_command, ResponsePhase, WindowPolicy};
use crate::rule::evaluate;
use crate::state::{ControlMode, ScenarioState};

pub const DEFAULT_PERIOD: f64 = 0.1;
pub const DEFAULT_SWITCHBACK_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorConfig {
    /// Decision interval (s).
    #[serde(default = "default_period")]
    pub period: f64,
    /// Margin (m) above which a braking or halted SV is handed back to the AC.
    #[serde(default = "default_switchback")]
    pub switchback_margin: f64,
    /// Clamp on AC commands; `None` means `[-a_brake_min, a_max]`.
    #[serde(default)]
    pub sv_command_bounds: Option<[f64; 2]>,
}

fn default_period() -> f64 {
    DEFAULT_PERIOD
}

fn default_switchback() -> f64 {
    DEFAULT_SWITCHBACK_MARGIN
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            period: DEFAULT_PERIOD,
            switchback_margin: DEFAULT_SWITCHBACK_MARGIN,
            sv_command_bounds: None,
        }
    }
}

impl SupervisorConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, params: &RssParams) -> Result<()> {
        ensure_finite("period", self.period)?;
        ensure_finite("switchback_margin", self.switchback_margin)?;
        if self.period <= 0.0 {
            return Err(Error::Config(format!("period must be > 0, got {}", self.period)));
        }
        if self.period > params.rho() {
            return Err(Error::Config(format!(
                "period {} exceeds the response time {}",
                self.period,
                params.rho()
            )));
        }
        if self.switchback_margin < 0.0 {
            return Err(Error::Config(format!(
                "switchback_margin must be >= 0, got {}",
                self.switchback_margin
            )));
        }
        if let Some([lo, hi]) = self.sv_command_bounds {
            ensure_finite("sv_command_bounds", lo)?;
            ensure_finite("sv_command_bounds", hi)?;
            if lo > hi {
                return Err(Error::Config(format!("sv_command_bounds [{lo}, {hi}] is empty")));
            }
            if hi > params.a_max() {
                return Err(Error::Config(format!(
                    "sv_command_bounds upper limit {hi} exceeds a_max {}",
                    params.a_max()
                )));
            }
        }
        Ok(())
    }

    pub fn bounds(&self, params: &RssParams) -> (f64, f64) {
        match self.sv_command_bounds {
            Some([lo, hi]) => (lo, hi),
            None => (-params.a_brake_min(), params.a_max()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "phase")]
pub enum SupervisorMode {
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "BC")]
    Bc(ResponsePhase),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisorState {
    pub mode: SupervisorMode,
    pub last_decision_t: f64,
    /// Last command issued by the AC path, held through a BC response window.
    pub last_command: f64,
}

impl Default for SupervisorState {
    fn default() -> Self {
        Self {
            mode: SupervisorMode::Ac,
            last_decision_t: 0.0,
            last_command: 0.0,
        }
    }
}

impl SupervisorState {
    pub fn control_mode(&self) -> ControlMode {
        match self.mode {
            SupervisorMode::Ac => ControlMode::Ac,
            SupervisorMode::Bc(_) => ControlMode::Bc,
        }
    }
}

/// State after `horizon` seconds with the SV at `+a_max` and the POV at
/// `-a_brake_max`, both held at rest once stopped.
pub fn worst_case_successor(params: &RssParams, state: &ScenarioState, horizon: f64) -> ScenarioState {
    let (df, vf) = advance(state.v_f, -params.a_brake_max(), horizon);
    let (dr, vr) = advance(state.v_r, params.a_max(), horizon);
    ScenarioState {
        x_f: state.x_f + df,
        v_f: vf,
        x_r: state.x_r + dr,
        v_r: vr,
    }
}

/// Whether the safety condition survives one more period of AC control.
pub fn lookahead_holds(params: &RssParams, state: &ScenarioState, period: f64) -> bool {
    evaluate(params, &worst_case_successor(params, state, period)).condition_holds
}

fn window_policy(sup: &SupervisorState) -> WindowPolicy {
    WindowPolicy::HoldLast {
        accel: sup.last_command,
    }
}

/// One decision of the module at time `t`. Returns the new supervisor state
/// and the SV command to hold over the next step of length `dt`.
pub fn decide(
    params: &RssParams,
    cfg: &SupervisorConfig,
    sup: &SupervisorState,
    state: &ScenarioState,
    ac_command: f64,
    t: f64,
    dt: f64,
) -> Result<(SupervisorState, f64)> {
    let eval = evaluate(params, state);
    let (lo, hi) = cfg.bounds(params);
    let mut next = SupervisorState {
        last_decision_t: t,
        ..*sup
    };
    match sup.mode {
        SupervisorMode::Ac => {
            if !eval.condition_holds {
                return Err(Error::InvariantBreach(format!(
                    "AC in control at t = {t} with margin {}",
                    eval.margin
                )));
            }
            if lookahead_holds(params, state, cfg.period) {
                let cmd = ac_command.clamp(lo, hi);
                next.last_command = cmd;
                return Ok((next, cmd));
            }
            let phase = ResponsePhase::engage(t, true);
            next.mode = SupervisorMode::Bc(phase);
            let cmd = step_command(params, &phase, state.v_r, &window_policy(&next), dt);
            Ok((next, cmd))
        }
        SupervisorMode::Bc(phase) => {
            let abortable = !phase.in_window();
            if abortable
                && eval.margin > cfg.switchback_margin
                && lookahead_holds(params, state, cfg.period)
            {
                let cmd = ac_command.clamp(lo, hi);
                next.mode = SupervisorMode::Ac;
                next.last_command = cmd;
                return Ok((next, cmd));
            }
            let cmd = step_command(params, &phase, state.v_r, &window_policy(sup), dt);
            Ok((next, cmd))
        }
    }
}

/// The decision module in the SV command path of the integrator. Decisions
/// are taken every `steps_per_decision` integration steps; in between, the
/// AC command is clamped or the running response continues.
pub struct Supervised<P> {
    params: RssParams,
    cfg: SupervisorConfig,
    ac: P,
    state: SupervisorState,
    steps_per_decision: u64,
    step: u64,
}

impl<P: AccelPolicy> Supervised<P> {
    pub fn new(params: RssParams, cfg: SupervisorConfig, ac: P, dt: f64) -> Result<Self> {
        cfg.validate(&params)?;
        Ok(Self {
            params,
            cfg,
            ac,
            state: SupervisorState::default(),
            steps_per_decision: steps_per_decision(cfg.period, dt)?,
            step: 0,
        })
    }

    pub fn state(&self) -> &SupervisorState {
        &self.state
    }
}

/// `period / dt`, which must be a positive integer.
pub fn steps_per_decision(period: f64, dt: f64) -> Result<u64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Step(format!("dt must be > 0, got {dt}")));
    }
    let ratio = period / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
        return Err(Error::Config(format!(
            "period {period} is not a whole multiple of dt {dt}"
        )));
    }
    Ok(n as u64)
}

impl<P: AccelPolicy> SvPolicy for Supervised<P> {
    fn command(&mut self, t: f64, state: &ScenarioState, dt: f64) -> Result<SvCommand> {
        let ac = self.ac.accel(t, state);
        let accel = if self.step.is_multiple_of(self.steps_per_decision) {
            let (next, cmd) = decide(&self.params, &self.cfg, &self.state, state, ac, t, dt)?;
            self.state = next;
            cmd
        } else {
            match self.state.mode {
                SupervisorMode::Ac => {
                    let (lo, hi) = self.cfg.bounds(&self.params);
                    let cmd = ac.clamp(lo, hi);
                    self.state.last_command = cmd;
                    cmd
                }
                SupervisorMode::Bc(phase) => step_command(
                    &self.params,
                    &phase,
                    state.v_r,
                    &window_policy(&self.state),
                    dt,
                ),
            }
        };
        Ok(SvCommand {
            accel,
            mode: self.state.control_mode(),
        })
    }

    fn after_step(&mut self, _t_next: f64, next: &ScenarioState, dt: f64) {
        if let SupervisorMode::Bc(phase) = self.state.mode {
            self.state.mode = SupervisorMode::Bc(advance_phase(&self.params, &phase, dt, next.v_r));
        }
        self.step += 1;
    }
}

/// Closed-loop run of the supervised SV. The start state must satisfy the
/// safety condition.
pub fn run_supervised(
    params: &RssParams,
    cfg: &SupervisorConfig,
    start: &ScenarioState,
    ac_policy: impl AccelPolicy,
    pov: &mut PovBehavior,
    opts: &IntegrateOptions,
) -> Result<ExecutionTrace> {
    let eval = evaluate(params, start);
    if !eval.condition_holds {
        return Err(Error::UnsafeStart { margin: eval.margin });
    }
    let mut sup = Supervised::new(*params, *cfg, ac_policy, opts.dt)?;
    integrate(params, start, &mut sup, pov, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::Stage;
    use crate::dynamics::{adversarial, integrate, BenignFollower, Constant, Scheme, Unsupervised};

    fn p() -> RssParams {
        RssParams::reference()
    }

    fn cfg() -> SupervisorConfig {
        SupervisorConfig::default()
    }

    fn at(gap: f64, v_r: f64, v_f: f64) -> ScenarioState {
        ScenarioState::from_gap(gap, v_r, v_f).unwrap()
    }

    #[test]
    fn large_margin_stays_ac() {
        let (next, cmd) = decide(&p(), &cfg(), &SupervisorState::default(), &at(100.0, 20.0, 20.0), 5.0, 0.0, 1e-3)
            .unwrap();
        assert_eq!(next.mode, SupervisorMode::Ac);
        assert_eq!(cmd, 2.0);
        let (_, cmd) = decide(&p(), &cfg(), &SupervisorState::default(), &at(100.0, 20.0, 20.0), -9.0, 0.0, 1e-3)
            .unwrap();
        assert_eq!(cmd, -4.0);
    }

    #[test]
    fn lookahead_engages_near_boundary() {
        // successor after 0.1 s: v_r = 20.2, v_f = 19.2, gap = 34.2 + 1.96 - 2.01,
        // d_min(20.2, 19.2) = 6.06 + 0.09 + 54.08 - 23.04 = 37.19
        let s = at(34.2, 20.0, 20.0);
        let succ = worst_case_successor(&p(), &s, 0.1);
        assert!((succ.v_r - 20.2).abs() < 1e-12 && (succ.v_f - 19.2).abs() < 1e-12);
        assert!((succ.gap() - 34.15).abs() < 1e-9);
        let oracle = 20.2 * 0.3 + 0.5 * 2.0 * 0.09 + 20.8f64.powi(2) / 8.0 - 19.2f64.powi(2) / 16.0;
        assert!((oracle - 37.19).abs() < 1e-9);
        assert!(succ.gap() <= oracle);

        let (next, cmd) = decide(&p(), &cfg(), &SupervisorState::default(), &s, 2.0, 3.0, 1e-3).unwrap();
        match next.mode {
            SupervisorMode::Bc(phase) => {
                assert!(phase.start_state_condition_held);
                assert_eq!(phase.started_at, 3.0);
                assert!(phase.in_window());
            }
            SupervisorMode::Ac => panic!("expected BC"),
        }
        assert!(cmd <= p().a_max());
    }

    #[test]
    fn halted_far_behind_switches_back() {
        let halted = ResponsePhase {
            stage: Stage::Halted,
            started_at: 0.0,
            start_state_condition_held: true,
        };
        let sup = SupervisorState {
            mode: SupervisorMode::Bc(halted),
            ..Default::default()
        };
        let s = at(50.0, 0.0, 0.0);
        assert!((evaluate(&p(), &s).margin - 49.865).abs() < 1e-12);
        let (next, cmd) = decide(&p(), &cfg(), &sup, &s, 1.0, 9.0, 1e-3).unwrap();
        assert_eq!(next.mode, SupervisorMode::Ac);
        assert_eq!(cmd, 1.0);
    }

    #[test]
    fn no_switch_back_inside_window_or_below_hysteresis() {
        let window = ResponsePhase::engage(0.0, true);
        let sup = SupervisorState {
            mode: SupervisorMode::Bc(window),
            ..Default::default()
        };
        let (next, _) = decide(&p(), &cfg(), &sup, &at(500.0, 0.0, 0.0), 1.0, 0.1, 1e-3).unwrap();
        assert!(matches!(next.mode, SupervisorMode::Bc(_)));

        let halted = SupervisorState {
            mode: SupervisorMode::Bc(ResponsePhase {
                stage: Stage::Halted,
                ..window
            }),
            ..Default::default()
        };
        // margin 0.865 < h = 1
        let (next, cmd) = decide(&p(), &cfg(), &halted, &at(1.0, 0.0, 0.0), 1.0, 0.1, 1e-3).unwrap();
        assert!(matches!(next.mode, SupervisorMode::Bc(_)));
        assert_eq!(cmd, 0.0);
    }

    #[test]
    fn ac_with_violated_condition_is_a_breach() {
        let r = decide(&p(), &cfg(), &SupervisorState::default(), &at(30.0, 20.0, 20.0), 0.0, 0.0, 1e-3);
        assert!(matches!(r, Err(Error::InvariantBreach(_))));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate(&p()).is_ok());
        let bad = |c: SupervisorConfig| c.validate(&p()).is_err();
        assert!(bad(SupervisorConfig { period: 0.0, ..cfg() }));
        assert!(bad(SupervisorConfig { period: 0.31, ..cfg() }));
        assert!(bad(SupervisorConfig { switchback_margin: -1.0, ..cfg() }));
        assert!(bad(SupervisorConfig { sv_command_bounds: Some([1.0, -1.0]), ..cfg() }));
        assert!(bad(SupervisorConfig { sv_command_bounds: Some([-4.0, 3.0]), ..cfg() }));
        assert!(!bad(SupervisorConfig { sv_command_bounds: Some([-6.0, 1.0]), ..cfg() }));
        let parsed = SupervisorConfig::from_json(r#"{"period": 0.05, "switchback_margin": 2.0}"#).unwrap();
        assert_eq!(parsed.period, 0.05);
        assert_eq!(parsed.bounds(&p()), (-4.0, 2.0));
        assert!(SupervisorConfig::from_json(r#"{"period": 0.05, "bogus": 1}"#).is_err());
        assert!(steps_per_decision(0.1, 0.03).is_err());
        assert_eq!(steps_per_decision(0.1, 1e-3).unwrap(), 100);
    }

    fn opts(t_end: f64) -> IntegrateOptions {
        IntegrateOptions {
            dt: 1e-2,
            t_end: Some(t_end),
            scheme: Scheme::ExactPiecewise,
            record: true,
        }
    }

    #[test]
    fn adversarial_ac_against_braking_pov() {
        let start = at(100.0, 20.0, 20.0);
        let trace = run_supervised(&p(), &cfg(), &start, adversarial(&p()), &mut PovBehavior::worst_case(), &opts(30.0))
            .unwrap();
        assert!(!trace.collided());
        assert!(trace.bc_engagements() >= 1);
        assert!(trace.min_gap > 0.0);
    }

    #[test]
    fn benign_ac_never_engages() {
        let start = at(60.0, 20.0, 20.0);
        let trace = run_supervised(
            &p(),
            &cfg(),
            &start,
            BenignFollower::new(p()),
            &mut PovBehavior::gentle(),
            &opts(60.0),
        )
        .unwrap();
        assert!(!trace.collided());
        assert_eq!(trace.bc_engagements(), 0);
    }

    #[test]
    fn bypassed_supervisor_collides() {
        let start = at(100.0, 20.0, 20.0);
        let mut sv = Unsupervised::new(adversarial(&p()), &p());
        let trace = integrate(&p(), &start, &mut sv, &mut PovBehavior::worst_case(), &opts(30.0)).unwrap();
        assert!(trace.collided());
    }

    #[test]
    fn unsafe_start_rejected() {
        let r = run_supervised(&p(), &cfg(), &at(30.0, 20.0, 20.0), Constant(0.0), &mut PovBehavior::worst_case(), &opts(1.0));
        assert!(matches!(r, Err(Error::UnsafeStart { .. })));
        let r = run_supervised(
            &p(),
            &cfg(),
            &at(100.0, 20.0, 20.0),
            Constant(0.0),
            &mut PovBehavior::worst_case(),
            &IntegrateOptions { dt: 0.03, ..opts(1.0) },
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn hysteresis_on_mode_changes() {
        // POV alternates hard braking and acceleration; the AC always pushes.
        let pov_law = |t: f64, _s: &ScenarioState| if (t / 3.0).floor() as i64 % 2 == 0 { -8.0 } else { 2.0 };
        let start = at(80.0, 15.0, 15.0);
        let trace = run_supervised(&p(), &cfg(), &start, adversarial(&p()), &mut PovBehavior::new(pov_law, 2.0), &opts(60.0))
            .unwrap();
        assert!(!trace.collided());
        assert!(trace.bc_engagements() >= 2);
        for w in trace.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.mode == ControlMode::Bc && b.mode == ControlMode::Ac {
                assert!(evaluate(&p(), &b.state).margin > cfg().switchback_margin);
            }
            if a.mode == ControlMode::Ac && b.mode == ControlMode::Bc {
                assert!(evaluate(&p(), &b.state).condition_holds);
                assert!(!lookahead_holds(&p(), &b.state, cfg().period));
            }
        }
    }
}
