//! Seeded verification campaigns: the no-collision guarantee for safe start
//! states, its tightness below the safe distance, and collision freedom of
//! the supervised controller.
//!
//! Every trial draws from its own ChaCha stream (`seed`, trial index), so
//! results do not depend on scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{check_compliance, default_rules, safety_metric, Tolerances};
use crate::dynamics::{
    adversarial, integrate, ExecutionTrace, IntegrateOptions, PiecewiseConstant, PovBehavior,
    Scheme, Unsupervised, VelocityCase, WorstCaseProfile, DEFAULT_POV_FWD_MAX,
};
use crate::error::{ensure_finite, Error, Result};
use crate::params::RssParams;
use crate::response::{ProperResponse, WindowPolicy};
use crate::rule::{evaluate, safe_distance};
use crate::state::ScenarioState;
use crate::supervisor::{run_supervised, SupervisorConfig};

/// Step used by campaigns. The exact scheme is exact for the held commands,
/// so a coarse step loses no soundness.
pub const CAMPAIGN_DT: f64 = 0.02;

/// Slack when comparing a randomized run's minimum gap with the closed-form
/// worst case.
pub const DOMINANCE_TOL: f64 = 1e-6;

/// Deterministic boundary grid run before the random trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub v_step: f64,
    pub v_max: f64,
    /// Offsets above the safe distance (m).
    pub margins: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            v_step: 5.0,
            v_max: 40.0,
            margins: vec![1e-3, 1.0, 10.0],
        }
    }
}

impl GridConfig {
    pub fn speeds(&self) -> Vec<f64> {
        let n = (self.v_max / self.v_step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.v_step).collect()
    }

    /// `(v_r, v_f, margin)` triples in a fixed order.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let speeds = self.speeds();
        let mut out = Vec::new();
        for &v_r in &speeds {
            for &v_f in &speeds {
                for &m in &self.margins {
                    out.push((v_r, v_f, m));
                }
            }
        }
        out
    }
}

fn default_seed() -> u64 {
    20_240_601
}
fn default_speed_range() -> [f64; 2] {
    [0.0, 40.0]
}
fn default_margin_range() -> [f64; 2] {
    [0.0, 50.0]
}
fn default_fraction_range() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_dt() -> f64 {
    CAMPAIGN_DT
}
fn default_grid() -> Option<GridConfig> {
    Some(GridConfig::default())
}
fn default_fwd() -> f64 {
    DEFAULT_POV_FWD_MAX
}

/// Sampling ranges and sizes of a campaign. Intervals are `[lo, hi]`; the
/// margin and fraction draws exclude `lo` and include `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n_trials: usize,
    #[serde(default = "default_speed_range")]
    pub v_r: [f64; 2],
    #[serde(default = "default_speed_range")]
    pub v_f: [f64; 2],
    /// Gap above the safe distance, for safety campaigns (m).
    #[serde(default = "default_margin_range")]
    pub gap_margin: [f64; 2],
    /// Gap as a fraction of the safe distance, for falsification.
    #[serde(default = "default_fraction_range")]
    pub gap_fraction: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_grid")]
    pub grid: Option<GridConfig>,
    /// POV forward acceleration bound for randomized behaviours (m/s²).
    #[serde(default = "default_fwd")]
    pub pov_fwd_max: f64,
}

impl CampaignConfig {
    pub fn new(seed: u64, n_trials: usize) -> Self {
        Self {
            seed,
            n_trials,
            v_r: default_speed_range(),
            v_f: default_speed_range(),
            gap_margin: default_margin_range(),
            gap_fraction: default_fraction_range(),
            dt: CAMPAIGN_DT,
            grid: default_grid(),
            pov_fwd_max: DEFAULT_POV_FWD_MAX,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, [lo, hi]: [f64; 2]| -> Result<()> {
            ensure_finite("range bound", lo)?;
            ensure_finite("range bound", hi)?;
            if lo > hi || lo < 0.0 {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is invalid")));
            }
            Ok(())
        };
        range("v_r", self.v_r)?;
        range("v_f", self.v_f)?;
        range("gap_margin", self.gap_margin)?;
        range("gap_fraction", self.gap_fraction)?;
        if self.gap_fraction[1] > 1.0 {
            return Err(Error::Config("gap_fraction must lie in [0, 1]".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        ensure_finite("pov_fwd_max", self.pov_fwd_max)?;
        if let Some(g) = &self.grid {
            if !(g.v_step > 0.0 && g.v_max >= 0.0 && g.v_max.is_finite()) {
                return Err(Error::Config("grid needs v_step > 0 and v_max >= 0".into()));
            }
            if g.margins.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(Error::Config("grid margins must be > 0".into()));
            }
        }
        Ok(())
    }

    fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    SafetyTheorem,
    Falsification,
    Supervised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: usize,
    pub start: ScenarioState,
    pub behavior: String,
    pub min_gap: f64,
    #[serde(skip)]
    pub trace: Option<ExecutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOutcome {
    pub kind: CampaignKind,
    pub trials_run: usize,
    pub grid_trials: usize,
    /// Sampled states rejected before running (condition false, or nothing
    /// to falsify).
    pub filtered: usize,
    pub collisions: usize,
    pub counterexamples: Vec<Counterexample>,
    /// Worst-case velocity pattern of every start state that was run.
    pub case_counts: BTreeMap<VelocityCase, usize>,
    /// Trials whose randomized run got closer than the closed-form worst case.
    pub dominance_failures: usize,
    /// Collision-free worst cases whose minimum gap was not at an end point.
    pub min_gap_interior: usize,
    /// Supervised campaigns only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supervised: Option<SupervisedStats>,
    pub passed: bool,
}

impl CampaignOutcome {
    /// Traces of the counterexamples, keyed by trial index.
    pub fn traces(&self) -> impl Iterator<Item = (usize, &ExecutionTrace)> {
        self.counterexamples
            .iter()
            .filter_map(|c| c.trace.as_ref().map(|t| (c.trial, t)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedStats {
    pub noncompliant: usize,
    pub bc_engagements: usize,
    pub runs_with_bc: usize,
    /// Smallest margin seen at any AC-mode sample.
    pub min_ac_margin: f64,
}

fn sort_counterexamples(v: &mut [Counterexample]) {
    v.sort_by(|a, b| {
        a.start
            .v_r
            .total_cmp(&b.start.v_r)
            .then(a.start.v_f.total_cmp(&b.start.v_f))
            .then(a.start.gap().total_cmp(&b.start.gap()))
            .then(a.trial.cmp(&b.trial))
    });
}

/// Draw in `(lo, hi]`.
fn open_closed(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * (1.0 - rng.gen::<f64>())
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Piecewise-constant POV acceleration with 3 to 8 segments spanning
/// roughly `horizon`; a fifth of the segments brake at exactly `a_brake_max`.
pub fn random_pov(params: &RssParams, a_fwd_max: f64, horizon: f64, rng: &mut ChaCha8Rng) -> PiecewiseConstant {
    let n = rng.gen_range(3..=8);
    let mut t = 0.0;
    let segments = (0..n)
        .map(|_| {
            t += rng.gen::<f64>() * 2.0 * horizon / n as f64;
            let a = if rng.gen_bool(0.2) {
                -params.a_brake_max()
            } else {
                uniform(rng, [-params.a_brake_max(), a_fwd_max])
            };
            (t, a)
        })
        .collect();
    PiecewiseConstant::new(segments)
}

/// [`random_pov`] drawn from its own generator seeded with `seed`.
pub fn seeded_pov(params: &RssParams, a_fwd_max: f64, horizon: f64, seed: u64) -> PiecewiseConstant {
    random_pov(params, a_fwd_max, horizon, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Response-window schedule with 1 to 3 segments in `[-a_brake_min, a_max]`.
pub fn random_window(params: &RssParams, rng: &mut ChaCha8Rng) -> WindowPolicy {
    let n = rng.gen_range(1..=3);
    let rho = params.rho();
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>() * rho).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(f64::INFINITY);
    let segments = cuts
        .into_iter()
        .map(|until| {
            let a = if rng.gen_bool(0.3) {
                params.a_max()
            } else {
                uniform(rng, [-params.a_brake_min(), params.a_max()])
            };
            (until, a)
        })
        .collect();
    WindowPolicy::Schedule { segments }
}

struct TrialResult {
    ran: bool,
    case: Option<VelocityCase>,
    collided: bool,
    counterexample: Option<Counterexample>,
    dominance_failure: bool,
    min_gap_interior: bool,
}

impl TrialResult {
    fn filtered() -> Self {
        Self {
            ran: false,
            case: None,
            collided: false,
            counterexample: None,
            dominance_failure: false,
            min_gap_interior: false,
        }
    }
}

fn exact(dt: f64, record: bool) -> IntegrateOptions {
    IntegrateOptions {
        dt,
        t_end: None,
        scheme: Scheme::ExactPiecewise,
        record,
    }
}

fn safety_trial(params: &RssParams, cfg: &CampaignConfig, trial: usize, start: ScenarioState) -> Result<TrialResult> {
    if !evaluate(params, &start).condition_holds {
        return Ok(TrialResult::filtered());
    }
    let profile = WorstCaseProfile::new(*params, start)?;
    let (_, wc_min) = profile.min_gap();
    let wc_ends = start.gap().min(profile.gap_at_sv_halt());
    let wc_contact = profile.first_contact();

    let mut rng = cfg.rng(trial);
    let pov_law = random_pov(params, cfg.pov_fwd_max, profile.sv_halt_time().max(1.0), &mut rng);
    let window = random_window(params, &mut rng);
    let run = |record: bool| -> Result<ExecutionTrace> {
        let mut sv = ProperResponse::new(*params, window.clone(), &start, 0.0);
        let mut pov = PovBehavior::new(pov_law.clone(), cfg.pov_fwd_max);
        integrate(params, &start, &mut sv, &mut pov, &exact(cfg.dt, record))
    };
    let trace = run(false)?;

    let counterexample = if wc_contact.is_some() {
        Some(Counterexample {
            trial,
            start,
            behavior: "worst_case".into(),
            min_gap: wc_min,
            trace: Some(profile.sample(cfg.dt)?),
        })
    } else if trace.collided() {
        Some(Counterexample {
            trial,
            start,
            behavior: "randomized".into(),
            min_gap: trace.min_gap,
            trace: Some(run(true)?),
        })
    } else {
        None
    };
    Ok(TrialResult {
        ran: true,
        case: Some(profile.velocity_case()),
        collided: counterexample.is_some(),
        counterexample,
        dominance_failure: trace.min_gap < wc_min - DOMINANCE_TOL,
        min_gap_interior: wc_contact.is_none() && wc_min < wc_ends - DOMINANCE_TOL,
    })
}

fn aggregate(kind: CampaignKind, grid_trials: usize, results: Vec<TrialResult>) -> CampaignOutcome {
    let mut case_counts: BTreeMap<VelocityCase, usize> =
        VelocityCase::ALL.iter().map(|c| (*c, 0)).collect();
    let mut out = CampaignOutcome {
        kind,
        trials_run: 0,
        grid_trials,
        filtered: 0,
        collisions: 0,
        counterexamples: Vec::new(),
        case_counts: BTreeMap::new(),
        dominance_failures: 0,
        min_gap_interior: 0,
        supervised: None,
        passed: false,
    };
    for r in results {
        if !r.ran {
            out.filtered += 1;
            continue;
        }
        out.trials_run += 1;
        if let Some(c) = r.case {
            *case_counts.entry(c).or_default() += 1;
        }
        out.collisions += usize::from(r.collided);
        out.dominance_failures += usize::from(r.dominance_failure);
        out.min_gap_interior += usize::from(r.min_gap_interior);
        out.counterexamples.extend(r.counterexample);
    }
    sort_counterexamples(&mut out.counterexamples);
    out.case_counts = case_counts;
    out
}

/// Start states satisfying the condition never lead to a collision, neither
/// under the closed-form worst case nor under randomized admissible POV
/// behaviours and response-window commands.
pub fn verify_safety_theorem(params: &RssParams, cfg: &CampaignConfig) -> Result<CampaignOutcome> {
    cfg.validate()?;
    let grid: Vec<ScenarioState> = cfg
        .grid
        .as_ref()
        .map(|g| g.points())
        .unwrap_or_default()
        .into_iter()
        .map(|(v_r, v_f, m)| {
            let d = safe_distance(params, v_r, v_f)?;
            ScenarioState::from_gap(d + m, v_r, v_f)
        })
        .collect::<Result<_>>()?;
    let g = grid.len();
    let results = (0..g + cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let start = if trial < g {
                grid[trial]
            } else {
                let mut rng = cfg.rng(trial);
                let v_r = uniform(&mut rng, cfg.v_r);
                let v_f = uniform(&mut rng, cfg.v_f);
                let margin = open_closed(&mut rng, cfg.gap_margin);
                ScenarioState::from_gap(safe_distance(params, v_r, v_f)? + margin, v_r, v_f)?
            };
            // the start draw and the behaviour draw use separate streams
            safety_trial(params, cfg, trial + cfg.n_trials + g, start)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = aggregate(CampaignKind::SafetyTheorem, g, results);
    out.passed = out.collisions == 0;
    Ok(out)
}

/// Start states at or below the safe distance collide under the worst case,
/// touching included.
pub fn falsify_below_threshold(params: &RssParams, cfg: &CampaignConfig) -> Result<CampaignOutcome> {
    cfg.validate()?;
    if safe_distance(params, cfg.v_r[1], cfg.v_f[0])? == 0.0 {
        return Err(Error::Config(
            "the safe distance is zero over the whole range; nothing to falsify".into(),
        ));
    }
    let results = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialResult> {
            let mut rng = cfg.rng(trial);
            let mut drawn = None;
            for _ in 0..10_000 {
                let v_r = uniform(&mut rng, cfg.v_r);
                let v_f = uniform(&mut rng, cfg.v_f);
                let d = safe_distance(params, v_r, v_f)?;
                let u = open_closed(&mut rng, cfg.gap_fraction);
                if d > 0.0 && d * u > 0.0 {
                    drawn = Some(ScenarioState::from_gap(d * u, v_r, v_f)?);
                    break;
                }
            }
            let Some(start) = drawn else {
                return Ok(TrialResult::filtered());
            };
            let profile = WorstCaseProfile::new(*params, start)?;
            let collided = profile.first_contact().is_some();
            Ok(TrialResult {
                ran: true,
                case: Some(profile.velocity_case()),
                collided,
                counterexample: (!collided).then(|| Counterexample {
                    trial,
                    start,
                    behavior: "worst_case".into(),
                    min_gap: profile.min_gap().1,
                    trace: profile.sample(cfg.dt).ok(),
                }),
                dominance_failure: false,
                min_gap_interior: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = aggregate(CampaignKind::Falsification, 0, results);
    out.passed = out.counterexamples.is_empty() && out.filtered == 0;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcKind {
    /// Always `+a_max`.
    Adversarial,
    /// Random piecewise-constant commands, partly outside the clamp.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PovKind {
    WorstCase,
    Random,
}

fn default_t_end() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedCampaignConfig {
    #[serde(flatten)]
    pub campaign: CampaignConfig,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    pub ac: AcKind,
    pub pov: PovKind,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Run the AC without the decision module (negative control).
    #[serde(default)]
    pub bypass: bool,
}

impl SupervisedCampaignConfig {
    pub fn new(campaign: CampaignConfig, ac: AcKind, pov: PovKind) -> Self {
        Self {
            campaign,
            supervisor: SupervisorConfig::default(),
            ac,
            pov,
            t_end: default_t_end(),
            bypass: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.campaign.validate()?;
        Ok(cfg)
    }
}

struct SupervisedTrial {
    base: TrialResult,
    compliant: bool,
    engagements: usize,
    min_ac_margin: f64,
}

fn supervised_trial(
    params: &RssParams,
    cfg: &SupervisedCampaignConfig,
    trial: usize,
) -> Result<SupervisedTrial> {
    let c = &cfg.campaign;
    let mut rng = c.rng(trial);
    let v_r = uniform(&mut rng, c.v_r);
    let v_f = uniform(&mut rng, c.v_f);
    let margin = open_closed(&mut rng, c.gap_margin);
    let start = ScenarioState::from_gap(safe_distance(params, v_r, v_f)? + margin, v_r, v_f)?;
    if !evaluate(params, &start).condition_holds {
        return Ok(SupervisedTrial {
            base: TrialResult::filtered(),
            compliant: true,
            engagements: 0,
            min_ac_margin: f64::INFINITY,
        });
    }
    let ac = match cfg.ac {
        AcKind::Adversarial => PiecewiseConstant::new(vec![(f64::INFINITY, adversarial(params).0)]),
        AcKind::Random => {
            let law = random_pov(params, params.a_max() + 1.0, cfg.t_end, &mut rng);
            let widened = law
                .segments()
                .iter()
                .map(|&(t, a)| (t, a.clamp(-params.a_brake_max(), params.a_max() + 1.0)))
                .collect();
            PiecewiseConstant::new(widened)
        }
    };
    let mut pov = match cfg.pov {
        PovKind::WorstCase => PovBehavior::worst_case(),
        PovKind::Random => PovBehavior::new(random_pov(params, c.pov_fwd_max, cfg.t_end, &mut rng), c.pov_fwd_max),
    };
    let opts = IntegrateOptions {
        dt: c.dt,
        t_end: Some(cfg.t_end),
        scheme: Scheme::ExactPiecewise,
        record: true,
    };
    let trace = if cfg.bypass {
        integrate(params, &start, &mut Unsupervised::new(ac, params), &mut pov, &opts)?
    } else {
        run_supervised(params, &cfg.supervisor, &start, ac, &mut pov, &opts)?
    };

    let traj = trace.to_trajectory(*params)?;
    let compliant = check_compliance(&traj, &default_rules(), &Tolerances::default())?.compliant;
    let metric = safety_metric(&traj, &default_rules())?;
    let min_ac_margin = traj
        .samples()
        .iter()
        .zip(&metric.margin)
        .filter(|(s, _)| s.mode == crate::state::ControlMode::Ac)
        .map(|(_, m)| *m)
        .fold(f64::INFINITY, f64::min);
    let collided = trace.collided();
    let engagements = trace.bc_engagements();
    let counterexample = (collided || !compliant).then(|| Counterexample {
        trial,
        start,
        behavior: format!(
            "{:?}/{:?}{}",
            cfg.ac,
            cfg.pov,
            if cfg.bypass { "/bypass" } else { "" }
        )
        .to_lowercase(),
        min_gap: trace.min_gap,
        trace: Some(trace),
    });
    Ok(SupervisedTrial {
        base: TrialResult {
            ran: true,
            case: Some(WorstCaseProfile::new(*params, start)?.velocity_case()),
            collided,
            counterexample,
            dominance_failure: false,
            min_gap_interior: false,
        },
        compliant,
        engagements,
        min_ac_margin,
    })
}

/// Supervised runs from safe start states never collide and always pass the
/// compliance audit. With `bypass` set the same runs serve as a negative
/// control and are expected to collide.
pub fn verify_supervised_safety(
    params: &RssParams,
    cfg: &SupervisedCampaignConfig,
) -> Result<CampaignOutcome> {
    cfg.campaign.validate()?;
    cfg.supervisor.validate(params)?;
    let trials = (0..cfg.campaign.n_trials)
        .into_par_iter()
        .map(|trial| supervised_trial(params, cfg, trial))
        .collect::<Result<Vec<_>>>()?;
    let stats = SupervisedStats {
        noncompliant: trials.iter().filter(|t| t.base.ran && !t.compliant).count(),
        bc_engagements: trials.iter().map(|t| t.engagements).sum(),
        runs_with_bc: trials.iter().filter(|t| t.engagements > 0).count(),
        min_ac_margin: trials.iter().map(|t| t.min_ac_margin).fold(f64::INFINITY, f64::min),
    };
    let mut out = aggregate(
        CampaignKind::Supervised,
        0,
        trials.into_iter().map(|t| t.base).collect(),
    );
    out.passed = if cfg.bypass {
        out.collisions > 0
    } else {
        out.collisions == 0 && stats.noncompliant == 0
    };
    out.supervised = Some(stats);
    Ok(out)
}
