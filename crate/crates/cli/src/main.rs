//! `rss`: safe-distance evaluation, supervised simulation, trajectory audits
//! and verification campaigns from the command line.
//!
//! Exit codes: 0 the checked property holds, 1 it does not, 2 usage or
//! validation error, 3 the start state violates the safety condition.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rss_core::audit::{audit, default_rules, AuditReport, Tolerances};
use rss_core::dynamics::{
    adversarial, integrate, BenignFollower, ExecutionTrace, IntegrateOptions, PiecewiseConstant,
    PovBehavior, Scheme, Unsupervised, DEFAULT_POV_FWD_MAX,
};
use rss_core::io::{
    config_from_json, dump_counterexamples, format_sig, metric_csv, params_from_json,
    read_text, read_trajectory, write_trajectory, Report,
};
use rss_core::supervisor::{run_supervised, SupervisorConfig};
use rss_core::verify::{
    falsify_below_threshold, seeded_pov, verify_safety_theorem, verify_supervised_safety,
    CampaignConfig, CampaignOutcome, SupervisedCampaignConfig,
};
use rss_core::{evaluate, safe_distance_terms, Error, RssParams, ScenarioState};

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser)]
#[command(name = "rss", version, about = "Safe following distance: evaluation, simulation, audit and verification")]
struct Cli {
    /// Parameter file (JSON); a report file also works. Defaults to the
    /// built-in reference parameters.
    #[arg(long, global = true, env = "RSS_PARAMS")]
    params: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the safe distance and its terms.
    SafeDistance {
        #[arg(long, allow_hyphen_values = true)]
        v_r: f64,
        #[arg(long, allow_hyphen_values = true)]
        v_f: f64,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Simulate the SV behind a POV and write the trajectory.
    Simulate(SimulateArgs),
    /// Audit a recorded trajectory.
    Audit {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write `t,gap,d_min,margin,v_r,v_f,mode` for plotting.
        #[arg(long)]
        metric_csv: Option<PathBuf>,
        #[arg(long, default_value_t = rss_core::audit::DEFAULT_ACCEL_TOL)]
        accel_tol: f64,
        /// Defaults to one sample period.
        #[arg(long)]
        time_tol: Option<f64>,
    },
    /// Check that safe start states never collide.
    Verify(CampaignArgs),
    /// Check that start states at or below the safe distance collide.
    Falsify(CampaignArgs),
    /// Check supervised runs for collisions and compliance.
    VerifySupervised {
        #[command(flatten)]
        campaign: CampaignArgs,
        /// Run without the decision module (negative control; passes when
        /// collisions occur).
        #[arg(long)]
        bypass: bool,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SchemeArg {
    Exact,
    SemiImplicit,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Exact => Scheme::ExactPiecewise,
            SchemeArg::SemiImplicit => Scheme::SemiImplicitEuler,
        }
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Start state `x_f,v_f,x_r,v_r`.
    #[arg(long, allow_hyphen_values = true)]
    start: String,
    /// `adversarial`, `benign` or `file:PATH` (CSV `t,a`: acceleration from t on).
    #[arg(long, default_value = "adversarial")]
    ac: String,
    /// `worst`, `gentle`, `random` or `random:SEED`.
    #[arg(long, default_value = "worst")]
    pov: String,
    #[arg(long)]
    supervisor_config: Option<PathBuf>,
    #[arg(long)]
    no_supervisor: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 30.0)]
    t_end: f64,
    /// Seed for `--pov random`.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exact")]
    scheme: SchemeArg,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign config (JSON), or a report whose embedded config to reuse.
    #[arg(long)]
    campaign: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for counterexample trajectories.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

/// Outcome of a command: an exit status plus what to print.
struct Done {
    ok: bool,
}

fn load_params(path: Option<&Path>) -> Result<RssParams, Error> {
    match path {
        Some(p) => params_from_json(&read_text(p)?),
        None => Ok(RssParams::reference()),
    }
}

fn parse_start(text: &str) -> Result<ScenarioState, Error> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Parse(format!("--start {text:?}: expected x_f,v_f,x_r,v_r")))?;
    match v.as_slice() {
        [x_f, v_f, x_r, v_r] => ScenarioState::new(*x_f, *v_f, *x_r, *v_r),
        _ => Err(Error::Parse(format!("--start {text:?}: expected 4 values"))),
    }
}

fn schedule_from_csv(path: &Path) -> Result<PiecewiseConstant, Error> {
    let text = read_text(path)?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let parsed: Option<(f64, f64)> = line
            .split_once(',')
            .and_then(|(t, a)| Some((t.trim().parse().ok()?, a.trim().parse().ok()?)));
        match parsed {
            Some((t, a)) if t.is_finite() && a.is_finite() => rows.push((t, a)),
            _ => return Err(Error::Parse(format!("{}:{}: expected `t,a`", path.display(), i + 1))),
        }
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Parse(format!("{}: times must increase", path.display())));
    }
    // each row applies from its own time until the next row
    let segments = rows
        .iter()
        .enumerate()
        .map(|(i, &(_, a))| (rows.get(i + 1).map_or(f64::INFINITY, |r| r.0), a))
        .collect();
    Ok(PiecewiseConstant::new(segments))
}

enum Ac {
    Adversarial,
    Benign,
    Schedule(PiecewiseConstant),
}

fn parse_ac(spec: &str) -> Result<Ac, Error> {
    match spec {
        "adversarial" => Ok(Ac::Adversarial),
        "benign" => Ok(Ac::Benign),
        s => match s.strip_prefix("file:") {
            Some(path) => Ok(Ac::Schedule(schedule_from_csv(Path::new(path))?)),
            None => Err(Error::Parse(format!(
                "--ac {s:?}: expected adversarial, benign or file:PATH"
            ))),
        },
    }
}

fn parse_pov(spec: &str, params: &RssParams, horizon: f64, seed: u64) -> Result<PovBehavior, Error> {
    let random = |seed| PovBehavior::new(seeded_pov(params, DEFAULT_POV_FWD_MAX, horizon, seed), DEFAULT_POV_FWD_MAX);
    match spec {
        "worst" => Ok(PovBehavior::worst_case()),
        "gentle" => Ok(PovBehavior::gentle()),
        "random" => Ok(random(seed)),
        s => match s.strip_prefix("random:").map(str::parse::<u64>) {
            Some(Ok(seed)) => Ok(random(seed)),
            _ => Err(Error::Parse(format!(
                "--pov {s:?}: expected worst, gentle, random or random:SEED"
            ))),
        },
    }
}

fn simulate_with<P: rss_core::dynamics::AccelPolicy>(
    params: &RssParams,
    args: &SimulateArgs,
    sup: &SupervisorConfig,
    start: &ScenarioState,
    ac: P,
    pov: &mut PovBehavior,
) -> Result<ExecutionTrace, Error> {
    let opts = IntegrateOptions {
        dt: args.dt,
        t_end: Some(args.t_end),
        scheme: args.scheme.into(),
        record: true,
    };
    if args.no_supervisor {
        integrate(params, start, &mut Unsupervised::new(ac, params), pov, &opts)
    } else {
        run_supervised(params, sup, start, ac, pov, &opts)
    }
}

fn cmd_simulate(params: &RssParams, args: &SimulateArgs) -> Result<Done, Error> {
    let start = parse_start(&args.start)?;
    let sup = match &args.supervisor_config {
        Some(p) => config_from_json::<SupervisorConfig>(&read_text(p)?)?,
        None => SupervisorConfig::default(),
    };
    sup.validate(params)?;
    let eval = evaluate(params, &start);
    if !eval.condition_holds {
        return Err(Error::UnsafeStart { margin: eval.margin });
    }
    let mut pov = parse_pov(&args.pov, params, args.t_end, args.seed)?;
    let trace = match parse_ac(&args.ac)? {
        Ac::Adversarial => simulate_with(params, args, &sup, &start, adversarial(params), &mut pov)?,
        Ac::Benign => simulate_with(params, args, &sup, &start, BenignFollower::new(*params), &mut pov)?,
        Ac::Schedule(s) => simulate_with(params, args, &sup, &start, s, &mut pov)?,
    };
    let traj = trace.to_trajectory(*params)?;
    let report = audit(&traj, &Tolerances::default())?;

    if let Some(out) = &args.out {
        let comments = vec![
            format!("params {}", serde_json::to_string(params)?),
            format!("simulate {}", serde_json::to_string(args)?),
            format!("supervisor {}", serde_json::to_string(&sup)?),
        ];
        write_trajectory(out, &trace.samples, &comments)?;
    }
    println!("collision: {}", if trace.collided() { "yes" } else { "no" });
    println!("min gap: {}", format_sig(trace.min_gap));
    println!("BC engagements: {}", trace.bc_engagements());
    println!("compliant: {}", if report.compliant { "yes" } else { "no" });
    println!("samples: {}", trace.samples.len());
    Ok(Done { ok: true })
}

fn write_report<T: Serialize>(
    params: &RssParams,
    config: &impl Serialize,
    result: T,
    out: Option<&Path>,
) -> Result<(), Error> {
    if let Some(out) = out {
        std::fs::write(out, Report::new(*params, config, result)?.to_json()?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AuditConfig<'a> {
    trajectory: &'a Path,
    tolerances: Tolerances,
}

fn cmd_audit(
    params: &RssParams,
    trajectory: &Path,
    out: Option<&Path>,
    metric: Option<&Path>,
    tol: Tolerances,
) -> Result<Done, Error> {
    let traj = read_trajectory(trajectory, *params)?;
    let report: AuditReport = audit(&traj, &tol)?;
    if let Some(m) = metric {
        std::fs::write(m, metric_csv(&traj, &default_rules())?)?;
    }
    println!("compliant: {}", report.compliant);
    println!("violations: {}", report.violations.len());
    for v in &report.violations {
        println!("  {:?} from t = {} to t = {}", v.reason, format_sig(v.t_start), format_sig(v.t_end));
    }
    println!("metric score: {}", format_sig(report.metric_score));
    println!("liability: {:?}", report.liability);
    let ok = report.compliant;
    write_report(
        params,
        &AuditConfig {
            trajectory,
            tolerances: tol,
        },
        report,
        out,
    )?;
    Ok(Done { ok })
}

fn campaign_config(args: &CampaignArgs) -> Result<CampaignConfig, Error> {
    let mut cfg = match &args.campaign {
        Some(p) => config_from_json::<CampaignConfig>(&read_text(p)?)?,
        None => CampaignConfig::new(DEFAULT_SEED, 10_000),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.trials {
        cfg.n_trials = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_outcome(out: &CampaignOutcome) {
    println!("trials: {}", out.trials_run);
    println!("filtered: {}", out.filtered);
    println!("collisions: {}", out.collisions);
    println!("counterexamples: {}", out.counterexamples.len());
    let cases: Vec<String> = out.case_counts.iter().map(|(k, v)| format!("{k:?}={v}")).collect();
    println!("cases: {}", cases.join(" "));
    if let Some(s) = &out.supervised {
        println!("non-compliant: {}", s.noncompliant);
        println!("runs with BC: {}", s.runs_with_bc);
    }
    println!("passed: {}", out.passed);
}

fn finish_campaign(
    params: &RssParams,
    config: &impl Serialize,
    outcome: CampaignOutcome,
    args: &CampaignArgs,
) -> Result<Done, Error> {
    print_outcome(&outcome);
    if let Some(dir) = &args.dump_dir {
        let n = dump_counterexamples(dir, &outcome)?;
        println!("counterexample files: {n}");
    }
    let ok = outcome.passed;
    write_report(params, config, outcome, args.out.as_deref())?;
    Ok(Done { ok })
}

fn run(cli: Cli) -> Result<Done, Error> {
    let params = load_params(cli.params.as_deref())?;
    match cli.command {
        Command::SafeDistance { v_r, v_f, json } => {
            let terms = safe_distance_terms(&params, v_r, v_f)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&terms)?);
            } else {
                println!("d_min: {}", format_sig(terms.d_min));
                println!("response_travel: {}", format_sig(terms.response_travel));
                println!("sv_braking: {}", format_sig(terms.sv_braking));
                println!("pov_braking: {}", format_sig(terms.pov_braking));
                println!("unclamped: {}", format_sig(terms.unclamped));
            }
            Ok(Done { ok: true })
        }
        Command::Simulate(args) => cmd_simulate(&params, &args),
        Command::Audit {
            trajectory,
            out,
            metric_csv,
            accel_tol,
            time_tol,
        } => cmd_audit(
            &params,
            &trajectory,
            out.as_deref(),
            metric_csv.as_deref(),
            Tolerances { accel_tol, time_tol },
        ),
        Command::Verify(args) => {
            let cfg = campaign_config(&args)?;
            let outcome = verify_safety_theorem(&params, &cfg)?;
            finish_campaign(&params, &cfg, outcome, &args)
        }
        Command::Falsify(args) => {
            let cfg = campaign_config(&args)?;
            let outcome = falsify_below_threshold(&params, &cfg)?;
            finish_campaign(&params, &cfg, outcome, &args)
        }
        Command::VerifySupervised { campaign, bypass } => {
            let mut cfg = match &campaign.campaign {
                Some(p) => config_from_json::<SupervisedCampaignConfig>(&read_text(p)?)?,
                None => SupervisedCampaignConfig::new(
                    CampaignConfig::new(DEFAULT_SEED, 1_000),
                    rss_core::verify::AcKind::Adversarial,
                    rss_core::verify::PovKind::WorstCase,
                ),
            };
            if let Some(s) = campaign.seed {
                cfg.campaign.seed = s;
            }
            if let Some(n) = campaign.trials {
                cfg.campaign.n_trials = n;
            }
            cfg.bypass |= bypass;
            let outcome = verify_supervised_safety(&params, &cfg)?;
            finish_campaign(&params, &cfg, outcome, &campaign)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Done { ok: true }) => ExitCode::SUCCESS,
        Ok(Done { ok: false }) => ExitCode::from(1),
        Err(e @ Error::UnsafeStart { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
