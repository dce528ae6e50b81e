//! File formats: trajectory CSV, metric CSV, JSON reports and configs.
//!
//! Trajectory files have the header `t,x_f,v_f,x_r,v_r,a_r,mode`; lines
//! starting with `#` are comments. Numbers are written in plain decimal
//! notation rounded to 9 significant digits. A timestamp that would print
//! the same as its predecessor is written with full round-trip precision.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{safety_metric, SafetyRule};
use crate::error::{Error, Result};
use crate::params::RssParams;
use crate::rule::evaluate;
use crate::state::{ControlMode, ScenarioState, Trajectory, TrajectorySample};
use crate::verify::CampaignOutcome;

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "x_f", "v_f", "x_r", "v_r", "a_r", "mode"];
pub const SIGNIFICANT_DIGITS: usize = 9;
pub const TOOL_NAME: &str = "rss";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` rounded to 9 significant digits, in decimal notation without
/// exponent or trailing zeros. Negative zero prints as `0`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let exp: i32 = sci[sci.find('e').map_or(0, |i| i + 1)..].parse().unwrap_or(0);
    let rounded: f64 = sci.parse().unwrap_or(x);
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Serializes samples as a trajectory CSV, with optional `#` comment lines.
pub fn trajectory_csv(samples: &[TrajectorySample], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(&TRAJECTORY_HEADER.join(","));
    out.push('\n');
    let mut prev_t: Option<String> = None;
    for s in samples {
        let mut t = format_sig(s.t);
        if prev_t.as_deref() == Some(t.as_str()) {
            t = s.t.to_string();
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t,
            format_sig(s.state.x_f),
            format_sig(s.state.v_f),
            format_sig(s.state.x_r),
            format_sig(s.state.v_r),
            format_sig(s.a_r),
            s.mode
        );
        prev_t = Some(t);
    }
    out
}

pub fn write_trajectory(path: &Path, samples: &[TrajectorySample], comments: &[String]) -> Result<()> {
    std::fs::write(path, trajectory_csv(samples, comments))?;
    Ok(())
}

fn parse_field(value: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: {name} = {value:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: {name} = {value:?} is not finite")));
    }
    Ok(v)
}

/// Parses a trajectory CSV and validates it against the trajectory rules.
pub fn parse_trajectory(reader: impl Read, params: RssParams) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            TRAJECTORY_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| parse_field(&rec[i], TRAJECTORY_HEADER[i], line);
        let state = ScenarioState {
            x_f: f(1)?,
            v_f: f(2)?,
            x_r: f(3)?,
            v_r: f(4)?,
        };
        if state.v_f < 0.0 || state.v_r < 0.0 {
            return Err(Error::Parse(format!("line {line}: negative velocity")));
        }
        let mode: ControlMode = rec[6]
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: mode {:?} is not AC or BC", &rec[6])))?;
        samples.push(TrajectorySample {
            t: f(0)?,
            state,
            a_r: f(5)?,
            mode,
        });
    }
    Trajectory::new(samples, params)
}

pub fn read_trajectory(path: &Path, params: RssParams) -> Result<Trajectory> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_trajectory(file, params)
}

/// Plot data: `t,gap,d_min,margin,v_r,v_f,mode`.
pub fn metric_csv(traj: &Trajectory, rules: &[&dyn SafetyRule]) -> Result<String> {
    let metric = safety_metric(traj, rules)?;
    let mut out = String::from("t,gap,d_min,margin,v_r,v_f,mode\n");
    for (s, m) in traj.samples().iter().zip(&metric.margin) {
        let e = evaluate(traj.params(), &s.state);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_sig(s.t),
            format_sig(e.gap),
            format_sig(e.d_min),
            format_sig(*m),
            format_sig(s.state.v_r),
            format_sig(s.state.v_f),
            s.mode
        );
    }
    Ok(out)
}

/// JSON envelope of every report the tool writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    /// Unix seconds; excluded from the hash and from reproducibility checks.
    pub generated_at: u64,
    pub params: RssParams,
    /// The effective configuration that produced `result`.
    pub config: serde_json::Value,
    /// SHA-256 of the compact JSON of `{"params": .., "config": ..}`.
    pub config_hash: String,
    pub result: T,
}

pub fn config_hash(params: &RssParams, config: &serde_json::Value) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::json!({ "params": params, "config": config }))?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

impl<T: Serialize> Report<T> {
    pub fn new(params: RssParams, config: &impl Serialize, result: T) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let generated_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Ok(Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            generated_at,
            config_hash: config_hash(&params, &config)?,
            params,
            config,
            result,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Report JSON with the timestamp removed, for reproducibility comparisons.
pub fn without_timestamp(json: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("generated_at");
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Loads a config of type `T` from `text`, which is either the config itself
/// or a report that embeds it.
pub fn config_from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let inner = match v.get("config") {
        Some(c) if v.get("config_hash").is_some() => c.clone(),
        _ => v,
    };
    Ok(serde_json::from_value(inner)?)
}

/// Loads parameters from a params file or from a report's `params` block.
pub fn params_from_json(text: &str) -> Result<RssParams> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let inner = match v.get("params") {
        Some(p) if v.get("config_hash").is_some() => p.clone(),
        _ => v,
    };
    Ok(serde_json::from_value(inner)?)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes each counterexample trace as `trial_NNNNNN.csv` into `dir`.
/// Returns the number of files written.
pub fn dump_counterexamples(dir: &Path, outcome: &CampaignOutcome) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let mut n = 0;
    for c in &outcome.counterexamples {
        if let Some(trace) = &c.trace {
            let comments = vec![
                format!("trial {} behavior {}", c.trial, c.behavior),
                format!("min_gap {}", format_sig(c.min_gap)),
            ];
            write_trajectory(&dir.join(format!("trial_{:06}.csv", c.trial)), &trace.samples, &comments)?;
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(34.135), "34.135");
        assert_eq!(format_sig(0.1 + 0.2), "0.3");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(format_sig(-1e-12), "-0.000000000001");
        assert_eq!(format_sig(123456789.4), "123456789");
        assert_eq!(format_sig(1234567890123.0), "1234567890000");
        assert_eq!(format_sig(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig(5.0), "5");
        assert_eq!(format_sig(-20.25), "-20.25");
    }

    fn sample(t: f64, gap: f64, mode: ControlMode) -> TrajectorySample {
        TrajectorySample {
            t,
            state: ScenarioState::from_gap(gap, 20.0, 19.5).unwrap(),
            a_r: -4.0,
            mode,
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = RssParams::reference();
        let samples = vec![sample(0.0, 40.0, ControlMode::Ac), sample(0.1, 39.95, ControlMode::Bc)];
        let text = trajectory_csv(&samples, &["made by a test".into()]);
        assert!(text.starts_with("# made by a test\nt,x_f,v_f,x_r,v_r,a_r,mode\n"));
        let traj = parse_trajectory(text.as_bytes(), p).unwrap();
        assert_eq!(traj.samples(), samples.as_slice());
    }

    #[test]
    fn close_timestamps_stay_distinct() {
        let p = RssParams::reference();
        let samples = vec![sample(5.0, 40.0, ControlMode::Ac), sample(5.0 + 1e-10, 40.0, ControlMode::Ac)];
        let text = trajectory_csv(&samples, &[]);
        assert!(text.contains("\n5,"));
        let traj = parse_trajectory(text.as_bytes(), p).unwrap();
        assert_eq!(traj.samples()[1].t, 5.0 + 1e-10);
    }

    #[test]
    fn csv_rejections() {
        let p = RssParams::reference();
        let h = "t,x_f,v_f,x_r,v_r,a_r,mode\n";
        let bad = [
            format!("{h}0,10,NaN,0,1,0,AC\n"),
            format!("{h}0,10,inf,0,1,0,AC\n"),
            format!("{h}0,10,-1,0,1,0,AC\n"),
            format!("{h}0,10,1,0,1,0,XX\n"),
            format!("{h}0,10,1,0,1,0,AC\n0,10,1,0,1,0,AC\n"),
            format!("{h}0,10,1,0,1,0\n"),
            "t,x_f,v_f,x_r,v_r,a,mode\n0,10,1,0,1,0,AC\n".to_string(),
            h.to_string(),
        ];
        for text in bad {
            assert!(parse_trajectory(text.as_bytes(), p).is_err(), "{text}");
        }
        let ok = format!("# c\n{h}# mid\n0,10,1,0,1,0,AC\n");
        assert_eq!(parse_trajectory(ok.as_bytes(), p).unwrap().len(), 1);
    }

    #[test]
    fn report_envelope() {
        let p = RssParams::reference();
        let cfg = serde_json::json!({"seed": 1});
        let r = Report::new(p, &cfg, 42).unwrap();
        assert_eq!(r.config_hash.len(), 64);
        assert_eq!(r.config_hash, config_hash(&p, &cfg).unwrap());
        let json = r.to_json().unwrap();
        let back: serde_json::Value = config_from_json(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(params_from_json(&json).unwrap(), p);
        assert!(!without_timestamp(&json).unwrap().contains("generated_at"));
        let other = Report::new(p, &serde_json::json!({"seed": 2}), 42).unwrap();
        assert_ne!(other.config_hash, r.config_hash);
    }

    proptest! {
        #[test]
        fn nine_digits_survive(x in -1e6f64..1e6) {
            let back: f64 = format_sig(x).parse().unwrap();
            let tol = x.abs() * 1e-8 + 1e-300;
            prop_assert!((back - x).abs() <= tol, "{} -> {}", x, back);
            prop_assert!(!format_sig(x).contains('e'));
        }
    }
}
