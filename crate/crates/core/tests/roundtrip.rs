use rss_core::audit::{audit, Liability, Tolerances};
use rss_core::dynamics::{adversarial, integrate, IntegrateOptions, PovBehavior, Unsupervised};
use rss_core::io::{parse_trajectory, trajectory_csv};
use rss_core::supervisor::{run_supervised, SupervisorConfig};
use rss_core::verify::seeded_pov;
use rss_core::{RssParams, ScenarioState, Trajectory};

fn reread(traj: &Trajectory) -> Trajectory {
    let text = trajectory_csv(traj.samples(), &["round trip".to_string()]);
    parse_trajectory(text.as_bytes(), *traj.params()).unwrap()
}

fn opts() -> IntegrateOptions {
    IntegrateOptions::exact(0.01, Some(25.0))
}

#[test]
fn supervised_runs_keep_their_verdict_through_csv() {
    let p = RssParams::reference();
    for (i, (gap, v_r, v_f)) in [(100.0, 20.0, 20.0), (95.0, 25.0, 10.0), (45.0, 12.0, 18.0)].into_iter().enumerate() {
        let start = ScenarioState::from_gap(gap, v_r, v_f).unwrap();
        let mut povs = [PovBehavior::worst_case(), PovBehavior::new(seeded_pov(&p, 2.0, 25.0, i as u64), 2.0)];
        for pov in povs.iter_mut() {
            let trace = run_supervised(&p, &SupervisorConfig::default(), &start, adversarial(&p), pov, &opts()).unwrap();
            assert!(!trace.collided());
            let traj = Trajectory::new(trace.samples, p).unwrap();
            let direct = audit(&traj, &Tolerances::default()).unwrap();
            let parsed = audit(&reread(&traj), &Tolerances::default()).unwrap();
            assert!(direct.compliant);
            assert_eq!(direct.compliant, parsed.compliant);
            assert_eq!(direct.violations.len(), parsed.violations.len());
            assert_eq!(parsed.liability, Liability::None);
            assert_eq!(direct.per_sample.len(), parsed.per_sample.len());
        }
    }
}

#[test]
fn unsupervised_collision_is_attributed_after_csv() {
    let p = RssParams::reference();
    let start = ScenarioState::from_gap(100.0, 20.0, 20.0).unwrap();
    let mut sv = Unsupervised::new(adversarial(&p), &p);
    let trace = integrate(&p, &start, &mut sv, &mut PovBehavior::worst_case(), &opts()).unwrap();
    assert!(trace.collided());
    let traj = Trajectory::new(trace.samples, p).unwrap();
    let direct = audit(&traj, &Tolerances::default()).unwrap();
    let parsed = audit(&reread(&traj), &Tolerances::default()).unwrap();
    assert!(!parsed.compliant);
    assert_eq!(direct.liability, Liability::SvLiable);
    assert_eq!(parsed.liability, Liability::SvLiable);
    assert_eq!(direct.violations[0].reason, parsed.violations[0].reason);
    assert!((direct.violations[0].t_start - parsed.violations[0].t_start).abs() < 1e-9);
}
