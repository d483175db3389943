use std::fs;
use std::path::{Path, PathBuf};

use uavsim::faults::{FaultKind, FaultSpec, FaultTarget, Trigger};
use uavsim::harness::{
    load_database, read_log, run_campaign, run_case, CampaignOptions, CaseInput, LoadedScenario, LogFormat, Metric,
    Verdict,
};
use uavsim::simloop::{self, Termination};

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> LoadedScenario {
    LoadedScenario::load(&scenarios_dir().join(name)).unwrap()
}

fn bits(rows: &[Vec<f64>]) -> Vec<Vec<u64>> {
    rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/hover_ideal.csv")
}

/// Ideal-sensor hover, used for the golden regression.
fn ideal_hover() -> LoadedScenario {
    let mut s = scenario("hover.toml").scenario;
    s.vehicle = "builtin:f450".into();
    LoadedScenario::from_scenario(s, &scenarios_dir()).unwrap()
}

const GOLDEN_TIMES: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 30.0];
const GOLDEN_COLUMNS: [&str; 8] = ["t", "x", "y", "z", "vz", "roll", "pitch", "delta_0"];

fn golden_rows(log: &simloop::Log) -> Vec<Vec<f64>> {
    let t = log.column("t").unwrap();
    let cols: Vec<usize> = GOLDEN_COLUMNS.iter().map(|c| log.column(c).unwrap()).collect();
    GOLDEN_TIMES
        .iter()
        .map(|&target| {
            let row = log.rows.iter().find(|r| (r[t] - target).abs() < 1e-9).unwrap();
            cols.iter().map(|&c| row[c]).collect()
        })
        .collect()
}

#[test]
fn hover_matches_golden_log() {
    let run = simloop::run(ideal_hover().setup).unwrap();
    let rows = golden_rows(&run.log);
    let path = golden_path();
    if std::env::var_os("UAVSIM_UPDATE_GOLDEN").is_some() {
        let mut text = GOLDEN_COLUMNS.join(",") + "\n";
        for r in &rows {
            text += &r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",");
            text += "\n";
        }
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, text).unwrap();
    }
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), GOLDEN_COLUMNS.join(","));
    let golden: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(golden.len(), rows.len());
    for (g, r) in golden.iter().zip(&rows) {
        for ((name, a), b) in GOLDEN_COLUMNS.iter().zip(g).zip(r) {
            assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                "{name} at t={}: golden {a}, got {b}",
                g[0]
            );
        }
    }
}

#[test]
fn ideal_hover_reaches_setpoint() {
    let run = simloop::run(ideal_hover().setup).unwrap();
    assert_eq!(run.termination, Termination::Completed);
    let z = run.log.series("z").unwrap();
    assert!((z.last().unwrap() + 10.0).abs() < 0.02);
    let err = Metric::MaxAltitudeError
        .compute(&run.log, Some(15.0), None)
        .unwrap()
        .unwrap();
    assert!(err < 0.02, "{err}");
}

#[test]
fn estimator_error_grows_with_sensor_noise() {
    let ideal = simloop::run(ideal_hover().setup).unwrap();
    let noisy = simloop::run(scenario("hover.toml").setup).unwrap();
    for m in [Metric::EstimatorPositionRms, Metric::EstimatorAttitudeRms] {
        let a = m.compute(&ideal.log, Some(5.0), None).unwrap().unwrap();
        let b = m.compute(&noisy.log, Some(5.0), None).unwrap().unwrap();
        assert!(a < b, "{}: ideal {a} vs noisy {b}", m.name());
    }
}

#[test]
fn motor_loss_crashes_and_reports_timeline() {
    let input = CaseInput::new(scenario("motor_failure.toml"));
    let report = run_case(&input, &CampaignOptions::default());
    assert_eq!(report.verdict, Verdict::Fail);
    match report.termination {
        Some(Termination::Crashed { t, impact_speed }) => {
            assert!(t > 12.0);
            assert!(impact_speed > 3.0);
        }
        other => panic!("expected crash, got {other:?}"),
    }
    assert!(report
        .fault_timeline
        .iter()
        .any(|e| e.event.starts_with("fault_on 0") && (e.t - 12.0).abs() < 2e-3));
}

#[test]
fn fault_free_prefix_is_identical() {
    let nominal = scenario("hover.toml").setup;
    let mut faulty = nominal.clone();
    faulty.faults = vec![FaultSpec {
        target: FaultTarget::Actuator(2),
        kind: FaultKind::LossOfEffectiveness { factor: 0.7 },
        trigger: Trigger::At(8.0),
        duration: Some(2.0),
    }];
    let a = simloop::run(nominal).unwrap();
    let b = simloop::run(faulty).unwrap();
    let t = a.log.column("t").unwrap();
    let split = a.log.rows.iter().position(|r| r[t] > 8.0).unwrap();
    assert_eq!(bits(&a.log.rows[..split]), bits(&b.log.rows[..split]));
    assert_ne!(bits(&a.log.rows[split..=split]), bits(&b.log.rows[split..=split]));
}

#[test]
fn bundled_database_runs_with_expected_verdicts() {
    let db = load_database(&scenarios_dir()).unwrap();
    assert!(db.iter().all(|c| c.scenario.is_ok()));
    let report = run_campaign(&db, 4, &CampaignOptions::default());
    for case in &report.cases {
        let expected = if case.name == "motor_failure" {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
        assert_eq!(case.verdict, expected, "{}: {:?}", case.name, case.metrics);
    }
    assert_eq!(report.summary.total, db.len());
    assert_eq!(report.summary.failed, 1);
    assert!(!report.all_passed());
}

#[test]
fn empty_database_passes_trivially() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("index.toml"), "scenarios = []\n").unwrap();
    let db = load_database(dir.path()).unwrap();
    let report = run_campaign(&db, 2, &CampaignOptions::default());
    assert_eq!(report.summary.total, 0);
    assert!(report.all_passed());
    assert!(report.to_text().contains("total 0"));
}

fn write_db(dir: &Path, files: &[(&str, &str)]) {
    let names: Vec<String> = files.iter().map(|(n, _)| format!("\"{n}\"")).collect();
    fs::write(dir.join("index.toml"), format!("scenarios = [{}]\n", names.join(", "))).unwrap();
    for (n, body) in files {
        fs::write(dir.join(n), body).unwrap();
    }
}

#[test]
fn broken_scenarios_become_error_entries() {
    let dir = tempfile::tempdir().unwrap();
    write_db(
        dir.path(),
        &[
            ("ok.toml", "name = \"ok\"\nvehicle = \"builtin:f450\"\nstop_time = 0.5\n"),
            ("typo.toml", "name = \"typo\"\nvehicle = \"builtin:f450\"\nstop_tme = 1.0\n"),
            ("bad_metric.toml", "name = \"bad\"\nvehicle = \"builtin:f450\"\nstop_time = 1.0\n[[expect]]\nmetric = \"nope\"\nmax = 1.0\n"),
            ("missing_vehicle.toml", "name = \"mv\"\nvehicle = \"nowhere.toml\"\nstop_time = 1.0\n"),
        ],
    );
    let db = load_database(dir.path()).unwrap();
    assert_eq!(db.len(), 4);
    let report = run_campaign(&db, 2, &CampaignOptions::default());
    let verdicts: Vec<Verdict> = report.cases.iter().map(|c| c.verdict).collect();
    assert_eq!(
        verdicts,
        [Verdict::Pass, Verdict::Error, Verdict::Error, Verdict::Error]
    );
    assert!(report.cases[1..].iter().all(|c| c.error.is_some()));
    assert_eq!(report.summary.errors, 3);
}

#[test]
fn missing_index_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_database(dir.path()).is_err());
}

#[test]
fn campaign_logs_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = ideal_hover();
    s.setup.sim.stop_time = 3.0;
    let input = CaseInput::new(s.clone());
    let direct = simloop::run(s.setup).unwrap();
    for format in [LogFormat::Csv, LogFormat::Binary] {
        let opts = CampaignOptions {
            log_dir: Some(dir.path().to_owned()),
            log_format: format,
            ..Default::default()
        };
        let report = run_case(&input, &opts);
        let path = report.log_path.unwrap();
        assert_eq!(path.extension().unwrap(), format.extension());
        let back = read_log(&path).unwrap();
        assert_eq!(back.columns, direct.log.columns);
        assert_eq!(bits(&back.rows), bits(&direct.log.rows));
        assert_eq!(back.events, direct.log.events);
    }
}

#[test]
fn seed_override_changes_noisy_runs_only_through_noise() {
    let input = CaseInput::new(scenario("hover.toml"));
    let run = |seed| {
        run_case(
            &input,
            &CampaignOptions {
                seed: Some(seed),
                ..Default::default()
            },
        )
    };
    let (a, b, c) = (run(1), run(1), run(2));
    assert!(a.same_outcome(&b));
    assert!(!a.same_outcome(&c));
    assert_eq!(a.verdict, Verdict::Pass);
    assert_eq!(c.verdict, Verdict::Pass);
}
