use std::fs;
use std::path::Path;

use locallaw_core::harness::config::{ExperimentConfig, ExperimentKind};
use locallaw_core::harness::report::{self, CriterionStatus};
use locallaw_core::harness::{run_experiment, ExitStatus};
use locallaw_core::spectral::EtaRule;

fn local_law(out: &Path, threads: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::minimal(ExperimentKind::LocalLaw, vec![64, 128, 256], 5);
    c.trials = 20;
    c.energies = vec![0.0, 1.0];
    c.eta = Some(EtaRule::Power(-0.5));
    c.delta = 0.15;
    c.threads = Some(threads);
    c.output = out.to_path_buf();
    c
}

#[test]
fn identities_run_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::minimal(ExperimentKind::Identities, vec![64], 1);
    c.trials = 10;
    c.output = dir.path().to_path_buf();
    let outcome = run_experiment(&c).unwrap();
    assert_eq!(outcome.status, ExitStatus::Pass);
    assert_eq!(outcome.status.code(), 0);
    assert!(outcome.verdicts.iter().all(|v| v.passed()), "{:?}", outcome.verdicts);
    assert!(outcome.output.ends_with("identities.csv"));
    assert!(!dir.path().join("identities.partial.csv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&local_law(a.path(), 1)).unwrap();
    let rb = run_experiment(&local_law(b.path(), 8)).unwrap();
    assert_eq!(fs::read(&ra.output).unwrap(), fs::read(&rb.output).unwrap());
    let v = report::evaluate_determinism(&[ra.output.clone(), rb.output.clone()]);
    assert_eq!(v.status, CriterionStatus::Pass, "{v}");
}

#[test]
fn local_law_run_feeds_slope_fits() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&local_law(dir.path(), 1)).unwrap();
    let plots = dir.path().join("plots");
    let summary = report::summarize(&[dir.path().to_path_buf()], &[], Some(&plots)).unwrap();
    let metrics: Vec<&str> = summary.slopes.iter().map(|s| s.metric.as_str()).collect();
    for m in [report::metric::DIAG_MEDIAN, report::metric::OFFDIAG_MEDIAN] {
        assert!(metrics.contains(&m), "{metrics:?}");
    }
    for s in &summary.slopes {
        assert!(s.fit.slope.is_finite() && s.fit.slope < 0.0, "{s:?}");
    }
    assert!(plots.join("plot-error-vs-n.csv").exists());
}

#[test]
fn truncated_result_file_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::minimal(ExperimentKind::Identities, vec![32], 2);
    c.trials = 4;
    c.output = dir.path().to_path_buf();
    let outcome = run_experiment(&c).unwrap();
    let text = fs::read_to_string(&outcome.output).unwrap();
    let cut = text.trim_end().len() - 5;
    fs::write(&outcome.output, &text[..cut]).unwrap();
    let summary = report::summarize(&[dir.path().to_path_buf()], &["C1".into()], None).unwrap();
    assert_eq!(summary.truncated, vec![outcome.output.clone()]);
    assert_eq!(summary.criteria.len(), 1);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::minimal(ExperimentKind::Bootstrap, vec![64], 1);
    c.gamma = 0.5;
    c.delta = 0.4;
    c.output = dir.path().to_path_buf();
    let err = run_experiment(&c).unwrap_err();
    assert_eq!(err.exit_status().code(), 3);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}
