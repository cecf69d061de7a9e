use locallaw_core::bootstrap::{build_ladder, local_law_sweep, run_bootstrap, DEFAULT_CAP};
use locallaw_core::ensemble::EnsembleSpec;
use locallaw_core::semicircle::{stability_check, StabilityRecord};
use locallaw_core::spectral::EtaRule;

#[test]
fn normalized_trace_near_m_at_i() {
    let table = local_law_sweep(&EnsembleSpec::gue(512, 21), &[512], &[0.0], EtaRule::Fixed(1.0), 200).unwrap();
    let close = table.samples.iter().filter(|s| s.trace_err <= 0.05).count();
    println!("{close} of {} trials within 0.05", table.samples.len());
    assert!(close as f64 >= 0.95 * table.samples.len() as f64);
}

#[test]
fn bulk_stability_constant_at_n512() {
    let spec = EnsembleSpec::gue(512, 22);
    let energies = [-1.5, -0.75, 0.0, 0.75, 1.5];
    let mut records: Vec<StabilityRecord> = Vec::new();
    for rule in [EtaRule::Power(-0.5), EtaRule::Fixed(0.1), EtaRule::Fixed(1.0)] {
        let table = local_law_sweep(&spec, &[512], &energies, rule, 40).unwrap();
        records.extend(table.samples.iter().map(|s| s.stability_record()));
    }
    let report = stability_check(&records, 10.0).unwrap();
    println!("C = {:.3} over {} records", report.constant, records.len());
    assert!(report.pass);
    assert_eq!(report.residual_precondition_failures, 0);
}

#[test]
fn bootstrap_ladder_at_n512() {
    let spec = EnsembleSpec::gue(512, 23);
    let ladder = build_ladder(512, 0.0, 0.5, 0.15).unwrap();
    let trace = run_bootstrap(&spec, &ladder, 100, DEFAULT_CAP).unwrap();
    for l in &trace.levels {
        println!(
            "k = {}  eta = {:.4}  diag {:.3}  offdiag {:.3}  offdiag median {:.4} <= {:.4}",
            l.bounds.k,
            l.bounds.eta,
            l.diag_exceed.p_hat,
            l.offdiag_exceed.p_hat,
            l.offdiag_median,
            l.bounds.offdiag
        );
    }
    assert!(trace.conclusions_within(0.05));
    let last = trace.levels.last().unwrap();
    assert_eq!(last.bounds.k, ladder.depth);
    assert!(last.offdiag_median <= last.bounds.offdiag);
}
