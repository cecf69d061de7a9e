use locallaw_core::concentration::{
    self, efron_stein_check, entry_bound_tails, minor_comparison_study, product_concentration_check, EventParams,
    ProductPair, TailStudy,
};
use locallaw_core::ensemble::EnsembleSpec;
use locallaw_core::spectral::{EtaRule, SpectralPoint, ZRule};

fn at_i() -> SpectralPoint {
    SpectralPoint::new(0.0, 1.0).unwrap()
}

fn entry_event_frequency(n: usize, epsilon: f64, trials: usize) -> locallaw_core::domination::Proportion {
    let tails = entry_bound_tails(&EnsembleSpec::gue(n, 11), &[n], epsilon, trials).unwrap();
    let e = tails.table.rows[0].estimate;
    locallaw_core::domination::Proportion::from_counts(e.trials - e.hits, e.trials)
}

/// The stated frequency of at least 0.99 does not hold for Gaussian entries:
/// `N^0.2` sits near the typical maximum of `N^2/2` entries at `N = 512`.
#[test]
#[should_panic(expected = "event frequency")]
fn entry_event_frequency_at_n512() {
    let p = entry_event_frequency(512, 0.2, 500);
    println!("P(max |H_ij| <= N^(eps-1/2)) = {:.3} over {} trials", p.p_hat, p.trials);
    assert!(p.p_hat >= 0.99, "event frequency {}", p.p_hat);
}

#[test]
fn entry_event_frequency_matches_gaussian_maximum() {
    let (n, eps) = (512usize, 0.2);
    let t = (n as f64).powf(eps);
    // |sqrt(N) H_ij|^2 ~ Exp(1) off the diagonal, sqrt(N) H_ii ~ N(0, 1)
    let off = (1.0 - (-t * t).exp()).powf((n * (n - 1) / 2) as f64);
    let diag = libm::erf(t / std::f64::consts::SQRT_2).powi(n as i32);
    let exact = off * diag;
    let p = entry_event_frequency(n, eps, 500);
    println!("exact {exact:.4}, estimate {:.4} [{:.4}, {:.4}]", p.p_hat, p.lo, p.hi);
    assert!(p.lo <= exact && exact <= p.hi);
}

#[test]
fn entry_tails_decay_along_ladder() {
    let spec = EnsembleSpec::gue(64, 12);
    let tails = entry_bound_tails(&spec, &[64, 256, 1024], 0.3, 200).unwrap();
    for r in &tails.table.rows {
        println!("N = {:>5}  p = {:.3}", r.n, r.estimate.p_hat);
    }
    assert!(tails.decaying);
}

#[test]
fn efron_stein_first_moment_gaussian() {
    let spec = EnsembleSpec::gue(64, 13);
    let r = efron_stein_check(&spec, at_i(), 1, 2, 1, 500, 400).unwrap();
    println!("re {:.3e} <= {:.3e}, im {:.3e} <= {:.3e}", r.re.lhs, r.re.rhs, r.im.lhs, r.im.rhs);
    assert!(r.pass());
}

#[test]
fn minor_comparisons_on_events_gaussian() {
    let n = 128;
    let spec = EnsembleSpec::gue(n, 14);
    let eps = 0.9 * EventParams::epsilon_zero(n, 0.1);
    let params = EventParams::new(n, 0.5, 0.1, eps).unwrap();
    let study = minor_comparison_study(&spec, at_i(), &params, 200).unwrap();
    println!(
        "{} of {} trials on both events, {} entries checked",
        study.on_events, study.trials, study.totals.checked
    );
    assert_eq!(study.totals.violations(), 0);
    assert_eq!(study.totals.gamma_relative_violations, 0);
}

fn study(delta: f64, epsilon: f64) -> TailStudy {
    TailStudy {
        z_rule: ZRule {
            energy: 0.0,
            eta: EtaRule::Power(-0.5),
        },
        delta,
        epsilon,
        trials: 200,
        resamples: 100,
        extra_pairs: 2,
    }
}

#[test]
fn conditional_fluctuation_tails_decay() {
    let spec = EnsembleSpec::gue(64, 15);
    let tails = concentration::concentration_tails(&spec, &[64, 128, 256], &study(0.1, 0.2)).unwrap();
    for r in &tails.table.rows {
        println!("N = {:>4}  p = {:.3} [{:.3}, {:.3}]", r.n, r.estimate.p_hat, r.estimate.lo, r.estimate.hi);
    }
    assert!(tails.decaying);
}

#[test]
fn product_of_diagonal_entries_tails_decay() {
    let spec = EnsembleSpec::gue(64, 16);
    let pair = ProductPair {
        first: (0, 0),
        second: Some((0, 0)),
    };
    let mut s = study(0.1, 0.2);
    s.z_rule.eta = EtaRule::Fixed(1.0);
    let report = product_concentration_check(&spec, &[64, 128, 256], pair, &s).unwrap();
    assert!(report.decaying, "{:?}", report.table);
}
