//! Dispatch of a validated configuration to the owning module.
//!
//! Rows are appended to `<kind>.partial.csv` as each stage finishes; the
//! sorted `<kind>.csv` replaces it when the run completes. Verdicts are
//! written as rows of the same file.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;

use super::config::{ConfigError, ExperimentConfig, ExperimentKind};
use super::records::{self, RecordWriter, ResultRecord};
use super::report::{self, metric, proportion_record, ReportError, ReportSummary, Verdict};
use crate::bootstrap;
use crate::concentration::{self, EventParams, ProductPair, TailStudy};
use crate::domination::{self, DominationQuery, QueryCell, TailTable};
use crate::ensemble::{self, MinorPair};
use crate::seed::{self, Purpose};
use crate::semicircle;
use crate::spectral::{self, SpectralPoint, ZRule};
use crate::{c64, par, Mat};

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    VerdictFailed,
    ConfigError,
    OracleDisagreement,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::VerdictFailed => 2,
            ExitStatus::ConfigError => 3,
            ExitStatus::OracleDisagreement => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// A module error, carrying the `(N, trial)` that produced it when known.
    #[error("{0}")]
    Module(String),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl RunError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            RunError::Config(_) => ExitStatus::ConfigError,
            _ => ExitStatus::VerdictFailed,
        }
    }
}

fn module<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Module(e.to_string())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    /// Sorted by record key.
    pub records: Vec<ResultRecord>,
    pub verdicts: Vec<Verdict>,
    pub status: ExitStatus,
    /// The final result file, or the summary file of a report.
    pub output: PathBuf,
    pub summary: Option<ReportSummary>,
}

struct Sink {
    kind: &'static str,
    seed: u64,
    path: PathBuf,
    writer: RecordWriter<BufWriter<File>>,
    records: Vec<ResultRecord>,
}

impl Sink {
    fn open(dir: &Path, kind: &'static str, seed: u64) -> Result<Self, RunError> {
        let path = dir.join(format!("{kind}.partial.csv"));
        let io = |source| RunError::Io { path: path.clone(), source };
        let file = File::create(&path).map_err(io)?;
        let writer = RecordWriter::new(BufWriter::new(file)).map_err(io)?;
        Ok(Self {
            kind,
            seed,
            path,
            writer,
            records: Vec::new(),
        })
    }

    fn rec(&self, n: usize, trial: Option<u64>, energy: f64, eta: f64, name: impl Into<String>, value: f64) -> ResultRecord {
        ResultRecord::new(self.kind, n, trial, self.seed, energy, eta, name, value)
    }

    fn push(&mut self, batch: Vec<ResultRecord>) -> Result<(), RunError> {
        self.writer.append(&batch).map_err(|source| RunError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.records.extend(batch);
        Ok(())
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(module)?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    Ok(f())
}

/// Runs one experiment and writes its results under `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let v = config.violations();
    if !v.is_empty() {
        return Err(ConfigError::Invalid(v).into());
    }
    let dir = &config.output;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
    if config.kind == ExperimentKind::Report {
        return run_report(config);
    }
    let kind = config.kind.name();
    let mut sink = Sink::open(dir, kind, config.seed)?;
    info!("{kind}: N = {:?}, trials = {}, seed = {}", config.n_ladder, config.trials, config.seed);
    let verdicts = with_threads(config.threads, || -> Result<Vec<Verdict>, RunError> {
        match config.kind {
            ExperimentKind::Identities => identities(config, &mut sink),
            ExperimentKind::Moments => moments(config, &mut sink),
            ExperimentKind::Concentration => concentration_run(config, &mut sink),
            ExperimentKind::SelfConsistent => local_law(config, &mut sink, false),
            ExperimentKind::LocalLaw => local_law(config, &mut sink, true),
            ExperimentKind::Domination => domination_run(config, &mut sink),
            ExperimentKind::Bootstrap => bootstrap_run(config, &mut sink),
            ExperimentKind::Report => unreachable!("handled above"),
        }
    })??;
    let rows = verdicts.iter().map(|v| v.record(kind, config.seed)).collect();
    sink.push(rows)?;
    let Sink { mut records, path: partial, .. } = sink;
    records::sort_records(&mut records);
    if let Some(dup) = records::duplicate_key(&records) {
        return Err(RunError::Module(format!("duplicate record key: {dup:?}")));
    }
    let output = dir.join(format!("{kind}.csv"));
    records::write_results_file(&records, &output).map_err(|source| RunError::Io {
        path: output.clone(),
        source,
    })?;
    std::fs::remove_file(&partial).map_err(|source| RunError::Io { path: partial, source })?;
    let failed = verdicts.iter().any(|v| !v.passed());
    let status = match (failed, config.kind) {
        (false, _) => ExitStatus::Pass,
        (true, ExperimentKind::Identities) => ExitStatus::OracleDisagreement,
        (true, _) => ExitStatus::VerdictFailed,
    };
    Ok(RunOutcome {
        kind: config.kind,
        records,
        verdicts,
        status,
        output,
        summary: None,
    })
}

fn run_report(config: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let dir = &config.output;
    let summary = report::summarize(std::slice::from_ref(dir), &config.criteria, Some(dir))?;
    let output = dir.join("summary.json");
    std::fs::write(&output, report::to_json(&summary)).map_err(|source| RunError::Io {
        path: output.clone(),
        source,
    })?;
    let status = if summary.all_pass() {
        ExitStatus::Pass
    } else {
        ExitStatus::VerdictFailed
    };
    Ok(RunOutcome {
        kind: ExperimentKind::Report,
        records: Vec::new(),
        verdicts: summary.criteria.clone(),
        status,
        output,
        summary: Some(summary),
    })
}

fn collect<T, E: std::fmt::Display>(results: Vec<Result<T, E>>) -> Result<Vec<T>, RunError> {
    results.into_iter().map(|r| r.map_err(module)).collect()
}

fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// Random spectral point: `E` uniform in `[-3, 3]`, `eta` log-uniform in `[0.01, 10]`.
fn random_point(master: u64, trial: u64) -> SpectralPoint {
    let mut rng = seed::stream(master, trial, Purpose::SpectralPoints, 0);
    let energy = rng.random_range(-3.0..3.0);
    let eta = rng.random_range(0.01f64.ln()..10f64.ln()).exp();
    SpectralPoint::new(energy, eta).expect("positive eta")
}

/// Instances of the identity suite that also run the all-`i` minor oracle.
const ORACLE_INSTANCES: u64 = 20;
const ORACLE_MAX_N: usize = 256;

fn identity_trial(cfg: &ExperimentConfig, sink: &Sink, t: u64) -> Result<Vec<ResultRecord>, String> {
    let n = cfg.n_ladder[t as usize % cfg.n_ladder.len()];
    let at = |e: &dyn std::fmt::Display| format!("N = {n}, trial {t}: {e}");
    let spec = cfg.spec(n);
    let h = ensemble::sample_wigner(&spec, t).map_err(|e| at(&e))?;
    let point = random_point(cfg.seed, t);
    let dec = spectral::decompose(&h).map_err(|e| at(&e))?;
    let g = spectral::resolvent(&dec, point);
    let g_lu = spectral::dense_resolvent(&h, point);

    let mut rng = seed::stream(cfg.seed, t, Purpose::IndexPanel, 0);
    let pair = MinorPair::new(rng.random_range(0..n), rng.random_range(0..n), n).map_err(|e| at(&e))?;
    let minor = ensemble::zero_entry_minor(&h, pair).map_err(|e| at(&e))?;
    let delta = ensemble::perturbation(&h, pair).map_err(|e| at(&e))?.dense();
    let g_minor = spectral::dense_resolvent(&minor, point);

    let (e, eta) = (point.energy(), point.eta());
    let row = |name: &str, value: f64| sink.rec(n, Some(t), e, eta, name, value);
    let mut out = vec![
        row(metric::WARD, spectral::ward_residual(&g).max),
        row(metric::EIG_VS_LU, max_abs_diff(g.matrix(), g_lu.matrix())),
        row(
            metric::RESOLVENT_IDENTITY,
            spectral::resolvent_identity_residual(g_minor.matrix(), g.matrix(), &delta).map_err(|e| at(&e))?,
        ),
    ];
    for (k, name) in metric::EXPANSION.iter().enumerate() {
        let r = spectral::expansion_remainder(g_minor.matrix(), g.matrix(), &delta, k + 1).map_err(|e| at(&e))?;
        out.push(row(name, r));
    }
    let row_id = (0..n).map(|j| spectral::row_identity_residual(&h, &g, j)).fold(0.0, f64::max);
    out.push(row(metric::ROW_IDENTITY, row_id));
    let m = point.m();
    out.push(row(metric::SELF_CONSISTENT_M, (point.z() + m + 1.0 / m).norm()));

    if t < ORACLE_INSTANCES && n <= ORACLE_MAX_N {
        let mut gap = 0.0f64;
        for i in 0..n {
            let updated = spectral::minor_resolvent(&h, &g, i).map_err(|e| at(&e))?;
            let minor = ensemble::zero_entry_minor(&h, MinorPair::new(0, i, n).map_err(|e| at(&e))?).map_err(|e| at(&e))?;
            let full = spectral::dense_resolvent(&minor, point);
            gap = gap.max(max_abs_diff(&updated.matrix, full.matrix()));
        }
        out.push(row(metric::MINOR_UPDATE, gap));
    }
    Ok(out)
}

/// `max |m(z) - quadrature|` on a 20 x 20 grid over `E in [-3, 3]`, `eta in [0.05, 10]`.
fn quadrature_gap() -> Result<f64, RunError> {
    let mut gap = 0.0f64;
    for a in 0..20 {
        for b in 0..20 {
            let e = -3.0 + 6.0 * a as f64 / 19.0;
            let eta = 0.05 * 200f64.powf(b as f64 / 19.0);
            let z = c64::new(e, eta);
            let exact = semicircle::stieltjes(z).map_err(module)?;
            let quad = semicircle::stieltjes_quadrature(z, semicircle::DEFAULT_NODES).map_err(module)?;
            gap = gap.max((exact - quad).norm());
        }
    }
    Ok(gap)
}

fn identities(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Verdict>, RunError> {
    let shared: &Sink = sink;
    let rows = par::map_indexed(cfg.trials, |t| identity_trial(cfg, shared, t as u64));
    let rows: Vec<ResultRecord> = collect(rows)?.into_iter().flatten().collect();
    sink.push(rows)?;
    let quad = sink.rec(0, None, 0.0, 0.0, metric::QUADRATURE, quadrature_gap()?);
    sink.push(vec![quad])?;
    Ok(vec![report::evaluate_identities(&sink.records), report::evaluate_oracles(&sink.records)])
}

fn moments(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Verdict>, RunError> {
    let mut violations = Vec::new();
    for &n in &cfg.n_ladder {
        let spec = cfg.spec(n);
        let mut rows = Vec::new();
        for p in [2u32, 4, 6, 8] {
            let rep = ensemble::moment_audit(&spec, p, cfg.trials).map_err(module)?;
            for (which, m) in [("offdiag", &rep.offdiag), ("diag", &rep.diagonal)] {
                let base = format!("moment.p{p}.{which}");
                let se4 = 4.0 * m.abs_moment_stderr;
                rows.push(sink.rec(n, None, 0.0, 0.0, format!("{base}.abs"), m.abs_moment).with_interval(m.abs_moment - se4, m.abs_moment + se4));
                rows.push(sink.rec(n, None, 0.0, 0.0, format!("{base}.mean_abs"), m.mean.norm()));
                if let Some(target) = m.target {
                    rows.push(sink.rec(n, None, 0.0, 0.0, format!("{base}.target"), target));
                }
                if m.violation {
                    violations.push(format!("N={n} {base}"));
                }
            }
        }
        sink.push(rows)?;
    }
    let base = cfg.spec(cfg.ks_ladder[0]);
    let cells = bootstrap::global_law_sweep(&base, &cfg.ks_ladder, cfg.ks_trials).map_err(module)?;
    let rows = cells
        .iter()
        .flat_map(|c| {
            [
                sink.rec(c.n, None, 0.0, 0.0, metric::KS_MEDIAN, c.ks_median),
                sink.rec(c.n, None, 0.0, 0.0, "ks_p95", c.ks_p95),
            ]
        })
        .collect();
    sink.push(rows)?;
    Ok(vec![
        Verdict::new(
            "C10",
            "moment-audit",
            violations.is_empty(),
            if violations.is_empty() {
                "entry moments match their closed forms within 4 standard errors".to_string()
            } else {
                format!("violations: {}", violations.join(", "))
            },
        ),
        report::evaluate_spectral_sanity(&sink.records),
    ])
}

fn tail_rows(sink: &Sink, table: &TailTable, name: &str, eta_of: impl Fn(usize) -> f64, energy: f64) -> Vec<ResultRecord> {
    table
        .rows
        .iter()
        .map(|r| proportion_record(sink.rec(r.n, None, energy, eta_of(r.n), name, 0.0), &r.estimate))
        .collect()
}

fn concentration_run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Verdict>, RunError> {
    let base = cfg.spec(cfg.n_ladder[0]);
    let energy = cfg.energies[0];
    let mut verdicts = Vec::new();

    let entries = concentration::entry_bound_tails(&base, &cfg.n_ladder, cfg.epsilon, cfg.trials).map_err(module)?;
    let rows = tail_rows(sink, &entries.table, "entry_tail", |_| 0.0, 0.0);
    sink.push(rows)?;
    verdicts.push(Verdict::new(
        "C4",
        "entry-bound-tails",
        entries.decaying,
        format!("max-entry exceedance nonincreasing within intervals: {}", entries.decaying),
    ));

    let point = SpectralPoint::new(energy, cfg.check_eta).map_err(module)?;
    let mut gamma_relative = 0;
    let mut on_events = Vec::new();
    for &n in &cfg.event_ladder {
        let spec = cfg.spec(n);
        let (e, eta) = (point.energy(), point.eta());
        let mut rows = Vec::new();
        for (k, l) in concentration::default_panel(n, 0, cfg.seed) {
            let reports = concentration::efron_stein_reports(&spec, point, (k, l), &[1, 2], cfg.trials, cfg.resamples).map_err(module)?;
            for rep in reports {
                let base = format!("{}q{}.{k}-{l}", metric::ES_PREFIX, rep.q);
                for (part, chk) in [("re", &rep.re), ("im", &rep.im)] {
                    let (lo, hi) = (chk.lhs - 2.0 * chk.lhs_stderr, chk.lhs + 2.0 * chk.lhs_stderr);
                    rows.push(sink.rec(n, None, e, eta, format!("{base}.{part}.lhs"), chk.lhs).with_interval(lo, hi));
                    let (lo, hi) = (chk.rhs - 2.0 * chk.rhs_stderr, chk.rhs + 2.0 * chk.rhs_stderr);
                    rows.push(sink.rec(n, None, e, eta, format!("{base}.{part}.rhs"), chk.rhs).with_interval(lo, hi));
                }
                rows.push(sink.rec(n, None, e, eta, format!("{base}{}", metric::ES_PASS_SUFFIX), f64::from(u8::from(rep.pass()))));
            }
        }
        let params = EventParams::new(n, cfg.gamma, cfg.delta, cfg.event_epsilon_at(n)).map_err(module)?;
        let study = concentration::minor_comparison_study(&spec, point, &params, cfg.trials).map_err(module)?;
        let t = &study.totals;
        for (name, v) in [
            ("minor.on_events", study.on_events as f64),
            ("minor.checked", t.checked as f64),
            ("minor.bounded_violations", t.bounded_violations as f64),
            ("minor.relative_violations", t.relative_violations as f64),
            ("minor.crude_violations", t.crude_violations as f64),
            ("minor.cap_violations", t.cap_violations as f64),
            ("minor.gamma_relative_violations", t.gamma_relative_violations as f64),
            ("minor.worst_relative", t.worst_relative),
            ("minor.event_epsilon", params.epsilon),
            (metric::MINOR_VIOLATIONS, t.violations() as f64),
        ] {
            rows.push(sink.rec(n, None, e, eta, name, v));
        }
        gamma_relative += t.gamma_relative_violations;
        on_events.push(format!("N={n}: {}/{}", study.on_events, study.trials));
        sink.push(rows)?;
        info!("concentration: event checks at N = {n} done");
    }
    let mut c4 = report::evaluate_event_inequalities(&sink.records);
    c4.detail.push_str(&format!("; trials on both events {}", on_events.join(", ")));
    verdicts.push(c4);
    verdicts.push(Verdict::new(
        "C4",
        "gamma-relative",
        gamma_relative == 0,
        format!("{gamma_relative} violations of the maximum-entry form Gamma^i(0) <= 2 Gamma"),
    ));

    let z_rule = ZRule {
        energy,
        eta: cfg.eta_rule(),
    };
    let study = TailStudy {
        z_rule,
        delta: cfg.delta,
        epsilon: cfg.epsilon,
        trials: cfg.trials,
        resamples: cfg.resamples,
        extra_pairs: cfg.panel_extra,
    };
    let tails = concentration::concentration_tails(&base, &cfg.n_ladder, &study).map_err(module)?;
    let mut rows = tail_rows(sink, &tails.table, metric::TAIL, |n| z_rule.eta.eta(n), energy);
    for &(n, scale) in &tails.scales {
        rows.push(sink.rec(n, None, energy, z_rule.eta.eta(n), "fluctuation_scale", scale));
    }
    sink.push(rows)?;
    verdicts.push(report::evaluate_concentration_ladder(&sink.records));

    let pair = ProductPair {
        first: (0, 0),
        second: Some((0, 0)),
    };
    let product = concentration::product_concentration_check(&base, &cfg.n_ladder, pair, &study).map_err(module)?;
    let mut rows = tail_rows(sink, &product.table, "product_tail", |n| z_rule.eta.eta(n), energy);
    for &(n, excluded) in &product.excluded {
        rows.push(sink.rec(n, None, energy, z_rule.eta.eta(n), "product_excluded", excluded as f64));
    }
    sink.push(rows)?;
    verdicts.push(Verdict::new(
        "C8",
        "product-concentration",
        product.decaying,
        format!("product exceedance nonincreasing within intervals: {}", product.decaying),
    ));
    Ok(verdicts)
}

fn sweep_rows(sink: &Sink, table: &bootstrap::LocalLawTable) -> Vec<ResultRecord> {
    let mut rows = Vec::new();
    for s in &table.samples {
        let r = |name: &str, v: f64| sink.rec(s.n, Some(s.trial), s.energy, s.eta, name, v);
        rows.extend([
            r(metric::DIAG, s.diag_err),
            r(metric::OFFDIAG, s.offdiag_max),
            r(metric::RESIDUAL, s.residual),
            r(metric::S_RE, s.s.re),
            r(metric::S_IM, s.s.im),
            r("trace_err", s.trace_err),
        ]);
    }
    for c in &table.cells {
        let r = |name: &str, v: f64| sink.rec(c.n, None, c.energy, c.eta, name, v);
        rows.extend([
            r(metric::DIAG_MEDIAN, c.diag_median),
            r("diag_err_p95", c.diag_p95),
            r(metric::OFFDIAG_MEDIAN, c.offdiag_median),
            r("offdiag_max_p95", c.offdiag_p95),
            r(metric::RESIDUAL_MEDIAN, c.residual_median),
            r("residual_p95", c.residual_p95),
            r("trace_err_median", c.trace_err_median),
            r(metric::PSI, c.psi),
            r(metric::F_PSI, c.f_psi),
        ]);
    }
    rows
}

fn local_law(cfg: &ExperimentConfig, sink: &mut Sink, full: bool) -> Result<Vec<Verdict>, RunError> {
    let base = cfg.spec(cfg.n_ladder[0]);
    let table = bootstrap::local_law_sweep(&base, &cfg.n_ladder, &cfg.energies, cfg.eta_rule(), cfg.trials).map_err(module)?;
    let rows = sweep_rows(sink, &table);
    sink.push(rows)?;
    let mut verdicts = Vec::new();
    if full {
        verdicts.push(report::evaluate_local_law(&sink.records));
    }
    verdicts.push(report::evaluate_residual(&sink.records));
    verdicts.push(report::evaluate_stability(&sink.records));
    Ok(verdicts)
}

fn domination_rows(sink: &Sink, v: &domination::DominationVerdict, eta_of: impl Fn(usize) -> f64, energy: f64) -> Vec<ResultRecord> {
    let mut rows = Vec::new();
    for r in &v.table.rows {
        let name = format!("dom.{}.eps{}", v.family, r.epsilon);
        rows.push(proportion_record(sink.rec(r.n, None, energy, eta_of(r.n), name, 0.0), &r.estimate));
    }
    rows.push(sink.rec(0, None, energy, 0.0, format!("dom.{}.passing_d", v.family), v.passing_d.unwrap_or(f64::NAN)));
    rows
}

fn domination_detail(v: &domination::DominationVerdict) -> String {
    let failing: Vec<String> = v
        .cells
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("(eps {}, D {})", c.epsilon, c.d))
        .collect();
    match v.passing_d {
        Some(d) => format!("consistent with domination; every eps passes at D = {d}"),
        None => format!("failing cells: {}", failing.join(", ")),
    }
}

fn domination_run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Verdict>, RunError> {
    let mut entry_cells = Vec::new();
    for &n in &cfg.n_ladder {
        let spec = cfg.spec(n);
        let x = par::map_indexed(cfg.trials, |t| ensemble::sample_wigner(&spec, t as u64).map(|h| h.max_abs()));
        entry_cells.push(QueryCell {
            n,
            u: 0,
            x: collect(x)?,
            y: vec![1.0 / (n as f64).sqrt(); cfg.trials],
        });
    }
    let entries = domination::domination_verdict(&DominationQuery::new("max-entry", entry_cells)).map_err(module)?;

    let base = cfg.spec(cfg.n_ladder[0]);
    let rule = cfg.eta_rule();
    let table = bootstrap::local_law_sweep(&base, &cfg.n_ladder, &cfg.energies, rule, cfg.trials).map_err(module)?;
    let mut off_cells = Vec::new();
    for &n in &cfg.n_ladder {
        for (u, &energy) in cfg.energies.iter().enumerate() {
            let at: Vec<_> = table.samples.iter().filter(|s| s.n == n && s.energy == energy).collect();
            let psi = SpectralPoint::new(energy, rule.eta(n)).map_err(module)?.psi(n);
            off_cells.push(QueryCell {
                n,
                u,
                x: at.iter().map(|s| s.offdiag_max).collect(),
                y: vec![psi; at.len()],
            });
        }
    }
    let offdiag = domination::domination_verdict(&DominationQuery::new("offdiag-psi", off_cells)).map_err(module)?;

    let mut rows = domination_rows(sink, &entries, |_| 0.0, 0.0);
    rows.extend(domination_rows(sink, &offdiag, |n| rule.eta(n), cfg.energies[0]));
    sink.push(rows)?;
    Ok(vec![
        Verdict::new("C4", "max-entry-domination", entries.consistent, domination_detail(&entries)),
        Verdict::new("C5", "offdiag-domination", offdiag.consistent, domination_detail(&offdiag)),
    ])
}

fn bootstrap_run(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<Verdict>, RunError> {
    // propagation over random (H, eta, M)
    let props = par::map_indexed(cfg.trials, |t| -> Result<[ResultRecord; 2], String> {
        let t = t as u64;
        let n = cfg.n_ladder[t as usize % cfg.n_ladder.len()];
        let at = |e: &dyn std::fmt::Display| format!("N = {n}, trial {t}: {e}");
        let h = ensemble::sample_wigner(&cfg.spec(n), t).map_err(|e| at(&e))?;
        let dec = spectral::decompose(&h).map_err(|e| at(&e))?;
        let mut rng = seed::stream(cfg.seed, t, Purpose::SpectralPoints, 1);
        let energy = rng.random_range(-2.5..2.5);
        let eta = rng.random_range(0.01f64.ln()..10f64.ln()).exp();
        let factor = rng.random_range(1.01f64.ln()..30f64.ln()).exp();
        let rec = bootstrap::propagation_check(&dec, energy, eta, factor).map_err(|e| at(&e))?;
        Ok([
            sink.rec(n, Some(t), energy, eta, metric::PROPAGATION_RATIO, rec.ratio).with_interval(rec.lower, rec.upper),
            sink.rec(n, Some(t), energy, eta, metric::PROPAGATION_PASS, f64::from(u8::from(rec.pass))),
        ])
    });
    let rows = collect(props)?.into_iter().flatten().collect();
    sink.push(rows)?;
    let mut verdicts = vec![report::evaluate_propagation(&sink.records)];

    let energy = cfg.energies[0];
    let mut worst = Vec::new();
    let mut all_within = true;
    for &n in &cfg.n_ladder {
        let ladder = bootstrap::build_ladder(n, energy, cfg.gamma, cfg.delta).map_err(module)?;
        let trace = bootstrap::run_bootstrap(&cfg.spec(n), &ladder, cfg.trials, cfg.cap).map_err(module)?;
        let mut rows = vec![
            sink.rec(n, None, energy, 0.0, "ladder.depth", ladder.depth as f64),
            sink.rec(n, None, energy, 0.0, "ladder.within_inverse_delta", f64::from(u8::from(ladder.within_inverse_delta()))),
            sink.rec(n, None, energy, 0.0, "ladder.offdiag_monotone", f64::from(u8::from(trace.offdiag_monotone))),
        ];
        for l in &trace.levels {
            let eta = l.bounds.eta;
            let r = |name: &str, v: f64| sink.rec(n, None, energy, eta, name, v);
            rows.extend([
                r("level.k", l.bounds.k as f64),
                r("level.gamma_star_median", l.gamma_star_median),
                r("level.gamma_star_p95", l.gamma_star_p95),
                r("level.diag_median", l.diag_median),
                r("level.offdiag_median", l.offdiag_median),
                r("level.bound_diag", l.bounds.diag),
                r("level.bound_diag_alt", l.bounds.diag_alt),
                r("level.bound_offdiag", l.bounds.offdiag),
                r("level.bound_step", l.bounds.step),
                r("level.envelope_extended", f64::from(u8::from(l.bounds.envelope_extended))),
            ]);
            for (name, p) in [
                ("level.cap_exceed", Some(l.cap_exceed)),
                ("level.step_exceed", l.step_exceed),
                ("level.diag_exceed", Some(l.diag_exceed)),
                ("level.diag_alt_exceed", Some(l.diag_alt_exceed)),
                ("level.offdiag_exceed", Some(l.offdiag_exceed)),
            ] {
                if let Some(p) = p {
                    rows.push(proportion_record(r(name, 0.0), &p));
                }
            }
        }
        for s in &trace.samples {
            let r = |name: &str, v: f64| sink.rec(n, Some(s.trial), energy, s.eta, name, v);
            rows.extend([
                r("level.gamma_star", s.gamma_star),
                r("level.gamma_star_slack", s.gamma_star_slack),
                r("level.diag_err", s.diag_err),
                r("level.offdiag_max", s.offdiag_max),
            ]);
        }
        sink.push(rows)?;
        let w = trace.levels.iter().map(|l| l.worst_conclusion()).fold(0.0, f64::max);
        worst.push(format!("N={n}: {w:.3}"));
        all_within &= trace.conclusions_within(0.05);
        info!("bootstrap: N = {n} done");
    }
    verdicts.push(Verdict::new(
        "C5",
        "bootstrap-conclusions",
        all_within,
        format!("largest per-level exceedance of the diagonal and off-diagonal bounds {} (limit 0.05)", worst.join(", ")),
    ));
    Ok(verdicts)
}
