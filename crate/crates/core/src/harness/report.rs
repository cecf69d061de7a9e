//! Criterion evaluation over result records, and the report summary.
//!
//! Every evaluator works from raw records only, so a report over saved CSVs
//! reaches the same verdict as the run that produced them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::records::{self, ReadError, ResultRecord};
use crate::domination::{self, Proportion, SlopeFit};
use crate::semicircle::{self, StabilityRecord};
use crate::spectral::SpectralPoint;
use crate::c64;

pub const CRITERIA: [&str; 10] = ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C10"];

/// Metric names shared by the runner and the evaluators.
pub mod metric {
    pub const WARD: &str = "ward_rel";
    pub const RESOLVENT_IDENTITY: &str = "resolvent_identity";
    pub const EXPANSION: [&str; 4] = ["expansion_k1", "expansion_k2", "expansion_k3", "expansion_k4"];
    pub const ROW_IDENTITY: &str = "row_identity";
    pub const SELF_CONSISTENT_M: &str = "m_equation";
    pub const EIG_VS_LU: &str = "eig_vs_lu";
    pub const MINOR_UPDATE: &str = "minor_update_gap";
    pub const QUADRATURE: &str = "quadrature_gap";
    pub const PROPAGATION_RATIO: &str = "propagation_ratio";
    pub const PROPAGATION_PASS: &str = "propagation_pass";
    pub const DIAG: &str = "diag_err";
    pub const OFFDIAG: &str = "offdiag_max";
    pub const RESIDUAL: &str = "residual";
    pub const S_RE: &str = "s_re";
    pub const S_IM: &str = "s_im";
    pub const DIAG_MEDIAN: &str = "diag_err_median";
    pub const OFFDIAG_MEDIAN: &str = "offdiag_max_median";
    pub const RESIDUAL_MEDIAN: &str = "residual_median";
    pub const PSI: &str = "psi";
    pub const F_PSI: &str = "f_psi";
    pub const TAIL: &str = "fluctuation_tail";
    pub const MINOR_VIOLATIONS: &str = "minor.violations";
    pub const KS_MEDIAN: &str = "ks_median";
    /// Prefix of the per-pair Efron–Stein pass flags.
    pub const ES_PREFIX: &str = "es.";
    pub const ES_PASS_SUFFIX: &str = ".pass";
    /// Prefix of verdict rows: `verdict.<criterion>.<check>`.
    pub const VERDICT_PREFIX: &str = "verdict.";
}

/// Tolerances of the identity suite.
pub const WARD_TOL: f64 = 1e-7;
pub const IDENTITY_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-9;
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Slope window for the local-law and residual fits.
pub const SLOPE_WINDOW: (f64, f64) = (-0.40, -0.15);
/// Multiple of `(1 + |z|) psi` allowed for the median residual.
pub const RESIDUAL_FACTOR: f64 = 10.0;
pub const TAIL_LIMIT: f64 = 0.05;
pub const KS_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionStatus {
    Pass,
    Fail,
    NotEvaluable,
}

impl fmt::Display for CriterionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionStatus::Pass => "PASS",
            CriterionStatus::Fail => "FAIL",
            CriterionStatus::NotEvaluable => "NOT EVALUABLE",
        })
    }
}

/// One judged check, citing the criterion it was judged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: String,
    pub check: String,
    pub status: CriterionStatus,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: &str, check: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            criterion: criterion.to_string(),
            check: check.to_string(),
            status: if pass { CriterionStatus::Pass } else { CriterionStatus::Fail },
            detail: detail.into(),
        }
    }

    pub fn not_evaluable(criterion: &str, check: &str, detail: impl Into<String>) -> Self {
        Self {
            criterion: criterion.to_string(),
            check: check.to_string(),
            status: CriterionStatus::NotEvaluable,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CriterionStatus::Pass
    }

    /// The verdict as a record row; `NaN` marks "not evaluable".
    pub fn record(&self, experiment: &str, seed: u64) -> ResultRecord {
        let value = match self.status {
            CriterionStatus::Pass => 1.0,
            CriterionStatus::Fail => 0.0,
            CriterionStatus::NotEvaluable => f64::NAN,
        };
        ResultRecord::new(
            experiment,
            0,
            None,
            seed,
            0.0,
            0.0,
            format!("{}{}.{}", metric::VERDICT_PREFIX, self.criterion, self.check),
            value,
        )
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<4} {:<13} {}: {}", self.criterion, self.status, self.check, self.detail)
    }
}

fn select<'a>(records: &'a [ResultRecord], name: &'a str) -> impl Iterator<Item = &'a ResultRecord> + 'a {
    records.iter().filter(move |r| r.metric == name)
}

fn max_of<'a>(it: impl Iterator<Item = &'a ResultRecord>) -> Option<(f64, usize)> {
    it.fold(None, |acc, r| {
        let (m, c) = acc.unwrap_or((f64::NEG_INFINITY, 0));
        // NaN counts as the worst value
        let v = if r.value.is_nan() { f64::INFINITY } else { r.value };
        Some((m.max(v), c + 1))
    })
}

fn is_bulk(energy: f64) -> bool {
    energy.abs() < 2.0
}

pub fn evaluate_identities(records: &[ResultRecord]) -> Verdict {
    let mut checks = vec![(metric::WARD, WARD_TOL), (metric::RESOLVENT_IDENTITY, IDENTITY_TOL)];
    checks.extend(metric::EXPANSION.iter().map(|&m| (m, IDENTITY_TOL)));
    checks.push((metric::ROW_IDENTITY, IDENTITY_TOL));
    checks.push((metric::SELF_CONSISTENT_M, IDENTITY_TOL));
    let mut worst = Vec::new();
    let mut pass = true;
    let mut instances = usize::MAX;
    for (name, tol) in checks {
        match max_of(select(records, name)) {
            None => return Verdict::not_evaluable("C1", "identities", format!("no {name} records")),
            Some((m, c)) => {
                instances = instances.min(c);
                pass &= m <= tol;
                worst.push(format!("{name} {m:.1e}"));
            }
        }
    }
    Verdict::new("C1", "identities", pass, format!("{instances} instances; max {}", worst.join(", ")))
}

pub fn evaluate_oracles(records: &[ResultRecord]) -> Verdict {
    let Some((minor, count)) = max_of(select(records, metric::MINOR_UPDATE)) else {
        return Verdict::not_evaluable("C2", "oracles", "no minor-update records");
    };
    let Some((quad, _)) = max_of(select(records, metric::QUADRATURE)) else {
        return Verdict::not_evaluable("C2", "oracles", "no quadrature records");
    };
    let lu = max_of(select(records, metric::EIG_VS_LU)).map_or(0.0, |(m, _)| m);
    Verdict::new(
        "C2",
        "oracles",
        minor <= ORACLE_TOL && quad <= QUADRATURE_TOL && lu <= ORACLE_TOL,
        format!("{count} instances; minor update gap {minor:.1e}, eigen vs LU {lu:.1e}, quadrature gap {quad:.1e}"),
    )
}

pub fn evaluate_propagation(records: &[ResultRecord]) -> Verdict {
    let flags: Vec<f64> = select(records, metric::PROPAGATION_PASS).map(|r| r.value).collect();
    if flags.is_empty() {
        return Verdict::not_evaluable("C3", "propagation", "no propagation records");
    }
    let violations = flags.iter().filter(|&&v| v != 1.0).count();
    let worst = max_of(select(records, metric::PROPAGATION_RATIO)).map_or(f64::NAN, |(m, _)| m);
    Verdict::new(
        "C3",
        "propagation",
        violations == 0,
        format!("{violations} violations in {} configurations; largest ratio {worst:.4}", flags.len()),
    )
}

pub fn evaluate_event_inequalities(records: &[ResultRecord]) -> Verdict {
    let es: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.metric.starts_with(metric::ES_PREFIX) && r.metric.ends_with(metric::ES_PASS_SUFFIX))
        .collect();
    let minor: Vec<&ResultRecord> = select(records, metric::MINOR_VIOLATIONS).collect();
    if es.is_empty() || minor.is_empty() {
        return Verdict::not_evaluable("C4", "event-inequalities", "missing Efron–Stein or minor comparison records");
    }
    let es_fail: Vec<String> = es
        .iter()
        .filter(|r| r.value != 1.0)
        .map(|r| format!("N={} {}", r.n, r.metric))
        .collect();
    let minor_total: f64 = minor.iter().map(|r| r.value).sum();
    let mut detail = format!(
        "{} Efron–Stein checks, {} failed; {minor_total} minor comparison violations",
        es.len(),
        es_fail.len()
    );
    if !es_fail.is_empty() {
        detail.push_str(&format!(" [{}]", es_fail.join(", ")));
    }
    Verdict::new("C4", "event-inequalities", es_fail.is_empty() && minor_total == 0.0, detail)
}

/// `(n, value)` ladder of an aggregate metric at one energy.
fn ladder(records: &[ResultRecord], name: &str, energy: f64) -> Vec<(usize, f64, f64)> {
    let mut rows: Vec<(usize, f64, f64)> = select(records, name)
        .filter(|r| r.trial.is_none() && r.energy == energy)
        .map(|r| (r.n, r.eta, r.value))
        .collect();
    rows.sort_by_key(|r| r.0);
    rows.dedup_by_key(|r| r.0);
    rows
}

fn bulk_energies(records: &[ResultRecord], name: &str) -> Vec<f64> {
    let mut es: Vec<f64> = select(records, name)
        .filter(|r| r.trial.is_none() && is_bulk(r.energy))
        .map(|r| r.energy)
        .collect();
    es.sort_by(f64::total_cmp);
    es.dedup();
    es
}

fn fit(records: &[ResultRecord], name: &str, energy: f64) -> Result<SlopeFit, String> {
    let rows = ladder(records, name, energy);
    let ns: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.2).collect();
    domination::exponent_fit(&ns, &vs).map_err(|e| format!("{name} at E = {energy}: {e}"))
}

fn slope_verdict(criterion: &str, check: &str, records: &[ResultRecord], names: &[&str]) -> Verdict {
    let energies = bulk_energies(records, names[0]);
    if energies.is_empty() {
        return Verdict::not_evaluable(criterion, check, format!("no {} records", names[0]));
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for &e in &energies {
        for &name in names {
            match fit(records, name, e) {
                Ok(f) => {
                    pass &= f.within(SLOPE_WINDOW.0, SLOPE_WINDOW.1);
                    parts.push(format!("{name}@E={e} slope {:.3}", f.slope));
                }
                Err(msg) => return Verdict::not_evaluable(criterion, check, msg),
            }
        }
    }
    Verdict::new(
        criterion,
        check,
        pass,
        format!("{} (window [{}, {}])", parts.join(", "), SLOPE_WINDOW.0, SLOPE_WINDOW.1),
    )
}

pub fn evaluate_local_law(records: &[ResultRecord]) -> Verdict {
    slope_verdict("C5", "local-law-slopes", records, &[metric::DIAG_MEDIAN, metric::OFFDIAG_MEDIAN])
}

pub fn evaluate_residual(records: &[ResultRecord]) -> Verdict {
    let slope = slope_verdict("C6", "residual", records, &[metric::RESIDUAL_MEDIAN]);
    if slope.status == CriterionStatus::NotEvaluable {
        return slope;
    }
    let mut over = Vec::new();
    let mut cells = 0;
    for e in bulk_energies(records, metric::RESIDUAL_MEDIAN) {
        for (n, eta, v) in ladder(records, metric::RESIDUAL_MEDIAN, e) {
            cells += 1;
            let Ok(p) = SpectralPoint::new(e, eta) else {
                return Verdict::not_evaluable("C6", "residual", format!("invalid point E = {e}, eta = {eta}"));
            };
            let bound = (1.0 + p.abs()) * p.psi(n) * RESIDUAL_FACTOR;
            if !(v <= bound) {
                over.push(format!("N={n} E={e}: {v:.3e} > {bound:.3e}"));
            }
        }
    }
    let pass = slope.passed() && over.is_empty();
    let mut detail = format!("{}; {} of {cells} cells above the residual bound", slope.detail, over.len());
    if !over.is_empty() {
        detail.push_str(&format!(" [{}]", over.join(", ")));
    }
    Verdict::new("C6", "residual", pass, detail)
}

/// Stability records rebuilt from per-trial `s` and residual rows in the bulk.
pub fn stability_records(records: &[ResultRecord]) -> Vec<StabilityRecord> {
    type Key = (String, usize, u64, u64, u64);
    let mut by_key: BTreeMap<Key, [Option<f64>; 3]> = BTreeMap::new();
    for r in records {
        let slot = match r.metric.as_str() {
            metric::S_RE => 0,
            metric::S_IM => 1,
            metric::RESIDUAL => 2,
            _ => continue,
        };
        let (Some(trial), true) = (r.trial, is_bulk(r.energy)) else {
            continue;
        };
        let key = (r.experiment.clone(), r.n, trial, r.energy.to_bits(), r.eta.to_bits());
        by_key.entry(key).or_default()[slot] = Some(r.value);
    }
    by_key
        .into_iter()
        .filter_map(|((_, _, _, e, eta), v)| {
            let [Some(re), Some(im), Some(res)] = v else {
                return None;
            };
            let z = c64::new(f64::from_bits(e), f64::from_bits(eta));
            Some(StabilityRecord {
                z,
                s: c64::new(re, im),
                r: res / (1.0 + z.norm()),
            })
        })
        .collect()
}

pub fn stability_constant(records: &[ResultRecord]) -> Option<semicircle::StabilityReport> {
    let recs = stability_records(records);
    semicircle::stability_check(&recs, semicircle::DEFAULT_STABILITY_CEILING).ok()
}

pub fn evaluate_stability(records: &[ResultRecord]) -> Verdict {
    match stability_constant(records) {
        None => Verdict::not_evaluable("C7", "stability-constant", "no bulk per-trial s/residual records"),
        Some(rep) => Verdict::new(
            "C7",
            "stability-constant",
            rep.pass,
            format!(
                "C = {:.3} over {} records (ceiling {})",
                rep.constant,
                rep.ratios.len(),
                rep.ceiling
            ),
        ),
    }
}

pub fn evaluate_concentration_ladder(records: &[ResultRecord]) -> Verdict {
    let mut rows: Vec<&ResultRecord> = select(records, metric::TAIL).filter(|r| r.trial.is_none()).collect();
    if rows.is_empty() {
        return Verdict::not_evaluable("C8", "concentration-ladder", "no fluctuation tail records");
    }
    rows.sort_by_key(|r| r.n);
    let props: Vec<(usize, f64, f64, f64)> = rows
        .iter()
        .map(|r| (r.n, r.value, r.lo.unwrap_or(r.value), r.hi.unwrap_or(r.value)))
        .collect();
    let monotone = props.windows(2).all(|w| w[1].2 <= w[0].3);
    let last = props.last().expect("nonempty");
    let table: Vec<String> = props.iter().map(|p| format!("N={} p={:.3} [{:.3}, {:.3}]", p.0, p.1, p.2, p.3)).collect();
    Verdict::new(
        "C8",
        "concentration-ladder",
        monotone && last.1 <= TAIL_LIMIT,
        format!(
            "{}; nonincreasing within intervals: {monotone}; p at N={} is {:.3} (limit {TAIL_LIMIT})",
            table.join(", "),
            last.0,
            last.1
        ),
    )
}

pub fn evaluate_spectral_sanity(records: &[ResultRecord]) -> Verdict {
    let mut rows: Vec<(usize, f64)> = select(records, metric::KS_MEDIAN).map(|r| (r.n, r.value)).collect();
    if rows.len() < 2 {
        return Verdict::not_evaluable("C10", "ks-distance", "fewer than two KS ladder points");
    }
    rows.sort_by_key(|r| r.0);
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let last = *rows.last().expect("nonempty");
    let table: Vec<String> = rows.iter().map(|r| format!("N={} {:.4}", r.0, r.1)).collect();
    Verdict::new(
        "C10",
        "ks-distance",
        decreasing && last.1 <= KS_LIMIT,
        format!("{}; strictly decreasing: {decreasing}", table.join(", ")),
    )
}

/// Byte equality of same-named local-law result files from different runs.
pub fn evaluate_determinism(paths: &[PathBuf]) -> Verdict {
    let mut groups: BTreeMap<String, Vec<&PathBuf>> = BTreeMap::new();
    for p in paths {
        if let Some(name) = p.file_name().and_then(|s| s.to_str()) {
            if name.starts_with("local-law") || name.starts_with("self-consistent") {
                groups.entry(name.to_string()).or_default().push(p);
            }
        }
    }
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (name, files) in groups.iter().filter(|(_, f)| f.len() > 1) {
        let contents: Vec<io::Result<Vec<u8>>> = files.iter().map(std::fs::read).collect();
        let Ok(first) = &contents[0] else {
            return Verdict::not_evaluable("C9", "determinism", format!("cannot read {name}"));
        };
        compared += files.len();
        if contents[1..].iter().any(|c| c.as_ref().ok() != Some(first)) {
            mismatched.push(name.clone());
        }
    }
    if compared == 0 {
        return Verdict::not_evaluable("C9", "determinism", "needs the same local-law result file from at least two runs");
    }
    Verdict::new(
        "C9",
        "determinism",
        mismatched.is_empty(),
        format!("{compared} files compared; mismatched: {:?}", mismatched),
    )
}

/// The primary evaluator of one criterion over records.
pub fn evaluate(criterion: &str, records: &[ResultRecord], paths: &[PathBuf]) -> Verdict {
    match criterion {
        "C1" => evaluate_identities(records),
        "C2" => evaluate_oracles(records),
        "C3" => evaluate_propagation(records),
        "C4" => evaluate_event_inequalities(records),
        "C5" => evaluate_local_law(records),
        "C6" => evaluate_residual(records),
        "C7" => evaluate_stability(records),
        "C8" => evaluate_concentration_ladder(records),
        "C9" => evaluate_determinism(paths),
        "C10" => evaluate_spectral_sanity(records),
        other => Verdict::not_evaluable(other, "unknown", "no such criterion"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedSlope {
    pub experiment: String,
    pub metric: String,
    pub energy: f64,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedConstant {
    pub name: String,
    pub value: f64,
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    /// One entry per requested criterion.
    pub criteria: Vec<Verdict>,
    /// Verdict rows stored by the runs, citing their criteria.
    pub checks: Vec<Verdict>,
    pub slopes: Vec<NamedSlope>,
    pub constants: Vec<FittedConstant>,
    pub sources: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    /// Result files whose last line was incomplete.
    pub truncated: Vec<PathBuf>,
}

impl ReportSummary {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(Verdict::passed)
    }

    pub fn criterion(&self, id: &str) -> Option<&Verdict> {
        self.criteria.iter().find(|v| v.criterion == id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: ReadError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no result files found")]
    NoResults,
}

fn is_result_file(p: &Path) -> bool {
    let Some(name) = p.file_name().and_then(|s| s.to_str()) else {
        return false;
    };
    name.ends_with(".csv") && !name.starts_with("plot-") && !name.ends_with(".partial.csv")
}

/// Result files under `paths`: files as given, directories one level deep.
pub fn result_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, ReportError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|source| ReportError::Io { path: p.clone(), source })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_result_file(f))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(ReportError::NoResults);
    }
    Ok(out)
}

/// Slope fits of every median metric of the local-law sweeps.
pub fn slope_fits(records: &[ResultRecord]) -> Vec<NamedSlope> {
    let mut keys: Vec<(String, String, u64)> = records
        .iter()
        .filter(|r| {
            r.trial.is_none()
                && [metric::DIAG_MEDIAN, metric::OFFDIAG_MEDIAN, metric::RESIDUAL_MEDIAN].contains(&r.metric.as_str())
        })
        .map(|r| (r.experiment.clone(), r.metric.clone(), r.energy.to_bits()))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(exp, name, e)| {
            let energy = f64::from_bits(e);
            let subset: Vec<ResultRecord> = records.iter().filter(|r| r.experiment == exp).cloned().collect();
            fit(&subset, &name, energy).ok().map(|fit| NamedSlope {
                experiment: exp,
                metric: name,
                energy,
                fit,
            })
        })
        .collect()
}

fn write_plot(path: &Path, header: &str, rows: &[String]) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()
}

/// Long-format plot data: error vs N, error vs eta, reference curves.
pub fn write_plots(records: &[ResultRecord], dir: &Path) -> io::Result<Vec<PathBuf>> {
    use records::fmt_f64;
    let medians = [metric::DIAG_MEDIAN, metric::OFFDIAG_MEDIAN, metric::RESIDUAL_MEDIAN];
    let mut rows: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.trial.is_none() && medians.contains(&r.metric.as_str()))
        .collect();
    rows.sort_by(|a, b| a.key_cmp(b));
    let header = "experiment,metric,n,E,eta,x,y";
    let vs_n: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{},{},{},{},{}", r.experiment, r.metric, r.n, fmt_f64(r.energy), fmt_f64(r.eta), r.n, fmt_f64(r.value)))
        .collect();
    let vs_eta: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{},{},{},{},{}", r.experiment, r.metric, r.n, fmt_f64(r.energy), fmt_f64(r.eta), fmt_f64(r.eta), fmt_f64(r.value)))
        .collect();
    let mut cells: Vec<(usize, u64)> = rows.iter().map(|r| (r.n, r.energy.to_bits())).collect();
    cells.sort();
    cells.dedup();
    let mut reference = Vec::new();
    for (n, e) in cells {
        let energy = f64::from_bits(e);
        for j in 0..=40 {
            let eta = 10f64.powf(-3.0 + 3.0 * j as f64 / 40.0);
            let Ok(p) = SpectralPoint::new(energy, eta) else { continue };
            let psi = p.psi(n);
            let f = semicircle::stability_envelope(p.z(), psi);
            for (name, y) in [("psi", psi), ("f_psi", f)] {
                reference.push(format!("reference,{name},{n},{},{},{},{}", fmt_f64(energy), fmt_f64(eta), fmt_f64(eta), fmt_f64(y)));
            }
        }
    }
    std::fs::create_dir_all(dir)?;
    let files = [
        (dir.join("plot-error-vs-n.csv"), vs_n),
        (dir.join("plot-error-vs-eta.csv"), vs_eta),
        (dir.join("plot-reference.csv"), reference),
    ];
    for (path, body) in &files {
        write_plot(path, header, body)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn stored_checks(records: &[ResultRecord]) -> Vec<Verdict> {
    records
        .iter()
        .filter_map(|r| {
            let rest = r.metric.strip_prefix(metric::VERDICT_PREFIX)?;
            let (criterion, check) = rest.split_once('.')?;
            let status = if r.value.is_nan() {
                CriterionStatus::NotEvaluable
            } else if r.value == 1.0 {
                CriterionStatus::Pass
            } else {
                CriterionStatus::Fail
            };
            Some(Verdict {
                criterion: criterion.to_string(),
                check: check.to_string(),
                status,
                detail: format!("from {}", r.experiment),
            })
        })
        .collect()
}

/// Reads every result file under `paths`, judges each requested criterion
/// (all of them when `criteria` is empty) and, given `plot_dir`, writes the
/// plot data there.
pub fn summarize(paths: &[PathBuf], criteria: &[String], plot_dir: Option<&Path>) -> Result<ReportSummary, ReportError> {
    let sources = result_files(paths)?;
    let mut all = Vec::new();
    let mut truncated = Vec::new();
    for path in &sources {
        let outcome = records::read_results_file(path).map_err(|source| ReportError::Read {
            path: path.clone(),
            source,
        })?;
        if outcome.truncated_tail {
            truncated.push(path.clone());
        }
        all.extend(outcome.records);
    }
    let ids: Vec<String> = if criteria.is_empty() {
        CRITERIA.iter().map(|s| s.to_string()).collect()
    } else {
        criteria.to_vec()
    };
    let verdicts = ids.iter().map(|id| evaluate(id, &all, &sources)).collect();
    let mut constants = Vec::new();
    if let Some(rep) = stability_constant(&all) {
        constants.push(FittedConstant {
            name: "stability".into(),
            value: rep.constant,
            ceiling: rep.ceiling,
        });
    }
    let plots = match plot_dir {
        Some(dir) => write_plots(&all, dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?,
        None => Vec::new(),
    };
    Ok(ReportSummary {
        criteria: verdicts,
        checks: stored_checks(&all),
        slopes: slope_fits(&all),
        constants,
        sources,
        plots,
        truncated,
    })
}

pub fn to_json(summary: &ReportSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary is always serializable")
}

/// Aggregate record of a proportion with its Wilson interval.
pub fn proportion_record(base: ResultRecord, p: &Proportion) -> ResultRecord {
    ResultRecord { value: p.p_hat, ..base }.with_interval(p.lo, p.hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(with_offdiag: bool) -> Vec<ResultRecord> {
        let mut r = Vec::new();
        for n in [256usize, 512, 1024, 2048] {
            let v = (n as f64).powf(-0.25);
            let eta = (n as f64).powf(-0.5);
            r.push(ResultRecord::new("local-law", n, None, 1, 0.0, eta, metric::DIAG_MEDIAN, v));
            if with_offdiag {
                r.push(ResultRecord::new("local-law", n, None, 1, 0.0, eta, metric::OFFDIAG_MEDIAN, v));
            }
        }
        r
    }

    #[test]
    fn planted_power_law_passes() {
        let v = evaluate_local_law(&planted(true));
        assert!(v.passed(), "{v}");
        let fits = slope_fits(&planted(true));
        assert_eq!(fits.len(), 2);
        assert!((fits[0].fit.slope + 0.25).abs() < 1e-12);
    }

    #[test]
    fn missing_metric_is_not_evaluable() {
        let v = evaluate_local_law(&planted(false));
        assert_eq!(v.status, CriterionStatus::NotEvaluable);
        assert!(v.detail.contains(metric::OFFDIAG_MEDIAN));
    }

    #[test]
    fn verdict_rows_round_trip() {
        let v = Verdict::new("C4", "minor-bounds", false, "x");
        let checks = stored_checks(&[v.record("concentration", 3)]);
        assert_eq!(checks[0].criterion, "C4");
        assert_eq!(checks[0].check, "minor-bounds");
        assert_eq!(checks[0].status, CriterionStatus::Fail);
    }

    #[test]
    fn tail_ladder_rules() {
        let row = |n, p: f64, lo, hi| ResultRecord::new("c", n, None, 0, 0.0, 0.1, metric::TAIL, p).with_interval(lo, hi);
        let ok = [row(64, 0.2, 0.15, 0.25), row(128, 0.1, 0.07, 0.14), row(256, 0.03, 0.01, 0.06)];
        assert!(evaluate_concentration_ladder(&ok).passed());
        let rising = [row(64, 0.02, 0.01, 0.04), row(128, 0.03, 0.02, 0.05), row(256, 0.2, 0.15, 0.25)];
        assert_eq!(evaluate_concentration_ladder(&rising).status, CriterionStatus::Fail);
    }
}
