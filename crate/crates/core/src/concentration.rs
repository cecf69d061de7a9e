//! Conditional expectation over the first row, the Efron–Stein statistic,
//! the high-probability events, and tail studies built from them.
//!
//! `E_1` conditions on the minor `theta = H[1.., 1..]`. It has no closed form
//! and is estimated by redrawing row 0 from the entry law. With
//! `G^theta = (theta - z)^-1` computed once, each redraw costs `O(N^2)` through
//! the Schur complement of the `(0, 0)` block.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::Serialize;
use thiserror::Error;

use crate::c64;
use crate::domination::{self, DominationError, DominationQuery, QueryCell, TailTable};
use crate::ensemble::{self, EnsembleError, EnsembleSpec, MinorPair, WignerMatrix};
use crate::par;
use crate::seed::{self, Purpose};
use crate::spectral::{self, DomainS, Resolvent, SpectralError, SpectralPoint, ZRule};
use crate::summary::mean_and_stderr;

pub const MIN_RESAMPLES: usize = 100;
pub const MIN_TAIL_TRIALS: usize = 200;

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("invalid event parameters: {0}")]
    Params(String),
    #[error("need at least {MIN_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
    #[error("need at least {need} trials, got {got}")]
    TooFewTrials { need: usize, got: usize },
    #[error("moment order q = {0} unsupported (expected 1 or 2)")]
    UnsupportedQ(u32),
    #[error("spectral point E = {energy}, eta = {eta} lies outside the domain for N = {n}")]
    OutsideDomain { energy: f64, eta: f64, n: usize },
    #[error("every sample at N = {0} violated the cap and was excluded")]
    AllExcluded(usize),
    #[error("N = {n}, trial {trial}: {source}")]
    Trial {
        n: usize,
        trial: u64,
        #[source]
        source: Box<ConcentrationError>,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Domination(#[from] DominationError),
}

impl ConcentrationError {
    fn at(self, n: usize, trial: u64) -> Self {
        ConcentrationError::Trial {
            n,
            trial,
            source: Box::new(self),
        }
    }
}

/// `delta`, `epsilon` and the derived event thresholds at one `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventParams {
    pub n: usize,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// `N^(eps/3 + delta)`, the resolvent-entry threshold.
    pub t_xi: f64,
    /// `N^(eps - 1/2)`, the matrix-entry threshold.
    pub t_xi_tilde: f64,
}

impl EventParams {
    /// `eps_0 = (3/4)(1/2 - delta - log 4 / log N)`.
    pub fn epsilon_zero(n: usize, delta: f64) -> f64 {
        0.75 * (0.5 - delta - 4f64.ln() / (n as f64).ln())
    }

    pub fn new(n: usize, gamma: f64, delta: f64, epsilon: f64) -> Result<Self, ConcentrationError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(ConcentrationError::Params(format!("gamma = {gamma} outside (0, 1]")));
        }
        if !(delta > 0.0 && delta < gamma / 3.0) {
            return Err(ConcentrationError::Params(format!(
                "delta = {delta} outside (0, gamma/3) = (0, {})",
                gamma / 3.0
            )));
        }
        let eps0 = Self::epsilon_zero(n, delta);
        if !(epsilon > 0.0 && epsilon < eps0) {
            return Err(ConcentrationError::Params(format!(
                "epsilon = {epsilon} outside (0, eps_0) = (0, {eps0:.6}) at N = {n}"
            )));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            gamma,
            delta,
            epsilon,
            t_xi: nf.powf(epsilon / 3.0 + delta),
            t_xi_tilde: nf.powf(epsilon - 0.5),
        })
    }

    pub fn domain(&self) -> DomainS {
        DomainS {
            gamma: self.gamma,
            n: self.n,
        }
    }
}

fn check_domain(params: &EventParams, point: SpectralPoint) -> Result<(), ConcentrationError> {
    if !params.domain().contains(&point) {
        return Err(ConcentrationError::OutsideDomain {
            energy: point.energy(),
            eta: point.eta(),
            n: params.n,
        });
    }
    Ok(())
}

/// The index pairs at which resolvent entries are sampled: four fixed
/// pairs near the first row plus `extra` pairs drawn per `N`.
pub fn default_panel(n: usize, extra: usize, master_seed: u64) -> Vec<(usize, usize)> {
    use rand::Rng;
    let mut panel: Vec<(usize, usize)> = [(0, 0), (0, 1), (1, 1), (1, 2)]
        .into_iter()
        .filter(|&(k, l)| k < n && l < n)
        .collect();
    let mut rng = seed::stream(master_seed, 0, Purpose::IndexPanel, n as u64);
    for _ in 0..extra {
        panel.push((rng.random_range(0..n), rng.random_range(0..n)));
    }
    panel
}

/// `G^theta = (theta - z)^-1` for `theta = H[1.., 1..]`, from which the full
/// resolvent can be assembled for any replacement of row 0.
#[derive(Debug, Clone)]
pub struct Bordered {
    point: SpectralPoint,
    g_theta: Mat<c64>,
}

impl Bordered {
    pub fn new(h: &WignerMatrix, point: SpectralPoint) -> Self {
        let m = h.n() - 1;
        let z = point.z();
        let shifted = Mat::from_fn(m, m, |i, j| {
            let v = h.get(i + 1, j + 1);
            if i == j {
                v - z
            } else {
                v
            }
        });
        let g_theta = if m == 0 {
            shifted
        } else {
            shifted.partial_piv_lu().inverse()
        };
        Self { point, g_theta }
    }

    pub fn n(&self) -> usize {
        self.g_theta.nrows() + 1
    }

    /// Entries `G_kl` at the panel pairs for the matrix whose row 0 is `row`
    /// (`row[0] = H_00`, `row[j] = H_0j`).
    pub fn entries(&self, row: &[c64], panel: &[(usize, usize)]) -> Vec<c64> {
        let g = &self.g_theta;
        let m = g.nrows();
        let b = &row[1..];
        // u = G^theta b^*
        let mut u = vec![c64::new(0.0, 0.0); m];
        for (l, bl) in b.iter().enumerate() {
            let cb = bl.conj();
            for (k, uk) in u.iter_mut().enumerate() {
                *uk += g[(k, l)] * cb;
            }
        }
        let quad: c64 = b.iter().zip(&u).map(|(bk, uk)| bk * uk).sum();
        let g00 = (c64::new(row[0].re, 0.0) - self.point.z() - quad).inv();
        // (b G^theta)_l
        let w = |l: usize| -> c64 { b.iter().enumerate().map(|(k, bk)| bk * g[(k, l)]).sum() };
        panel
            .iter()
            .map(|&(k, l)| match (k, l) {
                (0, 0) => g00,
                (0, l) => -g00 * w(l - 1),
                (k, 0) => -g00 * u[k - 1],
                (k, l) => g[(k - 1, l - 1)] + g00 * u[k - 1] * w(l - 1),
            })
            .collect()
    }
}

fn first_row(h: &WignerMatrix) -> Vec<c64> {
    (0..h.n()).map(|j| h.get(0, j)).collect()
}

/// Monte Carlo estimate of `E_1 G_kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalEstimate {
    pub estimate: c64,
    pub resamples: usize,
    pub stderr: f64,
}

fn complex_mean(values: &[c64]) -> ConditionalEstimate {
    // shifted by the first sample so identical draws give exactly zero spread
    let m = values.len() as f64;
    let shift = values[0];
    let mean_shift = values.iter().map(|v| v - shift).sum::<c64>() / m;
    let var = values.iter().map(|v| (v - shift - mean_shift).norm_sqr()).sum::<f64>() / (m - 1.0);
    ConditionalEstimate {
        estimate: shift + mean_shift,
        resamples: values.len(),
        stderr: (var / m).sqrt(),
    }
}

/// Per-resample panel values `G_kl` with row 0 redrawn from `spec`'s law.
fn resample_panel(
    spec: &EnsembleSpec,
    bordered: &Bordered,
    panel: &[(usize, usize)],
    resamples: usize,
    trial: u64,
) -> Vec<Vec<c64>> {
    (0..resamples)
        .map(|r| bordered.entries(&spec.resample_first_row(trial, r as u64), panel))
        .collect()
}

fn resample_trial(h: &WignerMatrix) -> u64 {
    h.provenance().map_or(0, |p| p.trial)
}

/// `E_1 G_kl` for every pair of `panel`, holding `theta` from `h`.
pub fn conditional_panel(
    spec: &EnsembleSpec,
    h: &WignerMatrix,
    point: SpectralPoint,
    panel: &[(usize, usize)],
    resamples: usize,
) -> Result<Vec<ConditionalEstimate>, ConcentrationError> {
    if resamples < MIN_RESAMPLES {
        return Err(ConcentrationError::TooFewResamples(resamples));
    }
    let spec = spec.with_n(h.n());
    spec.validate()?;
    let bordered = Bordered::new(h, point);
    let draws = resample_panel(&spec, &bordered, panel, resamples, resample_trial(h));
    Ok((0..panel.len())
        .map(|p| complex_mean(&draws.iter().map(|d| d[p]).collect::<Vec<_>>()))
        .collect())
}

pub fn conditional_mean(
    spec: &EnsembleSpec,
    h: &WignerMatrix,
    point: SpectralPoint,
    k: usize,
    l: usize,
    resamples: usize,
) -> Result<ConditionalEstimate, ConcentrationError> {
    Ok(conditional_panel(spec, h, point, &[(k, l)], resamples)?[0])
}

/// `P(Xi)` and `P(Xi~)` ingredients at one matrix and spectral point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventIndicators {
    pub xi: bool,
    pub xi_tilde: bool,
    /// `max_i max(Gamma^i(0), Gamma^i(h_i))`.
    pub gamma_max: f64,
    /// `max_ij |H_ij|`.
    pub entry_max: f64,
}

/// All minor resolvents `G^(0i)`, `i = 0..N`.
fn all_minors(h: &WignerMatrix, g: &Resolvent) -> Result<Vec<spectral::MinorResolvent>, SpectralError> {
    (0..h.n()).map(|i| spectral::minor_resolvent(h, g, i)).collect()
}

fn max_entry(m: &Mat<c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

fn indicators_from(h: &WignerMatrix, g: &Resolvent, minors: &[spectral::MinorResolvent], params: &EventParams) -> EventIndicators {
    let gamma_h = spectral::gamma(g);
    let gamma_max = minors.iter().map(|m| max_entry(&m.matrix).max(1.0)).fold(gamma_h, f64::max);
    let entry_max = h.max_abs();
    EventIndicators {
        xi: gamma_max <= params.t_xi,
        xi_tilde: entry_max <= params.t_xi_tilde,
        gamma_max,
        entry_max,
    }
}

/// Evaluates `Xi` over `x in {0, h_i}` for every `i` and `Xi~` over all entries.
pub fn event_indicators(h: &WignerMatrix, g: &Resolvent, params: &EventParams) -> Result<EventIndicators, ConcentrationError> {
    check_domain(params, g.point())?;
    let minors = all_minors(h, g)?;
    Ok(indicators_from(h, g, &minors, params))
}

/// Frequencies of `max_ij |H_ij| > N^(eps - 1/2)` along a ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryBoundTails {
    pub table: TailTable,
    pub decaying: bool,
}

pub fn entry_bound_tails(spec: &EnsembleSpec, ns: &[usize], epsilon: f64, trials: usize) -> Result<EntryBoundTails, ConcentrationError> {
    if !(epsilon > 0.0) {
        return Err(ConcentrationError::Params(format!("epsilon = {epsilon} must be positive")));
    }
    if trials < MIN_TAIL_TRIALS {
        return Err(ConcentrationError::TooFewTrials {
            need: MIN_TAIL_TRIALS,
            got: trials,
        });
    }
    let mut cells = Vec::new();
    for &n in ns {
        let spec = spec.with_n(n);
        spec.validate()?;
        let x = par::map_indexed(trials, |t| ensemble::sample_wigner(&spec, t as u64).map(|h| h.max_abs()))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(QueryCell {
            n,
            u: 0,
            x,
            y: vec![1.0 / (n as f64).sqrt(); trials],
        });
    }
    let mut query = DominationQuery::new("max-entry", cells);
    query.epsilons = vec![epsilon];
    let table = domination::tail_table(&query)?;
    let decaying = table.nonincreasing_within_intervals(epsilon);
    Ok(EntryBoundTails { table, decaying })
}

/// `G^i_kl(h_i) = G_kl` and `G^i_kl(0) = G^(0i)_kl` for every `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinorSweep {
    pub k: usize,
    pub l: usize,
    pub with_entry: Vec<c64>,
    pub without_entry: Vec<c64>,
    pub v_re: f64,
    pub v_im: f64,
}

impl MinorSweep {
    fn from_arrays(k: usize, l: usize, with_entry: Vec<c64>, without_entry: Vec<c64>) -> Self {
        let (v_re, v_im) = v_sums(&with_entry, &without_entry);
        Self {
            k,
            l,
            with_entry,
            without_entry,
            v_re,
            v_im,
        }
    }

    /// `(V_Re, V_Im)` recomputed from the stored arrays.
    pub fn recompute(&self) -> (f64, f64) {
        v_sums(&self.with_entry, &self.without_entry)
    }
}

fn v_sums(a: &[c64], b: &[c64]) -> (f64, f64) {
    a.iter().zip(b).fold((0.0, 0.0), |(re, im), (x, y)| {
        let d = x - y;
        (re + d.re * d.re, im + d.im * d.im)
    })
}

pub fn v_statistic(h: &WignerMatrix, g: &Resolvent, k: usize, l: usize) -> Result<MinorSweep, ConcentrationError> {
    let n = h.n();
    if k >= n || l >= n {
        return Err(EnsembleError::IndexOutOfRange { i: k, j: l, n }.into());
    }
    let gkl = g.get(k, l);
    let mut without = Vec::with_capacity(n);
    for i in 0..n {
        let v = match spectral::minor_entry(h, g, i, k, l)? {
            Some(v) => v,
            None => spectral::minor_resolvent(h, g, i)?.matrix[(k, l)],
        };
        without.push(v);
    }
    Ok(MinorSweep::from_arrays(k, l, vec![gkl; n], without))
}

/// `V` with every `G^(0i)` from a fresh dense solve.
pub fn v_statistic_dense(h: &WignerMatrix, point: SpectralPoint, k: usize, l: usize) -> Result<MinorSweep, ConcentrationError> {
    let n = h.n();
    let gkl = spectral::dense_resolvent(h, point).get(k, l);
    let mut without = Vec::with_capacity(n);
    for i in 0..n {
        let minor = ensemble::zero_entry_minor(h, MinorPair::new(0, i, n)?)?;
        without.push(spectral::dense_resolvent(&minor, point).get(k, l));
    }
    Ok(MinorSweep::from_arrays(k, l, vec![gkl; n], without))
}

/// One side of `||X - E_1 X||_2q^2q <= 2 ||V||_q^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub pass: bool,
}

impl InequalityCheck {
    fn from_samples(lhs: &[f64], rhs: &[f64]) -> Self {
        let (l, ls) = mean_and_stderr(lhs);
        let (r, rs) = mean_and_stderr(rhs);
        Self {
            lhs: l,
            lhs_stderr: ls,
            rhs: r,
            rhs_stderr: rs,
            pass: l <= r + 4.0 * (ls * ls + rs * rs).sqrt(),
        }
    }

    /// `lhs / rhs`; how much of the bound is used.
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfronSteinReport {
    pub q: u32,
    pub k: usize,
    pub l: usize,
    pub trials: usize,
    pub resamples: usize,
    pub re: InequalityCheck,
    pub im: InequalityCheck,
}

impl EfronSteinReport {
    pub fn pass(&self) -> bool {
        self.re.pass && self.im.pass
    }
}

pub fn efron_stein_check(
    spec: &EnsembleSpec,
    point: SpectralPoint,
    k: usize,
    l: usize,
    q: u32,
    outer_trials: usize,
    inner_resamples: usize,
) -> Result<EfronSteinReport, ConcentrationError> {
    Ok(efron_stein_reports(spec, point, (k, l), &[q], outer_trials, inner_resamples)?.remove(0))
}

/// Efron–Stein reports for several `q` from one set of samples.
pub fn efron_stein_reports(
    spec: &EnsembleSpec,
    point: SpectralPoint,
    (k, l): (usize, usize),
    qs: &[u32],
    outer_trials: usize,
    inner_resamples: usize,
) -> Result<Vec<EfronSteinReport>, ConcentrationError> {
    if let Some(&q) = qs.iter().find(|q| !(1..=2).contains(*q)) {
        return Err(ConcentrationError::UnsupportedQ(q));
    }
    if outer_trials < domination::MIN_SAMPLES {
        return Err(ConcentrationError::TooFewTrials {
            need: domination::MIN_SAMPLES,
            got: outer_trials,
        });
    }
    if inner_resamples < MIN_RESAMPLES {
        return Err(ConcentrationError::TooFewResamples(inner_resamples));
    }
    spec.validate()?;
    // per trial: (Re, Im) of G_kl - E_1 G_kl and (V_Re, V_Im)
    let samples = par::map_indexed(outer_trials, |t| -> Result<[f64; 4], ConcentrationError> {
        let trial = t as u64;
        let h = ensemble::sample_wigner(spec, trial)?;
        let g = spectral::dense_resolvent(&h, point);
        let sweep = v_statistic(&h, &g, k, l)?;
        let e1 = conditional_mean(spec, &h, point, k, l, inner_resamples)?;
        let d = g.get(k, l) - e1.estimate;
        Ok([d.re, d.im, sweep.v_re, sweep.v_im])
    });
    let samples = samples
        .into_iter()
        .enumerate()
        .map(|(t, r)| r.map_err(|e| e.at(spec.n, t as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(qs
        .iter()
        .map(|&q| {
            let side = |d: usize, v: usize| {
                let lhs: Vec<f64> = samples.iter().map(|s| s[d].abs().powi(2 * q as i32)).collect();
                let rhs: Vec<f64> = samples.iter().map(|s| 2.0 * s[v].powi(q as i32)).collect();
                InequalityCheck::from_samples(&lhs, &rhs)
            };
            EfronSteinReport {
                q,
                k,
                l,
                trials: outer_trials,
                resamples: inner_resamples,
                re: side(0, 2),
                im: side(1, 3),
            }
        })
        .collect())
}

/// Violation counts of the minor comparison bounds at one matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MinorComparison {
    pub xi: bool,
    pub xi_tilde: bool,
    /// `(k, l, i)` triples examined.
    pub checked: usize,
    /// `|G^i_kl(0)| > 2 N^(eps/3 + delta)` on both events.
    pub bounded_violations: usize,
    /// `|G^i_kl(0)| > 2 |G_kl|` on both events.
    pub relative_violations: usize,
    /// `|G^i_kl(0)| > N` off `Xi`.
    pub crude_violations: usize,
    /// `|G^i_kl(0)| > min(N, 1/eta)`, checked always.
    pub cap_violations: usize,
    /// Largest `|G^i_kl(0)| / |G_kl|` seen on both events.
    pub worst_relative: f64,
    /// `Gamma^i(0) > 2 Gamma(z)` on both events: the maximum-entry form
    /// of the relative bound, reported alongside the entrywise form.
    pub gamma_relative_violations: usize,
}

impl MinorComparison {
    pub fn violations(&self) -> usize {
        self.bounded_violations + self.relative_violations + self.crude_violations + self.cap_violations
    }

    fn merge(mut self, other: &Self) -> Self {
        self.checked += other.checked;
        self.bounded_violations += other.bounded_violations;
        self.relative_violations += other.relative_violations;
        self.crude_violations += other.crude_violations;
        self.cap_violations += other.cap_violations;
        self.worst_relative = self.worst_relative.max(other.worst_relative);
        self.gamma_relative_violations += other.gamma_relative_violations;
        self
    }
}

/// Compares `G^i_kl(0)` with `G_kl` for all `k, l, i`.
pub fn minor_comparison_check(h: &WignerMatrix, g: &Resolvent, params: &EventParams) -> Result<MinorComparison, ConcentrationError> {
    check_domain(params, g.point())?;
    let n = h.n();
    let minors = all_minors(h, g)?;
    let ev = indicators_from(h, g, &minors, params);
    let on_events = ev.xi && ev.xi_tilde;
    let cap = spectral::deterministic_cap(n, g.point().eta()) * (1.0 + 1e-12);
    let mut out = MinorComparison {
        xi: ev.xi,
        xi_tilde: ev.xi_tilde,
        ..Default::default()
    };
    let gamma_h = spectral::gamma(g);
    for minor in &minors {
        if on_events && max_entry(&minor.matrix).max(1.0) > 2.0 * gamma_h {
            out.gamma_relative_violations += 1;
        }
        for l in 0..n {
            for k in 0..n {
                let a = minor.matrix[(k, l)].norm();
                let b = g.get(k, l).norm();
                out.checked += 1;
                if a > cap {
                    out.cap_violations += 1;
                }
                if on_events {
                    if a > 2.0 * params.t_xi {
                        out.bounded_violations += 1;
                    }
                    if a > 2.0 * b {
                        out.relative_violations += 1;
                    }
                    out.worst_relative = out.worst_relative.max(a / b);
                } else if !ev.xi && a > n as f64 {
                    out.crude_violations += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Minor comparisons aggregated over independent trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorComparisonStudy {
    pub trials: usize,
    /// Trials on which both events held.
    pub on_events: usize,
    pub totals: MinorComparison,
}

pub fn minor_comparison_study(
    spec: &EnsembleSpec,
    point: SpectralPoint,
    params: &EventParams,
    trials: usize,
) -> Result<MinorComparisonStudy, ConcentrationError> {
    spec.validate()?;
    let per_trial = par::map_indexed(trials, |t| -> Result<MinorComparison, ConcentrationError> {
        let h = ensemble::sample_wigner(spec, t as u64)?;
        let g = spectral::dense_resolvent(&h, point);
        minor_comparison_check(&h, &g, params).map_err(|e| e.at(spec.n, t as u64))
    });
    let mut on_events = 0;
    let mut totals = MinorComparison::default();
    for r in per_trial {
        let c = r?;
        if c.xi && c.xi_tilde {
            on_events += 1;
        }
        totals = totals.merge(&c);
    }
    totals.xi = on_events == trials;
    totals.xi_tilde = on_events == trials;
    Ok(MinorComparisonStudy {
        trials,
        on_events,
        totals,
    })
}

/// Exceedance study of `|G_kl - E_1 G_kl|` against `N^eps N^(3 delta/2) / sqrt(N eta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationTails {
    pub table: TailTable,
    pub epsilon: f64,
    /// `(N, N^(3 delta/2)/sqrt(N eta))` per ladder point.
    pub scales: Vec<(usize, f64)>,
    pub decaying: bool,
    /// Raw samples, one cell per `(N, panel pair)`.
    pub cells: Vec<QueryCell>,
}

/// Tail configuration shared by the `E_1` ladder studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStudy {
    pub z_rule: ZRule,
    pub delta: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub resamples: usize,
    /// Random pairs added to the fixed panel.
    pub extra_pairs: usize,
}

impl TailStudy {
    fn check(&self) -> Result<(), ConcentrationError> {
        if self.trials < domination::MIN_SAMPLES {
            return Err(ConcentrationError::TooFewTrials {
                need: domination::MIN_SAMPLES,
                got: self.trials,
            });
        }
        if self.resamples < MIN_RESAMPLES {
            return Err(ConcentrationError::TooFewResamples(self.resamples));
        }
        if !(self.delta > 0.0 && self.epsilon > 0.0) {
            return Err(ConcentrationError::Params("delta and epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Actual panel values and their `E_1` estimates for one trial.
fn panel_trial(
    spec: &EnsembleSpec,
    point: SpectralPoint,
    panel: &[(usize, usize)],
    resamples: usize,
    trial: u64,
) -> Result<(Vec<c64>, Vec<Vec<c64>>), ConcentrationError> {
    let h = ensemble::sample_wigner(spec, trial)?;
    let bordered = Bordered::new(&h, point);
    let actual = bordered.entries(&first_row(&h), panel);
    let draws = resample_panel(spec, &bordered, panel, resamples, trial);
    Ok((actual, draws))
}

pub fn concentration_tails(spec: &EnsembleSpec, ns: &[usize], study: &TailStudy) -> Result<ConcentrationTails, ConcentrationError> {
    study.check()?;
    let mut cells = Vec::new();
    let mut scales = Vec::new();
    for &n in ns {
        let spec = spec.with_n(n);
        spec.validate()?;
        let point = study.z_rule.point(n)?;
        let scale = (n as f64).powf(1.5 * study.delta) / (n as f64 * point.eta()).sqrt();
        scales.push((n, scale));
        let panel = default_panel(n, study.extra_pairs, spec.master_seed);
        let per_trial = par::map_indexed(study.trials, |t| {
            panel_trial(&spec, point, &panel, study.resamples, t as u64).map(|(actual, draws)| {
                (0..panel.len())
                    .map(|p| {
                        let e1 = draws.iter().map(|d| d[p]).sum::<c64>() / draws.len() as f64;
                        (actual[p] - e1).norm()
                    })
                    .collect::<Vec<f64>>()
            })
        });
        let per_trial = per_trial
            .into_iter()
            .enumerate()
            .map(|(t, r)| r.map_err(|e| e.at(n, t as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        for p in 0..panel.len() {
            cells.push(QueryCell {
                n,
                u: p,
                x: per_trial.iter().map(|row| row[p]).collect(),
                y: vec![scale; study.trials],
            });
        }
    }
    let mut query = DominationQuery::new("conditional-fluctuation", cells);
    query.epsilons = vec![study.epsilon];
    let table = domination::tail_table(&query)?;
    let decaying = table.nonincreasing_within_intervals(study.epsilon);
    Ok(ConcentrationTails {
        table,
        epsilon: study.epsilon,
        scales,
        decaying,
        cells: query.cells,
    })
}

/// Factors of `X_1 X_2`; `second = None` means `X_2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductPair {
    pub first: (usize, usize),
    pub second: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductReport {
    pub table: TailTable,
    pub epsilon: f64,
    /// `(N, samples excluded by the |X_i| <= N^delta cap)`.
    pub excluded: Vec<(usize, usize)>,
    pub decaying: bool,
}

/// Tail of `|E_1 X_1 X_2 - X_1 X_2|` against `N^eps N^(5 delta/2) / sqrt(N eta)`.
pub fn product_concentration_check(
    spec: &EnsembleSpec,
    ns: &[usize],
    pair: ProductPair,
    study: &TailStudy,
) -> Result<ProductReport, ConcentrationError> {
    study.check()?;
    let mut panel = vec![pair.first];
    panel.extend(pair.second);
    let mut cells = Vec::new();
    let mut excluded = Vec::new();
    for &n in ns {
        let spec = spec.with_n(n);
        spec.validate()?;
        let point = study.z_rule.point(n)?;
        let cap = (n as f64).powf(study.delta);
        let scale = (n as f64).powf(2.5 * study.delta) / (n as f64 * point.eta()).sqrt();
        let product = |v: &[c64]| if v.len() == 2 { v[0] * v[1] } else { v[0] };
        let per_trial = par::map_indexed(study.trials, |t| {
            panel_trial(&spec, point, &panel, study.resamples, t as u64).map(|(actual, draws)| {
                if actual.iter().any(|x| x.norm() > cap) {
                    return None;
                }
                let e1 = draws.iter().map(|d| product(d)).sum::<c64>() / draws.len() as f64;
                Some((e1 - product(&actual)).norm())
            })
        });
        let per_trial = per_trial
            .into_iter()
            .enumerate()
            .map(|(t, r)| r.map_err(|e| e.at(n, t as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let kept: Vec<f64> = per_trial.iter().flatten().copied().collect();
        if kept.is_empty() {
            return Err(ConcentrationError::AllExcluded(n));
        }
        excluded.push((n, study.trials - kept.len()));
        cells.push(QueryCell {
            n,
            u: 0,
            y: vec![scale; kept.len()],
            x: kept,
        });
    }
    let mut query = DominationQuery::new("product-fluctuation", cells);
    query.epsilons = vec![study.epsilon];
    let table = domination::tail_table(&query)?;
    let decaying = table.nonincreasing_within_intervals(study.epsilon);
    Ok(ProductReport {
        table,
        epsilon: study.epsilon,
        excluded,
        decaying,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EntryKind, EntryLaw, Symmetry};
    use crate::spectral::EtaRule;

    fn pt(e: f64, eta: f64) -> SpectralPoint {
        SpectralPoint::new(e, eta).unwrap()
    }

    fn point_mass(n: usize) -> EnsembleSpec {
        EnsembleSpec {
            law: EntryLaw::default_for(EntryKind::PointMass, Symmetry::Hermitian),
            ..EnsembleSpec::gue(n, 5)
        }
    }

    fn rademacher(n: usize) -> EnsembleSpec {
        EnsembleSpec {
            law: EntryLaw::default_for(EntryKind::RademacherPhase, Symmetry::Hermitian),
            ..EnsembleSpec::gue(n, 5)
        }
    }

    #[test]
    fn event_params_domain() {
        let p = EventParams::new(512, 0.5, 0.1, 0.1).unwrap();
        assert!((p.t_xi - 512f64.powf(0.1 / 3.0 + 0.1)).abs() < 1e-12);
        assert!(EventParams::new(512, 0.5, 0.2, 0.05).is_err());
        // eps_0 at N = 512, delta = 0.1 is about 0.133
        assert!(EventParams::new(512, 0.5, 0.1, 0.2).is_err());
        assert!((EventParams::epsilon_zero(512, 0.1) - 0.1333).abs() < 1e-3);
        assert!(EventParams::new(8, 0.5, 0.1, 0.01).is_err());
    }

    #[test]
    fn events_on_zero_matrix() {
        let h = WignerMatrix::zeros(64);
        let params = EventParams::new(64, 0.5, 0.05, 0.05).unwrap();
        let g = spectral::dense_resolvent(&h, pt(0.0, 1.0));
        let ev = event_indicators(&h, &g, &params).unwrap();
        assert!(ev.xi && ev.xi_tilde);
        assert_eq!(ev.gamma_max, 1.0);
        let g = spectral::dense_resolvent(&h, pt(0.0, 0.01));
        assert!(matches!(event_indicators(&h, &g, &params), Err(ConcentrationError::OutsideDomain { .. })));
    }

    #[test]
    fn xi_tilde_flips_when_an_entry_grows() {
        let params = EventParams::new(64, 0.5, 0.05, 0.05).unwrap();
        let h = ensemble::sample_wigner(&rademacher(64), 0).unwrap();
        let g = spectral::dense_resolvent(&h, pt(0.0, 1.0));
        assert!(event_indicators(&h, &g, &params).unwrap().xi_tilde);
        let mut m = h.as_mat().clone();
        m[(3, 7)] = c64::new(params.t_xi_tilde * 1.01, 0.0);
        m[(7, 3)] = m[(3, 7)];
        let big = WignerMatrix::from_dense(m).unwrap();
        let g = spectral::dense_resolvent(&big, pt(0.0, 1.0));
        assert!(!event_indicators(&big, &g, &params).unwrap().xi_tilde);
    }

    #[test]
    fn bordered_matches_dense() {
        let h = ensemble::sample_wigner(&EnsembleSpec::gue(32, 1), 0).unwrap();
        let p = pt(0.2, 0.3);
        let dense = spectral::dense_resolvent(&h, p);
        let panel: Vec<(usize, usize)> = (0..32).flat_map(|k| [(k, 0), (0, k), (k, (k * 7) % 32)]).collect();
        let got = Bordered::new(&h, p).entries(&first_row(&h), &panel);
        for (&(k, l), v) in panel.iter().zip(&got) {
            assert!((v - dense.get(k, l)).norm() < 1e-11, "({k}, {l})");
        }
        let one = WignerMatrix::diagonal(&[0.5]);
        let v = Bordered::new(&one, pt(0.0, 1.0)).entries(&[c64::new(0.5, 0.0)], &[(0, 0)]);
        assert!((v[0] - (c64::new(0.5, -1.0)).inv()).norm() < 1e-15);
    }

    #[test]
    fn point_mass_conditional_mean_is_exact() {
        let spec = point_mass(16);
        let h = ensemble::sample_wigner(&EnsembleSpec::gue(16, 3), 0).unwrap();
        let mut m = h.as_mat().clone();
        for j in 0..16 {
            m[(0, j)] = c64::new(0.0, 0.0);
            m[(j, 0)] = c64::new(0.0, 0.0);
        }
        let h = WignerMatrix::from_dense(m).unwrap();
        let p = pt(0.1, 0.5);
        let g = spectral::dense_resolvent(&h, p);
        for (k, l) in [(0, 0), (1, 2), (2, 2)] {
            let e = conditional_mean(&spec, &h, p, k, l, 100).unwrap();
            assert_eq!(e.stderr, 0.0);
            assert!((e.estimate - g.get(k, l)).norm() < 1e-12);
        }
        assert!(matches!(
            conditional_mean(&spec, &h, p, 0, 0, 50),
            Err(ConcentrationError::TooFewResamples(50))
        ));
    }

    #[test]
    fn conditional_mean_stderr_scales() {
        let spec = EnsembleSpec::gue(64, 9);
        let h = ensemble::sample_wigner(&spec, 0).unwrap();
        let p = pt(0.0, 0.2);
        let a = conditional_mean(&spec, &h, p, 2, 2, 400).unwrap();
        let b = conditional_mean(&spec, &h, p, 2, 2, 1600).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2.0 - 1.0).abs() < 0.3, "{ratio}");
        let cap = spectral::deterministic_cap(64, 0.2);
        assert!(a.estimate.norm() <= cap + 4.0 * a.stderr);
    }

    #[test]
    fn v_of_zero_first_row() {
        let h = WignerMatrix::diagonal(&[0.0, 0.3, -0.2, 0.1]);
        let g = spectral::dense_resolvent(&h, pt(0.0, 1.0));
        let s = v_statistic(&h, &g, 1, 2).unwrap();
        assert_eq!((s.v_re, s.v_im), (0.0, 0.0));
    }

    #[test]
    fn v_update_matches_recomputation() {
        let h = ensemble::sample_wigner(&EnsembleSpec::gue(64, 2), 0).unwrap();
        let p = pt(0.0, 1.0);
        let g = spectral::resolvent(&spectral::decompose(&h).unwrap(), p);
        let fast = v_statistic(&h, &g, 2, 3).unwrap();
        let slow = v_statistic_dense(&h, p, 2, 3).unwrap();
        assert!((fast.v_re - slow.v_re).abs() <= 1e-8 * slow.v_re);
        assert!((fast.v_im - slow.v_im).abs() <= 1e-8 * slow.v_im);
        let (re, im) = fast.recompute();
        assert!((re - fast.v_re).abs() <= 1e-12 && (im - fast.v_im).abs() <= 1e-12);
        let total: f64 = fast.with_entry.iter().zip(&fast.without_entry).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!((fast.v_re + fast.v_im - total).abs() <= 1e-14);
    }

    #[test]
    fn efron_stein_degenerate_and_invalid() {
        let spec = point_mass(16);
        let r = efron_stein_check(&spec, pt(0.0, 1.0), 1, 1, 2, 30, 100).unwrap();
        assert_eq!(r.re.lhs, 0.0);
        assert!(r.pass());
        assert!(matches!(
            efron_stein_check(&spec, pt(0.0, 1.0), 1, 1, 3, 30, 100),
            Err(ConcentrationError::UnsupportedQ(3))
        ));
    }

    #[test]
    fn minor_comparison_zero_matrix() {
        let h = WignerMatrix::zeros(16);
        let params = EventParams::new(64, 0.5, 0.05, 0.05).unwrap();
        let params = EventParams { n: 16, ..params };
        let g = spectral::dense_resolvent(&h, pt(0.0, 1.0));
        let c = minor_comparison_check(&h, &g, &params).unwrap();
        assert!(c.xi && c.xi_tilde);
        assert_eq!(c.bounded_violations + c.cap_violations + c.crude_violations, 0);
        assert_eq!(c.checked, 16 * 16 * 16);
    }

    #[test]
    fn rademacher_entries_never_exceed() {
        let t = entry_bound_tails(&rademacher(2), &[4, 16, 64], 0.1, 200).unwrap();
        assert!(t.table.rows.iter().all(|r| r.estimate.p_hat == 0.0));
        assert!(t.decaying);
        assert!(entry_bound_tails(&rademacher(2), &[4], 0.0, 200).is_err());
        assert!(entry_bound_tails(&rademacher(2), &[4], 0.1, 100).is_err());
    }

    #[test]
    fn deterministic_law_has_no_fluctuation() {
        let study = TailStudy {
            z_rule: ZRule { energy: 0.0, eta: EtaRule::Power(-0.5) },
            delta: 0.1,
            epsilon: 0.2,
            trials: 30,
            resamples: 100,
            extra_pairs: 2,
        };
        let t = concentration_tails(&point_mass(8), &[8, 16, 32], &study).unwrap();
        assert!(t.table.rows.iter().all(|r| r.estimate.p_hat == 0.0));
        let pair = ProductPair {
            first: (0, 0),
            second: Some((0, 0)),
        };
        // |G_00| = 1/eta must stay under the N^delta cap
        let unit = TailStudy {
            z_rule: ZRule { energy: 0.0, eta: EtaRule::Fixed(1.0) },
            ..study
        };
        let r = product_concentration_check(&point_mass(8), &[8, 16, 32], pair, &unit).unwrap();
        assert!(r.table.rows.iter().all(|row| row.estimate.p_hat == 0.0));
    }

    #[test]
    fn product_with_unit_factor_matches_single_entry() {
        let study = TailStudy {
            z_rule: ZRule { energy: 0.0, eta: EtaRule::Fixed(1.0) },
            delta: 0.1,
            epsilon: 0.05,
            trials: 40,
            resamples: 100,
            extra_pairs: 0,
        };
        let spec = EnsembleSpec::gue(8, 4);
        let single = product_concentration_check(&spec, &[16, 32, 64], ProductPair { first: (1, 1), second: None }, &study).unwrap();
        // same fluctuation samples, different scale N^(5d/2) vs N^(3d/2)
        let conc = concentration_tails(&spec, &[16, 32, 64], &TailStudy { delta: study.delta * 5.0 / 3.0, ..study }).unwrap();
        for (a, b) in single.table.rows.iter().zip(conc.table.ladder(study.epsilon)) {
            let cell = conc.cells.iter().find(|c| c.n == b.n && c.u == 2).unwrap();
            let hits = cell.x.iter().zip(&cell.y).filter(|(x, y)| **x > (b.n as f64).powf(study.epsilon) * **y).count();
            assert_eq!(a.estimate.hits, hits);
        }
    }
}
