//! Finite-N surrogates for stochastic domination.
//!
//! `X ≺ Y` is an asymptotic statement: for every `eps, D > 0` the exceedance
//! probability `P[X > N^eps Y]` is eventually below `N^-D`. Here it becomes a
//! table of empirical exceedance frequencies over a ladder of `N` with Wilson
//! score intervals, and a verdict "consistent with ≺" when the largest `N`
//! clears the `N^-D` gate and the ladder does not significantly increase.

use serde::Serialize;
use thiserror::Error;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

pub const MIN_SAMPLES: usize = 30;
pub const DEFAULT_EPSILONS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
pub const DEFAULT_DS: [f64; 2] = [1.0, 2.0];

#[derive(Debug, Error, PartialEq)]
pub enum DominationError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("ladder needs at least 3 distinct N, got {0}")]
    ShortLadder(usize),
    #[error("sample {index} of {what} is negative or NaN: {value}")]
    Negative { what: &'static str, index: usize, value: f64 },
    #[error("cell N = {n}, u = {u}: {x} samples of X but {y} of Y")]
    Unpaired { n: usize, u: usize, x: usize, y: usize },
    #[error("metric at N = {n} is not positive: {value}")]
    NonPositiveMetric { n: usize, value: f64 },
    #[error("need at least 3 ladder points, got {0}")]
    TooFewPoints(usize),
}

/// An exceedance frequency with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub hits: usize,
    pub trials: usize,
}

impl Proportion {
    pub fn from_counts(hits: usize, trials: usize) -> Self {
        let (lo, hi) = wilson_interval(hits, trials);
        Self {
            p_hat: hits as f64 / trials as f64,
            lo,
            hi,
            hits,
            trials,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// 95% Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if hits == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

/// Frequency of `samples > threshold`.
pub fn tail_probability(samples: &[f64], threshold: f64) -> Result<Proportion, DominationError> {
    if samples.len() < MIN_SAMPLES {
        return Err(DominationError::TooFewSamples(samples.len()));
    }
    let hits = samples.iter().filter(|&&x| x > threshold).count();
    Ok(Proportion::from_counts(hits, samples.len()))
}

/// Samples of one family member `u` at one `N`; `x[t]` pairs with `y[t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryCell {
    pub n: usize,
    pub u: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationQuery {
    pub family: String,
    pub cells: Vec<QueryCell>,
    pub epsilons: Vec<f64>,
    pub ds: Vec<f64>,
}

impl DominationQuery {
    pub fn new(family: impl Into<String>, cells: Vec<QueryCell>) -> Self {
        Self {
            family: family.into(),
            cells,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            ds: DEFAULT_DS.to_vec(),
        }
    }

    fn ladder(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    fn validate(&self) -> Result<(), DominationError> {
        for c in &self.cells {
            if c.x.len() != c.y.len() {
                return Err(DominationError::Unpaired {
                    n: c.n,
                    u: c.u,
                    x: c.x.len(),
                    y: c.y.len(),
                });
            }
            for (what, values) in [("X", &c.x), ("Y", &c.y)] {
                if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                    return Err(DominationError::Negative { what, index, value });
                }
            }
        }
        Ok(())
    }
}

/// One `(N, eps)` row: the worst family member's exceedance frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    pub epsilon: f64,
    pub worst_u: usize,
    pub estimate: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
}

impl TailTable {
    /// Rows at `epsilon`, in increasing `N`.
    pub fn ladder(&self, epsilon: f64) -> Vec<&TailRow> {
        let mut rows: Vec<&TailRow> = self.rows.iter().filter(|r| r.epsilon == epsilon).collect();
        rows.sort_by_key(|r| r.n);
        rows
    }

    /// Whether no step up the ladder is a significant increase: each
    /// interval's lower end stays below the previous interval's upper end.
    pub fn nonincreasing_within_intervals(&self, epsilon: f64) -> bool {
        self.ladder(epsilon).windows(2).all(|w| w[1].estimate.lo <= w[0].estimate.hi)
    }

    /// Whether point estimates are nonincreasing, recorded as is.
    pub fn strictly_reported_monotone(&self, epsilon: f64) -> bool {
        self.ladder(epsilon).windows(2).all(|w| w[1].estimate.p_hat <= w[0].estimate.p_hat)
    }
}

/// Exceedance table from raw `(X, Y)` samples: for each `N` and `eps`,
/// the maximum over `u` of the frequency of `X > N^eps Y`.
pub fn tail_table(query: &DominationQuery) -> Result<TailTable, DominationError> {
    query.validate()?;
    let mut rows = Vec::new();
    for n in query.ladder() {
        for &epsilon in &query.epsilons {
            let factor = (n as f64).powf(epsilon);
            let mut worst: Option<(usize, Proportion)> = None;
            for cell in query.cells.iter().filter(|c| c.n == n) {
                if cell.x.len() < MIN_SAMPLES {
                    return Err(DominationError::TooFewSamples(cell.x.len()));
                }
                let hits = cell.x.iter().zip(&cell.y).filter(|(x, y)| **x > factor * **y).count();
                let p = Proportion::from_counts(hits, cell.x.len());
                if worst.is_none_or(|(_, w)| p.p_hat > w.p_hat) {
                    worst = Some((cell.u, p));
                }
            }
            if let Some((worst_u, estimate)) = worst {
                rows.push(TailRow {
                    n,
                    epsilon,
                    worst_u,
                    estimate,
                });
            }
        }
    }
    Ok(TailTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellVerdict {
    pub epsilon: f64,
    pub d: f64,
    /// `p(N_max) <= N_max^-D + interval width`.
    pub gate: bool,
    pub monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationVerdict {
    pub family: String,
    pub table: TailTable,
    pub cells: Vec<CellVerdict>,
    /// Smallest tested `D` at which every `eps` passes.
    pub passing_d: Option<f64>,
    pub consistent: bool,
}

pub fn domination_verdict(query: &DominationQuery) -> Result<DominationVerdict, DominationError> {
    let ladder = query.ladder();
    if ladder.len() < 3 {
        return Err(DominationError::ShortLadder(ladder.len()));
    }
    let table = tail_table(query)?;
    let n_max = *ladder.last().expect("nonempty ladder");
    let mut cells = Vec::new();
    for &d in &query.ds {
        for &epsilon in &query.epsilons {
            let rows = table.ladder(epsilon);
            let last = rows.last().expect("every N has a row").estimate;
            let gate = last.p_hat <= (n_max as f64).powf(-d) + last.width();
            let monotone = table.nonincreasing_within_intervals(epsilon);
            cells.push(CellVerdict {
                epsilon,
                d,
                gate,
                monotone,
                pass: gate && monotone,
            });
        }
    }
    let mut ds = query.ds.clone();
    ds.sort_by(f64::total_cmp);
    let passing_d = ds
        .into_iter()
        .find(|&d| cells.iter().filter(|c| c.d == d).all(|c| c.pass));
    Ok(DominationVerdict {
        family: query.family.clone(),
        table,
        cells,
        passing_d,
        consistent: passing_d.is_some(),
    })
}

/// Least-squares line through `(log N, log metric)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub ns: Vec<usize>,
}

impl SlopeFit {
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.slope >= lo && self.slope <= hi
    }
}

pub fn exponent_fit(ns: &[usize], metrics: &[f64]) -> Result<SlopeFit, DominationError> {
    if ns.len() < 3 || ns.len() != metrics.len() {
        return Err(DominationError::TooFewPoints(ns.len().min(metrics.len())));
    }
    if let Some((&n, &value)) = ns.iter().zip(metrics).find(|(_, m)| !(**m > 0.0)) {
        return Err(DominationError::NonPositiveMetric { n, value });
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = metrics.iter().map(|m| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
        ns: ns.to_vec(),
    })
}
