//! Wigner ensembles: entry laws, reproducible sampling, entry-zeroed minors.
//!
//! A sampled matrix `H` is Hermitian with independent upper-triangular
//! entries, mean zero and `E|H_ij|^2 = 1/N` off the diagonal. The diagonal
//! variance is `diagonal_variance / N`, a free parameter of the law.
//!
//! Row `i` of trial `t` is generated from its own stream
//! `seed::stream(master, t, MatrixRow, i)`, which fills `H_ii` and then
//! `H_ij` for `j > i`. A single entry can therefore be drawn without
//! materializing the matrix, and sampling is independent of execution order.

use std::io::{self, Read, Write};

use faer::Mat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::c64;
use crate::seed::{self, Purpose};

/// Largest dimension accepted by [`EnsembleSpec::validate`].
pub const MAX_DIMENSION: usize = 4096;

const DUMP_MAGIC: &[u8; 5] = b"WIGM1";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("index ({i}, {j}) out of range for N = {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("matrix is not Hermitian at ({i}, {j})")]
    NotHermitian { i: usize, j: usize },
    #[error("unsupported moment order p = {0} (expected 2, 4, 6 or 8)")]
    UnsupportedMoment(u32),
    #[error("moment audit needs at least 100 trials, got {0}")]
    TooFewTrials(usize),
    #[error("malformed matrix dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    /// `(g1 + i g2)/sqrt(2)` with standard normal `g1, g2`.
    ComplexGaussian,
    /// Standard normal, real valued.
    RealGaussian,
    /// Uniform on `{1, i, -1, -i}` (hermitian) or `{1, -1}` (real-symmetric).
    RademacherPhase,
    /// Uniform on a centred box with unit second moment.
    BoundedUniform,
    /// All entries zero. Violates the variance condition; used as a
    /// degenerate test law where conditional expectations are trivial.
    PointMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    Hermitian,
    RealSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EntryLaw {
    pub kind: EntryKind,
    /// `N * E|H_ii|^2`.
    pub diagonal_variance: f64,
}

impl EntryLaw {
    pub fn new(kind: EntryKind, diagonal_variance: f64) -> Self {
        Self {
            kind,
            diagonal_variance,
        }
    }

    /// Default diagonal variance per symmetry class: 1 for complex
    /// Hermitian (GUE-like), 2 for real symmetric (GOE-like).
    pub fn default_for(kind: EntryKind, symmetry: Symmetry) -> Self {
        let diagonal_variance = match symmetry {
            Symmetry::Hermitian => 1.0,
            Symmetry::RealSymmetric => 2.0,
        };
        Self::new(kind, diagonal_variance)
    }

    /// Unit-variance off-diagonal draw (before the `1/sqrt(N)` scaling).
    fn draw_offdiag(&self, symmetry: Symmetry, rng: &mut ChaCha8Rng) -> c64 {
        match (self.kind, symmetry) {
            (EntryKind::ComplexGaussian, _) => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }
            (EntryKind::RealGaussian, _) => c64::new(rng.sample(StandardNormal), 0.0),
            (EntryKind::RademacherPhase, Symmetry::Hermitian) => match rng.random_range(0..4u8) {
                0 => c64::new(1.0, 0.0),
                1 => c64::new(0.0, 1.0),
                2 => c64::new(-1.0, 0.0),
                _ => c64::new(0.0, -1.0),
            },
            (EntryKind::RademacherPhase, Symmetry::RealSymmetric) => {
                c64::new(if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0)
            }
            (EntryKind::BoundedUniform, Symmetry::Hermitian) => {
                let a = 1.5f64.sqrt();
                c64::new(rng.random_range(-a..a), rng.random_range(-a..a))
            }
            (EntryKind::BoundedUniform, Symmetry::RealSymmetric) => {
                let a = 3f64.sqrt();
                c64::new(rng.random_range(-a..a), 0.0)
            }
            (EntryKind::PointMass, _) => c64::new(0.0, 0.0),
        }
    }

    /// Diagonal draw with variance `diagonal_variance` (before scaling).
    fn draw_diag(&self, rng: &mut ChaCha8Rng) -> f64 {
        let sd = self.diagonal_variance.sqrt();
        match self.kind {
            EntryKind::ComplexGaussian | EntryKind::RealGaussian => {
                sd * rng.sample::<f64, _>(StandardNormal)
            }
            EntryKind::RademacherPhase => {
                if rng.random_bool(0.5) {
                    sd
                } else {
                    -sd
                }
            }
            EntryKind::BoundedUniform => {
                let a = (3.0 * self.diagonal_variance).sqrt();
                rng.random_range(-a..a)
            }
            EntryKind::PointMass => 0.0,
        }
    }

    /// Closed-form `E|sqrt(N) H_ij|^p` for an off-diagonal entry.
    pub fn offdiag_abs_moment(&self, symmetry: Symmetry, p: u32) -> Option<f64> {
        let half = p / 2;
        match (self.kind, symmetry) {
            // |g|^2 ~ Exp(1): E|g|^p = Gamma(1 + p/2)
            (EntryKind::ComplexGaussian, _) => Some((1..=half).map(f64::from).product()),
            (EntryKind::RealGaussian, _) => Some(double_factorial(p - 1)),
            (EntryKind::RademacherPhase, _) => Some(1.0),
            (EntryKind::BoundedUniform, Symmetry::RealSymmetric) => {
                Some(3f64.powi(half as i32) / f64::from(p + 1))
            }
            (EntryKind::BoundedUniform, Symmetry::Hermitian) => {
                // E (u1^2 + u2^2)^{p/2} with u uniform on [-a, a], a^2 = 3/2
                let a2: f64 = 1.5;
                let even = |k: u32| a2.powi(k as i32) / f64::from(2 * k + 1);
                Some(
                    (0..=half)
                        .map(|k| binomial(half, k) * even(k) * even(half - k))
                        .sum(),
                )
            }
            (EntryKind::PointMass, _) => Some(0.0),
        }
    }

    /// Closed-form `E|sqrt(N) H_ii|^p` for a diagonal entry.
    pub fn diag_abs_moment(&self, p: u32) -> Option<f64> {
        let scale = self.diagonal_variance.powf(f64::from(p) / 2.0);
        match self.kind {
            EntryKind::ComplexGaussian | EntryKind::RealGaussian => {
                Some(scale * double_factorial(p - 1))
            }
            EntryKind::RademacherPhase => Some(scale),
            EntryKind::BoundedUniform => Some(scale * 3f64.powf(f64::from(p) / 2.0) / f64::from(p + 1)),
            EntryKind::PointMass => Some(0.0),
        }
    }
}

fn double_factorial(k: u32) -> f64 {
    (1..=k).rev().step_by(2).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub law: EntryLaw,
    pub symmetry: Symmetry,
    pub master_seed: u64,
}

impl EnsembleSpec {
    /// Complex Hermitian Gaussian ensemble with unit diagonal variance.
    pub fn gue(n: usize, master_seed: u64) -> Self {
        Self {
            n,
            law: EntryLaw::default_for(EntryKind::ComplexGaussian, Symmetry::Hermitian),
            symmetry: Symmetry::Hermitian,
            master_seed,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n == 0 || self.n > MAX_DIMENSION {
            return Err(EnsembleError::Config(format!(
                "N = {} outside [1, {MAX_DIMENSION}]",
                self.n
            )));
        }
        let dv = self.law.diagonal_variance;
        if !(dv.is_finite() && dv > 0.0) {
            return Err(EnsembleError::Config(format!(
                "diagonal variance must be positive and finite, got {dv}"
            )));
        }
        if self.symmetry == Symmetry::RealSymmetric && self.law.kind == EntryKind::ComplexGaussian {
            return Err(EnsembleError::Config(
                "complex-gaussian entries cannot form a real-symmetric matrix".into(),
            ));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    fn row_stream(&self, trial: u64, row: usize) -> ChaCha8Rng {
        seed::stream(self.master_seed, trial, Purpose::MatrixRow, row as u64)
    }

    /// Draws the single entry `H_ij` (`i <= j`) of trial `trial`, consuming
    /// only the prefix of row `i`'s stream.
    pub fn sample_entry(&self, trial: u64, i: usize, j: usize) -> Result<c64, EnsembleError> {
        self.validate()?;
        let (i, j) = (i.min(j), i.max(j));
        if j >= self.n {
            return Err(EnsembleError::IndexOutOfRange { i, j, n: self.n });
        }
        let mut rng = self.row_stream(trial, i);
        let diag = self.law.draw_diag(&mut rng);
        if i == j {
            return Ok(c64::new(diag * self.scale(), 0.0));
        }
        let mut value = c64::new(0.0, 0.0);
        for _ in i + 1..=j {
            value = self.law.draw_offdiag(self.symmetry, &mut rng);
        }
        Ok(value * self.scale())
    }

    /// A fresh independent copy of row 0, `(H_00, H_01, ..., H_0,N-1)`,
    /// drawn from the resample stream `resample` of trial `trial`.
    pub fn resample_first_row(&self, trial: u64, resample: u64) -> Vec<c64> {
        let mut rng = seed::stream(self.master_seed, trial, Purpose::FirstRowResample, resample);
        let scale = self.scale();
        let mut row = Vec::with_capacity(self.n);
        row.push(c64::new(self.law.draw_diag(&mut rng) * scale, 0.0));
        for _ in 1..self.n {
            row.push(self.law.draw_offdiag(self.symmetry, &mut rng) * scale);
        }
        row
    }
}

/// Where a sampled matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: EnsembleSpec,
    pub trial: u64,
}

/// Dense Hermitian matrix with exact bitwise symmetry `H_kl = conj(H_lk)`.
#[derive(Debug, Clone)]
pub struct WignerMatrix {
    entries: Mat<c64>,
    provenance: Option<Provenance>,
}

impl WignerMatrix {
    /// Wraps a dense matrix after checking exact Hermitian symmetry.
    pub fn from_dense(entries: Mat<c64>) -> Result<Self, EnsembleError> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(EnsembleError::Config(format!(
                "matrix is {}x{}, not square",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            for j in i..n {
                if entries[(i, j)] != entries[(j, i)].conj() {
                    return Err(EnsembleError::NotHermitian { i, j });
                }
            }
        }
        Ok(Self {
            entries,
            provenance: None,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: Mat::zeros(n, n),
            provenance: None,
        }
    }

    /// Real diagonal matrix.
    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            entries: Mat::from_fn(n, n, |i, j| {
                if i == j {
                    c64::new(values[i], 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            }),
            provenance: None,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.entries[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<c64> {
        &self.entries
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        let n = self.n();
        let mut best = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                best = best.max(self.entries[(i, j)].norm());
            }
        }
        best
    }

    fn check_pair(&self, pair: MinorPair) -> Result<(), EnsembleError> {
        if pair.j >= self.n() {
            return Err(EnsembleError::IndexOutOfRange {
                i: pair.i,
                j: pair.j,
                n: self.n(),
            });
        }
        Ok(())
    }
}

/// Unordered index pair `{i, j}` naming the minor `H^(ij)`; stored with `i <= j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MinorPair {
    i: usize,
    j: usize,
}

impl MinorPair {
    pub fn new(i: usize, j: usize, n: usize) -> Result<Self, EnsembleError> {
        let (i, j) = (i.min(j), i.max(j));
        if j >= n {
            return Err(EnsembleError::IndexOutOfRange { i, j, n });
        }
        Ok(Self { i, j })
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn is_diagonal(&self) -> bool {
        self.i == self.j
    }
}

/// Samples trial `trial` of `spec`.
pub fn sample_wigner(spec: &EnsembleSpec, trial: u64) -> Result<WignerMatrix, EnsembleError> {
    spec.validate()?;
    let n = spec.n;
    let scale = spec.scale();
    let mut entries = Mat::<c64>::zeros(n, n);
    for i in 0..n {
        let mut rng = spec.row_stream(trial, i);
        entries[(i, i)] = c64::new(spec.law.draw_diag(&mut rng) * scale, 0.0);
        for j in i + 1..n {
            let v = spec.law.draw_offdiag(spec.symmetry, &mut rng) * scale;
            entries[(i, j)] = v;
            entries[(j, i)] = v.conj();
        }
    }
    Ok(WignerMatrix {
        entries,
        provenance: Some(Provenance { spec: *spec, trial }),
    })
}

/// `H^(ij)`: `H` with entries `(i, j)` and `(j, i)` set to zero.
pub fn zero_entry_minor(h: &WignerMatrix, pair: MinorPair) -> Result<WignerMatrix, EnsembleError> {
    h.check_pair(pair)?;
    let mut entries = h.entries.clone();
    entries[(pair.i, pair.j)] = c64::new(0.0, 0.0);
    entries[(pair.j, pair.i)] = c64::new(0.0, 0.0);
    Ok(WignerMatrix {
        entries,
        provenance: h.provenance,
    })
}

/// One term `coeff * e_row e_col^*` of a factored perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterTerm {
    pub row: usize,
    pub col: usize,
    pub coeff: c64,
}

/// `Delta^(ij) = H - H^(ij)` as at most two outer products of unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    n: usize,
    pair: MinorPair,
    terms: Vec<OuterTerm>,
}

impl Perturbation {
    pub fn terms(&self) -> &[OuterTerm] {
        &self.terms
    }

    pub fn pair(&self) -> MinorPair {
        self.pair
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dense(&self) -> Mat<c64> {
        let mut out = Mat::<c64>::zeros(self.n, self.n);
        for t in &self.terms {
            out[(t.row, t.col)] += t.coeff;
        }
        out
    }

    /// Same perturbation with every coefficient negated.
    pub fn negated(&self) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| OuterTerm {
                    coeff: -t.coeff,
                    ..*t
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Exact rank: the terms sit in distinct rows and columns, so the rank
    /// is the number of nonzero coefficients.
    pub fn rank(&self) -> usize {
        self.terms.iter().filter(|t| t.coeff != c64::new(0.0, 0.0)).count()
    }
}

pub fn perturbation(h: &WignerMatrix, pair: MinorPair) -> Result<Perturbation, EnsembleError> {
    h.check_pair(pair)?;
    let (i, j) = (pair.i, pair.j);
    let terms = if i == j {
        vec![OuterTerm {
            row: i,
            col: i,
            coeff: h.get(i, i),
        }]
    } else {
        vec![
            OuterTerm {
                row: i,
                col: j,
                coeff: h.get(i, j),
            },
            OuterTerm {
                row: j,
                col: i,
                coeff: h.get(j, i),
            },
        ]
    };
    Ok(Perturbation {
        n: h.n(),
        pair,
        terms,
    })
}

/// Monte Carlo moment estimates for one entry position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryMoments {
    /// Sample mean of `sqrt(N) H_ij`.
    pub mean: c64,
    /// Standard error of each component of the mean.
    pub mean_stderr: f64,
    /// Estimate of `E|sqrt(N) H_ij|^p`.
    pub abs_moment: f64,
    pub abs_moment_stderr: f64,
    /// `abs_moment^(1/p)`.
    pub p_norm: f64,
    pub target: Option<f64>,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub p: u32,
    pub trials: usize,
    pub offdiag: EntryMoments,
    pub diagonal: EntryMoments,
}

impl MomentReport {
    pub fn violation(&self) -> bool {
        self.offdiag.violation || self.diagonal.violation
    }
}

/// Audits entry `(0, 1)` and `(0, 0)` over `trials` independent trials.
///
/// A violation is flagged when the mean is more than four standard errors
/// from zero or the `p`-th absolute moment is more than four standard errors
/// from its closed form.
pub fn moment_audit(spec: &EnsembleSpec, p: u32, trials: usize) -> Result<MomentReport, EnsembleError> {
    if !matches!(p, 2 | 4 | 6 | 8) {
        return Err(EnsembleError::UnsupportedMoment(p));
    }
    if trials < 100 {
        return Err(EnsembleError::TooFewTrials(trials));
    }
    spec.validate()?;
    if spec.n < 2 {
        return Err(EnsembleError::Config("moment audit needs N >= 2".into()));
    }
    let root_n = (spec.n as f64).sqrt();
    let mut off = Vec::with_capacity(trials);
    let mut diag = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        off.push(spec.sample_entry(t, 0, 1)? * root_n);
        diag.push(spec.sample_entry(t, 0, 0)? * root_n);
    }
    Ok(MomentReport {
        p,
        trials,
        offdiag: entry_moments(&off, p, spec.law.offdiag_abs_moment(spec.symmetry, p)),
        diagonal: entry_moments(&diag, p, spec.law.diag_abs_moment(p)),
    })
}

fn entry_moments(samples: &[c64], p: u32, target: Option<f64>) -> EntryMoments {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<c64>() / n;
    let var_re = samples.iter().map(|s| (s.re - mean.re).powi(2)).sum::<f64>() / (n - 1.0);
    let var_im = samples.iter().map(|s| (s.im - mean.im).powi(2)).sum::<f64>() / (n - 1.0);
    let mean_stderr = (var_re.max(var_im) / n).sqrt();
    let powers: Vec<f64> = samples.iter().map(|s| s.norm().powi(p as i32)).collect();
    let (abs_moment, abs_moment_stderr) = crate::summary::mean_and_stderr(&powers);
    let gate = |dev: f64, se: f64| dev > 4.0 * se && dev > 1e-12;
    let mean_bad = gate(mean.re.abs(), (var_re / n).sqrt()) || gate(mean.im.abs(), (var_im / n).sqrt());
    let moment_bad = target.is_some_and(|t| gate((abs_moment - t).abs(), abs_moment_stderr));
    EntryMoments {
        mean,
        mean_stderr,
        abs_moment,
        abs_moment_stderr,
        p_norm: abs_moment.powf(1.0 / f64::from(p)),
        target,
        violation: mean_bad || moment_bad,
    }
}

/// Writes the `WIGM1` debug dump: magic, `N` as u64 LE, then row-major
/// interleaved real/imaginary f64 LE.
pub fn write_dump<W: Write>(h: &WignerMatrix, mut w: W) -> io::Result<()> {
    let n = h.n();
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(n as u64).to_le_bytes())?;
    for i in 0..n {
        for j in 0..n {
            let v = h.get(i, j);
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_dump<R: Read>(mut r: R) -> Result<WignerMatrix, EnsembleError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(EnsembleError::Dump("bad magic".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n = usize::try_from(u64::from_le_bytes(word))
        .ok()
        .filter(|&n| n <= MAX_DIMENSION)
        .ok_or_else(|| EnsembleError::Dump("dimension out of range".into()))?;
    let mut entries = Mat::<c64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            let im = f64::from_le_bytes(word);
            entries[(i, j)] = c64::new(re, im);
        }
    }
    WignerMatrix::from_dense(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: EntryKind, n: usize) -> EnsembleSpec {
        EnsembleSpec {
            n,
            law: EntryLaw::default_for(kind, Symmetry::Hermitian),
            symmetry: Symmetry::Hermitian,
            master_seed: 7,
        }
    }

    fn assert_hermitian(h: &WignerMatrix) {
        for i in 0..h.n() {
            for j in 0..h.n() {
                assert_eq!(h.get(i, j), h.get(j, i).conj());
            }
        }
    }

    #[test]
    fn sampled_matrix_is_exactly_hermitian() {
        let h = sample_wigner(&spec(EntryKind::ComplexGaussian, 4), 0).unwrap();
        assert_hermitian(&h);
        for i in 0..4 {
            assert_eq!(h.get(i, i).im, 0.0);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_trial() {
        let s = spec(EntryKind::ComplexGaussian, 16);
        let a = sample_wigner(&s, 3).unwrap();
        let _ = sample_wigner(&s, 9).unwrap();
        let b = sample_wigner(&s, 3).unwrap();
        assert_eq!(a.as_mat(), b.as_mat());
        let c = sample_wigner(&s, 4).unwrap();
        assert_ne!(a.as_mat(), c.as_mat());
    }

    #[test]
    fn single_entry_matches_full_sample() {
        let s = spec(EntryKind::BoundedUniform, 9);
        let h = sample_wigner(&s, 11).unwrap();
        for (i, j) in [(0, 0), (0, 1), (2, 7), (8, 8), (5, 3)] {
            let e = s.sample_entry(11, i, j).unwrap();
            assert_eq!(e, h.get(i.min(j), i.max(j)));
        }
    }

    #[test]
    fn rademacher_phase_has_exact_modulus() {
        let h = sample_wigner(&spec(EntryKind::RademacherPhase, 256), 0).unwrap();
        assert_eq!(h.get(0, 1).norm(), 0.0625);
        for j in 1..256 {
            assert_eq!(h.get(3, j.max(4)).norm(), 0.0625);
        }
    }

    #[test]
    fn mean_of_offdiagonal_entry_is_zero() {
        // 4 standard errors of a mean of 10^4 draws with sd 1/16
        let s = spec(EntryKind::ComplexGaussian, 256);
        let trials = 10_000u64;
        let sum: c64 = (0..trials).map(|t| s.sample_entry(t, 0, 1).unwrap()).sum();
        let mean = sum / trials as f64;
        let bound = 4.0 / ((256.0 * trials as f64).sqrt());
        assert!(mean.re.abs() < bound && mean.im.abs() < bound, "{mean}");
    }

    #[test]
    fn real_symmetric_rejects_complex_law() {
        let s = EnsembleSpec {
            symmetry: Symmetry::RealSymmetric,
            ..spec(EntryKind::ComplexGaussian, 4)
        };
        assert!(matches!(sample_wigner(&s, 0), Err(EnsembleError::Config(_))));
        let bad = EnsembleSpec {
            law: EntryLaw::new(EntryKind::RealGaussian, -1.0),
            ..spec(EntryKind::RealGaussian, 4)
        };
        assert!(bad.validate().is_err());
        assert!(spec(EntryKind::RealGaussian, 0).validate().is_err());
        assert!(spec(EntryKind::RealGaussian, MAX_DIMENSION + 1).validate().is_err());
    }

    #[test]
    fn minor_zeroes_exactly_one_pair() {
        let h = sample_wigner(&spec(EntryKind::ComplexGaussian, 6), 1).unwrap();
        let pair = MinorPair::new(0, 2, 6).unwrap();
        let m = zero_entry_minor(&h, pair).unwrap();
        assert_hermitian(&m);
        for i in 0..6 {
            for j in 0..6 {
                let zeroed = (i, j) == (0, 2) || (i, j) == (2, 0);
                let expected = if zeroed { c64::new(0.0, 0.0) } else { h.get(i, j) };
                assert_eq!(m.get(i, j), expected);
            }
        }
        let d = zero_entry_minor(&h, MinorPair::new(1, 1, 6).unwrap()).unwrap();
        assert_eq!(d.get(1, 1), c64::new(0.0, 0.0));
        assert_eq!(d.get(1, 2), h.get(1, 2));
    }

    #[test]
    fn perturbation_plus_minor_is_the_matrix() {
        let h = sample_wigner(&spec(EntryKind::ComplexGaussian, 8), 2).unwrap();
        for (i, j) in [(0, 2), (0, 4), (3, 3), (7, 0)] {
            let pair = MinorPair::new(i, j, 8).unwrap();
            let delta = perturbation(&h, pair).unwrap();
            let minor = zero_entry_minor(&h, pair).unwrap();
            let sum = delta.dense() + minor.as_mat();
            assert_eq!(&sum, h.as_mat());
            let expected_rank = if i == j { 1 } else { 2 };
            assert_eq!(delta.rank(), expected_rank);
            let dense = delta.dense();
            let nonzero = (0..8)
                .flat_map(|a| (0..8).map(move |b| (a, b)))
                .filter(|&(a, b)| dense[(a, b)] != c64::new(0.0, 0.0))
                .count();
            assert!(nonzero <= 2);
        }
        let z = WignerMatrix::zeros(3);
        let p = perturbation(&z, MinorPair::new(1, 1, 3).unwrap()).unwrap();
        assert_eq!(p.rank(), 0);
    }

    #[test]
    fn factored_form_matches_dense_subtraction() {
        let h = sample_wigner(&spec(EntryKind::ComplexGaussian, 10), 5).unwrap();
        let pair = MinorPair::new(0, 4, 10).unwrap();
        let oracle = h.as_mat() - zero_entry_minor(&h, pair).unwrap().as_mat();
        let factored = perturbation(&h, pair).unwrap().dense();
        let err = (0..10)
            .flat_map(|i| (0..10).map(move |j| (i, j)))
            .map(|(i, j)| (oracle[(i, j)] - factored[(i, j)]).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-15);
    }

    #[test]
    fn out_of_range_pairs_are_rejected() {
        let h = WignerMatrix::zeros(3);
        assert!(MinorPair::new(0, 3, 3).is_err());
        let forged = MinorPair { i: 0, j: 5 };
        assert!(zero_entry_minor(&h, forged).is_err());
        assert!(perturbation(&h, forged).is_err());
    }

    #[test]
    fn closed_form_moments() {
        let law = EntryLaw::default_for(EntryKind::ComplexGaussian, Symmetry::Hermitian);
        assert_eq!(law.offdiag_abs_moment(Symmetry::Hermitian, 2), Some(1.0));
        assert_eq!(law.offdiag_abs_moment(Symmetry::Hermitian, 4), Some(2.0));
        assert_eq!(law.offdiag_abs_moment(Symmetry::Hermitian, 8), Some(24.0));
        let real = EntryLaw::default_for(EntryKind::RealGaussian, Symmetry::RealSymmetric);
        assert_eq!(real.offdiag_abs_moment(Symmetry::RealSymmetric, 4), Some(3.0));
        assert_eq!(real.diag_abs_moment(2), Some(2.0));
        let unif = EntryLaw::default_for(EntryKind::BoundedUniform, Symmetry::Hermitian);
        approx::assert_relative_eq!(unif.offdiag_abs_moment(Symmetry::Hermitian, 2).unwrap(), 1.0);
        approx::assert_relative_eq!(unif.offdiag_abs_moment(Symmetry::Hermitian, 4).unwrap(), 1.4);
    }

    #[test]
    fn audit_second_and_fourth_gaussian_moments() {
        let s = spec(EntryKind::ComplexGaussian, 64);
        let r2 = moment_audit(&s, 2, 20_000).unwrap();
        assert!(!r2.violation(), "{r2:?}");
        assert!((r2.offdiag.abs_moment - 1.0).abs() <= 4.0 * r2.offdiag.abs_moment_stderr);
        let r4 = moment_audit(&s, 4, 20_000).unwrap();
        assert!((r4.offdiag.abs_moment - 2.0).abs() <= 4.0 * r4.offdiag.abs_moment_stderr);
    }

    #[test]
    fn audit_rademacher_norm_is_exactly_one() {
        let s = spec(EntryKind::RademacherPhase, 256);
        for p in [2, 4, 6, 8] {
            let r = moment_audit(&s, p, 200).unwrap();
            assert_eq!(r.offdiag.p_norm, 1.0);
            assert_eq!(r.offdiag.abs_moment_stderr, 0.0);
        }
    }

    #[test]
    fn audit_rejects_bad_arguments() {
        let s = spec(EntryKind::ComplexGaussian, 8);
        assert!(matches!(moment_audit(&s, 3, 200), Err(EnsembleError::UnsupportedMoment(3))));
        assert!(matches!(moment_audit(&s, 2, 99), Err(EnsembleError::TooFewTrials(99))));
    }

    #[test]
    fn dump_round_trip() {
        let h = sample_wigner(&spec(EntryKind::ComplexGaussian, 5), 0).unwrap();
        let mut buf = Vec::new();
        write_dump(&h, &mut buf).unwrap();
        assert_eq!(&buf[..5], b"WIGM1");
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 5);
        assert_eq!(buf.len(), 13 + 5 * 5 * 16);
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.as_mat(), h.as_mat());
        buf[0] = b'X';
        assert!(read_dump(buf.as_slice()).is_err());
    }
}
