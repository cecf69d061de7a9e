//! Resolvents, minor resolvents, and the exact identities they satisfy.
//!
//! One eigendecomposition `H = U diag(lambda) U^*` serves every spectral
//! point of a matrix: `G(z) = U diag(1/(lambda - z)) U^*` costs one matrix
//! product per `z`. Minor resolvents `G^(0i)` come from a rank-2 update of
//! `G`, `O(N^2)` per index instead of a fresh `O(N^3)` solve. The dense
//! LU inverse is kept as an independent oracle and as the fast path when a
//! matrix is only ever evaluated at a single `z`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use serde::Serialize;
use thiserror::Error;

use crate::c64;
use crate::ensemble::{self, MinorPair, Perturbation, WignerMatrix};
use crate::semicircle;

/// Largest ratio between consecutive points of a `Gamma*` grid.
pub const GRID_RATIO: f64 = 1.05;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("spectral parameter needs eta > 0, got eta = {0}")]
    NonPositiveEta(f64),
    #[error("eigensolver did not converge for N = {n}")]
    NoConvergence { n: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("expansion order must be at least 1")]
    ZeroOrder,
    #[error("empty Gamma* grid: eta = {eta} exceeds eta_max = {eta_max}")]
    EmptyGrid { eta: f64, eta_max: f64 },
    #[error(transparent)]
    Ensemble(#[from] ensemble::EnsembleError),
}

/// `z = E + i eta` with `eta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint {
    energy: f64,
    eta: f64,
}

impl SpectralPoint {
    pub fn new(energy: f64, eta: f64) -> Result<Self, SpectralError> {
        if !(eta > 0.0) || !eta.is_finite() || !energy.is_finite() {
            return Err(SpectralError::NonPositiveEta(eta));
        }
        Ok(Self { energy, eta })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn z(&self) -> c64 {
        c64::new(self.energy, self.eta)
    }

    pub fn abs(&self) -> f64 {
        self.z().norm()
    }

    /// `psi = (N eta)^(-1/2)`.
    pub fn psi(&self, n: usize) -> f64 {
        1.0 / (n as f64 * self.eta).sqrt()
    }

    pub fn m(&self) -> c64 {
        semicircle::stieltjes(self.z()).expect("eta > 0 by construction")
    }
}

/// How an experiment picks `eta` as a function of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum EtaRule {
    /// The same `eta` for every `N`.
    Fixed(f64),
    /// `eta = N^exponent`; `-1 + gamma` is the bottom of the domain, `1` its top.
    Power(f64),
}

impl EtaRule {
    pub fn eta(&self, n: usize) -> f64 {
        match *self {
            EtaRule::Fixed(eta) => eta,
            EtaRule::Power(exponent) => (n as f64).powf(exponent),
        }
    }
}

/// A spectral point as a function of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ZRule {
    pub energy: f64,
    pub eta: EtaRule,
}

impl ZRule {
    pub fn point(&self, n: usize) -> Result<SpectralPoint, SpectralError> {
        SpectralPoint::new(self.energy, self.eta.eta(n))
    }
}

/// The spectral domain `|E| <= N`, `N^(-1+gamma) <= eta <= N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainS {
    pub gamma: f64,
    pub n: usize,
}

impl DomainS {
    pub fn eta_min(&self) -> f64 {
        (self.n as f64).powf(-1.0 + self.gamma)
    }

    pub fn contains(&self, point: &SpectralPoint) -> bool {
        let n = self.n as f64;
        point.energy.abs() <= n && point.eta >= self.eta_min() && point.eta <= n
    }
}

/// Eigendata of one Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    vectors: Mat<c64>,
    reconstruction_error: f64,
    unitarity_error: f64,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &Mat<c64> {
        &self.vectors
    }

    /// `max |U diag(lambda) U^* - H|`.
    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction_error
    }

    /// `max |U^* U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        self.unitarity_error
    }

    /// Whether both certificates meet `1e-12 N max|lambda|` and `1e-12 N`.
    pub fn certified(&self) -> bool {
        let n = self.n() as f64;
        let spread = self.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs())).max(1.0);
        self.reconstruction_error <= 1e-12 * n * spread && self.unitarity_error <= 1e-12 * n
    }

    /// `U diag(w) U^*`.
    fn spectral_sum(&self, weights: &[c64]) -> Mat<c64> {
        let n = self.n();
        let u = &self.vectors;
        let scaled = Mat::from_fn(n, n, |i, k| u[(i, k)] * weights[k]);
        &scaled * u.adjoint()
    }

    /// `(1/N) sum_k 1/(lambda_k - z)`.
    pub fn normalized_trace(&self, z: c64) -> c64 {
        let n = self.n() as f64;
        self.eigenvalues.iter().map(|&l| (c64::new(l, 0.0) - z).inv()).sum::<c64>() / n
    }
}

fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    best
}

fn max_abs(a: &Mat<c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max(a[(i, j)].norm());
        }
    }
    best
}

pub fn decompose(h: &WignerMatrix) -> Result<SpectralDecomposition, SpectralError> {
    let n = h.n();
    let evd = h
        .as_mat()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| SpectralError::NoConvergence { n })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let eigenvalues: Vec<f64> = (0..n).rev().map(|k| s[k].re).collect();
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    let mut dec = SpectralDecomposition {
        eigenvalues,
        vectors,
        reconstruction_error: 0.0,
        unitarity_error: 0.0,
    };
    let weights: Vec<c64> = dec.eigenvalues.iter().map(|&l| c64::new(l, 0.0)).collect();
    dec.reconstruction_error = max_abs_diff(&dec.spectral_sum(&weights), h.as_mat());
    let gram = dec.vectors.adjoint() * &dec.vectors;
    dec.unitarity_error = max_abs_diff(&gram, &Mat::identity(n, n));
    Ok(dec)
}

/// Eigenvalues only, descending.
pub fn eigenvalues(h: &WignerMatrix) -> Result<Vec<f64>, SpectralError> {
    let n = h.n();
    let mut vals = h
        .as_mat()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| SpectralError::NoConvergence { n })?;
    vals.reverse();
    Ok(vals)
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `eigenvalues` and the semicircle law.
pub fn ks_distance(eigenvalues: &[f64]) -> f64 {
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = semicircle::cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `G(z)` for one matrix at one spectral point.
#[derive(Debug, Clone)]
pub struct Resolvent {
    point: SpectralPoint,
    matrix: Mat<c64>,
}

impl Resolvent {
    pub fn point(&self) -> SpectralPoint {
        self.point
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, k: usize, l: usize) -> c64 {
        self.matrix[(k, l)]
    }
}

pub fn resolvent(dec: &SpectralDecomposition, point: SpectralPoint) -> Resolvent {
    let z = point.z();
    let weights: Vec<c64> = dec.eigenvalues.iter().map(|&l| (c64::new(l, 0.0) - z).inv()).collect();
    Resolvent {
        point,
        matrix: dec.spectral_sum(&weights),
    }
}

/// `G(z)` by LU inversion of `H - z`.
pub fn dense_resolvent(h: &WignerMatrix, point: SpectralPoint) -> Resolvent {
    let n = h.n();
    let z = point.z();
    let shifted = Mat::from_fn(n, n, |i, j| if i == j { h.get(i, j) - z } else { h.get(i, j) });
    Resolvent {
        point,
        matrix: shifted.partial_piv_lu().inverse(),
    }
}

/// Per-row relative residuals of the Ward identity `sum_j |G_ij|^2 = Im G_ii / eta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WardReport {
    pub per_row: Vec<f64>,
    pub max: f64,
}

pub fn ward_residual(g: &Resolvent) -> WardReport {
    let n = g.n();
    let eta = g.point.eta;
    let per_row: Vec<f64> = (0..n)
        .map(|i| {
            let lhs: f64 = (0..n).map(|j| g.matrix[(i, j)].norm_sqr()).sum();
            let rhs = g.matrix[(i, i)].im / eta;
            (lhs - rhs).abs() / lhs
        })
        .collect();
    let max = per_row.iter().copied().fold(0.0, f64::max);
    WardReport { per_row, max }
}

fn check_square(name: &str, m: &Mat<c64>, n: usize) -> Result<(), SpectralError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(SpectralError::Dimension(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `max |G~ - G + G Delta G~|` for `G~` the resolvent of `H + Delta`.
pub fn resolvent_identity_residual(g: &Mat<c64>, g_tilde: &Mat<c64>, delta: &Mat<c64>) -> Result<f64, SpectralError> {
    let n = g.nrows();
    check_square("G", g, n)?;
    check_square("G~", g_tilde, n)?;
    check_square("Delta", delta, n)?;
    let rhs = g - g * delta * g_tilde;
    Ok(max_abs_diff(g_tilde, &rhs))
}

/// Residual of the order-`k` expansion
/// `G~ = sum_{i<k} G (-Delta G)^i + G~ (-Delta G)^k`.
pub fn expansion_remainder(g: &Mat<c64>, g_tilde: &Mat<c64>, delta: &Mat<c64>, k: usize) -> Result<f64, SpectralError> {
    if k == 0 {
        return Err(SpectralError::ZeroOrder);
    }
    let n = g.nrows();
    check_square("G", g, n)?;
    check_square("G~", g_tilde, n)?;
    check_square("Delta", delta, n)?;
    let step = -(delta * g);
    let mut term = g.clone();
    let mut power = Mat::<c64>::identity(n, n);
    let mut sum = Mat::<c64>::zeros(n, n);
    for _ in 0..k {
        sum += &term;
        term = &term * &step;
        power = &power * &step;
    }
    sum += g_tilde * &power;
    Ok(max_abs_diff(g_tilde, &sum))
}

/// Rank-`t` (`t <= 2`) update coefficients for removing `delta` from `H`.
///
/// With `Delta = sum_a d_a e_{r_a} e_{c_a}^*`, the resolvent of `H - Delta` is
/// `G + sum_{a,b} G[:, r_a] Q_ab G[c_b, :]` with `Q = D (I - W^* G U D)^-1`.
/// Returns `None` when the capacitance matrix is numerically singular.
struct RankUpdate {
    rows: [usize; 2],
    cols: [usize; 2],
    q: [[c64; 2]; 2],
    len: usize,
}

impl RankUpdate {
    fn removing(g: &Mat<c64>, delta: &Perturbation) -> Option<Self> {
        let terms = delta.terms();
        let len = terms.len();
        let mut rows = [0; 2];
        let mut cols = [0; 2];
        let mut d = [c64::new(0.0, 0.0); 2];
        for (a, t) in terms.iter().enumerate() {
            rows[a] = t.row;
            cols[a] = t.col;
            d[a] = t.coeff;
        }
        let zero = c64::new(0.0, 0.0);
        let one = c64::new(1.0, 0.0);
        // S = I - W^* G U D
        let mut s = [[zero; 2]; 2];
        for a in 0..len {
            for b in 0..len {
                let delta_ab = if a == b { one } else { zero };
                s[a][b] = delta_ab - g[(cols[a], rows[b])] * d[b];
            }
        }
        let mut q = [[zero; 2]; 2];
        if len == 1 {
            if s[0][0].norm() < 1e-14 {
                return None;
            }
            q[0][0] = d[0] / s[0][0];
        } else if len == 2 {
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let scale = s.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max).powi(2);
            if det.norm() < 1e-14 * scale.max(1.0) {
                return None;
            }
            let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
            for a in 0..2 {
                for b in 0..2 {
                    q[a][b] = d[a] * inv[a][b];
                }
            }
        }
        Some(Self { rows, cols, q, len })
    }

    fn entry(&self, g: &Mat<c64>, k: usize, l: usize) -> c64 {
        let mut v = g[(k, l)];
        for a in 0..self.len {
            for b in 0..self.len {
                v += g[(k, self.rows[a])] * self.q[a][b] * g[(self.cols[b], l)];
            }
        }
        v
    }

    fn apply(&self, g: &Mat<c64>) -> Mat<c64> {
        let n = g.nrows();
        let mut out = g.clone();
        for a in 0..self.len {
            for b in 0..self.len {
                let qab = self.q[a][b];
                let (ra, cb) = (self.rows[a], self.cols[b]);
                for l in 0..n {
                    let right = qab * g[(cb, l)];
                    for k in 0..n {
                        out[(k, l)] += g[(k, ra)] * right;
                    }
                }
            }
        }
        out
    }
}

/// `G^(0i)` at the same spectral point as `g`.
#[derive(Debug, Clone)]
pub struct MinorResolvent {
    pub index: usize,
    pub matrix: Mat<c64>,
    /// Whether the rank-2 update was singular and a dense recomputation was used.
    pub used_fallback: bool,
}

/// Resolvent of `H^(0i)` from the resolvent of `H` by a rank-`<= 2` update.
pub fn minor_resolvent(h: &WignerMatrix, g: &Resolvent, i: usize) -> Result<MinorResolvent, SpectralError> {
    let pair = MinorPair::new(0, i, h.n())?;
    let delta = ensemble::perturbation(h, pair)?;
    match RankUpdate::removing(&g.matrix, &delta) {
        Some(update) => Ok(MinorResolvent {
            index: i,
            matrix: update.apply(&g.matrix),
            used_fallback: false,
        }),
        None => {
            let minor = ensemble::zero_entry_minor(h, pair)?;
            Ok(MinorResolvent {
                index: i,
                matrix: dense_resolvent(&minor, g.point).into_matrix(),
                used_fallback: true,
            })
        }
    }
}

/// Single entry `G^(0i)_kl` in `O(1)`; `None` if the update is singular.
pub fn minor_entry(h: &WignerMatrix, g: &Resolvent, i: usize, k: usize, l: usize) -> Result<Option<c64>, SpectralError> {
    let pair = MinorPair::new(0, i, h.n())?;
    let delta = ensemble::perturbation(h, pair)?;
    Ok(RankUpdate::removing(&g.matrix, &delta).map(|u| u.entry(&g.matrix, k, l)))
}

/// `|1 + z G_jj - sum_i H_ji G_ij|`.
pub fn row_identity_residual(h: &WignerMatrix, g: &Resolvent, row: usize) -> f64 {
    let n = h.n();
    let z = g.point.z();
    let sum: c64 = (0..n).map(|i| h.get(row, i) * g.matrix[(i, row)]).sum();
    (c64::new(1.0, 0.0) + z * g.matrix[(row, row)] - sum).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventStats {
    /// `(1/N) sum_j G_jj`.
    pub s: c64,
    /// `max_kl |G_kl|` joined with 1.
    pub gamma: f64,
    pub offdiag_max: f64,
    /// `max_i |G_ii - m|`.
    pub diag_err_max: f64,
}

pub fn stats(g: &Resolvent, m: c64) -> ResolventStats {
    let n = g.n();
    let mut trace = c64::new(0.0, 0.0);
    let mut entry_max = 0.0f64;
    let mut offdiag_max = 0.0f64;
    let mut diag_err_max = 0.0f64;
    for l in 0..n {
        for k in 0..n {
            let v = g.matrix[(k, l)];
            let a = v.norm();
            entry_max = entry_max.max(a);
            if k == l {
                trace += v;
                diag_err_max = diag_err_max.max((v - m).norm());
            } else {
                offdiag_max = offdiag_max.max(a);
            }
        }
    }
    ResolventStats {
        s: trace / n as f64,
        gamma: entry_max.max(1.0),
        offdiag_max,
        diag_err_max,
    }
}

/// `Gamma(z) = max_kl |G_kl(z)|` joined with 1.
pub fn gamma(g: &Resolvent) -> f64 {
    max_abs(&g.matrix).max(1.0)
}

/// Deterministic cap `|G_kl| <= min(N, 1/eta)`; the `1/eta` part is the
/// operator-norm bound, `N` the cruder bound used on unlikely events.
pub fn deterministic_cap(n: usize, eta: f64) -> f64 {
    (n as f64).min(1.0 / eta)
}

/// `Gamma(E + i eta)` from a decomposition; identically 1 once `eta >= 1`
/// since every entry is bounded by the operator norm `1/eta`.
fn gamma_at(dec: &SpectralDecomposition, energy: f64, eta: f64) -> f64 {
    if eta >= 1.0 {
        return 1.0;
    }
    let point = SpectralPoint { energy, eta };
    gamma(&resolvent(dec, point))
}

/// Grid approximation of `Gamma*(E + i eta) = sup_{eta' >= eta} Gamma(E + i eta')`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaStar {
    /// Maximum of `Gamma` over the grid.
    pub value: f64,
    /// Lipschitz allowance between grid points: on `[a, b]` every entry
    /// moves by at most `(b - a) / (2 a^2)` from the nearer endpoint.
    pub slack: f64,
    /// `value + slack`, an upper bound for the supremum on `[eta, eta_max]`.
    pub upper_bound: f64,
    pub grid: Vec<f64>,
}

fn top_anchored_grid(eta: f64, eta_max: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut p = eta_max;
    while p > eta {
        grid.push(p);
        p /= GRID_RATIO;
    }
    grid.push(eta);
    grid
}

fn grid_slack(grid: &[f64]) -> f64 {
    grid.windows(2)
        .map(|w| {
            let (b, a) = (w[0], w[1]);
            if a >= 1.0 {
                0.0
            } else {
                (b - a) / (2.0 * a * a)
            }
        })
        .fold(0.0, f64::max)
}

/// `Gamma*` on the geometric grid `eta_max * 1.05^-j` (points above `eta`)
/// plus `eta` itself.
pub fn gamma_star(dec: &SpectralDecomposition, energy: f64, eta: f64, eta_max: f64) -> Result<GammaStar, SpectralError> {
    if !(eta > 0.0) {
        return Err(SpectralError::NonPositiveEta(eta));
    }
    if eta > eta_max {
        return Err(SpectralError::EmptyGrid { eta, eta_max });
    }
    let grid = top_anchored_grid(eta, eta_max);
    let value = grid.iter().map(|&p| gamma_at(dec, energy, p)).fold(1.0, f64::max);
    let slack = grid_slack(&grid);
    Ok(GammaStar {
        value,
        slack,
        upper_bound: value + slack,
        grid,
    })
}

/// `Gamma*` at several scales from one shared grid, so the values are
/// nested suprema and nonincreasing in `eta`. `levels` may come in any order;
/// results follow the input order.
pub fn gamma_star_profile(dec: &SpectralDecomposition, energy: f64, levels: &[f64], eta_max: f64) -> Result<Vec<GammaStar>, SpectralError> {
    let lowest = levels.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lowest > 0.0) {
        return Err(SpectralError::NonPositiveEta(lowest));
    }
    if let Some(&bad) = levels.iter().find(|&&l| l > eta_max) {
        return Err(SpectralError::EmptyGrid { eta: bad, eta_max });
    }
    let mut grid = top_anchored_grid(lowest, eta_max);
    grid.extend_from_slice(levels);
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let values: Vec<f64> = grid.iter().map(|&p| gamma_at(dec, energy, p)).collect();
    Ok(levels
        .iter()
        .map(|&level| {
            let upto = grid.iter().position(|&p| p == level).expect("level is on the grid");
            let value = values[..=upto].iter().copied().fold(1.0, f64::max);
            let slack = grid_slack(&grid[..=upto]);
            GammaStar {
                value,
                slack,
                upper_bound: value + slack,
                grid: grid[..=upto].to_vec(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_wigner, zero_entry_minor, EnsembleSpec};

    fn random(n: usize, trial: u64) -> WignerMatrix {
        sample_wigner(&EnsembleSpec::gue(n, 42), trial).unwrap()
    }

    fn pt(e: f64, eta: f64) -> SpectralPoint {
        SpectralPoint::new(e, eta).unwrap()
    }

    #[test]
    fn spectral_point_rejects_real_axis() {
        assert!(SpectralPoint::new(0.0, 0.0).is_err());
        assert!(SpectralPoint::new(0.0, -1.0).is_err());
        let p = pt(0.0, 0.25);
        assert_eq!(p.psi(16), 0.5);
    }

    #[test]
    fn domain_membership() {
        let d = DomainS { gamma: 0.5, n: 64 };
        assert!(d.contains(&pt(0.0, 0.125)));
        assert!(!d.contains(&pt(0.0, 0.1)));
        assert!(!d.contains(&pt(65.0, 1.0)));
        assert!(!d.contains(&pt(0.0, 65.0)));
        assert!(d.contains(&pt(-64.0, 64.0)));
    }

    #[test]
    fn decompose_trivial_cases() {
        let d = decompose(&WignerMatrix::zeros(1)).unwrap();
        assert_eq!(d.eigenvalues(), &[0.0]);
        let d = decompose(&WignerMatrix::diagonal(&[-1.0, 1.0])).unwrap();
        assert_eq!(d.eigenvalues(), &[1.0, -1.0]);
    }

    #[test]
    fn decompose_reconstructs_random_matrix() {
        let h = random(64, 0);
        let d = decompose(&h).unwrap();
        assert!(d.reconstruction_error() <= 1e-12 * 64.0);
        assert!(d.certified());
        assert!(d.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let vals = eigenvalues(&h).unwrap();
        for (a, b) in vals.iter().zip(d.eigenvalues()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resolvent_closed_forms() {
        let g = resolvent(&decompose(&WignerMatrix::zeros(2)).unwrap(), pt(0.0, 1.0));
        for (k, l) in [(0, 0), (1, 1)] {
            assert!((g.get(k, l) - c64::new(0.0, 1.0)).norm() < 1e-15);
        }
        assert_eq!(g.get(0, 1).norm(), 0.0);
        let g = resolvent(&decompose(&WignerMatrix::diagonal(&[1.0, -1.0])).unwrap(), pt(0.0, 1.0));
        assert!((g.get(0, 0) - c64::new(0.5, 0.5)).norm() < 1e-15);
        assert!((g.get(1, 1) - c64::new(-0.5, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn resolvent_matches_dense_solve() {
        let h = random(32, 1);
        let p = pt(0.3, 0.2);
        let g = resolvent(&decompose(&h).unwrap(), p);
        let oracle = dense_resolvent(&h, p);
        assert!(max_abs_diff(g.matrix(), oracle.matrix()) <= 1e-10);
    }

    #[test]
    fn adjoint_and_trace_identities() {
        let h = random(48, 2);
        let d = decompose(&h).unwrap();
        let p = pt(-0.4, 0.3);
        let g = resolvent(&d, p);
        let z_bar = p.z().conj();
        let w: Vec<c64> = d.eigenvalues().iter().map(|&l| (c64::new(l, 0.0) - z_bar).inv()).collect();
        let g_conj = d.spectral_sum(&w);
        let adj = g.matrix().adjoint().to_owned();
        assert!(max_abs_diff(&adj, &g_conj) <= 1e-12);
        let st = stats(&g, p.m());
        assert!((st.s - d.normalized_trace(p.z())).norm() <= 1e-13);
        let trace: c64 = (0..48).map(|i| g.get(i, i)).sum::<c64>() / 48.0;
        assert!((st.s - trace).norm() <= 1e-14);
    }

    #[test]
    fn ward_identity() {
        let g = resolvent(&decompose(&WignerMatrix::zeros(3)).unwrap(), pt(0.0, 1.0));
        assert!(ward_residual(&g).max < 1e-15);
        let h = random(128, 3);
        let d = decompose(&h).unwrap();
        let small = ward_residual(&resolvent(&d, pt(0.1, 0.01))).max;
        let large = ward_residual(&resolvent(&d, pt(0.1, 0.5))).max;
        assert!(small <= 1e-7, "{small}");
        assert!(large <= 1e-7, "{large}");
    }

    #[test]
    fn resolvent_identity_for_minor() {
        let h = random(64, 4);
        let p = pt(0.1, 0.5);
        let pair = MinorPair::new(0, 2, 64).unwrap();
        let minor = zero_entry_minor(&h, pair).unwrap();
        let delta = ensemble::perturbation(&h, pair).unwrap();
        let g = dense_resolvent(&minor, p).into_matrix();
        let g_full = dense_resolvent(&h, p).into_matrix();
        // H = H^(02) + Delta
        assert!(resolvent_identity_residual(&g, &g_full, &delta.dense()).unwrap() <= 1e-10);
        // swapped roles: H^(02) = H - Delta
        assert!(resolvent_identity_residual(&g_full, &g, &delta.negated().dense()).unwrap() <= 1e-10);
        let zero = Mat::<c64>::zeros(64, 64);
        assert_eq!(resolvent_identity_residual(&g, &g, &zero).unwrap(), 0.0);
        let wrong = Mat::<c64>::zeros(3, 3);
        assert!(resolvent_identity_residual(&g, &g, &wrong).is_err());
    }

    #[test]
    fn expansion_remainder_orders() {
        let h = random(32, 5);
        let p = pt(0.0, 0.5);
        let pair = MinorPair::new(0, 4, 32).unwrap();
        let minor = zero_entry_minor(&h, pair).unwrap();
        let delta = ensemble::perturbation(&h, pair).unwrap().dense();
        let g = dense_resolvent(&minor, p).into_matrix();
        let gt = dense_resolvent(&h, p).into_matrix();
        for k in 1..=4 {
            let r = expansion_remainder(&g, &gt, &delta, k).unwrap();
            assert!(r <= 1e-9, "k = {k}: {r}");
        }
        let k1 = expansion_remainder(&g, &gt, &delta, 1).unwrap();
        assert!(k1 <= 1e-10);
        let zero = Mat::<c64>::zeros(32, 32);
        assert_eq!(expansion_remainder(&g, &g, &zero, 3).unwrap(), 0.0);
        assert!(matches!(expansion_remainder(&g, &gt, &delta, 0), Err(SpectralError::ZeroOrder)));
    }

    #[test]
    fn minor_update_matches_recomputation() {
        let h = random(64, 6);
        let p = pt(0.2, 0.3);
        let d = decompose(&h).unwrap();
        let g = resolvent(&d, p);
        let m0 = minor_resolvent(&h, &g, 0).unwrap();
        assert!(!m0.used_fallback);
        let delta0 = ensemble::perturbation(&h, MinorPair::new(0, 0, 64).unwrap()).unwrap();
        assert!(delta0.rank() <= 1);
        let m = minor_resolvent(&h, &g, 6).unwrap();
        let minor = zero_entry_minor(&h, MinorPair::new(0, 6, 64).unwrap()).unwrap();
        let oracle = resolvent(&decompose(&minor).unwrap(), p);
        assert!(max_abs_diff(&m.matrix, oracle.matrix()) <= 1e-9);
        let delta = ensemble::perturbation(&h, MinorPair::new(0, 6, 64).unwrap()).unwrap();
        assert!(resolvent_identity_residual(&m.matrix, g.matrix(), &delta.dense()).unwrap() <= 1e-10);
        for (k, l) in [(0, 0), (3, 6), (6, 0), (10, 11)] {
            let e = minor_entry(&h, &g, 6, k, l).unwrap().unwrap();
            assert!((e - m.matrix[(k, l)]).norm() < 1e-13);
        }
    }

    #[test]
    fn minor_of_zero_row_is_unchanged() {
        let h = WignerMatrix::diagonal(&[0.0, 0.5, -0.5]);
        let g = dense_resolvent(&h, pt(0.0, 1.0));
        let m = minor_resolvent(&h, &g, 2).unwrap();
        assert_eq!(&m.matrix, g.matrix());
    }

    #[test]
    fn row_identity() {
        let g = dense_resolvent(&WignerMatrix::zeros(4), pt(0.0, 1.0));
        assert!(row_identity_residual(&WignerMatrix::zeros(4), &g, 0) < 1e-15);
        let h = random(128, 7);
        let g = resolvent(&decompose(&h).unwrap(), pt(0.5, 0.1));
        for row in [0, 17, 127] {
            assert!(row_identity_residual(&h, &g, row) <= 1e-10);
        }
    }

    #[test]
    fn stats_of_zero_matrix() {
        let p = pt(0.0, 1.0);
        let g = dense_resolvent(&WignerMatrix::zeros(5), p);
        let st = stats(&g, p.m());
        assert!((st.s - c64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(st.gamma, 1.0);
        assert_eq!(st.offdiag_max, 0.0);
    }

    #[test]
    fn lipschitz_in_eta() {
        let h = random(64, 8);
        let d = decompose(&h).unwrap();
        for (a, b) in [(0.05, 0.06), (0.1, 0.3), (0.5, 2.0)] {
            let ga = resolvent(&d, pt(0.3, a));
            let gb = resolvent(&d, pt(0.3, b));
            let bound = (b - a) / (a * b) + 1e-10;
            assert!(max_abs_diff(ga.matrix(), gb.matrix()) <= bound);
        }
    }

    #[test]
    fn gamma_star_zero_matrix() {
        let d = decompose(&WignerMatrix::zeros(4)).unwrap();
        let gs = gamma_star(&d, 0.0, 0.1, 10.0).unwrap();
        assert!((gs.value - 10.0).abs() < 1e-12);
        assert!(gs.upper_bound >= gs.value);
        let single = gamma_star(&d, 0.0, 0.5, 0.5).unwrap();
        assert_eq!(single.grid, vec![0.5]);
        assert!((single.value - 2.0).abs() < 1e-12);
        assert!(gamma_star(&d, 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn gamma_star_single_point_and_monotone() {
        let h = random(48, 9);
        let d = decompose(&h).unwrap();
        let at = gamma(&resolvent(&d, pt(0.2, 0.3)));
        assert_eq!(gamma_star(&d, 0.2, 0.3, 0.3).unwrap().value, at);
        let etas = [0.02, 0.05, 0.1, 0.3, 0.7, 2.0];
        let profile = gamma_star_profile(&d, 0.2, &etas, 48.0).unwrap();
        for w in profile.windows(2) {
            assert!(w[0].value >= w[1].value);
        }
        let single: Vec<f64> = etas.iter().map(|&e| gamma_star(&d, 0.2, e, 48.0).unwrap().value).collect();
        for w in single.windows(2) {
            assert!(w[0] >= w[1], "{single:?}");
        }
        assert_eq!(profile[5].value, 1.0);
    }

    #[test]
    fn ks_distance_of_quantiles_is_small() {
        let n = 1000;
        let mut eigs = Vec::new();
        // invert the CDF by bisection at midpoints
        for k in 0..n {
            let target = (k as f64 + 0.5) / n as f64;
            let (mut lo, mut hi) = (-2.0, 2.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if semicircle::cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            eigs.push(lo);
        }
        let ks = ks_distance(&eigs);
        assert!((ks - 0.5 / n as f64).abs() < 1e-9, "{ks}");
        assert_eq!(ks_distance(&[5.0]), 1.0);
    }
}
