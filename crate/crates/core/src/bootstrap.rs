//! The multi-scale ladder and the end-to-end local-law sweeps.
//!
//! Bounds are carried from `eta_k = N^(1 - k delta)` to `eta_(k+1)`, starting at
//! `eta_0 = N` where every resolvent entry is at most `1/N`. Ladder levels are
//! stored as exponents and materialized on demand.

use serde::Serialize;
use thiserror::Error;

use crate::c64;
use crate::domination::Proportion;
use crate::ensemble::{self, EnsembleError, EnsembleSpec};
use crate::par;
use crate::semicircle;
use crate::spectral::{self, EtaRule, SpectralDecomposition, SpectralError, SpectralPoint};
use crate::summary::{median, quantile};

/// Default cap standing in for `Gamma* = O(1)`.
pub const DEFAULT_CAP: f64 = 3.0;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("invalid ladder parameters: {0}")]
    Ladder(String),
    #[error("propagation factor M = {0} must exceed 1")]
    Factor(f64),
    #[error("need at least one trial")]
    NoTrials,
    #[error("N = {n}, trial {trial}: {source}")]
    Trial {
        n: usize,
        trial: u64,
        #[source]
        source: Box<BootstrapError>,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

impl BootstrapError {
    fn at(self, n: usize, trial: u64) -> Self {
        BootstrapError::Trial {
            n,
            trial,
            source: Box::new(self),
        }
    }
}

/// `K = max{k : 1 - k delta >= -1 + gamma} = floor((2 - gamma)/delta)`.
pub fn ladder_depth(gamma: f64, delta: f64) -> usize {
    ((2.0 - gamma) / delta + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleLadder {
    pub n: usize,
    pub energy: f64,
    pub gamma: f64,
    pub delta: f64,
    pub depth: usize,
}

impl ScaleLadder {
    /// `log_N eta_k`.
    pub fn exponent(&self, k: usize) -> f64 {
        // clamp rounding below the domain floor at the last level
        (1.0 - k as f64 * self.delta).max(-1.0 + self.gamma)
    }

    pub fn eta(&self, k: usize) -> f64 {
        (self.n as f64).powf(self.exponent(k))
    }

    pub fn point(&self, k: usize) -> SpectralPoint {
        SpectralPoint::new(self.energy, self.eta(k)).expect("ladder scales are positive")
    }

    pub fn etas(&self) -> Vec<f64> {
        (0..=self.depth).map(|k| self.eta(k)).collect()
    }

    /// Whether `K <= 1/delta`, the second depth bound quoted for the ladder.
    /// It is weaker than `K <= (2 - gamma)/delta` only when `gamma >= 1`.
    pub fn within_inverse_delta(&self) -> bool {
        self.depth as f64 <= 1.0 / self.delta
    }
}

pub fn build_ladder(n: usize, energy: f64, gamma: f64, delta: f64) -> Result<ScaleLadder, BootstrapError> {
    if n < 2 {
        return Err(BootstrapError::Ladder(format!("N = {n} < 2")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(BootstrapError::Ladder(format!("gamma = {gamma} outside (0, 1]")));
    }
    if !(delta > 0.0 && delta < gamma / 3.0) {
        return Err(BootstrapError::Ladder(format!(
            "delta = {delta} outside (0, gamma/3) = (0, {})",
            gamma / 3.0
        )));
    }
    if !energy.is_finite() {
        return Err(BootstrapError::Ladder(format!("energy = {energy}")));
    }
    Ok(ScaleLadder {
        n,
        energy,
        gamma,
        delta,
        depth: ladder_depth(gamma, delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagationRecord {
    pub eta: f64,
    pub factor: f64,
    /// `Gamma(E + i eta/M)`.
    pub lower: f64,
    /// `M Gamma(E + i eta)`.
    pub upper: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Checks `Gamma(E + i eta/M) <= M Gamma(E + i eta)` on one decomposition.
pub fn propagation_check(dec: &SpectralDecomposition, energy: f64, eta: f64, factor: f64) -> Result<PropagationRecord, BootstrapError> {
    if !(factor > 1.0) {
        return Err(BootstrapError::Factor(factor));
    }
    let fine = SpectralPoint::new(energy, eta / factor)?;
    let coarse = SpectralPoint::new(energy, eta)?;
    let lower = spectral::gamma(&spectral::resolvent(dec, fine));
    let upper = factor * spectral::gamma(&spectral::resolvent(dec, coarse));
    Ok(PropagationRecord {
        eta,
        factor,
        lower,
        upper,
        ratio: lower / upper,
        pass: lower <= upper + 1e-10 * upper.max(1.0),
    })
}

/// `F_z(r)`, continued past `r = 1` by the same formula.
fn envelope(z: c64, r: f64) -> (f64, bool) {
    (semicircle::stability_envelope(z, r), r > 1.0)
}

/// Bounds checked at one ladder level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelBounds {
    pub k: usize,
    pub eta: f64,
    /// `F_z(N^(5 delta)/sqrt(N eta)) N^delta`.
    pub diag: f64,
    /// `F_z(N^(5 delta/2)/sqrt(N eta)) N^delta`.
    pub diag_alt: f64,
    /// `N^(5 delta/2)/sqrt(N eta)`.
    pub offdiag: f64,
    /// `N^delta * cap`.
    pub step: f64,
    /// Whether `F_z` was evaluated beyond `r = 1`.
    pub envelope_extended: bool,
}

impl LevelBounds {
    fn new(ladder: &ScaleLadder, k: usize, cap: f64) -> Self {
        let n = ladder.n as f64;
        let eta = ladder.eta(k);
        let z = ladder.point(k).z();
        let base = 1.0 / (n * eta).sqrt();
        let nd = n.powf(ladder.delta);
        let (f_main, ext_main) = envelope(z, n.powf(5.0 * ladder.delta) * base);
        let (f_alt, ext_alt) = envelope(z, n.powf(2.5 * ladder.delta) * base);
        Self {
            k,
            eta,
            diag: f_main * nd,
            diag_alt: f_alt * nd,
            offdiag: n.powf(2.5 * ladder.delta) * base,
            step: nd * cap,
            envelope_extended: ext_main || ext_alt,
        }
    }
}

/// One trial at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSample {
    pub trial: u64,
    pub k: usize,
    pub eta: f64,
    pub gamma_star: f64,
    /// Grid slack of the `Gamma*` estimate.
    pub gamma_star_slack: f64,
    pub diag_err: f64,
    pub offdiag_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub bounds: LevelBounds,
    pub gamma_star_median: f64,
    pub gamma_star_p95: f64,
    pub diag_median: f64,
    pub offdiag_median: f64,
    /// `Gamma*(z_k) > cap`.
    pub cap_exceed: Proportion,
    /// `Gamma*(z_k) > N^delta cap` among trials whose previous level was within the cap.
    pub step_exceed: Option<Proportion>,
    pub diag_exceed: Proportion,
    pub diag_alt_exceed: Proportion,
    pub offdiag_exceed: Proportion,
}

impl LevelSummary {
    /// Largest of the three conclusion frequencies at this level.
    pub fn worst_conclusion(&self) -> f64 {
        self.diag_exceed.p_hat.max(self.offdiag_exceed.p_hat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapTrace {
    pub ladder: ScaleLadder,
    pub cap: f64,
    pub trials: usize,
    pub levels: Vec<LevelSummary>,
    pub samples: Vec<LevelSample>,
    /// Median off-diagonal maximum is nondecreasing as `eta` decreases.
    pub offdiag_monotone: bool,
}

impl BootstrapTrace {
    /// Every level's diagonal and off-diagonal exceedance at most `limit`.
    pub fn conclusions_within(&self, limit: f64) -> bool {
        self.levels.iter().all(|l| l.worst_conclusion() <= limit)
    }
}

fn level_samples(spec: &EnsembleSpec, ladder: &ScaleLadder, trial: u64) -> Result<Vec<LevelSample>, BootstrapError> {
    let h = ensemble::sample_wigner(spec, trial)?;
    let dec = spectral::decompose(&h)?;
    let etas = ladder.etas();
    let stars = spectral::gamma_star_profile(&dec, ladder.energy, &etas, etas[0])?;
    Ok((0..=ladder.depth)
        .map(|k| {
            let point = ladder.point(k);
            let st = spectral::stats(&spectral::resolvent(&dec, point), point.m());
            LevelSample {
                trial,
                k,
                eta: etas[k],
                gamma_star: stars[k].value,
                gamma_star_slack: stars[k].slack,
                diag_err: st.diag_err_max,
                offdiag_max: st.offdiag_max,
            }
        })
        .collect())
}

fn proportion(flags: impl Iterator<Item = bool>) -> Proportion {
    let (mut hits, mut total) = (0, 0);
    for f in flags {
        total += 1;
        hits += usize::from(f);
    }
    Proportion::from_counts(hits, total)
}

pub fn run_bootstrap(spec: &EnsembleSpec, ladder: &ScaleLadder, trials: usize, cap: f64) -> Result<BootstrapTrace, BootstrapError> {
    if trials == 0 {
        return Err(BootstrapError::NoTrials);
    }
    let spec = spec.with_n(ladder.n);
    spec.validate()?;
    let per_trial = par::map_indexed(trials, |t| level_samples(&spec, ladder, t as u64).map_err(|e| e.at(ladder.n, t as u64)));
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut levels = Vec::with_capacity(ladder.depth + 1);
    for k in 0..=ladder.depth {
        let bounds = LevelBounds::new(ladder, k, cap);
        let at: Vec<&LevelSample> = per_trial.iter().map(|s| &s[k]).collect();
        let stars: Vec<f64> = at.iter().map(|s| s.gamma_star).collect();
        let step_exceed = (k > 0).then(|| {
            proportion(
                per_trial
                    .iter()
                    .filter(|s| s[k - 1].gamma_star <= cap)
                    .map(|s| s[k].gamma_star > bounds.step),
            )
        });
        levels.push(LevelSummary {
            bounds,
            gamma_star_median: median(&stars),
            gamma_star_p95: quantile(&stars, 0.95),
            diag_median: median(&at.iter().map(|s| s.diag_err).collect::<Vec<_>>()),
            offdiag_median: median(&at.iter().map(|s| s.offdiag_max).collect::<Vec<_>>()),
            cap_exceed: proportion(stars.iter().map(|&g| g > cap)),
            step_exceed,
            diag_exceed: proportion(at.iter().map(|s| s.diag_err > bounds.diag)),
            diag_alt_exceed: proportion(at.iter().map(|s| s.diag_err > bounds.diag_alt)),
            offdiag_exceed: proportion(at.iter().map(|s| s.offdiag_max > bounds.offdiag)),
        });
    }
    let offdiag_monotone = levels.windows(2).all(|w| w[1].offdiag_median >= w[0].offdiag_median);
    Ok(BootstrapTrace {
        ladder: *ladder,
        cap,
        trials,
        levels,
        samples: per_trial.into_iter().flatten().collect(),
        offdiag_monotone,
    })
}

/// One matrix at one spectral point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSample {
    pub n: usize,
    pub trial: u64,
    pub energy: f64,
    pub eta: f64,
    /// `max_i |G_ii - m|`.
    pub diag_err: f64,
    /// `max_(i != j) |G_ij|`.
    pub offdiag_max: f64,
    pub s: c64,
    /// `|1 + z s + s^2|`.
    pub residual: f64,
    /// `|s - m|`.
    pub trace_err: f64,
}

impl SweepSample {
    pub fn point(&self) -> SpectralPoint {
        SpectralPoint::new(self.energy, self.eta).expect("sampled at a valid point")
    }

    /// The stability record with the tightest admissible `r = |R|/(1 + |z|)`.
    pub fn stability_record(&self) -> semicircle::StabilityRecord {
        let z = self.point().z();
        semicircle::StabilityRecord {
            z,
            s: self.s,
            r: self.residual / (1.0 + z.norm()),
        }
    }
}

/// Medians and 95th percentiles at one `(N, E)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub n: usize,
    pub energy: f64,
    pub eta: f64,
    pub psi: f64,
    /// `F_z(psi)`.
    pub f_psi: f64,
    pub diag_median: f64,
    pub diag_p95: f64,
    pub offdiag_median: f64,
    pub offdiag_p95: f64,
    pub residual_median: f64,
    pub residual_p95: f64,
    pub trace_err_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalLawTable {
    pub cells: Vec<SweepCell>,
    pub samples: Vec<SweepSample>,
}

impl LocalLawTable {
    /// Cells at `energy`, in increasing `N`.
    pub fn at_energy(&self, energy: f64) -> Vec<&SweepCell> {
        let mut cells: Vec<&SweepCell> = self.cells.iter().filter(|c| c.energy == energy).collect();
        cells.sort_by_key(|c| c.n);
        cells
    }
}

fn sweep_trial(spec: &EnsembleSpec, energies: &[f64], eta: f64, trial: u64) -> Result<Vec<SweepSample>, BootstrapError> {
    let h = ensemble::sample_wigner(spec, trial)?;
    let points = energies
        .iter()
        .map(|&e| SpectralPoint::new(e, eta))
        .collect::<Result<Vec<_>, _>>()?;
    // one LU solve beats a decomposition until a matrix is reused
    let resolvents: Vec<spectral::Resolvent> = if points.len() == 1 {
        vec![spectral::dense_resolvent(&h, points[0])]
    } else {
        let dec = spectral::decompose(&h)?;
        points.iter().map(|&p| spectral::resolvent(&dec, p)).collect()
    };
    Ok(points
        .iter()
        .zip(&resolvents)
        .map(|(p, g)| {
            let m = p.m();
            let st = spectral::stats(g, m);
            SweepSample {
                n: spec.n,
                trial,
                energy: p.energy(),
                eta,
                diag_err: st.diag_err_max,
                offdiag_max: st.offdiag_max,
                s: st.s,
                residual: semicircle::quadratic_residual(st.s, p.z()).norm(),
                trace_err: (st.s - m).norm(),
            }
        })
        .collect())
}

/// Resolvent error tables over an `N`-ladder and an energy grid.
pub fn local_law_sweep(spec: &EnsembleSpec, ns: &[usize], energies: &[f64], eta_rule: EtaRule, trials: usize) -> Result<LocalLawTable, BootstrapError> {
    if trials == 0 {
        return Err(BootstrapError::NoTrials);
    }
    let mut cells = Vec::new();
    let mut samples = Vec::new();
    for &n in ns {
        let spec = spec.with_n(n);
        spec.validate()?;
        let eta = eta_rule.eta(n);
        let per_trial = par::map_indexed(trials, |t| sweep_trial(&spec, energies, eta, t as u64).map_err(|e| e.at(n, t as u64)));
        let per_trial = per_trial.into_iter().collect::<Result<Vec<_>, _>>()?;
        for (j, &energy) in energies.iter().enumerate() {
            let at: Vec<&SweepSample> = per_trial.iter().map(|s| &s[j]).collect();
            let col = |f: fn(&SweepSample) -> f64| at.iter().map(|s| f(s)).collect::<Vec<f64>>();
            let point = SpectralPoint::new(energy, eta)?;
            let psi = point.psi(n);
            let (diag, off, res) = (col(|s| s.diag_err), col(|s| s.offdiag_max), col(|s| s.residual));
            cells.push(SweepCell {
                n,
                energy,
                eta,
                psi,
                f_psi: semicircle::stability_envelope(point.z(), psi),
                diag_median: median(&diag),
                diag_p95: quantile(&diag, 0.95),
                offdiag_median: median(&off),
                offdiag_p95: quantile(&off, 0.95),
                residual_median: median(&res),
                residual_p95: quantile(&res, 0.95),
                trace_err_median: median(&col(|s| s.trace_err)),
            });
        }
        samples.extend(per_trial.into_iter().flatten());
    }
    Ok(LocalLawTable { cells, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalLawCell {
    pub n: usize,
    pub ks_median: f64,
    pub ks_p95: f64,
}

/// Kolmogorov–Smirnov distance to the semicircle along an `N`-ladder.
pub fn global_law_sweep(spec: &EnsembleSpec, ns: &[usize], trials: usize) -> Result<Vec<GlobalLawCell>, BootstrapError> {
    if trials == 0 {
        return Err(BootstrapError::NoTrials);
    }
    ns.iter()
        .map(|&n| {
            let spec = spec.with_n(n);
            spec.validate()?;
            let ks = par::map_indexed(trials, |t| -> Result<f64, BootstrapError> {
                let h = ensemble::sample_wigner(&spec, t as u64)?;
                Ok(spectral::ks_distance(&spectral::eigenvalues(&h)?))
            });
            let ks = ks.into_iter().collect::<Result<Vec<_>, _>>()?;
            Ok(GlobalLawCell {
                n,
                ks_median: median(&ks),
                ks_p95: quantile(&ks, 0.95),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::WignerMatrix;

    #[test]
    fn depth_arithmetic() {
        // gamma = 0.5, delta = 0.3 sits outside delta < gamma/3 but the depth
        // formula still applies, and exceeds 1/delta
        assert_eq!(ladder_depth(0.5, 0.3), 5);
        assert!(ladder_depth(0.5, 0.3) as f64 > 1.0 / 0.3);
        assert!(build_ladder(64, 0.0, 0.5, 0.3).is_err());
        assert_eq!(ladder_depth(0.5, 0.15), 10);
        assert_eq!(ladder_depth(0.5, 0.1), 15);
    }

    #[test]
    fn ladder_levels() {
        let l = build_ladder(1024, 0.0, 0.5, 0.15).unwrap();
        assert_eq!(l.eta(0), 1024.0);
        assert!(l.eta(l.depth) >= 0.03125);
        assert!(l.etas().windows(2).all(|w| w[1] < w[0]));
        assert!(!l.within_inverse_delta());
        for k in 0..l.depth {
            let ratio = l.eta(k) / l.eta(k + 1);
            assert!((ratio / 1024f64.powf(0.15) - 1.0).abs() < 1e-12);
        }
        assert!(build_ladder(1, 0.0, 0.5, 0.1).is_err());
        assert!(build_ladder(64, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn propagation_on_zero_matrix() {
        let d = spectral::decompose(&WignerMatrix::zeros(4)).unwrap();
        let r = propagation_check(&d, 0.0, 1.0, 4.0).unwrap();
        assert!((r.lower - 4.0).abs() < 1e-12 && (r.upper - 4.0).abs() < 1e-12);
        assert!(r.pass);
        assert!(matches!(propagation_check(&d, 0.0, 1.0, 1.0), Err(BootstrapError::Factor(_))));
        assert!(propagation_check(&d, 0.0, 1.0, 1.01).unwrap().pass);
    }

    #[test]
    fn propagation_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let h = ensemble::sample_wigner(&EnsembleSpec::gue(64, 3), 0).unwrap();
        let d = spectral::decompose(&h).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let eta = 10f64.powf(rng.random_range(-2.0..1.0));
            let m = 1.0 + 10f64.powf(rng.random_range(-2.0..1.5));
            let e = rng.random_range(-2.5..2.5);
            assert!(propagation_check(&d, e, eta, m).unwrap().pass);
        }
    }

    #[test]
    fn level_zero_is_trivial() {
        let l = build_ladder(32, 0.0, 0.5, 0.15).unwrap();
        let t = run_bootstrap(&EnsembleSpec::gue(32, 1), &l, 5, DEFAULT_CAP).unwrap();
        assert_eq!(t.levels.len(), l.depth + 1);
        assert_eq!(t.levels[0].cap_exceed.hits, 0);
        assert_eq!(t.levels[0].gamma_star_median, 1.0);
        assert!(t.levels[0].step_exceed.is_none());
        assert!(t.levels[1].step_exceed.is_some());
    }

    #[test]
    fn large_eta_sanity() {
        let spec = EnsembleSpec::gue(64, 2);
        let t = local_law_sweep(&spec, &[64], &[0.0], EtaRule::Power(1.0), 5).unwrap();
        for s in &t.samples {
            let h = ensemble::sample_wigner(&spec, s.trial).unwrap();
            let norm = spectral::eigenvalues(&h).unwrap().iter().fold(0.0f64, |a, l| a.max(l.abs()));
            if norm <= 3.0 {
                assert!(s.diag_err <= 2.0 / 64.0, "{}", s.diag_err);
            }
        }
    }

    #[test]
    fn sweep_paths_agree() {
        let spec = EnsembleSpec::gue(48, 4);
        let single = local_law_sweep(&spec, &[48], &[0.5], EtaRule::Fixed(0.2), 3).unwrap();
        let multi = local_law_sweep(&spec, &[48], &[0.5, -0.5], EtaRule::Fixed(0.2), 3).unwrap();
        let a = &single.cells[0];
        let b = multi.at_energy(0.5)[0];
        assert!((a.diag_median - b.diag_median).abs() < 1e-10);
        assert!((a.offdiag_median - b.offdiag_median).abs() < 1e-10);
    }

    #[test]
    fn global_law_small() {
        let cells = global_law_sweep(&EnsembleSpec::gue(8, 1), &[32, 128], 4).unwrap();
        assert!(cells[1].ks_median < cells[0].ks_median);
    }
}
