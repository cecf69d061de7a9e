//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export returns a JSON string; errors come back as `{"error": ...}`.

use locallaw_core::bootstrap;
use locallaw_core::ensemble::{self, EnsembleSpec, EntryKind, EntryLaw, Symmetry};
use locallaw_core::semicircle;
use locallaw_core::spectral::{self, SpectralPoint};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest matrix the page may request; keeps the tab responsive.
pub const MAX_N: usize = 512;

fn spec(n: usize, seed: u64, law: &str) -> Result<EnsembleSpec, String> {
    if !(2..=MAX_N).contains(&n) {
        return Err(format!("N must lie in [2, {MAX_N}]"));
    }
    let (kind, symmetry) = match law {
        "gue" => (EntryKind::ComplexGaussian, Symmetry::Hermitian),
        "goe" => (EntryKind::RealGaussian, Symmetry::RealSymmetric),
        "rademacher" => (EntryKind::RademacherPhase, Symmetry::RealSymmetric),
        other => return Err(format!("unknown law {other:?}")),
    };
    let mut s = EnsembleSpec::gue(n, seed);
    s.law = EntryLaw::default_for(kind, symmetry);
    s.symmetry = symmetry;
    Ok(s)
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}")),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[derive(Serialize)]
pub struct Spectrum {
    pub edges: Vec<f64>,
    /// Histogram normalized to a density.
    pub counts: Vec<f64>,
    /// Semicircle density at the bin centres.
    pub density: Vec<f64>,
    pub ks: f64,
    pub eigenvalues: Vec<f64>,
}

pub fn spectrum_data(n: usize, seed: u64, law: &str, bins: usize) -> Result<Spectrum, String> {
    let s = spec(n, seed, law)?;
    let h = ensemble::sample_wigner(&s, 0).map_err(|e| e.to_string())?;
    let eigs = spectral::eigenvalues(&h).map_err(|e| e.to_string())?;
    let bins = bins.clamp(4, 200);
    let (lo, hi) = (-2.5, 2.5);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &x in &eigs {
        let b = ((x - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1.0 / (n as f64 * width);
        }
    }
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let density = (0..bins).map(|k| semicircle::density(lo + (k as f64 + 0.5) * width)).collect();
    Ok(Spectrum {
        edges,
        counts,
        density,
        ks: spectral::ks_distance(&eigs),
        eigenvalues: eigs,
    })
}

#[derive(Serialize)]
pub struct ProfilePoint {
    pub eta: f64,
    pub diag_err: f64,
    pub offdiag_max: f64,
    pub trace_err: f64,
    pub psi: f64,
}

/// Resolvent errors at energy `E` along a log grid of `eta` from `1/N` to 1.
pub fn resolvent_profile_data(n: usize, seed: u64, law: &str, energy: f64, points: usize) -> Result<Vec<ProfilePoint>, String> {
    let s = spec(n, seed, law)?;
    let h = ensemble::sample_wigner(&s, 0).map_err(|e| e.to_string())?;
    let dec = spectral::decompose(&h).map_err(|e| e.to_string())?;
    let points = points.clamp(2, 60);
    let lo = (1.0 / n as f64).ln();
    (0..points)
        .map(|j| {
            let eta = (lo * (1.0 - j as f64 / (points - 1) as f64)).exp();
            let p = SpectralPoint::new(energy, eta).map_err(|e| e.to_string())?;
            let m = p.m();
            let st = spectral::stats(&spectral::resolvent(&dec, p), m);
            Ok(ProfilePoint {
                eta,
                diag_err: st.diag_err_max,
                offdiag_max: st.offdiag_max,
                trace_err: (st.s - m).norm(),
                psi: p.psi(n),
            })
        })
        .collect()
}

#[derive(Serialize)]
pub struct LadderLevel {
    pub k: usize,
    pub eta: f64,
    pub gamma_star: f64,
    pub diag_err: f64,
    pub offdiag_max: f64,
    pub diag_bound: f64,
    pub offdiag_bound: f64,
}

/// The multi-scale ladder for a single matrix.
pub fn bootstrap_ladder_data(n: usize, seed: u64, law: &str, gamma: f64, delta: f64) -> Result<Vec<LadderLevel>, String> {
    let s = spec(n, seed, law)?;
    let ladder = bootstrap::build_ladder(n, 0.0, gamma, delta).map_err(|e| e.to_string())?;
    let trace = bootstrap::run_bootstrap(&s, &ladder, 1, bootstrap::DEFAULT_CAP).map_err(|e| e.to_string())?;
    Ok(trace
        .levels
        .iter()
        .zip(&trace.samples)
        .map(|(l, s)| LadderLevel {
            k: l.bounds.k,
            eta: l.bounds.eta,
            gamma_star: s.gamma_star,
            diag_err: s.diag_err,
            offdiag_max: s.offdiag_max,
            diag_bound: l.bounds.diag,
            offdiag_bound: l.bounds.offdiag,
        })
        .collect())
}

#[wasm_bindgen]
pub fn spectrum(n: usize, seed: u64, law: &str, bins: usize) -> String {
    to_json(spectrum_data(n, seed, law, bins))
}

#[wasm_bindgen]
pub fn resolvent_profile(n: usize, seed: u64, law: &str, energy: f64, points: usize) -> String {
    to_json(resolvent_profile_data(n, seed, law, energy, points))
}

#[wasm_bindgen]
pub fn bootstrap_ladder(n: usize, seed: u64, law: &str, gamma: f64, delta: f64) -> String {
    to_json(bootstrap_ladder_data(n, seed, law, gamma, delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_is_a_density() {
        let s = spectrum_data(200, 3, "gue", 40).unwrap();
        let width = s.edges[1] - s.edges[0];
        let mass: f64 = s.counts.iter().sum::<f64>() * width;
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(s.ks < 0.1);
    }

    #[test]
    fn profile_and_ladder_shapes() {
        let p = resolvent_profile_data(64, 1, "goe", 0.0, 10).unwrap();
        assert_eq!(p.len(), 10);
        assert!((p[9].eta - 1.0).abs() < 1e-12);
        let l = bootstrap_ladder_data(64, 1, "rademacher", 0.5, 0.15).unwrap();
        assert_eq!(l.len(), bootstrap::ladder_depth(0.5, 0.15) + 1);
    }

    #[test]
    fn errors_are_json() {
        assert!(spectrum(1, 0, "gue", 10).contains("error"));
        assert!(spectrum(10, 0, "cauchy", 10).contains("error"));
    }
}
