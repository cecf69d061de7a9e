//! Semicircle law: density, Stieltjes transform, and the stability function.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::c64;

/// Default node count for [`stieltjes_quadrature`].
pub const DEFAULT_NODES: usize = 4096;

/// Default ceiling for the fitted stability constant.
pub const DEFAULT_STABILITY_CEILING: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SemicircleError {
    #[error("spectral parameter must satisfy Im z > 0, got {0}")]
    NotUpperHalfPlane(c64),
    #[error("quadrature needs at least 64 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("stability argument r = {0} outside [0, 1]")]
    ArgumentOutOfRange(f64),
    #[error("no records supplied")]
    Empty,
}

/// `rho(x) = sqrt((4 - x^2)_+) / (2 pi)`.
pub fn density(x: f64) -> f64 {
    (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI)
}

/// Distribution function of the semicircle law.
pub fn cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
    }
}

/// Stieltjes transform `m(z)`: the root of `m^2 + z m + 1 = 0` in the upper
/// half-plane.
///
/// The two roots multiply to one and exactly one lies in the upper half-plane
/// (it is the one with modulus below one), so the large root is formed first
/// and `m` is taken as its reciprocal, avoiding cancellation.
pub fn stieltjes(z: c64) -> Result<c64, SemicircleError> {
    if !(z.im > 0.0) {
        return Err(SemicircleError::NotUpperHalfPlane(z));
    }
    let w = (z * z - 4.0).sqrt();
    let a = (-z + w) * 0.5;
    let b = (-z - w) * 0.5;
    let big = if a.norm() >= b.norm() { a } else { b };
    Ok(big.inv())
}

/// Trapezoid quadrature of `int rho(x) / (x - z) dx`.
///
/// With `x = 2 sin(theta)` the integrand becomes `cos^2(theta) / (2 sin(theta) - z)`,
/// which is smooth and periodic over a full period, so the composite
/// trapezoid rule converges geometrically at a rate set by `Im z`.
pub fn stieltjes_quadrature(z: c64, nodes: usize) -> Result<c64, SemicircleError> {
    if !(z.im > 0.0) {
        return Err(SemicircleError::NotUpperHalfPlane(z));
    }
    if nodes < 64 {
        return Err(SemicircleError::TooFewNodes(nodes));
    }
    let h = 2.0 * PI / nodes as f64;
    let sum: c64 = (0..nodes)
        .map(|k| {
            let theta = -PI + h * k as f64;
            let c = theta.cos();
            c64::new(c * c, 0.0) / (c64::new(2.0 * theta.sin(), 0.0) - z)
        })
        .sum();
    Ok(sum * (h / PI))
}

/// `F_z(r) = min((1 + |z^2 - 4|^(-1/2)) r, sqrt(r))` for `r` in `[0, 1]`.
pub fn f_stability(z: c64, r: f64) -> Result<f64, SemicircleError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(SemicircleError::ArgumentOutOfRange(r));
    }
    Ok(stability_envelope(z, r))
}

/// The formula of [`f_stability`] without the domain check; used where the
/// bound argument can exceed one (small `N`, large `delta`).
pub fn stability_envelope(z: c64, r: f64) -> f64 {
    let gap = (z * z - 4.0).norm();
    let linear = if gap == 0.0 {
        f64::INFINITY
    } else {
        (1.0 + 1.0 / gap.sqrt()) * r
    };
    linear.min(r.sqrt())
}

/// `R = s^2 + s z + 1`.
pub fn quadratic_residual(s: c64, z: c64) -> c64 {
    s * s + s * z + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRecord {
    pub z: c64,
    pub s: c64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `|s - m(z)| / F_z(r)` per record.
    pub ratios: Vec<f64>,
    /// The empirical constant: largest ratio.
    pub constant: f64,
    pub ceiling: f64,
    pub pass: bool,
    /// Records violating `|R(z)| <= (1 + |z|) r`.
    pub residual_precondition_failures: usize,
    /// Whether `r` is nondecreasing in `eta` across records sharing an energy.
    pub r_nondecreasing_in_eta: bool,
}

/// Fits the constant in `|s - m| = O(F_z(r))` over a set of records.
pub fn stability_check(records: &[StabilityRecord], ceiling: f64) -> Result<StabilityReport, SemicircleError> {
    if records.is_empty() {
        return Err(SemicircleError::Empty);
    }
    let mut ratios = Vec::with_capacity(records.len());
    let mut failures = 0;
    for rec in records {
        let f = f_stability(rec.z, rec.r)?;
        let m = stieltjes(rec.z)?;
        let err = (rec.s - m).norm();
        if quadratic_residual(rec.s, rec.z).norm() > (1.0 + rec.z.norm()) * rec.r * (1.0 + 1e-12) {
            failures += 1;
        }
        ratios.push(if err == 0.0 { 0.0 } else { err / f });
    }
    let mut sorted: Vec<&StabilityRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    let r_nondecreasing_in_eta = sorted
        .windows(2)
        .all(|w| w[0].z.re != w[1].z.re || w[1].r >= w[0].r);
    let constant = ratios.iter().copied().fold(0.0, f64::max);
    Ok(StabilityReport {
        pass: constant <= ceiling,
        ratios,
        constant,
        ceiling,
        residual_precondition_failures: failures,
        r_nondecreasing_in_eta,
    })
}
