//! Squeezing-function bounds and the explicit maps that move a point `(r, 0)`
//! near the exposed boundary point to the centre of the ball.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::CVector;

/// Lower bounds are floored here so that powers of them stay finite; a value at
/// the floor carries no information.
pub const SQUEEZING_FLOOR: f64 = 1e-6;

const POLE_TOLERANCE: f64 = 1e-14;
const RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SqueezingError {
    #[error("regularity class must be 3 or 4, got {0}")]
    BadClass(u32),
    #[error("invalid radii: r1 = {r1}, r2 = {r2} (need 0 < r1 <= r2)")]
    BadRadii { r1: f64, r2: f64 },
    #[error("map pole: |1 − z₁r| = {0:e}")]
    PoleHit(f64),
    #[error("parameter out of range: {0}")]
    DomainError(String),
    #[error("negative radicand {0:e}: parameters are outside the regime of the image-ball estimate")]
    NegativeRadicand(f64),
}

/// Where a squeezing value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqueezingSource {
    /// `1 − C√|δ|` or `1 − C|δ|` with a caller-supplied constant.
    BoundaryBound,
    /// The ball is homogeneous, so its squeezing function is identically 1.
    ExactBall,
    /// Ratio of inscribed to circumscribed concentric ball radii.
    SandwichRatio,
}

impl SqueezingSource {
    pub fn tag(self) -> &'static str {
        match self {
            SqueezingSource::BoundaryBound => "boundary-bound",
            SqueezingSource::ExactBall => "exact-ball",
            SqueezingSource::SandwichRatio => "sandwich-ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingEstimate {
    pub point: Vec<(f64, f64)>,
    pub lower: f64,
    pub exact: Option<f64>,
    pub regularity: u32,
    pub constant: f64,
    pub source: SqueezingSource,
}

impl SqueezingEstimate {
    pub fn at_floor(&self) -> bool {
        self.lower <= SQUEEZING_FLOOR
    }

    /// `0 < lower ≤ exact ≤ 1` whenever the exact value is known.
    pub fn is_consistent(&self) -> bool {
        let upper = self.exact.unwrap_or(1.0);
        self.lower > 0.0 && self.lower <= upper + 1e-15 && upper <= 1.0 + 1e-15
    }
}

fn check_class(k: u32) -> Result<(), SqueezingError> {
    if k == 3 || k == 4 {
        Ok(())
    } else {
        Err(SqueezingError::BadClass(k))
    }
}

/// `max(ε, 1 − C√|δ|)` for `k = 3`, `max(ε, 1 − C|δ|)` for `k = 4`.
pub fn squeezing_lower_bound(delta: f64, constant: f64, k: u32) -> Result<f64, SqueezingError> {
    check_class(k)?;
    if delta > 0.0 {
        return Err(SqueezingError::DomainError(format!("δ must be ≤ 0, got {delta}")));
    }
    if !(constant > 0.0) {
        return Err(SqueezingError::DomainError(format!("C must be positive, got {constant}")));
    }
    let d = delta.abs();
    let deficit = if k == 3 { constant * d.sqrt() } else { constant * d };
    Ok((1.0 - deficit).max(SQUEEZING_FLOOR))
}

/// Squeezing function of a ball at any interior point.
pub fn squeezing_exact_ball(z: &CVector, r: f64) -> Result<f64, SqueezingError> {
    if !(z.norm() < r) {
        return Err(SqueezingError::DomainError(format!("‖z‖ = {} is not below r = {r}", z.norm())));
    }
    Ok(1.0)
}

/// `r1/r2` for concentric balls `B(z, r1) ⊂ Ω ⊂ B(z, r2)`.
pub fn squeezing_sandwich_ratio(r1: f64, r2: f64) -> Result<f64, SqueezingError> {
    if !(r1 > 0.0 && r1 <= r2) {
        return Err(SqueezingError::BadRadii { r1, r2 });
    }
    Ok(r1 / r2)
}

fn check_r(r: f64) -> Result<(), SqueezingError> {
    if !(0.0..1.0).contains(&r) {
        return Err(SqueezingError::DomainError(format!("r must lie in [0, 1), got {r}")));
    }
    Ok(())
}

/// `φ_r(z₁, z′) = ((z₁ − r)/(1 − z₁r), √(1 − r²)·z′/(1 − z₁r))`.
pub fn mobius_phi_r(r: f64, z: &CVector) -> Result<CVector, SqueezingError> {
    check_r(r)?;
    let denom = Complex64::new(1.0, 0.0) - z[0] * r;
    if denom.norm() < POLE_TOLERANCE {
        return Err(SqueezingError::PoleHit(denom.norm()));
    }
    let s = (1.0 - r * r).sqrt();
    Ok(CVector::from_fn(z.len(), |i, _| if i == 0 { (z[0] - r) / denom } else { z[i] * s / denom }))
}

/// Inverse of [`mobius_phi_r`]: `((w₁ + r)/(1 + w₁r), √(1 − r²)·w′/(1 + w₁r))`.
pub fn mobius_phi_r_inverse(r: f64, w: &CVector) -> Result<CVector, SqueezingError> {
    check_r(r)?;
    let denom = Complex64::new(1.0, 0.0) + w[0] * r;
    if denom.norm() < POLE_TOLERANCE {
        return Err(SqueezingError::PoleHit(denom.norm()));
    }
    let s = (1.0 - r * r).sqrt();
    Ok(CVector::from_fn(w.len(), |i, _| if i == 0 { (w[0] + r) / denom } else { w[i] * s / denom }))
}

/// `ψ(z) = (z₁, z′/√μ)`.
pub fn stretch_psi(mu: f64, z: &CVector) -> Result<CVector, SqueezingError> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(SqueezingError::DomainError(format!("μ must lie in (0, 1], got {mu}")));
    }
    let s = 1.0 / mu.sqrt();
    Ok(CVector::from_fn(z.len(), |i, _| if i == 0 { z[0] } else { z[i] * s }))
}

/// Derivative of `ψ∘φ_r` at `(r, 0)` applied to `ξ`:
/// `(ξ₁/(1 − r²), ξ′/(√μ·√(1 − r²)))`.
pub fn pushforward_lambda(r: f64, mu: f64, xi: &CVector) -> Result<CVector, SqueezingError> {
    check_r(r)?;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(SqueezingError::DomainError(format!("μ must lie in (0, 1], got {mu}")));
    }
    let t = 1.0 - r * r;
    // d/dz₁ (z₁ − r)/(1 − z₁r) = (1 − r²)/(1 − z₁r)²; the z′ block is √(1 − r²)/(1 − z₁r)
    // at z₁ = r, and ∂/∂z₁ of the z′ block vanishes on z′ = 0.
    let normal = 1.0 / t;
    let tangential = 1.0 / (mu.sqrt() * t.sqrt());
    Ok(CVector::from_fn(xi.len(), |i, _| if i == 0 { xi[0] * normal } else { xi[i] * tangential }))
}

/// The uncorrected form `(ξ₁/(1 − r²), ξ′/(√μ(1 − r²)))`, kept for comparison
/// with [`pushforward_lambda`]; the two differ on tangential vectors.
pub fn pushforward_lambda_as_printed(r: f64, mu: f64, xi: &CVector) -> Result<CVector, SqueezingError> {
    check_r(r)?;
    let t = 1.0 - r * r;
    Ok(CVector::from_fn(xi.len(), |i, _| if i == 0 { xi[0] / t } else { xi[i] / (mu.sqrt() * t) }))
}

/// `1 + C(1 − r)^{(k−2)/2} − (|w₁|² + ‖w′‖²/μ)`; non-negative exactly when
/// `w` satisfies the osculation inequality.
pub fn osculation_margin(w: &CVector, mu: f64, r: f64, constant: f64, k: u32) -> Result<f64, SqueezingError> {
    check_class(k)?;
    if !(mu > 0.0 && mu <= 1.0) || !(0.0..=1.0).contains(&r) {
        return Err(SqueezingError::DomainError(format!("need μ ∈ (0, 1] and r ∈ [0, 1], got μ = {mu}, r = {r}")));
    }
    let tangential: f64 = w.iter().skip(1).map(|c| c.norm_sqr()).sum();
    let lhs = w[0].norm_sqr() + tangential / mu;
    Ok(1.0 + constant * (1.0 - r).powf((f64::from(k) - 2.0) / 2.0) - lhs)
}

/// `η̃ = η` for `k = 4`, `η̃ = η/(1 − Cη)` for `k = 3`.
pub fn eta_tilde(eta: f64, constant: f64, k: u32) -> Result<f64, SqueezingError> {
    check_class(k)?;
    if !(eta > 0.0) {
        return Err(SqueezingError::DomainError(format!("η must be positive, got {eta}")));
    }
    match k {
        4 => Ok(eta),
        _ => {
            if constant * eta >= 1.0 {
                return Err(SqueezingError::DomainError(format!("need Cη < 1, got Cη = {}", constant * eta)));
            }
            Ok(eta / (1.0 - constant * eta))
        }
    }
}

/// Radius `√(1 − 2(1 − r)/η̃ − 4|1 − η/η̃|)` of the ball contained in the
/// transported model region. Valid for `1 − 2η < r ≤ 1`.
pub fn image_ball_radius(r: f64, eta: f64, eta_tilde: f64) -> Result<f64, SqueezingError> {
    if !(eta > 0.0 && eta_tilde > 0.0) {
        return Err(SqueezingError::DomainError(format!("need η, η̃ > 0, got {eta}, {eta_tilde}")));
    }
    if !(r > 1.0 - 2.0 * eta && r <= 1.0) {
        return Err(SqueezingError::DomainError(format!("need 1 − 2η < r ≤ 1, got r = {r}, η = {eta}")));
    }
    let radicand = 1.0 - 2.0 * (1.0 - r) / eta_tilde - 4.0 * (1.0 - eta / eta_tilde).abs();
    if radicand < -RADICAND_SLACK {
        return Err(SqueezingError::NegativeRadicand(radicand));
    }
    Ok(radicand.max(0.0).sqrt())
}
