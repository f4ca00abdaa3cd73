//! Model domains given by defining functions.
//!
//! Every domain carries analytic first and second complex derivatives of its
//! defining function `δ`, so Levi-form values are never limited by numerical
//! differentiation. Conventions used throughout:
//!
//! - `gradient(z)` returns the holomorphic gradient `(∂δ/∂z_1, …, ∂δ/∂z_n)`.
//! - The real gradient of `δ`, written as a vector of ℂⁿ, is `2·conj(∂δ)`.
//! - `hessian(z)[(i, j)] = ∂²δ/∂z_i∂z̄_j`, and the Levi form of `ξ` is
//!   `Σ_{i,j} H_ij ξ_i ξ̄_j`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::{CMatrix, CVector};

/// Collar width used unless a domain overrides it.
pub const DEFAULT_COLLAR_WIDTH: f64 = 0.3;

/// Residual required of a projected boundary foot.
pub const PROJECTION_RESIDUAL: f64 = 1e-12;

const MAX_PROJECTION_ITERATIONS: usize = 50;
const BOUNDARY_TOLERANCE: f64 = 1e-8;
const TANGENCY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("invalid domain parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: domain has n = {expected}, got a vector of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is outside the boundary collar (|δ| = {delta_abs}, collar width {collar})")]
    OutsideCollar { delta_abs: f64, collar: f64 },
    #[error("point is not inside the domain (δ = {0})")]
    NotInterior(f64),
    #[error("boundary projection did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("point is not on the boundary (|δ| = {0:e})")]
    OffBoundary(f64),
    #[error("vector is not complex tangential (|<ξ, ν>| = {inner:e}, ‖ξ‖ = {norm:e})")]
    NotTangential { inner: f64, norm: f64 },
    #[error("Levi form is not positive at a sampled boundary point (value {0:e})")]
    NotPseudoconvex(f64),
}

/// The built-in model domains.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    /// `‖z‖ < radius`, with `δ = ‖z‖ − radius`.
    Ball { radius: f64 },
    /// `Σ a_i |z_i|² < 1`, with `δ = (Σ a_i|z_i|² − 1) / ‖∇(Σ a_i|z_i|²)‖`.
    Ellipsoid { weights: Vec<f64> },
    /// `δ = ‖z‖ − 1 + ε‖z − e₁‖³`; third derivatives of `δ` are not continuous at `e₁`.
    PerturbedBall { epsilon: f64 },
}

/// A bounded domain `{δ < 0}` in ℂⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    dimension: usize,
    kind: DomainKind,
    collar_width: f64,
    normalized_on_boundary: bool,
    /// Real intervals `(re z_1, im z_1, re z_2, …)` containing the domain.
    bounding_box: Vec<(f64, f64)>,
}

impl DomainSpec {
    pub fn ball(dimension: usize, radius: f64) -> Result<Self, DomainError> {
        check_dimension(dimension)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(DomainError::InvalidParameter(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self {
            dimension,
            kind: DomainKind::Ball { radius },
            collar_width: DEFAULT_COLLAR_WIDTH,
            normalized_on_boundary: true,
            bounding_box: vec![(-radius, radius); 2 * dimension],
        })
    }

    /// The disc of the given radius in ℂ¹.
    pub fn disc(radius: f64) -> Result<Self, DomainError> {
        Self::ball(1, radius)
    }

    pub fn ellipsoid(weights: &[f64]) -> Result<Self, DomainError> {
        check_dimension(weights.len())?;
        if weights.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(DomainError::InvalidParameter(format!(
                "ellipsoid weights must be positive, got {weights:?}"
            )));
        }
        let bounding_box = weights
            .iter()
            .flat_map(|&a| {
                let h = 1.0 / a.sqrt();
                [(-h, h), (-h, h)]
            })
            .collect();
        // |δ| grows faster than the Euclidean distance along inner normals of an
        // ellipsoid, so the collar is wider than the default.
        Ok(Self {
            dimension: weights.len(),
            kind: DomainKind::Ellipsoid { weights: weights.to_vec() },
            collar_width: 0.4,
            normalized_on_boundary: true,
            bounding_box,
        })
    }

    /// Unit ball perturbed by `ε‖z − e₁‖³`. Requires `0 ≤ ε ≤ 1/16`, which keeps
    /// the domain inside the unit ball and the collar strictly pseudoconvex.
    pub fn perturbed_ball(dimension: usize, epsilon: f64) -> Result<Self, DomainError> {
        check_dimension(dimension)?;
        if !(0.0..=1.0 / 16.0).contains(&epsilon) {
            return Err(DomainError::InvalidParameter(format!(
                "perturbation epsilon must lie in [0, 1/16], got {epsilon}"
            )));
        }
        let domain = Self {
            dimension,
            kind: DomainKind::PerturbedBall { epsilon },
            collar_width: DEFAULT_COLLAR_WIDTH,
            normalized_on_boundary: false,
            bounding_box: vec![(-1.0, 1.0); 2 * dimension],
        };
        domain.check_pseudoconvex(256)?;
        Ok(domain)
    }

    pub fn with_collar_width(mut self, width: f64) -> Result<Self, DomainError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(DomainError::InvalidParameter(format!("collar width must be positive, got {width}")));
        }
        self.collar_width = width;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    pub fn normalized_on_boundary(&self) -> bool {
        self.normalized_on_boundary
    }

    pub fn bounding_box(&self) -> &[(f64, f64)] {
        &self.bounding_box
    }

    pub fn box_volume(&self) -> f64 {
        self.bounding_box.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Short stable identifier, used in reports.
    pub fn id(&self) -> String {
        match &self.kind {
            DomainKind::Ball { radius } => format!("ball(n={};r={})", self.dimension, radius),
            DomainKind::Ellipsoid { weights } => {
                let w: Vec<String> = weights.iter().map(|a| a.to_string()).collect();
                format!("ellipsoid(a={})", w.join(";"))
            }
            DomainKind::PerturbedBall { epsilon } => {
                format!("perturbed-ball(n={};eps={})", self.dimension, epsilon)
            }
        }
    }

    pub fn reference_point(&self) -> CVector {
        CVector::zeros(self.dimension)
    }

    /// Boundary point on the positive `Re z₁` axis, where the inner normal is `−e₁`.
    pub fn exposed_point(&self) -> CVector {
        let x = match &self.kind {
            DomainKind::Ball { radius } => *radius,
            DomainKind::Ellipsoid { weights } => 1.0 / weights[0].sqrt(),
            DomainKind::PerturbedBall { .. } => 1.0,
        };
        let mut p = CVector::zeros(self.dimension);
        p[0] = Complex64::new(x, 0.0);
        p
    }

    /// Point on the inner normal through [`exposed_point`](Self::exposed_point)
    /// where `|δ| = d`.
    pub fn normal_approach_point(&self, d: f64) -> Result<CVector, DomainError> {
        if !(d > 0.0 && d <= self.collar_width) {
            return Err(DomainError::OutsideCollar { delta_abs: d, collar: self.collar_width });
        }
        let p = self.exposed_point();
        let at = |x: f64| {
            let mut z = CVector::zeros(self.dimension);
            z[0] = Complex64::new(x, 0.0);
            z
        };
        let (mut lo, mut hi) = (0.0, p[0].re);
        if self.defining(&at(lo)) > -d {
            return Err(DomainError::OutsideCollar { delta_abs: d, collar: self.defining(&at(lo)).abs() });
        }
        // δ is increasing along the real z₁ axis on [0, p]
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.defining(&at(mid)) < -d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the shallow end keeps |δ| <= d
        Ok(at(hi))
    }

    /// Radii `(r1, r2)` with `B(0, r1) ⊂ Ω ⊂ B(0, r2)`.
    pub fn centered_ball_radii(&self) -> (f64, f64) {
        match &self.kind {
            DomainKind::Ball { radius } => (*radius, *radius),
            DomainKind::Ellipsoid { weights } => {
                let semi = weights.iter().map(|a| 1.0 / a.sqrt());
                let r1 = semi.clone().fold(f64::INFINITY, f64::min);
                let r2 = semi.fold(0.0, f64::max);
                (r1, r2)
            }
            // Inside the unit ball ‖z − e₁‖ ≤ 2, so ‖z‖ < 1 − 8ε forces δ < 0.
            DomainKind::PerturbedBall { epsilon } => (1.0 - 8.0 * epsilon, 1.0),
        }
    }

    /// Exact squeezing value where it is known in closed form. Balls and
    /// ellipsoids `Σ a_i|z_i|² < 1` are linear images of the unit ball.
    pub fn exact_squeezing(&self) -> Option<f64> {
        match self.kind {
            DomainKind::Ball { .. } | DomainKind::Ellipsoid { .. } => Some(1.0),
            DomainKind::PerturbedBall { epsilon: 0.0 } => Some(1.0),
            DomainKind::PerturbedBall { .. } => None,
        }
    }

    pub fn contains(&self, z: &CVector) -> bool {
        self.defining(z) < 0.0
    }

    /// Defining function `δ(z)`.
    pub fn defining(&self, z: &CVector) -> f64 {
        match &self.kind {
            DomainKind::Ball { radius } => z.norm() - radius,
            DomainKind::Ellipsoid { weights } => {
                let (f, g) = ellipsoid_f_g(weights, z);
                f / g
            }
            DomainKind::PerturbedBall { epsilon } => {
                let w = shifted(z);
                z.norm() - 1.0 + epsilon * w.norm().powi(3)
            }
        }
    }

    /// Holomorphic gradient `∂δ/∂z_i`.
    pub fn gradient(&self, z: &CVector) -> CVector {
        let n = self.dimension;
        match &self.kind {
            DomainKind::Ball { .. } => norm_gradient(z),
            DomainKind::Ellipsoid { weights } => {
                let parts = EllipsoidParts::new(weights, z);
                CVector::from_fn(n, |i, _| parts.f_i[i] * parts.h + parts.f * parts.h_i[i])
            }
            DomainKind::PerturbedBall { epsilon } => {
                let w = shifted(z);
                let wn = w.norm();
                norm_gradient(z) + w.map(|c| c.conj() * (1.5 * epsilon * wn))
            }
        }
    }

    /// Complex Hessian `H_ij = ∂²δ/∂z_i∂z̄_j`; Hermitian.
    pub fn hessian(&self, z: &CVector) -> CMatrix {
        let n = self.dimension;
        match &self.kind {
            DomainKind::Ball { .. } => norm_hessian(z),
            DomainKind::Ellipsoid { weights } => {
                let p = EllipsoidParts::new(weights, z);
                DMatrix::from_fn(n, n, |i, j| {
                    let f_ij = if i == j { Complex64::new(weights[i], 0.0) } else { Complex64::new(0.0, 0.0) };
                    f_ij * p.h + p.f_i[i] * p.h_i[j].conj() + p.f_i[j].conj() * p.h_i[i] + p.h_ij[(i, j)] * p.f
                })
            }
            DomainKind::PerturbedBall { epsilon } => {
                let w = shifted(z);
                let wn = w.norm();
                let mut h = norm_hessian(z);
                if wn > 0.0 {
                    for i in 0..n {
                        for j in 0..n {
                            let mut c = w[i].conj() * w[j] * (0.75 / wn);
                            if i == j {
                                c += 1.5 * wn;
                            }
                            h[(i, j)] += c * *epsilon;
                        }
                    }
                }
                h
            }
        }
    }

    /// Real gradient of `δ` written as a vector of ℂⁿ.
    pub fn real_gradient(&self, z: &CVector) -> CVector {
        self.gradient(z).map(|c| c.conj() * 2.0)
    }

    /// Outward unit normal at `z`.
    pub fn unit_normal(&self, z: &CVector) -> CVector {
        let g = self.real_gradient(z);
        let norm = g.norm();
        if norm == 0.0 {
            g
        } else {
            g / Complex64::new(norm, 0.0)
        }
    }

    /// Samples boundary points along rays and checks the Levi form is positive
    /// on their complex tangent spaces.
    fn check_pseudoconvex(&self, samples: usize) -> Result<(), DomainError> {
        let n = self.dimension;
        if n < 2 {
            return Ok(());
        }
        for s in 0..samples {
            // deterministic spread of directions in ℂⁿ
            let t = s as f64 + 0.5;
            let dir = CVector::from_fn(n, |i, _| {
                let k = (i + 1) as f64;
                Complex64::new((t * 0.754_877_666 * k).sin(), (t * 0.569_840_291 * k + 1.0).cos())
            });
            let dir = &dir / Complex64::new(dir.norm(), 0.0);
            let Some(p) = self.boundary_on_ray(&dir) else { continue };
            let nu = self.unit_normal(&p);
            for k in 0..n {
                let e = crate::unit_vector(n, k);
                let t_vec = &e - &nu * nu.dotc(&e);
                let norm = t_vec.norm();
                if norm < 1e-6 {
                    continue;
                }
                let value = hermitian_form(&self.hessian(&p), &(t_vec / Complex64::new(norm, 0.0)));
                if value <= 0.0 {
                    return Err(DomainError::NotPseudoconvex(value));
                }
            }
        }
        Ok(())
    }

    /// Boundary point `t·dir`, `t > 0`, found by bisection from the origin.
    fn boundary_on_ray(&self, dir: &CVector) -> Option<CVector> {
        let (_, r2) = self.centered_ball_radii();
        let (mut lo, mut hi) = (0.0, 2.0 * r2);
        if self.defining(&(dir * Complex64::new(hi, 0.0))) <= 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.defining(&(dir * Complex64::new(mid, 0.0))) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(dir * Complex64::new(0.5 * (lo + hi), 0.0))
    }

    fn check_len(&self, v: &CVector) -> Result<(), DomainError> {
        if v.len() != self.dimension {
            return Err(DomainError::DimensionMismatch { expected: self.dimension, got: v.len() });
        }
        Ok(())
    }
}

fn check_dimension(n: usize) -> Result<(), DomainError> {
    if n == 0 {
        return Err(DomainError::InvalidParameter("dimension must be at least 1".into()));
    }
    Ok(())
}

fn shifted(z: &CVector) -> CVector {
    let mut w = z.clone();
    w[0] -= Complex64::new(1.0, 0.0);
    w
}

fn norm_gradient(z: &CVector) -> CVector {
    let r = z.norm();
    if r == 0.0 {
        return CVector::zeros(z.len());
    }
    z.map(|c| c.conj() / (2.0 * r))
}

fn norm_hessian(z: &CVector) -> CMatrix {
    let n = z.len();
    let r = z.norm();
    if r == 0.0 {
        return CMatrix::zeros(n, n);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let mut c = -(z[i].conj() * z[j]) / (4.0 * r * r * r);
        if i == j {
            c += 1.0 / (2.0 * r);
        }
        c
    })
}

fn ellipsoid_f_g(weights: &[f64], z: &CVector) -> (f64, f64) {
    let f = weights.iter().zip(z.iter()).map(|(a, c)| a * c.norm_sqr()).sum::<f64>() - 1.0;
    let s = weights.iter().zip(z.iter()).map(|(a, c)| a * a * c.norm_sqr()).sum::<f64>();
    (f, 2.0 * s.sqrt())
}

/// Pieces of `δ = f·h`, `h = 1/g`, `f = Σ a_i|z_i|² − 1`, `g = 2(Σ a_i²|z_i|²)^{1/2}`.
struct EllipsoidParts {
    f: f64,
    h: f64,
    f_i: Vec<Complex64>,
    h_i: Vec<Complex64>,
    h_ij: CMatrix,
}

impl EllipsoidParts {
    fn new(weights: &[f64], z: &CVector) -> Self {
        let n = weights.len();
        let (f, g) = ellipsoid_f_g(weights, z);
        let f_i: Vec<Complex64> = (0..n).map(|i| z[i].conj() * weights[i]).collect();
        let g_i: Vec<Complex64> = (0..n).map(|i| z[i].conj() * (2.0 * weights[i] * weights[i] / g)).collect();
        let g_ij = DMatrix::from_fn(n, n, |i, j| {
            let mut c = -(z[i].conj() * z[j]) * (4.0 * weights[i].powi(2) * weights[j].powi(2) / g.powi(3));
            if i == j {
                c += 2.0 * weights[i].powi(2) / g;
            }
            c
        });
        let h_i = g_i.iter().map(|gi| -gi / (g * g)).collect();
        let h_ij = DMatrix::from_fn(n, n, |i, j| -g_ij[(i, j)] / (g * g) + g_i[i] * g_i[j].conj() * (2.0 / g.powi(3)));
        Self { f, h: 1.0 / g, f_i, h_i, h_ij }
    }
}

/// `Re Σ H_ij ξ_i ξ̄_j`.
pub(crate) fn hermitian_form(h: &CMatrix, xi: &CVector) -> f64 {
    let n = xi.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += h[(i, j)] * xi[i] * xi[j].conj();
        }
    }
    acc.re
}

/// Boundary data attached to a point near the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFrame {
    pub point: CVector,
    /// Boundary foot `π(z)`.
    pub foot: CVector,
    /// Signed value `δ(z)`.
    pub delta: f64,
    /// `|δ(z)|`.
    pub distance: f64,
    /// `‖z − π(z)‖`.
    pub euclidean_distance: f64,
    /// Outward complex unit normal at the foot.
    pub normal: CVector,
    /// Orthogonal projector onto the complex tangent space at the foot.
    pub projector: CMatrix,
}

impl BoundaryFrame {
    pub fn dimension(&self) -> usize {
        self.point.len()
    }

    /// Builds the frame for `point` with a known boundary foot.
    pub fn from_foot(domain: &DomainSpec, point: CVector, foot: CVector) -> Self {
        let normal = domain.unit_normal(&foot);
        let n = point.len();
        let projector = CMatrix::identity(n, n) - &normal * normal.adjoint();
        let delta = domain.defining(&point);
        let euclidean_distance = (&point - &foot).norm();
        Self { point, foot, delta, distance: delta.abs(), euclidean_distance, normal, projector }
    }

    /// Orthonormal basis of the complex tangent space at the foot.
    pub fn tangent_basis(&self) -> Vec<CVector> {
        let n = self.dimension();
        let mut basis: Vec<CVector> = Vec::with_capacity(n.saturating_sub(1));
        let mut candidates: Vec<CVector> = (0..n).map(|k| &self.projector * crate::unit_vector(n, k)).collect();
        candidates.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap_or(std::cmp::Ordering::Equal));
        for mut v in candidates {
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
            let norm = v.norm();
            if norm > 1e-8 && basis.len() + 1 < n {
                basis.push(v / Complex64::new(norm, 0.0));
            }
        }
        basis
    }
}

/// Projects an interior point of the collar onto the boundary.
///
/// Damped Newton steps along `∇δ` reach the boundary; the foot is then refined
/// until `z − π(z)` is parallel to the normal at `π(z)`.
pub fn project_to_boundary(domain: &DomainSpec, z: &CVector) -> Result<BoundaryFrame, DomainError> {
    domain.check_len(z)?;
    let delta = domain.defining(z);
    if delta >= 0.0 {
        return Err(DomainError::NotInterior(delta));
    }
    if delta.abs() > domain.collar_width() {
        return Err(DomainError::OutsideCollar { delta_abs: delta.abs(), collar: domain.collar_width() });
    }

    let mut p = z.clone();
    let mut residual = delta.abs();
    let mut iterations = 0;
    while residual > PROJECTION_RESIDUAL {
        if iterations == MAX_PROJECTION_ITERATIONS {
            return Err(DomainError::NoConvergence { residual, iterations });
        }
        iterations += 1;
        let g = domain.real_gradient(&p);
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            return Err(DomainError::NoConvergence { residual, iterations });
        }
        let value = domain.defining(&p);
        let mut step = Complex64::new(value / g2, 0.0);
        let mut candidate = &p - &g * step;
        let mut damping = 0;
        while domain.defining(&candidate).abs() > residual && damping < 30 {
            step *= 0.5;
            candidate = &p - &g * step;
            damping += 1;
        }
        p = candidate;
        residual = domain.defining(&p).abs();
    }

    // Foot refinement: intersect the line z + t·ν(p) with the boundary.
    let mut t = (&p - z).norm();
    for _ in 0..MAX_PROJECTION_ITERATIONS {
        let nu = domain.unit_normal(&p);
        let mut q = z + &nu * Complex64::new(t, 0.0);
        for _ in 0..MAX_PROJECTION_ITERATIONS {
            let value = domain.defining(&q);
            if value.abs() <= PROJECTION_RESIDUAL {
                break;
            }
            let slope = domain.real_gradient(&q).dotc(&nu).re;
            if slope.abs() < 1e-14 {
                break;
            }
            t -= value / slope;
            q = z + &nu * Complex64::new(t, 0.0);
        }
        let moved = (&q - &p).norm();
        if domain.defining(&q).abs() <= PROJECTION_RESIDUAL {
            p = q;
        } else {
            break;
        }
        if moved < 1e-14 {
            break;
        }
    }
    let residual = domain.defining(&p).abs();
    if residual > PROJECTION_RESIDUAL {
        return Err(DomainError::NoConvergence { residual, iterations: MAX_PROJECTION_ITERATIONS });
    }
    Ok(BoundaryFrame::from_foot(domain, z.clone(), p))
}

/// Splits `ξ` into `(ξ_N, ξ_T)` with `ξ_N = ⟨ξ, ν⟩ν`.
pub fn split_vector(frame: &BoundaryFrame, xi: &CVector) -> (CVector, CVector) {
    let coefficient = frame.normal.dotc(xi);
    let normal_part = &frame.normal * coefficient;
    let tangential = xi - &normal_part;
    (normal_part, tangential)
}

/// Levi form `Σ ∂²δ/∂z_i∂z̄_j(p) ξ_i ξ̄_j` of a complex tangential vector at a
/// boundary point.
pub fn levi_form(domain: &DomainSpec, p: &CVector, xi_t: &CVector) -> Result<f64, DomainError> {
    domain.check_len(p)?;
    domain.check_len(xi_t)?;
    let norm = xi_t.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let delta = domain.defining(p);
    if delta.abs() > BOUNDARY_TOLERANCE {
        return Err(DomainError::OffBoundary(delta.abs()));
    }
    let nu = domain.unit_normal(p);
    let inner = nu.dotc(xi_t).norm();
    if inner > TANGENCY_TOLERANCE * norm {
        return Err(DomainError::NotTangential { inner, norm });
    }
    Ok(hermitian_form(&domain.hessian(p), xi_t))
}
