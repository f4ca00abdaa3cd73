//! Bergman kernels, the extremal functional `M`, and the Bergman metric.
//!
//! A [`GramModel`] orthonormalises a monomial basis against a Monte-Carlo Gram
//! matrix; the numerical Bergman kernel is then `K(z) = Σ_j |φ_j(z)|²` over the
//! orthonormal functions `φ_j`. The metric is available through two routes that
//! share no code beyond basis evaluation:
//!
//! - [`GramModel::metric_via_hessian`] assembles `∂_i∂̄_j log K` from `K`, `∂K`
//!   and `∂∂̄K` and evaluates the resulting Hermitian form;
//! - [`GramModel::metric_quotient`] computes `M(z, ξ)` as the norm of the
//!   derivative functional restricted to `{f(z) = 0}` and divides by `√K(z)`.
//!
//! All derivatives are exact monomial derivatives.

use std::f64::consts::PI;

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{hermitian_form, DomainKind, DomainSpec};
use crate::quadrature::{MonomialBasis, SamplingMode};
use crate::{CMatrix, CVector};

/// Below this boundary distance, model values are flagged as extrapolation risk.
pub const EXTRAPOLATION_DISTANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BergmanError {
    #[error("Gram model has no retained basis functions")]
    RankZero,
    #[error("tangent vector is zero")]
    ZeroVector,
    #[error("log-kernel Hessian form is negative ({0:e}); the model rank is insufficient")]
    NegativeForm(f64),
    #[error("invalid radii: r1 = {r1}, r2 = {r2} (need 0 < r1 <= r2)")]
    BadRadii { r1: f64, r2: f64 },
    #[error("Gram matrix is ill-conditioned: condition number {condition:e} exceeds {cutoff:e} at rank {rank}")]
    IllConditioned { condition: f64, cutoff: f64, rank: usize },
    #[error("dimension mismatch: model has n = {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramSettings {
    /// Eigenvalues below `threshold × λ_max` are truncated.
    pub truncation_threshold: f64,
    /// Largest acceptable ratio of retained eigenvalues.
    pub condition_cutoff: f64,
}

impl Default for GramSettings {
    fn default() -> Self {
        Self { truncation_threshold: 1e-12, condition_cutoff: 1e12 }
    }
}

/// Where a Gram model came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub domain: DomainSpec,
    pub samples: u64,
    pub seed: u64,
    pub blocks: usize,
    pub mode: SamplingMode,
    pub accepted: u64,
    pub volume: f64,
    pub volume_std_error: f64,
}

/// Orthonormalised monomial basis over a domain.
#[derive(Debug, Clone)]
pub struct GramModel {
    basis: MonomialBasis,
    gram: CMatrix,
    /// Rows are the coefficient vectors of the orthonormal functions.
    factor: CMatrix,
    eigenvalues: Vec<f64>,
    rank: usize,
    condition: f64,
    settings: GramSettings,
    provenance: Provenance,
    block_grams: Vec<CMatrix>,
}

impl GramModel {
    /// Orthonormalises `basis` against `gram` by spectral truncation.
    pub fn new(
        basis: MonomialBasis,
        gram: CMatrix,
        block_grams: Vec<CMatrix>,
        settings: GramSettings,
        provenance: Provenance,
    ) -> Result<Self, BergmanError> {
        let m = basis.size();
        if gram.nrows() != m || gram.ncols() != m {
            return Err(BergmanError::DimensionMismatch { expected: m, got: gram.nrows() });
        }
        let gram = (&gram + gram.adjoint()) * Complex64::new(0.5, 0.0);
        let eigen = SymmetricEigen::new(gram.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eigen.eigenvalues[k]).collect();
        let largest = eigenvalues.first().copied().unwrap_or(0.0);
        if !(largest > 0.0) {
            return Err(BergmanError::RankZero);
        }
        let floor = settings.truncation_threshold * largest;
        let retained: Vec<usize> = order.iter().copied().filter(|&k| eigen.eigenvalues[k] > floor).collect();
        let rank = retained.len();
        let smallest = eigen.eigenvalues[retained[rank - 1]];
        let factor = DMatrix::from_fn(rank, m, |r, c| {
            let k = retained[r];
            eigen.eigenvectors[(c, k)].conj() / eigen.eigenvalues[k].sqrt()
        });
        Ok(Self {
            basis,
            gram,
            factor,
            eigenvalues,
            rank,
            condition: largest / smallest,
            settings,
            provenance,
            block_grams,
        })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    pub fn factor(&self) -> &CMatrix {
        &self.factor
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn settings(&self) -> GramSettings {
        self.settings
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.provenance.domain
    }

    pub fn dimension(&self) -> usize {
        self.basis.dimension()
    }

    /// `Err(IllConditioned)` when the retained spectrum exceeds the cutoff.
    pub fn check_conditioning(&self) -> Result<(), BergmanError> {
        if self.condition > self.settings.condition_cutoff {
            return Err(BergmanError::IllConditioned {
                condition: self.condition,
                cutoff: self.settings.condition_cutoff,
                rank: self.rank,
            });
        }
        Ok(())
    }

    /// Model restricted to monomials of degree `≤ max_degree`.
    pub fn truncated(&self, max_degree: u32) -> Result<Self, BergmanError> {
        let degree = max_degree.min(self.basis.max_degree());
        let basis = MonomialBasis::new(self.dimension(), degree);
        let m = basis.size();
        let cut = |g: &CMatrix| g.view((0, 0), (m, m)).into_owned();
        let blocks = self.block_grams.iter().map(cut).collect();
        Self::new(basis, cut(&self.gram), blocks, self.settings, self.provenance.clone())
    }

    /// Independent models built from each sampling block's Gram matrix.
    pub fn block_models(&self) -> Result<Vec<Self>, BergmanError> {
        self.block_grams
            .iter()
            .map(|g| Self::new(self.basis.clone(), g.clone(), Vec::new(), self.settings, self.provenance.clone()))
            .collect()
    }

    /// Batch-means standard error of a model statistic over the sampling blocks.
    pub fn standard_error<F>(&self, statistic: F) -> Result<f64, BergmanError>
    where
        F: Fn(&GramModel) -> Result<f64, BergmanError>,
    {
        let values = self.block_models()?.iter().map(&statistic).collect::<Result<Vec<_>, _>>()?;
        let b = values.len();
        if b < 2 {
            return Ok(f64::NAN);
        }
        let mean = values.iter().sum::<f64>() / b as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        Ok((var / b as f64).sqrt())
    }

    fn check_point(&self, v: &CVector) -> Result<(), BergmanError> {
        if v.len() != self.dimension() {
            return Err(BergmanError::DimensionMismatch { expected: self.dimension(), got: v.len() });
        }
        Ok(())
    }

    /// Orthonormal function values `φ_j(z)` and derivatives `∂_i φ_j(z)` (n × rank).
    fn features(&self, z: &CVector) -> (CVector, CMatrix) {
        let (values, derivatives) = self.basis.evaluate_with_derivatives(z);
        let phi = &self.factor * values;
        let dphi = derivatives * self.factor.transpose();
        (phi, dphi)
    }

    /// `Σ_i ξ_i ∂_i φ_j(z)` for each orthonormal function.
    fn directional(dphi: &CMatrix, xi: &CVector) -> CVector {
        dphi.transpose() * xi
    }

    /// Numerical Bergman kernel on the diagonal, `K(z) = Σ_j |φ_j(z)|²`.
    pub fn kernel_at(&self, z: &CVector) -> Result<f64, BergmanError> {
        self.check_point(z)?;
        if self.rank == 0 {
            return Err(BergmanError::RankZero);
        }
        let values = self.basis.evaluate(z);
        Ok((&self.factor * values).norm_squared())
    }

    /// Norm of `f ↦ ∂_ξ f(z)` on the model span, optionally restricted to `f(z) = 0`.
    pub fn extremal_m(&self, z: &CVector, xi: &CVector, variant: MVariant) -> Result<f64, BergmanError> {
        self.check_point(z)?;
        self.check_point(xi)?;
        if xi.norm() == 0.0 {
            return Err(BergmanError::ZeroVector);
        }
        if self.rank == 0 {
            return Err(BergmanError::RankZero);
        }
        let (phi, dphi) = self.features(z);
        let a = Self::directional(&dphi, xi);
        match variant {
            MVariant::Unconstrained => Ok(a.norm()),
            MVariant::Constrained => {
                let e2 = phi.norm_squared();
                let projected = &a - &phi * (phi.dotc(&a) / e2);
                Ok(projected.norm())
            }
        }
    }

    /// Length of `ξ` in the Hermitian form `∂_i∂̄_j log K(z)`.
    pub fn metric_via_hessian(&self, z: &CVector, xi: &CVector) -> Result<f64, BergmanError> {
        self.check_point(z)?;
        self.check_point(xi)?;
        if self.rank == 0 {
            return Err(BergmanError::RankZero);
        }
        if xi.norm() == 0.0 {
            return Ok(0.0);
        }
        let form = hermitian_form(&self.log_kernel_hessian(z), xi);
        // rounding scale of ∂∂̄K/K, the larger of the two cancelling terms
        let (phi, dphi) = self.features(z);
        let scale = Self::directional(&dphi, xi).norm_squared() / phi.norm_squared();
        let tolerance = 1e-10 * scale.max(xi.norm_squared());
        if form < -tolerance {
            return Err(BergmanError::NegativeForm(form));
        }
        Ok(form.max(0.0).sqrt())
    }

    /// Matrix `∂²log K/∂z_i∂z̄_j` at `z`.
    pub fn log_kernel_hessian(&self, z: &CVector) -> CMatrix {
        let n = self.dimension();
        let (phi, dphi) = self.features(z);
        let k = phi.norm_squared();
        // ∂_i K = Σ_j ∂_iφ_j · conj(φ_j),  ∂_i∂̄_l K = Σ_j ∂_iφ_j · conj(∂_lφ_j)
        let dk: Vec<Complex64> = (0..n).map(|i| phi.dotc(&dphi.row(i).transpose())).collect();
        DMatrix::from_fn(n, n, |i, l| {
            let ddk: Complex64 = dphi.row(i).iter().zip(dphi.row(l).iter()).map(|(a, b)| a * b.conj()).sum();
            ddk / k - dk[i] * dk[l].conj() / (k * k)
        })
    }

    /// Bergman metric as `M(z, ξ)/√K(z)` with the constrained functional; the
    /// Hessian route is recorded alongside as a cross-check.
    pub fn metric_quotient(&self, z: &CVector, xi: &CVector) -> Result<MetricSample, BergmanError> {
        self.metric_extremal(z, xi, MVariant::Constrained)
    }

    /// `M(z, ξ)/√K(z)` for either variant of `M`.
    pub fn metric_extremal(&self, z: &CVector, xi: &CVector, variant: MVariant) -> Result<MetricSample, BergmanError> {
        let kernel = self.kernel_at(z)?;
        let hessian = self.metric_via_hessian(z, xi)?;
        let (m_value, metric) = if xi.norm() == 0.0 {
            (0.0, 0.0)
        } else {
            let m = self.extremal_m(z, xi, variant)?;
            (m, m / kernel.sqrt())
        };
        Ok(MetricSample {
            point: z.clone(),
            vector: xi.clone(),
            kernel,
            metric,
            m_value: Some(m_value),
            method: variant.method(),
            cross_check: Some(hessian),
            extrapolation_risk: self.extrapolation_risk(z),
        })
    }

    /// Metric sample from the Hessian route.
    pub fn metric_sample(&self, z: &CVector, xi: &CVector) -> Result<MetricSample, BergmanError> {
        let kernel = self.kernel_at(z)?;
        let metric = self.metric_via_hessian(z, xi)?;
        Ok(MetricSample {
            point: z.clone(),
            vector: xi.clone(),
            kernel,
            metric,
            m_value: None,
            method: MetricMethod::Hessian,
            cross_check: None,
            extrapolation_risk: self.extrapolation_risk(z),
        })
    }

    fn extrapolation_risk(&self, z: &CVector) -> bool {
        self.domain().defining(z).abs() < EXTRAPOLATION_DISTANCE
    }
}

/// Which extremal functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MVariant {
    /// Maximum of `|∂_ξ f(z)|` over unit-norm `f` with `f(z) = 0`.
    #[default]
    Constrained,
    /// Maximum of `|∂_ξ f(z)|` over all unit-norm `f`.
    Unconstrained,
}

impl MVariant {
    pub fn method(self) -> MetricMethod {
        match self {
            MVariant::Constrained => MetricMethod::ExtremalConstrained,
            MVariant::Unconstrained => MetricMethod::ExtremalUnconstrained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMethod {
    Hessian,
    ExtremalConstrained,
    ExtremalUnconstrained,
    ClosedForm,
}

impl MetricMethod {
    pub fn tag(self) -> &'static str {
        match self {
            MetricMethod::Hessian => "hessian",
            MetricMethod::ExtremalConstrained => "extremal-constrained",
            MetricMethod::ExtremalUnconstrained => "extremal-unconstrained",
            MetricMethod::ClosedForm => "closed-form",
        }
    }
}

/// One metric evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub point: CVector,
    pub vector: CVector,
    pub kernel: f64,
    pub metric: f64,
    pub m_value: Option<f64>,
    pub method: MetricMethod,
    /// Hessian-route value when `method` is an extremal route.
    pub cross_check: Option<f64>,
    pub extrapolation_risk: bool,
}

/// Convention for the closed-form `M` of a ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MConvention {
    /// `(n+1)·√(n!/πⁿ · r^{-(n+2)})·‖ξ‖²`, the uncorrected expression.
    AsPrinted,
    /// `√(n+1)·√(n!/πⁿ)·‖ξ‖/r^{n+1}`, the value of the constrained extremal problem.
    #[default]
    Oracle,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Bergman kernel of `B(0, r) ⊂ ℂⁿ` at the centre: `n!/(πⁿ r^{2n})`.
pub fn kernel_ball_closed(n: usize, r: f64) -> f64 {
    factorial(n) / (PI.powi(n as i32) * r.powi(2 * n as i32))
}

/// Bergman kernel of `B(0, r)` at `z`: `n!/(πⁿ r^{2n}) · (1 − ‖z‖²/r²)^{-(n+1)}`.
pub fn kernel_ball_closed_at(z: &CVector, r: f64) -> f64 {
    let n = z.len();
    let t = 1.0 - z.norm_squared() / (r * r);
    kernel_ball_closed(n, r) * t.powi(-(n as i32 + 1))
}

/// Extremal functional `M` of `B(0, r) ⊂ ℂⁿ` at the centre.
pub fn m_ball_closed(n: usize, r: f64, xi_norm: f64, convention: MConvention) -> f64 {
    let c = factorial(n) / PI.powi(n as i32);
    match convention {
        MConvention::AsPrinted => (n as f64 + 1.0) * (c / r.powi(n as i32 + 2)).sqrt() * xi_norm * xi_norm,
        MConvention::Oracle => (n as f64 + 1.0).sqrt() * c.sqrt() * xi_norm / r.powi(n as i32 + 1),
    }
}

/// Bergman metric of `B(0, r)` at `z` applied to `ξ`.
pub fn metric_ball_closed(z: &CVector, xi: &CVector, r: f64) -> f64 {
    let n = z.len() as f64;
    let w = z / Complex64::new(r, 0.0);
    let eta = xi / Complex64::new(r, 0.0);
    let t = 1.0 - w.norm_squared();
    let inner = w.dotc(&eta).norm_sqr();
    ((n + 1.0) * (eta.norm_squared() / t + inner / (t * t))).sqrt()
}

/// Maps `z` to the unit ball when the domain is a linear image of it.
fn to_unit_ball(domain: &DomainSpec, v: &CVector) -> Option<CVector> {
    match domain.kind() {
        DomainKind::Ball { radius } => Some(v / Complex64::new(*radius, 0.0)),
        DomainKind::Ellipsoid { weights } => {
            Some(CVector::from_fn(v.len(), |i, _| v[i] * weights[i].sqrt()))
        }
        DomainKind::PerturbedBall { epsilon } if *epsilon == 0.0 => Some(v.clone()),
        DomainKind::PerturbedBall { .. } => None,
    }
}

/// Exact Bergman kernel of balls and ellipsoids `Σ a_i|z_i|² < 1`, transported
/// from the unit ball by the linear map `w_i = √a_i z_i`.
pub fn kernel_exact(domain: &DomainSpec, z: &CVector) -> Option<f64> {
    let w = to_unit_ball(domain, z)?;
    let jacobian = match domain.kind() {
        DomainKind::Ball { radius } => radius.powi(-2 * z.len() as i32),
        DomainKind::Ellipsoid { weights } => weights.iter().product(),
        DomainKind::PerturbedBall { .. } => 1.0,
    };
    Some(kernel_ball_closed_at(&w, 1.0) * jacobian)
}

/// Exact Bergman metric on the same domains as [`kernel_exact`].
pub fn metric_exact(domain: &DomainSpec, z: &CVector, xi: &CVector) -> Option<f64> {
    Some(metric_ball_closed(&to_unit_ball(domain, z)?, &to_unit_ball(domain, xi)?, 1.0))
}

/// Closed-form sandwich `(M_{B(r2)}/√K_{B(r1)}, M_{B(r1)}/√K_{B(r2)})` for the
/// Bergman metric at the centre of `B(0, r1) ⊂ Ω ⊂ B(0, r2)`.
pub fn sandwich_bounds(r1: f64, r2: f64, n: usize, xi_norm: f64) -> Result<(f64, f64), BergmanError> {
    if !(r1 > 0.0 && r1 <= r2) {
        return Err(BergmanError::BadRadii { r1, r2 });
    }
    let lower = m_ball_closed(n, r2, xi_norm, MConvention::Oracle) / kernel_ball_closed(n, r1).sqrt();
    let upper = m_ball_closed(n, r1, xi_norm, MConvention::Oracle) / kernel_ball_closed(n, r2).sqrt();
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_gram, SamplePlan};
    use crate::{real_vector, unit_vector};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disc_model() -> &'static GramModel {
        static MODEL: OnceLock<GramModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let disc = DomainSpec::disc(1.0).unwrap();
            build_gram(&disc, &MonomialBasis::new(1, 10), &SamplePlan::new(2_000_000, 1), GramSettings::default())
                .unwrap()
        })
    }

    fn ball_model() -> &'static GramModel {
        static MODEL: OnceLock<GramModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let ball = DomainSpec::ball(2, 1.0).unwrap();
            build_gram(&ball, &MonomialBasis::new(2, 8), &SamplePlan::new(2_000_000, 2), GramSettings::default())
                .unwrap()
        })
    }

    /// Exact Gram matrix of monomials on the unit disc: diag(π/(k+1)).
    fn exact_disc_gram(degree: usize) -> DMatrix<f64> {
        DMatrix::from_fn(degree + 1, degree + 1, |i, j| if i == j { PI / (i as f64 + 1.0) } else { 0.0 })
    }

    #[test]
    fn exact_forms_of_linear_images() {
        let ellipsoid = DomainSpec::ellipsoid(&[1.0, 4.0]).unwrap();
        let origin = CVector::zeros(2);
        assert_relative_eq!(kernel_exact(&ellipsoid, &origin).unwrap(), 8.0 / (PI * PI), max_relative = 1e-14);
        let d = 0.3;
        let z = real_vector(&[1.0 - d, 0.0]);
        let t = d * (2.0 - d);
        for xi in [real_vector(&[1.0, 0.0]), real_vector(&[0.0, 1.0]), real_vector(&[0.6, 0.8])] {
            let expected = 3f64.sqrt() * (xi[0].norm_sqr() / (t * t) + 4.0 * xi[1].norm_sqr() / t).sqrt();
            assert_relative_eq!(metric_exact(&ellipsoid, &z, &xi).unwrap(), expected, max_relative = 1e-13);
        }
        let ball = DomainSpec::ball(2, 2.0).unwrap();
        let z = real_vector(&[0.5, 0.3]);
        let xi = real_vector(&[0.2, -1.0]);
        assert_relative_eq!(kernel_exact(&ball, &z).unwrap(), kernel_ball_closed_at(&z, 2.0), max_relative = 1e-14);
        assert_relative_eq!(metric_exact(&ball, &z, &xi).unwrap(), metric_ball_closed(&z, &xi, 2.0), max_relative = 1e-14);
        assert!(kernel_exact(&DomainSpec::perturbed_ball(2, 0.05).unwrap(), &origin).is_none());
    }

    #[test]
    fn closed_form_kernels() {
        assert_relative_eq!(kernel_ball_closed(1, 1.0), 1.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(kernel_ball_closed(2, 1.0), 2.0 / (PI * PI), max_relative = 1e-15);
        assert_relative_eq!(kernel_ball_closed(1, 2.0), 1.0 / (4.0 * PI), max_relative = 1e-15);
    }

    #[test]
    fn closed_form_m_conventions() {
        assert_relative_eq!(m_ball_closed(1, 1.0, 1.0, MConvention::AsPrinted), 2.0 / PI.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(m_ball_closed(1, 1.0, 1.0, MConvention::Oracle), (2.0 / PI).sqrt(), max_relative = 1e-15);
        assert_eq!(m_ball_closed(2, 1.3, 0.0, MConvention::AsPrinted), 0.0);
        assert_eq!(m_ball_closed(2, 1.3, 0.0, MConvention::Oracle), 0.0);
    }

    /// Stochastic hill climbing over polynomial coefficients with `f(0) = 0`,
    /// maximising `|f′(0)| / ‖f‖` under the exact disc inner product.
    fn brute_force_disc_extremal(degree: usize, seed: u64) -> f64 {
        use rand::Rng;
        let gram = exact_disc_gram(degree);
        let ratio = |c: &[f64]| {
            let v = nalgebra::DVector::from_column_slice(c);
            let norm2 = (v.transpose() * &gram * &v)[(0, 0)];
            c[1].abs() / norm2.sqrt()
        };
        let mut rng = crate::rng::stream(seed, "brute-force", 0);
        let mut best: Vec<f64> = (0..=degree).map(|k| if k == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let mut best_value = ratio(&best);
        let mut scale = 0.5;
        for _ in 0..20_000 {
            let mut trial = best.clone();
            for c in trial.iter_mut().skip(1) {
                *c += scale * rng.gen_range(-1.0..1.0);
            }
            let value = ratio(&trial);
            if value > best_value {
                best = trial;
                best_value = value;
            } else {
                scale = (scale * 0.999).max(1e-4);
            }
        }
        best_value
    }

    #[test]
    fn disc_extremal_matches_brute_force_oracle() {
        let oracle = brute_force_disc_extremal(10, 4);
        assert!((oracle - (2.0 / PI).sqrt()).abs() < 1e-3, "brute force {oracle}");
        let m = disc_model().extremal_m(&real_vector(&[0.0]), &real_vector(&[1.0]), MVariant::Constrained).unwrap();
        assert!((m / oracle - 1.0).abs() < 0.02, "M {m} vs oracle {oracle}");
        let closed = m_ball_closed(1, 1.0, 1.0, MConvention::Oracle);
        assert!((m / closed - 1.0).abs() < 0.01);
    }

    #[test]
    fn extremal_m_is_homogeneous() {
        let model = disc_model();
        let z = real_vector(&[0.0]);
        let base = model.extremal_m(&z, &real_vector(&[1.0]), MVariant::Constrained).unwrap();
        let scale = c(-0.4, 2.5);
        let scaled = model.extremal_m(&z, &CVector::from_vec(vec![scale]), MVariant::Constrained).unwrap();
        assert_relative_eq!(scaled, scale.norm() * base, max_relative = 1e-12);
        assert_eq!(
            model.extremal_m(&z, &CVector::zeros(1), MVariant::Constrained),
            Err(BergmanError::ZeroVector)
        );
    }

    #[test]
    fn unconstrained_m_exceeds_constrained_off_centre() {
        let model = disc_model();
        let z = CVector::from_vec(vec![c(0.4, 0.1)]);
        let xi = real_vector(&[1.0]);
        let constrained = model.extremal_m(&z, &xi, MVariant::Constrained).unwrap();
        let unconstrained = model.extremal_m(&z, &xi, MVariant::Unconstrained).unwrap();
        assert!(unconstrained > constrained * 1.05);
        // only the constrained functional reproduces the metric
        let exact = metric_ball_closed(&z, &xi, 1.0);
        let k = model.kernel_at(&z).unwrap();
        assert!((constrained / k.sqrt() / exact - 1.0).abs() < 0.02);
        assert!((unconstrained / k.sqrt() / exact - 1.0).abs() > 0.05);
    }

    #[test]
    fn disc_kernel_values() {
        let model = disc_model();
        let k0 = model.kernel_at(&real_vector(&[0.0])).unwrap();
        assert!((k0 * PI - 1.0).abs() < 0.01);
        let k = model.kernel_at(&real_vector(&[0.5])).unwrap();
        let oracle = 1.0 / PI / (1.0 - 0.25_f64).powi(2);
        assert!((k / oracle - 1.0).abs() < 0.02, "K(0.5) = {k}, oracle {oracle}");
    }

    #[test]
    fn ball_kernel_at_centre() {
        let k = ball_model().kernel_at(&CVector::zeros(2)).unwrap();
        assert!((k / kernel_ball_closed(2, 1.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn orthonormal_factor_whitens_gram() {
        for model in [disc_model(), ball_model()] {
            let r = model.factor();
            let identity = r * model.gram() * r.adjoint();
            let err = (identity - CMatrix::identity(model.rank(), model.rank())).norm();
            assert!(err < 1e-8, "‖RGR* − I‖ = {err:e}");
            assert!(model.check_conditioning().is_ok());
        }
    }

    #[test]
    fn hessian_metric_at_centre() {
        let disc = disc_model().metric_via_hessian(&real_vector(&[0.0]), &real_vector(&[1.0])).unwrap();
        assert!((disc / 2f64.sqrt() - 1.0).abs() < 0.02);
        let ball = ball_model().metric_via_hessian(&CVector::zeros(2), &unit_vector(2, 0)).unwrap();
        assert!((ball / 3f64.sqrt() - 1.0).abs() < 0.02);
        assert_eq!(ball_model().metric_via_hessian(&CVector::zeros(2), &CVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn quotient_metric_matches_closed_forms() {
        let disc = disc_model().metric_quotient(&real_vector(&[0.0]), &real_vector(&[1.0])).unwrap();
        assert!((disc.metric / 2f64.sqrt() - 1.0).abs() < 0.02);
        assert!((disc.metric / disc.cross_check.unwrap() - 1.0).abs() < 0.02);
        assert_eq!(disc.method, MetricMethod::ExtremalConstrained);

        let ball = ball_model().metric_quotient(&CVector::zeros(2), &unit_vector(2, 1)).unwrap();
        assert!((ball.metric / 3f64.sqrt() - 1.0).abs() < 0.02);

        // M at the centre cross-checked against hessian × √K
        let z = CVector::zeros(2);
        let xi = unit_vector(2, 0);
        let m = ball_model().extremal_m(&z, &xi, MVariant::Constrained).unwrap();
        let via = ball_model().metric_via_hessian(&z, &xi).unwrap() * ball_model().kernel_at(&z).unwrap().sqrt();
        assert!((m / via - 1.0).abs() < 0.02);
    }

    #[test]
    fn scaled_disc_metric() {
        let r = 2.0;
        let domain = DomainSpec::disc(r).unwrap();
        let model =
            build_gram(&domain, &MonomialBasis::new(1, 10), &SamplePlan::new(1_000_000, 9), GramSettings::default())
                .unwrap();
        let sample = model.metric_quotient(&real_vector(&[0.0]), &real_vector(&[1.0])).unwrap();
        assert!((sample.metric / (2f64.sqrt() / r) - 1.0).abs() < 0.02);
    }

    #[test]
    fn metric_routes_are_homogeneous() {
        let model = ball_model();
        let z = CVector::from_vec(vec![c(0.2, -0.1), c(0.05, 0.3)]);
        let xi = CVector::from_vec(vec![c(0.6, 0.2), c(-0.3, 0.7)]);
        let scale = c(1.7, -0.9);
        let scaled = &xi * scale;
        let h1 = model.metric_via_hessian(&z, &xi).unwrap();
        let h2 = model.metric_via_hessian(&z, &scaled).unwrap();
        assert_relative_eq!(h2, scale.norm() * h1, max_relative = 1e-10);
        let q1 = model.metric_quotient(&z, &xi).unwrap().metric;
        let q2 = model.metric_quotient(&z, &scaled).unwrap().metric;
        assert_relative_eq!(q2, scale.norm() * q1, max_relative = 1e-10);
    }

    #[test]
    fn biholomorphic_invariance_on_ball() {
        // Degree 12 keeps the polynomial model accurate out to ‖z‖ = 0.6.
        let ball = DomainSpec::ball(2, 1.0).unwrap();
        let model =
            build_gram(&ball, &MonomialBasis::new(2, 12), &SamplePlan::new(1_000_000, 6), GramSettings::default())
                .unwrap();
        let xi = CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        for r in [0.3, 0.6] {
            let z = real_vector(&[r, 0.0]);
            let at_point = model.metric_via_hessian(&z, &xi).unwrap();
            let pushed = crate::squeezing::pushforward_lambda(r, 1.0, &xi).unwrap();
            let at_centre = model.metric_via_hessian(&CVector::zeros(2), &pushed).unwrap();
            assert!((at_point / at_centre - 1.0).abs() < 0.02, "r = {r}: {at_point} vs {at_centre}");
        }
    }

    #[test]
    fn truncation_near_the_boundary_is_detected() {
        // The degree-8 model underestimates the metric at ‖z‖ = 0.9 and
        // dropping the top degree moves the value substantially.
        let model = ball_model();
        let z = real_vector(&[0.9, 0.0]);
        let xi = unit_vector(2, 0);
        let full = model.metric_via_hessian(&z, &xi).unwrap();
        let lower = model.truncated(7).unwrap().metric_via_hessian(&z, &xi).unwrap();
        let exact = metric_ball_closed(&z, &xi, 1.0);
        assert!(full < 0.5 * exact);
        assert!((full / lower - 1.0).abs() > 0.05);
        assert!(model.metric_sample(&real_vector(&[0.97, 0.0]), &xi).unwrap().extrapolation_risk);
    }

    #[test]
    fn sandwich_bounds_contain_oracles() {
        let (lo, hi) = sandwich_bounds(1.0, 1.0, 2, 1.0).unwrap();
        assert_relative_eq!(lo, hi, max_relative = 1e-15);
        assert_relative_eq!(lo, 3f64.sqrt(), max_relative = 1e-14);
        let (lo, hi) = sandwich_bounds(0.9, 1.0, 1, 1.0).unwrap();
        assert!(lo < 2f64.sqrt() && 2f64.sqrt() < hi);
        let (lo, hi) = sandwich_bounds(0.9, 1.0, 2, 1.0).unwrap();
        assert!(lo < 3f64.sqrt() && 3f64.sqrt() < hi);
        assert!(matches!(sandwich_bounds(1.0, 0.5, 2, 1.0), Err(BergmanError::BadRadii { .. })));
    }

    #[test]
    fn ball_metric_closed_form_scaling() {
        let xi = real_vector(&[1.0]);
        assert_relative_eq!(metric_ball_closed(&real_vector(&[0.0]), &xi, 3.0), 2f64.sqrt() / 3.0, max_relative = 1e-15);
        assert_relative_eq!(
            metric_ball_closed(&real_vector(&[0.9]), &xi, 1.0),
            2f64.sqrt() / (1.0 - 0.81),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            kernel_ball_closed_at(&real_vector(&[0.5]), 1.0),
            1.0 / PI / 0.75_f64.powi(2),
            max_relative = 1e-14
        );
    }

    #[test]
    fn block_standard_error_is_small_at_centre() {
        let model = disc_model();
        let se = model.standard_error(|m| m.kernel_at(&real_vector(&[0.0]))).unwrap();
        assert!(se > 0.0 && se < 0.002 / PI, "se {se}");
    }
}
