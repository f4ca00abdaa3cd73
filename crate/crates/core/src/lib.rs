//! Numerical laboratory for Bergman kernels and Bergman metrics on bounded
//! domains in ℂⁿ.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: model domains given by defining functions, boundary
//!   projection, the normal/tangential split and the Levi form.
//! - [`quadrature`]: seeded Monte-Carlo sampling of domain interiors and Gram
//!   matrices of monomial bases.
//! - [`bergman`]: Gram models, numerical kernels, the extremal functional `M`,
//!   the Bergman metric (two independent routes) and ball closed forms.
//! - [`squeezing`]: squeezing-function bounds and the explicit maps used to
//!   transport near-boundary points to the centre of the ball.
//! - [`asymptotics`]: boundary predictors, envelope fits and the
//!   Bergman–Kobayashi squeezing sandwich.

pub mod asymptotics;
pub mod bergman;
pub mod domain;
pub mod quadrature;
pub mod rng;
pub mod squeezing;

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

/// Column vector in ℂⁿ; used both for points and for tangent vectors.
pub type CVector = DVector<Complex64>;
/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex64>;

pub use asymptotics::{
    basic_estimate_chain, check_squeezing_sandwich, fit_envelope, kobayashi_ball,
    kobayashi_sandwich_bounds, kobayashi_unit_ball, predict_metric, AsymptoticError,
    AsymptoticPrediction, EnvelopeFit, EnvelopeRegime, KappaConvention, NormalTermConvention,
    SandwichVerdict,
};
pub use bergman::{
    kernel_ball_closed, kernel_ball_closed_at, kernel_exact, m_ball_closed, metric_exact, metric_ball_closed, sandwich_bounds,
    BergmanError, GramModel, GramSettings, MConvention, MVariant, MetricMethod, MetricSample,
};
pub use domain::{
    levi_form, project_to_boundary, split_vector, BoundaryFrame, DomainError, DomainKind,
    DomainSpec,
};
pub use quadrature::{
    build_gram, sample_domain, MonomialBasis, QuadratureError, SampleSet, SamplePlan, SamplingMode,
};
pub use squeezing::{
    eta_tilde, image_ball_radius, mobius_phi_r, mobius_phi_r_inverse, osculation_margin,
    pushforward_lambda, pushforward_lambda_as_printed, squeezing_exact_ball,
    squeezing_lower_bound, squeezing_sandwich_ratio, stretch_psi, SqueezingError,
    SqueezingEstimate, SqueezingSource, SQUEEZING_FLOOR,
};

/// Builds a [`CVector`] from real parts.
pub fn real_vector(values: &[f64]) -> CVector {
    CVector::from_iterator(values.len(), values.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// Unit coordinate vector `e_k` in ℂⁿ.
pub fn unit_vector(n: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[k] = Complex64::new(1.0, 0.0);
    v
}
