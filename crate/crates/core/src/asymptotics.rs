//! Boundary asymptotics of the Bergman metric as executable checks.
//!
//! The predictor is `κ·√(𝔏(ξ_T)/d + N/(4d²))` with `d = |δ(z)|`. Two
//! conventions are exposed because the uncorrected constants do not survive the
//! ball closed forms:
//!
//! - `κ`: `n + 1` (uncorrected), or `√(n + 1)` (what the ball forces);
//! - `N`: `‖ξ_N‖` (uncorrected), or `‖ξ_N‖²`.
//!
//! Reports carry both so the uncorrected forms stay visible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{levi_form, split_vector, BoundaryFrame, DomainError, DomainSpec};
use crate::squeezing::SQUEEZING_FLOOR;
use crate::CVector;

/// Relative slack used when a sandwich is expected to hold with equality.
pub const EQUALITY_SLACK: f64 = 1e-12;

/// Default tolerance on envelope-constant growth toward the boundary.
pub const DEFAULT_STABILITY_TOLERANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticError {
    #[error("boundary distance is zero")]
    ZeroDistance,
    #[error("no envelope samples")]
    EmptySamples,
    #[error("envelope sample ({d}, {ratio}) must have d > 0 and ratio > 0")]
    InvalidSample { d: f64, ratio: f64 },
    #[error("invalid radii: r1 = {r1}, r2 = {r2} (need 0 < r1 <= r2)")]
    BadRadii { r1: f64, r2: f64 },
    #[error("squeezing value {0} is outside (0, 1]")]
    BadSqueezing(f64),
    #[error("Kobayashi bounds ({0}, {1}) are not an interval of non-negative values")]
    BadKobayashiBounds(f64, f64),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum KappaConvention {
    /// `κ = n + 1`.
    AsPrinted,
    /// `κ = √(n + 1)`.
    #[default]
    Oracle,
}

impl KappaConvention {
    pub fn kappa(self, n: usize) -> f64 {
        match self {
            KappaConvention::AsPrinted => n as f64 + 1.0,
            KappaConvention::Oracle => (n as f64 + 1.0).sqrt(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            KappaConvention::AsPrinted => "as-printed",
            KappaConvention::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum NormalTermConvention {
    /// `‖ξ_N‖`.
    AsPrinted,
    /// `‖ξ_N‖²`.
    #[default]
    Squared,
}

impl NormalTermConvention {
    pub fn tag(self) -> &'static str {
        match self {
            NormalTermConvention::AsPrinted => "as-printed",
            NormalTermConvention::Squared => "squared",
        }
    }
}

/// `κ·√(levi/d + N/(4d²))` with `d = |δ(z)|` taken from the frame.
pub fn predict_metric(
    frame: &BoundaryFrame,
    xi: &CVector,
    levi: f64,
    kappa: KappaConvention,
    normal_term: NormalTermConvention,
) -> Result<f64, AsymptoticError> {
    let d = frame.distance;
    if d == 0.0 {
        return Err(AsymptoticError::ZeroDistance);
    }
    if xi.norm() == 0.0 {
        return Ok(0.0);
    }
    let (xi_n, _) = split_vector(frame, xi);
    let normal = match normal_term {
        NormalTermConvention::AsPrinted => xi_n.norm(),
        NormalTermConvention::Squared => xi_n.norm_squared(),
    };
    Ok(kappa.kappa(frame.dimension()) * (levi / d + normal / (4.0 * d * d)).sqrt())
}

/// A prediction together with the data it was assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticPrediction {
    pub frame: BoundaryFrame,
    pub normal_part: CVector,
    pub tangential_part: CVector,
    pub levi: f64,
    pub predicted: f64,
    pub kappa: KappaConvention,
    pub normal_term: NormalTermConvention,
}

impl AsymptoticPrediction {
    /// Splits `ξ` at the frame, evaluates the Levi form at the foot and predicts.
    pub fn new(
        domain: &DomainSpec,
        frame: &BoundaryFrame,
        xi: &CVector,
        kappa: KappaConvention,
        normal_term: NormalTermConvention,
    ) -> Result<Self, AsymptoticError> {
        let (normal_part, tangential_part) = split_vector(frame, xi);
        let levi = levi_form(domain, &frame.foot, &tangential_part)?;
        let predicted = predict_metric(frame, xi, levi, kappa, normal_term)?;
        Ok(Self { frame: frame.clone(), normal_part, tangential_part, levi, predicted, kappa, normal_term })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeRegime {
    /// `|ratio − 1| ≤ C√d`.
    Sqrt,
    /// `|ratio − 1| ≤ Cd`.
    #[default]
    Linear,
}

impl EnvelopeRegime {
    fn exponent(self) -> f64 {
        match self {
            EnvelopeRegime::Sqrt => 0.5,
            EnvelopeRegime::Linear => 1.0,
        }
    }
}

/// Worst-case envelope constant of `ratio = numerical / predicted` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// `(d, ratio)` sorted by increasing `d`.
    pub samples: Vec<(f64, f64)>,
    pub regime: EnvelopeRegime,
    /// `max |ratio − 1| / d^p` over all samples.
    pub constant: f64,
    /// The same maximum over the smaller-d half of the samples.
    pub small_half_constant: f64,
    /// The same maximum over the remaining, larger-d samples.
    pub large_half_constant: f64,
    pub tolerance: f64,
    /// `constant` is finite and the smaller-d half does not exceed the
    /// larger-d half by more than `tolerance`.
    pub pass: bool,
}

impl EnvelopeFit {
    /// `|ratio_i − 1| ≤ C·d_i^p` for every sample.
    pub fn holds_with(&self, constant: f64) -> bool {
        let p = self.regime.exponent();
        self.samples.iter().all(|&(d, ratio)| (ratio - 1.0).abs() <= constant * d.powf(p) * (1.0 + 1e-12))
    }
}

pub fn fit_envelope(samples: &[(f64, f64)], regime: EnvelopeRegime) -> Result<EnvelopeFit, AsymptoticError> {
    fit_envelope_with_tolerance(samples, regime, DEFAULT_STABILITY_TOLERANCE)
}

pub fn fit_envelope_with_tolerance(
    samples: &[(f64, f64)],
    regime: EnvelopeRegime,
    tolerance: f64,
) -> Result<EnvelopeFit, AsymptoticError> {
    if samples.is_empty() {
        return Err(AsymptoticError::EmptySamples);
    }
    if let Some(&(d, ratio)) = samples.iter().find(|(d, r)| !(*d > 0.0 && *r > 0.0)) {
        return Err(AsymptoticError::InvalidSample { d, ratio });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let p = regime.exponent();
    let worst = |s: &[(f64, f64)]| s.iter().map(|&(d, r)| (r - 1.0).abs() / d.powf(p)).fold(0.0, f64::max);
    let split = sorted.len().div_ceil(2);
    let constant = worst(&sorted);
    let small = worst(&sorted[..split]);
    let large = worst(&sorted[split..]);
    let stable = split == sorted.len() || small <= (1.0 + tolerance) * large;
    Ok(EnvelopeFit {
        samples: sorted,
        regime,
        constant,
        small_half_constant: small,
        large_half_constant: large,
        tolerance,
        pass: constant.is_finite() && stable,
    })
}

/// Closed-form quotients `(√(r2^{2n}/r1^{n+2}), √(r1^{2n}/r2^{n+2}))` of the
/// basic estimate, without the `κ` prefactor.
pub fn basic_estimate_chain(r1: f64, r2: f64, n: usize) -> Result<(f64, f64), AsymptoticError> {
    if !(r1 > 0.0 && r1 <= r2) {
        return Err(AsymptoticError::BadRadii { r1, r2 });
    }
    let (a, b) = (2 * n as i32, n as i32 + 2);
    Ok(((r2.powi(a) / r1.powi(b)).sqrt(), (r1.powi(a) / r2.powi(b)).sqrt()))
}

/// Kobayashi metric of `B(0, r)` at the centre: `‖ξ‖/r`.
pub fn kobayashi_ball(r: f64, xi: &CVector) -> f64 {
    xi.norm() / r
}

/// Kobayashi metric of the unit ball at `z`:
/// `√(‖ξ‖²/(1 − ‖z‖²) + |⟨ξ, z⟩|²/(1 − ‖z‖²)²)`.
pub fn kobayashi_unit_ball(z: &CVector, xi: &CVector) -> f64 {
    let t = 1.0 - z.norm_squared();
    let inner = z.dotc(xi).norm_sqr();
    (xi.norm_squared() / t + inner / (t * t)).sqrt()
}

/// `(‖ξ‖/r2, ‖ξ‖/r1)` for `B(0, r1) ⊂ Ω ⊂ B(0, r2)`.
pub fn kobayashi_sandwich_bounds(r1: f64, r2: f64, xi: &CVector) -> Result<(f64, f64), AsymptoticError> {
    if !(r1 > 0.0 && r1 <= r2) {
        return Err(AsymptoticError::BadRadii { r1, r2 });
    }
    Ok((kobayashi_ball(r2, xi), kobayashi_ball(r1, xi)))
}

/// Outcome of one side-by-side evaluation of the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichSides {
    pub lower: f64,
    pub upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

impl SandwichSides {
    fn evaluate(bergman: f64, lower: f64, upper: f64) -> Self {
        let slack = EQUALITY_SLACK * bergman.abs().max(lower.abs()).max(upper.abs());
        Self { lower, upper, lower_holds: lower <= bergman + slack, upper_holds: bergman <= upper + slack }
    }

    pub fn holds(&self) -> bool {
        self.lower_holds && self.upper_holds
    }
}

/// Verdict of `κ·d^K·s^{(n+2)/2} ≤ d_B ≤ κ·d^K·s^{−(n+2)/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichVerdict {
    pub bergman: f64,
    pub squeezing: f64,
    pub convention: KappaConvention,
    pub oracle: SandwichSides,
    pub as_printed: SandwichSides,
    /// Oracle `κ` with exponent `n + 1`, the exponent the ball closed forms give.
    pub derived_exponent: SandwichSides,
    /// The squeezing value sits at the floor, so the verdict is meaningless.
    pub invalid: bool,
}

impl SandwichVerdict {
    pub fn selected(&self) -> &SandwichSides {
        match self.convention {
            KappaConvention::AsPrinted => &self.as_printed,
            KappaConvention::Oracle => &self.oracle,
        }
    }

    pub fn pass(&self) -> bool {
        !self.invalid && self.selected().holds()
    }
}

pub fn check_squeezing_sandwich(
    bergman: f64,
    kobayashi_bounds: (f64, f64),
    squeezing: f64,
    n: usize,
    convention: KappaConvention,
) -> Result<SandwichVerdict, AsymptoticError> {
    if !(squeezing > 0.0 && squeezing <= 1.0) {
        return Err(AsymptoticError::BadSqueezing(squeezing));
    }
    let (k_lo, k_hi) = kobayashi_bounds;
    if !(k_lo >= 0.0 && k_lo <= k_hi) {
        return Err(AsymptoticError::BadKobayashiBounds(k_lo, k_hi));
    }
    let exponent = (n as f64 + 2.0) / 2.0;
    let sides = |kappa: f64, exponent: f64| {
        SandwichSides::evaluate(
            bergman,
            kappa * k_lo * squeezing.powf(exponent),
            kappa * k_hi * squeezing.powf(-exponent),
        )
    };
    Ok(SandwichVerdict {
        bergman,
        squeezing,
        convention,
        oracle: sides(KappaConvention::Oracle.kappa(n), exponent),
        as_printed: sides(KappaConvention::AsPrinted.kappa(n), exponent),
        derived_exponent: sides(KappaConvention::Oracle.kappa(n), n as f64 + 1.0),
        invalid: squeezing <= SQUEEZING_FLOOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::metric_ball_closed;
    use crate::domain::project_to_boundary;
    use crate::{real_vector, unit_vector, Complex64};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ball_frame(n: usize, d: f64) -> (DomainSpec, BoundaryFrame) {
        let ball = DomainSpec::ball(n, 1.0).unwrap();
        let mut z = CVector::zeros(n);
        z[0] = Complex64::new(1.0 - d, 0.0);
        let frame = project_to_boundary(&ball, &z).unwrap();
        (ball, frame)
    }

    #[test]
    fn disc_normal_prediction() {
        let (_, frame) = ball_frame(1, 0.1);
        let xi = real_vector(&[1.0]);
        let p = predict_metric(&frame, &xi, 0.0, KappaConvention::Oracle, NormalTermConvention::Squared).unwrap();
        assert_relative_eq!(p, 2f64.sqrt() * 5.0, max_relative = 1e-12);
        let exact = metric_ball_closed(&frame.point, &xi, 1.0);
        assert_relative_eq!(exact, 7.443229275647866, max_relative = 1e-12);
        assert_relative_eq!(exact / p, 1.0 / (1.0 - 0.05), max_relative = 1e-12);
    }

    #[test]
    fn ball_tangential_prediction() {
        let (ball, frame) = ball_frame(2, 0.1);
        let xi = unit_vector(2, 1);
        let pred = AsymptoticPrediction::new(&ball, &frame, &xi, KappaConvention::Oracle, NormalTermConvention::Squared)
            .unwrap();
        assert_relative_eq!(pred.levi, 0.5, max_relative = 1e-12);
        assert_relative_eq!(pred.predicted, 3f64.sqrt() * 5f64.sqrt(), max_relative = 1e-12);
        let exact = metric_ball_closed(&frame.point, &xi, 1.0);
        assert_relative_eq!(exact, 3f64.sqrt() / (1.0 - 0.81f64).sqrt(), max_relative = 1e-12);
        assert!((exact / pred.predicted - 1.0).abs() <= 0.1);
        let zero = predict_metric(&frame, &CVector::zeros(2), 0.5, KappaConvention::Oracle, NormalTermConvention::Squared);
        assert_eq!(zero.unwrap(), 0.0);
    }

    #[test]
    fn zero_distance_is_rejected() {
        let ball = DomainSpec::ball(2, 1.0).unwrap();
        let p = unit_vector(2, 0);
        let frame = BoundaryFrame::from_foot(&ball, p.clone(), p);
        let err = predict_metric(&frame, &unit_vector(2, 0), 0.0, KappaConvention::Oracle, NormalTermConvention::Squared);
        assert_eq!(err, Err(AsymptoticError::ZeroDistance));
    }

    #[test]
    fn envelope_examples() {
        let fit = fit_envelope(&[(0.05, 1.0), (0.1, 1.0), (0.2, 1.0)], EnvelopeRegime::Linear).unwrap();
        assert_eq!(fit.constant, 0.0);
        assert!(fit.pass);

        let disc: Vec<(f64, f64)> = [0.05, 0.1, 0.2].iter().map(|&d| (d, 1.0 / (1.0 - d / 2.0))).collect();
        let fit = fit_envelope(&disc, EnvelopeRegime::Linear).unwrap();
        // |ratio - 1|/d = 1/(2 - d), largest at d = 0.2
        assert_relative_eq!(fit.constant, 1.0 / 1.8, max_relative = 1e-12);
        assert!(fit.pass);
        assert!(fit.holds_with(fit.constant));

        let bad: Vec<(f64, f64)> = [0.05f64, 0.1, 0.2].iter().map(|&d| (d, 1.0 + d.sqrt())).collect();
        let fit = fit_envelope(&bad, EnvelopeRegime::Linear).unwrap();
        assert!(!fit.pass);
        // the same samples fit the square-root regime with a constant C = 1
        let fit = fit_envelope(&bad, EnvelopeRegime::Sqrt).unwrap();
        assert!(fit.pass);
        assert_relative_eq!(fit.constant, 1.0, max_relative = 1e-12);

        assert_eq!(fit_envelope(&[], EnvelopeRegime::Linear), Err(AsymptoticError::EmptySamples));
        assert!(fit_envelope(&[(0.0, 1.0)], EnvelopeRegime::Linear).is_err());
    }

    #[test]
    fn basic_estimate_examples() {
        assert_eq!(basic_estimate_chain(1.0, 1.0, 3).unwrap(), (1.0, 1.0));
        let (up, lo) = basic_estimate_chain(0.99, 1.01, 2).unwrap();
        assert_relative_eq!(up, (1.01f64 / 0.99).powi(2), max_relative = 1e-14);
        assert_relative_eq!(lo, (0.99f64 / 1.01).powi(2), max_relative = 1e-14);
        assert!((up - 1.0408).abs() < 1e-4 && (lo - 0.9608).abs() < 1e-4);
        assert!(basic_estimate_chain(1.1, 1.0, 2).is_err());
    }

    #[test]
    fn basic_estimate_taylor_bound() {
        for n in 1..=4 {
            for c in [0.1, 0.25, 0.5] {
                let bound = (3.0 * n as f64 + 2.0) * c / 2.0 + 1.0;
                for k in 1..=100 {
                    let d = 0.1 * k as f64 / 100.0;
                    if c * d >= 1.0 {
                        continue;
                    }
                    let (up, lo) = basic_estimate_chain(1.0 - c * d, 1.0 + c * d, n).unwrap();
                    assert!(lo <= 1.0 && 1.0 <= up);
                    assert!(up <= 1.0 + bound * d, "n={n} C={c} d={d}: {up}");
                    assert!(lo >= 1.0 - bound * d, "n={n} C={c} d={d}: {lo}");
                }
            }
        }
    }

    #[test]
    fn kobayashi_examples() {
        assert_eq!(kobayashi_ball(1.0, &unit_vector(2, 0)), 1.0);
        assert_eq!(kobayashi_ball(2.0, &unit_vector(2, 0)), 0.5);
        assert_eq!(kobayashi_ball(1.0, &CVector::zeros(2)), 0.0);
        assert_eq!(kobayashi_sandwich_bounds(0.5, 1.0, &unit_vector(2, 1)).unwrap(), (1.0, 2.0));
        assert_eq!(kobayashi_sandwich_bounds(0.7, 0.7, &unit_vector(2, 1)).unwrap(), (1.0 / 0.7, 1.0 / 0.7));
        assert!(kobayashi_sandwich_bounds(1.0, 0.5, &unit_vector(2, 1)).is_err());
        assert_relative_eq!(kobayashi_unit_ball(&real_vector(&[0.9, 0.0]), &unit_vector(2, 0)), 1.0 / 0.19, max_relative = 1e-14);
    }

    #[test]
    fn squeezing_sandwich_on_the_ball() {
        for n in [1, 2, 3] {
            let xi = unit_vector(n, 0);
            let db = (n as f64 + 1.0).sqrt();
            let v = check_squeezing_sandwich(db, (1.0, 1.0), 1.0, n, KappaConvention::Oracle).unwrap();
            assert!(v.pass());
            assert_relative_eq!(v.oracle.lower, db, max_relative = 1e-15);
            assert!(!v.as_printed.lower_holds);
            assert!(v.as_printed.upper_holds);
            assert_relative_eq!(kobayashi_ball(1.0, &xi), 1.0);
        }
        let v = check_squeezing_sandwich(1.0, (1.0, 1.0), SQUEEZING_FLOOR, 2, KappaConvention::Oracle).unwrap();
        assert!(v.invalid && !v.pass());
        assert!(check_squeezing_sandwich(1.0, (1.0, 1.0), 0.0, 2, KappaConvention::Oracle).is_err());
        assert!(check_squeezing_sandwich(1.0, (1.0, 1.0), 1.5, 2, KappaConvention::Oracle).is_err());
    }

    proptest! {
        #[test]
        fn prediction_is_homogeneous(d in 0.05f64..0.3, a in proptest::collection::vec(-1.0f64..1.0, 4),
                                     re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let (ball, frame) = ball_frame(2, d);
            let xi = CVector::from_vec(vec![Complex64::new(a[0], a[1]), Complex64::new(a[2], a[3])]);
            let s = Complex64::new(re, im);
            for normal in [NormalTermConvention::Squared, NormalTermConvention::AsPrinted] {
                let base = AsymptoticPrediction::new(&ball, &frame, &xi, KappaConvention::Oracle, normal).unwrap();
                let scaled = AsymptoticPrediction::new(&ball, &frame, &(&xi * s), KappaConvention::Oracle, normal).unwrap();
                if normal == NormalTermConvention::Squared {
                    prop_assert!((scaled.predicted - s.norm() * base.predicted).abs() <= 1e-12 * scaled.predicted.max(1e-300));
                }
                prop_assert!(scaled.predicted >= 0.0);
            }
        }
    }
}
