use std::f64::consts::PI;

use bergman_lab::{
    build_gram, kernel_exact, metric_exact, project_to_boundary, squeezing_lower_bound, squeezing_sandwich_ratio,
    split_vector, CVector, Complex64, DomainSpec, GramSettings, MVariant, MonomialBasis, SamplePlan,
};

fn point(values: &[(f64, f64)]) -> CVector {
    CVector::from_iterator(values.len(), values.iter().map(|&(re, im)| Complex64::new(re, im)))
}

#[test]
fn scaled_ball_kernel_and_metric() {
    let domain = DomainSpec::ball(2, 2.0).unwrap();
    let plan = SamplePlan::new(400_000, 17).with_blocks(8);
    let model = build_gram(&domain, &MonomialBasis::new(2, 6), &plan, GramSettings::default()).unwrap();
    let z0 = CVector::zeros(2);
    let k = model.kernel_at(&z0).unwrap();
    assert!((k / (2.0 / (PI * PI * 16.0)) - 1.0).abs() < 0.02, "K(0) = {k}");

    // The truncated model is accurate well inside the ball.
    let z = point(&[(0.3, 0.1), (-0.2, 0.4)]);
    let xi = point(&[(1.0, 0.0), (0.5, -0.5)]);
    let metric = model.metric_extremal(&z, &xi, MVariant::Constrained).unwrap().metric;
    let exact = metric_exact(&domain, &z, &xi).unwrap();
    assert!((metric / exact - 1.0).abs() < 0.02, "{metric} vs {exact}");
}

#[test]
fn ellipsoid_model_against_its_linear_image() {
    let domain = DomainSpec::ellipsoid(&[1.0, 4.0]).unwrap();
    let plan = SamplePlan::new(400_000, 5).with_blocks(8);
    let model = build_gram(&domain, &MonomialBasis::new(2, 6), &plan, GramSettings::default()).unwrap();
    for z in [CVector::zeros(2), point(&[(0.2, 0.0), (0.0, 0.1)])] {
        let k = model.kernel_at(&z).unwrap();
        let exact = kernel_exact(&domain, &z).unwrap();
        assert!((k / exact - 1.0).abs() < 0.02, "K = {k}, exact {exact}");
    }
    assert!((kernel_exact(&domain, &CVector::zeros(2)).unwrap() - 8.0 / (PI * PI)).abs() < 1e-12);
}

#[test]
fn boundary_split_and_squeezing_near_the_ellipsoid_boundary() {
    let domain = DomainSpec::ellipsoid(&[1.0, 4.0]).unwrap();
    let (r1, r2) = domain.centered_ball_radii();
    assert_eq!((r1, r2), (0.5, 1.0));
    assert_eq!(squeezing_sandwich_ratio(r1, r2).unwrap(), 0.5);
    for d in [0.05, 0.1, 0.3] {
        let z = domain.normal_approach_point(d).unwrap();
        let frame = project_to_boundary(&domain, &z).unwrap();
        assert!(frame.distance <= d && frame.distance > d - 1e-12);
        assert!(domain.defining(&frame.foot).abs() < 1e-12);
        let xi = point(&[(0.6, 0.2), (-0.3, 0.7)]);
        let (normal, tangential) = split_vector(&frame, &xi);
        assert!(normal.dotc(&tangential).norm() < 1e-12);
        assert!((&normal + &tangential - &xi).norm() < 1e-12);
        let bound = squeezing_lower_bound(-frame.distance, 1.0, 4).unwrap();
        assert!(bound <= domain.exact_squeezing().unwrap());
    }
}
