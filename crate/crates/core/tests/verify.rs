use sdlab::form::{assemble, DiscreteField, Grid};
use sdlab::kernels::Sampling;
use sdlab::model::{parse_matrix, DensityField, DomainGeometry, MatrixField, ProblemSpec, ScalarFn};
use sdlab::par::Exec;
use sdlab::sde::SimConfig;
use sdlab::verify::{
    avoidance_test, kernel_identity_test, martingale_test, occupation_test, random_fourier_batch,
    regularity_ratio_test, symmetry_test, IdentityConfig, MartingaleBudget, RegularityConfig, Verdict,
};

fn brownian_square() -> ProblemSpec {
    ProblemSpec::new(
        DomainGeometry::box_domain(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        MatrixField::Identity,
        DensityField::Const(1.0),
        3.0,
    )
    .unwrap()
}

fn gaussian_box(p: f64) -> ProblemSpec {
    ProblemSpec::new(
        DomainGeometry::box_domain(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        MatrixField::Identity,
        DensityField::Gauss,
        p,
    )
    .unwrap()
}

fn singular_ball() -> ProblemSpec {
    ProblemSpec::new(
        DomainGeometry::ball(vec![0.0, 0.0], 2.0).unwrap(),
        MatrixField::Identity,
        DensityField::RadialPow(1.0),
        2.5,
    )
    .unwrap()
}

#[test]
fn martingale_test_of_zero_function() {
    let r = martingale_test(
        &brownian_square(),
        &[0.5, 0.5],
        &[0.05, 0.1],
        &[ScalarFn::Zero],
        Sampling::new(200),
        &SimConfig::new(1e-2, 0.1, 1),
        MartingaleBudget::default(),
    )
    .unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.checks.iter().all(|c| c.statistic == 0.0));
}

#[test]
fn martingale_test_of_harmonic_function() {
    let plane = ProblemSpec::new(
        DomainGeometry::whole(vec![-20.0, -20.0], vec![20.0, 20.0]).unwrap(),
        MatrixField::Identity,
        DensityField::Const(1.0),
        3.0,
    )
    .unwrap();
    let r = martingale_test(
        &plane,
        &[0.3, 0.1],
        &[0.1, 0.2],
        &[ScalarFn::Saddle],
        Sampling::new(50_000),
        &SimConfig::new(1e-2, 0.2, 2),
        MartingaleBudget::default(),
    )
    .unwrap();
    assert!(r.passed(), "{r:#?}");
}

#[test]
fn martingale_test_on_singular_family() {
    let u = ScalarFn::AnnulusBump {
        r_mid: 0.6,
        half_width: 0.3,
        amp: 1.0,
    };
    let r = martingale_test(
        &singular_ball(),
        &[0.6, 0.0],
        &[0.1, 0.2],
        &[u],
        Sampling::new(10_000),
        &SimConfig::new(1e-3, 0.2, 3),
        MartingaleBudget::default(),
    )
    .unwrap();
    assert_ne!(r.verdict, Verdict::Fail, "{r:#?}");
    let again = martingale_test(
        &singular_ball(),
        &[0.6, 0.0],
        &[0.1, 0.2],
        &[ScalarFn::AnnulusBump {
            r_mid: 0.6,
            half_width: 0.3,
            amp: 1.0,
        }],
        Sampling::new(10_000).exec(Exec::Sequential),
        &SimConfig::new(1e-3, 0.2, 3),
        MartingaleBudget::default(),
    )
    .unwrap();
    assert_eq!(r.without_runtime(), again.without_runtime());
}

#[test]
fn kernel_identities_on_brownian_square() {
    let spec = brownian_square();
    let grid = Grid::new(&spec, vec![0.0, 0.0], vec![1.0, 1.0], 1.0 / 16.0).unwrap();
    let form = assemble(&spec, &grid).unwrap();
    let fns = vec![
        ScalarFn::SinProduct {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        },
        ScalarFn::Const(1.0),
    ];
    let r = kernel_identity_test(
        &spec,
        &form,
        &[0.5, 1.0, 5.0],
        &[0.0, 0.05, 0.1],
        &fns,
        &IdentityConfig::default(),
    )
    .unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!(r.max_statistic("semigroup") <= 1e-9);
    assert!(r.max_statistic("resolvent") <= 1e-9);
    assert!(r.checks.iter().any(|c| c.name.starts_with("submarkov")));
    assert!(r.checks.iter().any(|c| c.name.starts_with("laplace")));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["verdict"], "pass");
}

#[test]
fn identity_verdict_is_invariant_under_scaling() {
    let spec = gaussian_box(4.0);
    let grid = Grid::new(&spec, vec![-1.0, -1.0], vec![1.0, 1.0], 1.0 / 8.0).unwrap();
    let form = assemble(&spec, &grid).unwrap();
    let f = random_fourier_batch(1, 1, 2, 2);
    let g: Vec<ScalarFn> = f.iter().map(|f| f.clone().scaled(1e3)).collect();
    let a = kernel_identity_test(&spec, &form, &[1.0], &[0.05], &f, &IdentityConfig::default()).unwrap();
    let b = kernel_identity_test(&spec, &form, &[1.0], &[0.05], &g, &IdentityConfig::default()).unwrap();
    assert_eq!(a.verdict, b.verdict);
    for (x, y) in a.checks.iter().zip(&b.checks) {
        assert_eq!(x.passed, y.passed, "{}", x.name);
    }
}

#[test]
fn no_submarkov_check_for_full_matrices() {
    let spec = ProblemSpec::new(
        DomainGeometry::box_domain(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        parse_matrix("smooth2x2:2,1.5,0.5,1", 2).unwrap(),
        DensityField::Gauss,
        4.0,
    )
    .unwrap();
    let grid = Grid::new(&spec, vec![-1.0, -1.0], vec![1.0, 1.0], 1.0 / 8.0).unwrap();
    let form = assemble(&spec, &grid).unwrap();
    let r = kernel_identity_test(
        &spec,
        &form,
        &[1.0],
        &[0.05],
        &random_fourier_batch(2, 2, 2, 2),
        &IdentityConfig::default(),
    )
    .unwrap();
    assert!(r.passed());
    assert!(!r.checks.iter().any(|c| c.name.starts_with("submarkov")));
}

#[test]
fn symmetry_of_identical_and_disjoint_pairs() {
    let spec = gaussian_box(4.0);
    let grid = Grid::new(&spec, vec![-1.0, -1.0], vec![1.0, 1.0], 1.0 / 16.0).unwrap();
    let form = assemble(&spec, &grid).unwrap();
    let f = DiscreteField::from_fn(&grid, |x| (x[0] * 3.0).sin() * x[1]);
    let left = DiscreteField::from_fn(&grid, |x| if x[0] < -0.7 { 1.0 } else { 0.0 });
    let right = DiscreteField::from_fn(&grid, |x| if x[0] > 0.7 { 1.0 } else { 0.0 });
    let r = symmetry_test(&form, 0.01, 2, &[(f.clone(), f), (left, right)], 1e-13, 1e-9).unwrap();
    assert!(r.passed());
    assert_eq!(r.checks[0].statistic, 0.0);
    assert!(r.checks[1].statistic <= 1e-9);
}

#[test]
fn avoidance_without_zero_set_nearby() {
    let r = avoidance_test(
        &gaussian_box(4.0),
        &[0.0, 0.0],
        &[0.1, 0.05],
        Sampling::new(300),
        &SimConfig::new(1e-2, 0.5, 4),
        0.05,
    )
    .unwrap();
    assert!(r.passed());
    assert!(r
        .checks
        .iter()
        .filter(|c| c.name.starts_with("q["))
        .all(|c| c.statistic == 0.0));
}

#[test]
fn avoidance_on_singular_family() {
    let r = avoidance_test(
        &singular_ball(),
        &[1.0, 0.0],
        &[0.1, 0.03, 0.01],
        Sampling::new(5000),
        &SimConfig::new(1e-3, 1.0, 5),
        0.05,
    )
    .unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!(avoidance_test(
        &singular_ball(),
        &[1.0, 0.0],
        &[0.01, 0.1],
        Sampling::new(10),
        &SimConfig::new(1e-2, 1.0, 5),
        0.05
    )
    .is_err());
}

#[test]
fn occupation_of_shrinking_slabs() {
    let r = occupation_test(
        &singular_ball(),
        &[1.0, 0.0],
        0,
        0.0,
        &[0.2, 0.1, 0.05],
        1.0,
        Sampling::new(2000),
        &SimConfig::new(1e-3, 1.0, 6),
    )
    .unwrap();
    assert!(r.passed(), "{r:#?}");
}

fn regularity_config() -> RegularityConfig {
    RegularityConfig {
        lambda: 1.0,
        ball_center: vec![0.0, 0.0],
        ball_radius: 0.5,
        lo: vec![-1.0, -1.0],
        hi: vec![1.0, 1.0],
        cg_tol: 1e-12,
        growth: 1.2,
        exec: Exec::Parallel,
    }
}

#[test]
fn regularity_of_zero_field() {
    let r = regularity_ratio_test(
        &gaussian_box(4.0),
        &[1.0 / 8.0, 1.0 / 16.0],
        &[ScalarFn::Zero],
        &regularity_config(),
    )
    .unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!(r
        .checks
        .iter()
        .filter(|c| !c.name.starts_with("modulus"))
        .all(|c| c.statistic == 0.0));
}

#[test]
fn regularity_on_gaussian_family() {
    let mut fns = random_fourier_batch(9, 10, 2, 3);
    fns.push(ScalarFn::Indicator {
        lo: vec![-0.25, -0.25],
        hi: vec![0.25, 0.25],
    });
    let r = regularity_ratio_test(
        &gaussian_box(4.0),
        &[1.0 / 16.0, 1.0 / 32.0],
        &fns,
        &regularity_config(),
    )
    .unwrap();
    assert!(r.passed(), "{r:#?}");
}

#[test]
fn regularity_ball_must_avoid_the_zero_set() {
    let spec = ProblemSpec::new(
        DomainGeometry::box_domain(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        MatrixField::Identity,
        DensityField::RadialPow(1.0),
        4.0,
    )
    .unwrap();
    let err = regularity_ratio_test(
        &spec,
        &[1.0 / 8.0, 1.0 / 16.0],
        &[ScalarFn::Const(1.0)],
        &regularity_config(),
    );
    assert!(matches!(err, Err(sdlab::Error::Domain { .. })));
}
