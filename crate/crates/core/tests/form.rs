use std::f64::consts::PI;

use proptest::prelude::*;
use sdlab::form::{
    assemble, assemble_with, discrete_norms, energy, energy_1, evolve_semigroup, m_inner, resolvent_solve,
    write_field_csv, write_stiffness_coo, DiscreteField, FormHeader, Grid, Region,
};
use sdlab::model::{parse_matrix, BoundingBox, DensityField, DomainGeometry, MatrixField, ProblemSpec, ScalarFn};
use sdlab::par::Exec;

fn unit_square(density: DensityField, matrix: MatrixField) -> ProblemSpec {
    ProblemSpec::new(
        DomainGeometry::box_domain(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        matrix,
        density,
        3.0,
    )
    .unwrap()
}

fn brownian() -> ProblemSpec {
    unit_square(DensityField::Const(1.0), MatrixField::Identity)
}

fn unit_grid(spec: &ProblemSpec, h: f64) -> Grid {
    Grid::new(spec, vec![0.0, 0.0], vec![1.0, 1.0], h).unwrap()
}

#[test]
fn five_point_stencil_on_three_by_three_interior() {
    let spec = brownian();
    let grid = unit_grid(&spec, 0.25);
    let form = assemble(&spec, &grid).unwrap();
    assert_eq!(form.n(), 9);
    // hand-assembled: slot (i, j) -> i + 3 j
    let dense = form.stiffness().to_dense();
    for a in 0..9usize {
        let (ai, aj) = (a % 3, a / 3);
        for b in 0..9usize {
            let (bi, bj) = (b % 3, b / 3);
            let manhattan = ai.abs_diff(bi) + aj.abs_diff(bj);
            let expected = match manhattan {
                0 => 4.0,
                1 => -1.0,
                _ => 0.0,
            };
            assert_eq!(dense[a * 9 + b], expected, "entry ({a}, {b})");
        }
    }
    assert!(form.mass().iter().all(|&m| m == 0.0625));
}

#[test]
fn lumped_mass_is_density_times_cell_volume() {
    let spec = ProblemSpec::new(
        DomainGeometry::box_domain(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        MatrixField::Identity,
        DensityField::Gauss,
        3.0,
    )
    .unwrap();
    let grid = Grid::new(&spec, vec![-1.0, -1.0], vec![1.0, 1.0], 0.125).unwrap();
    let form = assemble(&spec, &grid).unwrap();
    for (slot, &node) in grid.interior_nodes().iter().enumerate() {
        let x = grid.node_coords(node);
        assert_eq!(form.mass()[slot], (-(x[0] * x[0] + x[1] * x[1])).exp() * 0.125 * 0.125);
    }
}

#[test]
fn constants_are_locally_in_the_kernel() {
    let spec = unit_square(DensityField::Gauss, parse_matrix("smooth2x2:2,1.5,0.4,2", 2).unwrap());
    let grid = unit_grid(&spec, 1.0 / 16.0);
    let form = assemble(&spec, &grid).unwrap();
    let s1 = form.stiffness().mul(Exec::Sequential, &vec![1.0; form.n()]);
    let mut checked = 0;
    for (slot, &node) in grid.interior_nodes().iter().enumerate() {
        let full = (0..2).all(|axis| {
            [true, false].iter().all(|&fwd| {
                grid.neighbor(node, axis, fwd)
                    .and_then(|n| grid.neighbor(n, 1 - axis, true).zip(grid.neighbor(n, 1 - axis, false)))
                    .is_some_and(|(a, b)| grid.is_interior(a) && grid.is_interior(b))
            })
        });
        if full {
            assert!(s1[slot].abs() < 1e-13, "row {slot}: {}", s1[slot]);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn grid_must_have_enough_cells() {
    let spec = brownian();
    assert!(Grid::new(&spec, vec![0.0, 0.0], vec![1.0, 1.0], 0.5).is_err());
    assert!(Grid::new(&spec, vec![0.0, 0.0], vec![1.0, 1.0], 0.3).is_err());
    assert!(Grid::new(&spec, vec![0.0, 0.0], vec![2.0, 1.0], 0.25).is_err());
}

#[test]
fn resolvent_of_zero_is_zero() {
    let spec = brownian();
    let grid = unit_grid(&spec, 0.125);
    let form = assemble(&spec, &grid).unwrap();
    let u = resolvent_solve(&form, 1.0, &DiscreteField::zeros(&grid), 1e-10).unwrap();
    assert!(u.values().iter().all(|&v| v == 0.0));
}

#[test]
fn resolvent_of_a_discrete_eigenvector() {
    let spec = brownian();
    let h = 1.0 / 16.0;
    let grid = unit_grid(&spec, h);
    let form = assemble(&spec, &grid).unwrap();
    let f = DiscreteField::sample(
        &grid,
        &ScalarFn::SinProduct {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        },
    );
    // eigenvalue of the five-point Laplacian for the lowest sine mode
    let theta = 2.0 * (2.0 - 2.0 * (PI * h).cos()) / (h * h);
    for lambda in [0.1, 1.0, 30.0] {
        let u = resolvent_solve(&form, lambda, &f, 1e-13).unwrap();
        assert!(u.max_diff(&f.scaled(1.0 / (lambda + theta))).unwrap() < 1e-12);
    }
}

#[test]
fn resolvent_converges_at_second_order() {
    let spec = brownian();
    let f = ScalarFn::SinProduct {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let err = |h: f64| {
        let grid = unit_grid(&spec, h);
        let form = assemble(&spec, &grid).unwrap();
        let u = resolvent_solve(&form, 1.0, &DiscreteField::sample(&grid, &f), 1e-13).unwrap();
        u.max_diff(&DiscreteField::sample(&grid, &f).scaled(1.0 / (1.0 + 2.0 * PI * PI)))
            .unwrap()
    };
    let ratio = err(1.0 / 16.0) / err(1.0 / 32.0);
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn semigroup_at_zero_and_single_step() {
    let spec = unit_square(DensityField::Gauss, MatrixField::Identity);
    let grid = unit_grid(&spec, 0.125);
    let form = assemble(&spec, &grid).unwrap();
    let f = DiscreteField::from_fn(&grid, |x| x[0] * (1.0 - x[1]));
    assert_eq!(evolve_semigroup(&form, 0.0, &f, 5).unwrap(), f);
    let t = 0.2;
    let one = evolve_semigroup(&form, t, &f, 1).unwrap();
    let r = resolvent_solve(&form, 1.0 / t, &f, 1e-10).unwrap().scaled(1.0 / t);
    assert!(one.max_diff(&r).unwrap() < 1e-9);
}

#[test]
fn semigroup_composes() {
    let spec = unit_square(DensityField::Gauss, MatrixField::Identity);
    let grid = unit_grid(&spec, 0.0625);
    let form = assemble(&spec, &grid).unwrap();
    let f = DiscreteField::from_fn(&grid, |x| (3.0 * x[0]).sin() + x[1]);
    let whole = evolve_semigroup(&form, 0.3, &f, 6).unwrap();
    let split = evolve_semigroup(&form, 0.1, &evolve_semigroup(&form, 0.2, &f, 4).unwrap(), 2).unwrap();
    assert!(whole.max_diff(&split).unwrap() < 1e-9);
}

#[test]
fn energy_vanishes_on_interior_constants() {
    let spec = brownian();
    let grid = unit_grid(&spec, 0.125);
    let form = assemble(&spec, &grid).unwrap();
    let ones = DiscreteField::from_fn(&grid, |_| 1.0);
    // the constant is cut off at the boundary, so only interior faces cancel
    let plateau = DiscreteField::from_fn(&grid, |x| {
        if (0.25..=0.75).contains(&x[0]) && (0.25..=0.75).contains(&x[1]) {
            1.0
        } else {
            0.0
        }
    });
    let inner = DiscreteField::from_fn(&grid, |x| {
        if (0.375..=0.625).contains(&x[0]) && (0.375..=0.625).contains(&x[1]) {
            1.0
        } else {
            0.0
        }
    });
    assert_eq!(energy(&form, &plateau, &inner).unwrap(), 0.0);
    assert!(energy(&form, &ones, &ones).unwrap() > 0.0);
    assert_eq!(
        energy_1(&form, &ones, &ones).unwrap(),
        energy(&form, &ones, &ones).unwrap() + m_inner(&form, &ones, &ones).unwrap()
    );
}

#[test]
fn mismatched_fields_are_rejected() {
    let spec = brownian();
    let a = unit_grid(&spec, 0.125);
    let b = unit_grid(&spec, 0.25);
    let form = assemble(&spec, &a).unwrap();
    assert!(matches!(
        energy(&form, &DiscreteField::zeros(&b), &DiscreteField::zeros(&a)),
        Err(sdlab::Error::Shape(_))
    ));
}

fn big_grid() -> (ProblemSpec, Grid) {
    let spec = ProblemSpec::new(
        DomainGeometry::box_domain(vec![-1.0, -1.0], vec![2.0, 2.0]).unwrap(),
        MatrixField::Identity,
        DensityField::Const(1.0),
        4.0,
    )
    .unwrap();
    let grid = Grid::new(&spec, vec![-1.0, -1.0], vec![2.0, 2.0], 0.25).unwrap();
    (spec, grid)
}

#[test]
fn norms_of_constants_and_indicators() {
    let (spec, grid) = big_grid();
    let form = assemble(&spec, &grid).unwrap();
    let region = Region::Box(BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
    let c = DiscreteField::from_fn(&grid, |_| -0.7);
    let n = discrete_norms(&form, &c, &region, 4.0, 0.5).unwrap();
    assert_eq!(n.holder, 0.7);

    let node = grid.node_at(&[0.5, 0.5]).unwrap();
    let slot = grid.interior_slot(node).unwrap();
    let mut ind = DiscreteField::zeros(&grid);
    ind.values_mut()[slot] = 1.0;
    let n = discrete_norms(&form, &ind, &region, 4.0, 0.5).unwrap();
    assert!((n.lp_mu - form.mass()[slot].powf(0.25)).abs() < 1e-15);
    assert_eq!(n.l1_mu, form.mass()[slot]);
}

#[test]
fn holder_quotient_of_a_coordinate() {
    let (spec, grid) = big_grid();
    let form = assemble(&spec, &grid).unwrap();
    let region = Region::Box(BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
    let u = DiscreteField::from_fn(&grid, |x| x[0]);
    // brute force over all node pairs in the region
    let pts: Vec<Vec<f64>> = (0..grid.n_nodes())
        .map(|n| grid.node_coords(n))
        .filter(|x| region.contains(x))
        .collect();
    let mut q = 0.0f64;
    for a in &pts {
        for b in &pts {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            if d > 0.0 {
                q = q.max((a[0] - b[0]).abs() / d.sqrt());
            }
        }
    }
    assert_eq!(q, 1.0);
    let n = discrete_norms(&form, &u, &region, 4.0, 0.5).unwrap();
    assert!((n.holder - (q + 1.0)).abs() < 1e-14);
}

#[test]
fn empty_region_is_a_domain_error() {
    let (spec, grid) = big_grid();
    let form = assemble(&spec, &grid).unwrap();
    let region = Region::Ball {
        center: vec![0.1, 0.1],
        radius: 0.01,
    };
    assert!(matches!(
        discrete_norms(&form, &DiscreteField::zeros(&grid), &region, 4.0, 0.5),
        Err(sdlab::Error::Domain { .. })
    ));
}

#[test]
fn exports() {
    let spec = brownian();
    let grid = unit_grid(&spec, 0.25);
    let form = assemble(&spec, &grid).unwrap();
    let mut coo = Vec::new();
    write_stiffness_coo(&form, &mut coo).unwrap();
    let coo = String::from_utf8(coo).unwrap();
    assert_eq!(coo.lines().count(), form.stiffness().nnz());
    assert!(coo.lines().next().unwrap().starts_with("0 0 4e0"));
    let header = serde_json::to_value(FormHeader::from(&form)).unwrap();
    assert_eq!(header["n_interior"], 9);
    assert_eq!(header["box"]["hi"][0], 1.0);
    let mut csv = Vec::new();
    write_field_csv(&grid, &DiscreteField::from_fn(&grid, |x| x[0]), &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "node,x1,x2,value");
    assert_eq!(csv.lines().count(), grid.n_nodes() + 1);
}

fn family(k: usize) -> ProblemSpec {
    match k {
        0 => brownian(),
        1 => unit_square(DensityField::Gauss, parse_matrix("diag:1+2*x1^2,0.5+x2^2", 2).unwrap()),
        2 => unit_square(
            DensityField::Product(vec![DensityField::Gauss, DensityField::Const(3.0)]),
            parse_matrix("smooth2x2:2,1.5,0.6,3", 2).unwrap(),
        ),
        _ => ProblemSpec::new(
            DomainGeometry::ball(vec![0.5, 0.5], 0.5).unwrap(),
            MatrixField::Identity,
            DensityField::RadialPow(1.0),
            2.5,
        )
        .unwrap(),
    }
}

fn random_field(grid: &Grid, values: &[f64]) -> DiscreteField {
    DiscreteField::from_values(grid, values.iter().cycle().take(grid.n_interior()).copied().collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn stiffness_is_symmetric_and_semidefinite(k in 0usize..4, v in prop::collection::vec(-1.0f64..1.0, 49)) {
        let spec = family(k);
        let grid = unit_grid(&spec, 0.125);
        let form = assemble_with(&spec, &grid, Exec::Parallel).unwrap();
        for (i, j, a) in form.stiffness().triplets() {
            prop_assert_eq!(a.to_bits(), form.stiffness().get(j, i).to_bits());
        }
        let u = random_field(&grid, &v);
        prop_assert!(energy(&form, &u, &u).unwrap() >= -1e-14);
        let seq = assemble_with(&spec, &grid, Exec::Sequential).unwrap();
        prop_assert_eq!(seq.stiffness(), form.stiffness());
    }

    #[test]
    fn energy_is_bilinear(k in 0usize..4, a in -3.0f64..3.0, b in -3.0f64..3.0, v in prop::collection::vec(-1.0f64..1.0, 60)) {
        let spec = family(k);
        let grid = unit_grid(&spec, 0.125);
        let form = assemble(&spec, &grid).unwrap();
        let u = random_field(&grid, &v[..20]);
        let w = random_field(&grid, &v[20..40]);
        let z = random_field(&grid, &v[40..]);
        let lhs = energy(&form, &u.combine(a, &w, b).unwrap(), &z).unwrap();
        let rhs = a * energy(&form, &u, &z).unwrap() + b * energy(&form, &w, &z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn resolvent_identity_holds(k in 0usize..4, lambda in 0.1f64..10.0, mu in 0.1f64..10.0, v in prop::collection::vec(-1.0f64..1.0, 30)) {
        let spec = family(k);
        let grid = unit_grid(&spec, 0.125);
        let form = assemble(&spec, &grid).unwrap();
        let f = random_field(&grid, &v);
        let rl = resolvent_solve(&form, lambda, &f, 1e-13).unwrap();
        let rm = resolvent_solve(&form, mu, &f, 1e-13).unwrap();
        let rlrm = resolvent_solve(&form, lambda, &rm, 1e-13).unwrap();
        let lhs = rl.combine(1.0, &rm, -1.0).unwrap();
        let rhs = rlrm.scaled(mu - lambda);
        let scale = rl.max_abs().max(rm.max_abs());
        prop_assert!(lhs.max_diff(&rhs).unwrap() <= 1e-9 * scale);
    }

    #[test]
    fn diagonal_resolvent_is_sub_markov(k in prop::sample::select(vec![0usize, 1, 3]), lambda in 0.05f64..20.0) {
        let spec = family(k);
        let grid = unit_grid(&spec, 0.125);
        let form = assemble(&spec, &grid).unwrap();
        let one = DiscreteField::from_fn(&grid, |_| 1.0);
        let u = resolvent_solve(&form, lambda, &one, 1e-13).unwrap().scaled(lambda);
        prop_assert!(u.values().iter().all(|v| (-1e-12..=1.0 + 1e-8).contains(v)));
    }

    #[test]
    fn semigroup_is_m_symmetric(k in 0usize..4, t in 0.01f64..0.5, v in prop::collection::vec(-1.0f64..1.0, 40)) {
        let spec = family(k);
        let grid = unit_grid(&spec, 0.125);
        let form = assemble(&spec, &grid).unwrap();
        let f = random_field(&grid, &v[..20]);
        let g = random_field(&grid, &v[20..]);
        let a = m_inner(&form, &evolve_semigroup(&form, t, &f, 4).unwrap(), &g).unwrap();
        let b = m_inner(&form, &f, &evolve_semigroup(&form, t, &g, 4).unwrap()).unwrap();
        let scale = m_inner(&form, &f, &f).unwrap().sqrt() * m_inner(&form, &g, &g).unwrap().sqrt();
        prop_assert!((a - b).abs() <= 1e-9 * scale);
    }
}
