use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sdlab::capacity::{
    equilibrium_capacity, equilibrium_potential, fukushima_energy, fukushima_probe, write_scan_csv, zero_set_scan,
    CAPACITY_TOL,
};
use sdlab::form::{assemble, CgOptions, DiscreteField, DiscreteForm, Grid};
use sdlab::model::{parse_matrix, DensityField, DomainGeometry, MatrixField, ProblemSpec, ScalarFn};

fn square(lo: f64, density: DensityField, matrix: MatrixField) -> ProblemSpec {
    ProblemSpec::new(
        DomainGeometry::box_domain(vec![lo, lo], vec![lo + 1.0, lo + 1.0]).unwrap(),
        matrix,
        density,
        3.0,
    )
    .unwrap()
}

fn form_on(spec: &ProblemSpec, lo: f64, h: f64) -> DiscreteForm {
    let grid = Grid::new(spec, vec![lo, lo], vec![lo + 1.0, lo + 1.0], h).unwrap();
    assemble(spec, &grid).unwrap()
}

fn node(form: &DiscreteForm, slot: usize) -> usize {
    form.grid().interior_nodes()[slot]
}

/// Dense minimum of `u^T (S + M) u` subject to `u = 1` on `set`.
fn dense_capacity(form: &DiscreteForm, set: &[usize]) -> f64 {
    let n = form.n();
    let mut e = DMatrix::from_row_slice(n, n, &form.stiffness().to_dense());
    for i in 0..n {
        e[(i, i)] += form.mass()[i];
    }
    let free: Vec<usize> = (0..n).filter(|i| !set.contains(i)).collect();
    let mut u = DVector::zeros(n);
    for &k in set {
        u[k] = 1.0;
    }
    let a = DMatrix::from_fn(free.len(), free.len(), |i, j| e[(free[i], free[j])]);
    let b = DVector::from_fn(free.len(), |i, _| -set.iter().map(|&k| e[(free[i], k)]).sum::<f64>());
    let x = a.lu().solve(&b).unwrap();
    for (i, &f) in free.iter().enumerate() {
        u[f] = x[i];
    }
    u.dot(&(&e * &u))
}

#[test]
fn empty_set_has_zero_capacity() {
    let spec = square(0.0, DensityField::Const(1.0), MatrixField::Identity);
    assert_eq!(equilibrium_capacity(&form_on(&spec, 0.0, 1.0 / 6.0), &[]).unwrap(), 0.0);
}

#[test]
fn centre_node_matches_dense_solve() {
    let spec = square(0.0, DensityField::Const(1.0), MatrixField::Identity);
    let form = form_on(&spec, 0.0, 1.0 / 6.0);
    assert_eq!(form.n(), 25);
    let cap = equilibrium_capacity(&form, &[node(&form, 12)]).unwrap();
    let oracle = dense_capacity(&form, &[12]);
    assert!((cap - oracle).abs() <= 1e-10 * oracle, "{cap} vs {oracle}");
}

#[test]
fn boundary_nodes_are_rejected() {
    let spec = square(0.0, DensityField::Const(1.0), MatrixField::Identity);
    let form = form_on(&spec, 0.0, 0.25);
    assert!(matches!(
        equilibrium_capacity(&form, &[0]),
        Err(sdlab::Error::Domain { .. })
    ));
}

#[test]
fn relabelling_and_translation_leave_capacity_unchanged() {
    let a = square(0.0, DensityField::Const(1.0), parse_matrix("diag:1,2", 2).unwrap());
    let b = square(3.0, DensityField::Const(1.0), parse_matrix("diag:1,2", 2).unwrap());
    let fa = form_on(&a, 0.0, 0.125);
    let fb = form_on(&b, 3.0, 0.125);
    let slots = [3, 10, 11, 30, 44];
    let set: Vec<usize> = slots.iter().map(|&s| node(&fa, s)).collect();
    let mut shuffled = set.clone();
    shuffled.reverse();
    shuffled.push(set[0]);
    let ca = equilibrium_capacity(&fa, &set).unwrap();
    assert_eq!(ca, equilibrium_capacity(&fa, &shuffled).unwrap());
    let cb = equilibrium_capacity(&fb, &slots.iter().map(|&s| node(&fb, s)).collect::<Vec<_>>()).unwrap();
    assert!((ca - cb).abs() <= 1e-12 * ca);
}

#[test]
fn potential_stays_between_zero_and_one() {
    let spec = square(0.0, DensityField::Gauss, parse_matrix("diag:1+x1^2,0.5", 2).unwrap());
    let form = form_on(&spec, 0.0, 1.0 / 16.0);
    let set: Vec<usize> = (100..110).map(|s| node(&form, s)).collect();
    let opts = CgOptions {
        tol: CAPACITY_TOL,
        ..CgOptions::default()
    };
    let (u, cap) = equilibrium_potential(&form, &set, &opts).unwrap();
    assert!(u.values().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    assert!(cap > 0.0);
}

#[test]
fn fukushima_energy_of_zero_cutoff() {
    let spec = square(-0.5, DensityField::RadialPow(1.0), MatrixField::Identity);
    let form = form_on(&spec, -0.5, 1.0 / 15.0);
    assert_eq!(
        fukushima_energy(&form, &DiscreteField::zeros(form.grid()), 1e-3).unwrap(),
        0.0
    );
}

#[test]
fn fukushima_energy_ignores_inactive_cutoff_level() {
    let spec = square(0.0, DensityField::Gauss, MatrixField::Identity);
    let form = form_on(&spec, 0.0, 1.0 / 16.0);
    let cutoff = DiscreteField::sample(form.grid(), &ScalarFn::unit_bump(vec![0.5, 0.5], 0.4));
    // rho >= exp(-2) on the unit square, so sqrt(rho) > 0.36
    let a = fukushima_energy(&form, &cutoff, 0.3).unwrap();
    let b = fukushima_energy(&form, &cutoff, 1e-4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn saturated_cutoff_is_a_constant_multiple() {
    let spec = square(0.0, DensityField::Gauss, MatrixField::Identity);
    let form = form_on(&spec, 0.0, 1.0 / 16.0);
    let cutoff = DiscreteField::sample(form.grid(), &ScalarFn::unit_bump(vec![0.5, 0.5], 0.4));
    let probe = fukushima_probe(&form, &cutoff, 2.0).unwrap();
    for (a, b) in probe.f_eps.values().iter().zip(cutoff.values()) {
        assert_eq!(*a, 2f64.ln() * b);
    }
    assert!(probe.energy >= 0.0);
    assert!(fukushima_probe(&form, &cutoff.scaled(2.0), 0.1).is_err());
    assert!(fukushima_probe(&form, &cutoff, 0.0).is_err());
}

#[test]
fn scan_with_density_bounded_below_is_empty() {
    let spec = square(0.0, DensityField::Gauss, MatrixField::Identity);
    let grid = Grid::new(&spec, vec![0.0, 0.0], vec![1.0, 1.0], 0.125).unwrap();
    let rows = zero_set_scan(&spec, &grid, &[0.1, 0.01]).unwrap();
    assert!(rows.iter().all(|r| r.cap == 0.0 && r.n_nodes == 0));
}

#[test]
fn scan_is_non_increasing_and_validated() {
    let spec = ProblemSpec::new(
        DomainGeometry::box_domain(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        MatrixField::Identity,
        DensityField::RadialPow(1.0),
        2.5,
    )
    .unwrap();
    let grid = Grid::new(&spec, vec![-1.0, -1.0], vec![1.0, 1.0], 1.0 / 32.0).unwrap();
    let rows = zero_set_scan(&spec, &grid, &[0.3, 0.1, 0.03, 0.01]).unwrap();
    assert!(rows
        .windows(2)
        .all(|w| w[1].cap <= w[0].cap && w[1].n_nodes <= w[0].n_nodes));
    assert!(zero_set_scan(&spec, &grid, &[0.1, 0.3]).is_err());
    assert!(zero_set_scan(&spec, &grid, &[0.1, -0.1]).is_err());
    let mut csv = Vec::new();
    write_scan_csv(&rows, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "delta,cap,n_nodes");
    assert_eq!(csv.lines().count(), 5);
}

fn subset(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn capacity_is_monotone_and_subadditive(a in 0u64..(1 << 49), b in 0u64..(1 << 49), diag in 0usize..2) {
        let matrix = if diag == 0 { MatrixField::Identity } else { parse_matrix("diag:1+x1^2,0.5+x2^2", 2).unwrap() };
        let spec = square(0.0, DensityField::Gauss, matrix);
        let form = form_on(&spec, 0.0, 0.125);
        prop_assert_eq!(form.n(), 49);
        let ka = subset(a, 49);
        let kb = subset(b, 49);
        let union = subset(a | b, 49);
        let inter = subset(a & b, 49);
        let cap = |s: &[usize]| equilibrium_capacity(&form, &s.iter().map(|&i| node(&form, i)).collect::<Vec<_>>()).unwrap();
        let (ca, cb, cu, ci) = (cap(&ka), cap(&kb), cap(&union), cap(&inter));
        let tol = 1e-10 * cu.max(1e-300);
        prop_assert!(ci <= ca + tol && ca <= cu + tol && cb <= cu + tol);
        prop_assert!(cu <= ca + cb + tol);
        if !union.is_empty() {
            let oracle = dense_capacity(&form, &union);
            prop_assert!((cu - oracle).abs() <= 1e-10 * oracle);
        }
    }
}
