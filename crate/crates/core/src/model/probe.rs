use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::accum::ExactSum;
use crate::par::{self, Exec};

use super::geometry::BoundingBox;
use super::spec::ProblemSpec;

/// Number of successive halvings used for the quadrature trend.
pub const PROBE_LEVELS: usize = 3;
/// Successive increments must shrink at least by this factor to count as
/// converging.
pub const TREND_RATIO: f64 = 0.9;
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// Every refinement left the value unchanged.
    Stable,
    Converging,
    NotConverging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureTrend {
    /// `(cell size, estimate)` from coarse to fine.
    pub estimates: Vec<(f64, f64)>,
    pub trend: Trend,
    /// Cells skipped because the integrand was not finite at the midpoint.
    pub singular_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub min_eigenvalue: f64,
    pub min_eigenvalue_at: Vec<f64>,
    pub max_symmetry_defect: f64,
    /// First probe point where `A` fails to be positive definite.
    pub ellipticity_violation: Option<Vec<f64>>,
    /// `int |grad rho / rho|^p rho dx` over the region.
    pub log_gradient_integral: QuadratureTrend,
    /// `int |grad sqrt(rho)|^2 dx` over the region.
    pub sqrt_density_energy: QuadratureTrend,
    pub checks: Vec<ConditionCheck>,
    pub passed: bool,
}

fn lattice(lo: &[f64], counts: &[usize], h: f64, offset: f64) -> Vec<Vec<f64>> {
    let total: usize = counts.iter().product();
    (0..total)
        .map(|mut idx| {
            counts
                .iter()
                .zip(lo)
                .map(|(&n, &a)| {
                    let i = idx % n;
                    idx /= n;
                    a + (i as f64 + offset) * h
                })
                .collect()
        })
        .collect()
}

fn cell_counts(region: &BoundingBox, h: f64) -> Vec<usize> {
    region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(a, b)| (((b - a) / h).round() as usize).max(1))
        .collect()
}

/// Midpoint-rule integral of `integrand` over the cells of `region` whose
/// centre lies in the domain. Returns (value, skipped cells).
fn midpoint_integral<F>(spec: &ProblemSpec, region: &BoundingBox, h: f64, integrand: F) -> (f64, usize)
where
    F: Fn(&[f64]) -> Option<f64> + Sync + Send,
{
    let counts = cell_counts(region, h);
    let widths: Vec<f64> = region
        .lo
        .iter()
        .zip(&region.hi)
        .zip(&counts)
        .map(|((a, b), n)| (b - a) / *n as f64)
        .collect();
    let cell_volume: f64 = widths.iter().product();
    let total: usize = counts.iter().product();
    let vals = par::map_range(Exec::Parallel, total, |mut idx| {
        let x: Vec<f64> = counts
            .iter()
            .zip(region.lo.iter().zip(&widths))
            .map(|(&n, (&a, &w))| {
                let i = idx % n;
                idx /= n;
                a + (i as f64 + 0.5) * w
            })
            .collect();
        if !spec.geometry().contains(&x) {
            return Some(0.0);
        }
        integrand(&x)
    });
    let mut sum = ExactSum::new();
    let mut skipped = 0;
    for v in vals {
        match v {
            Some(v) if v.is_finite() => sum.add(v),
            _ => skipped += 1,
        }
    }
    (sum.value() * cell_volume, skipped)
}

fn trend_of(estimates: &[(f64, f64)]) -> Trend {
    let incs: Vec<f64> = estimates.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    if incs.iter().all(|v| *v == 0.0) {
        return Trend::Stable;
    }
    let scale = estimates.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
    let converging = incs
        .windows(2)
        .all(|w| w[1] <= TREND_RATIO * w[0] || w[1] <= 1e-12 * scale);
    if converging {
        Trend::Converging
    } else {
        Trend::NotConverging
    }
}

fn quadrature_trend<F>(spec: &ProblemSpec, region: &BoundingBox, h: f64, integrand: F) -> QuadratureTrend
where
    F: Fn(&[f64]) -> Option<f64> + Sync + Send,
{
    let mut estimates = Vec::with_capacity(PROBE_LEVELS);
    let mut singular_cells = 0;
    for level in 0..PROBE_LEVELS {
        let hk = h / f64::from(1u32 << level);
        let (v, s) = midpoint_integral(spec, region, hk, &integrand);
        estimates.push((hk, v));
        singular_cells += s;
    }
    let trend = trend_of(&estimates);
    QuadratureTrend {
        estimates,
        trend,
        singular_cells,
    }
}

/// Probes the admissibility conditions on `region` with lattice spacing
/// `resolution`: local strict ellipticity and symmetry of `A` at the probe
/// nodes, and quadrature of the two density integrability conditions under
/// refinement. Failures are recorded in the report, never raised.
pub fn condition_probe(spec: &ProblemSpec, region: &BoundingBox, resolution: f64) -> AdmissibilityReport {
    let d = spec.dim();
    let counts: Vec<usize> = cell_counts(region, resolution).iter().map(|n| n + 1).collect();
    let nodes: Vec<Vec<f64>> = lattice(&region.lo, &counts, resolution, 0.0)
        .into_iter()
        .filter(|x| region.contains_closed(x) && spec.geometry().contains(x))
        .collect();

    let per_node = par::map_range(Exec::Parallel, nodes.len(), |k| {
        let x = &nodes[k];
        let mut a = vec![0.0; d * d];
        spec.matrix().eval(x, &mut a);
        let mut defect = 0.0f64;
        for i in 0..d {
            for j in 0..i {
                defect = defect.max((a[i * d + j] - a[j * d + i]).abs());
            }
        }
        let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (a[i * d + j] + a[j * d + i]));
        let min_eig = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        (min_eig, defect)
    });

    let mut min_eigenvalue = f64::INFINITY;
    let mut min_eigenvalue_at = Vec::new();
    let mut max_symmetry_defect = 0.0f64;
    let mut ellipticity_violation = None;
    for (x, (e, s)) in nodes.iter().zip(&per_node) {
        if *e < min_eigenvalue {
            min_eigenvalue = *e;
            min_eigenvalue_at = x.clone();
        }
        if !(*e > 0.0) && ellipticity_violation.is_none() {
            ellipticity_violation = Some(x.clone());
        }
        max_symmetry_defect = max_symmetry_defect.max(*s);
    }

    let p = spec.p();
    let log_gradient_integral = quadrature_trend(spec, region, resolution, |x| {
        let mut g = vec![0.0; d];
        let rho = spec.rho(x);
        if rho == 0.0 {
            return None;
        }
        spec.density().log_gradient(x, &mut g).ok()?;
        let n2: f64 = g.iter().map(|v| v * v).sum();
        Some(n2.powf(p / 2.0) * rho)
    });
    // |grad sqrt(rho)|^2 = |grad rho|^2 / (4 rho)
    let sqrt_density_energy = quadrature_trend(spec, region, resolution, |x| {
        let rho = spec.rho(x);
        if rho == 0.0 {
            return None;
        }
        let mut g = vec![0.0; d];
        spec.density().gradient(x, &mut g);
        Some(g.iter().map(|v| v * v).sum::<f64>() / (4.0 * rho))
    });

    let integrable =
        |q: &QuadratureTrend| q.trend != Trend::NotConverging && q.estimates.iter().all(|e| e.1.is_finite());
    let checks = vec![
        ConditionCheck {
            name: "dimension".into(),
            passed: d >= 2,
            detail: format!("d = {d}"),
        },
        ConditionCheck {
            name: "exponent".into(),
            passed: p > d as f64,
            detail: format!("p = {p}, beta = {}", spec.beta()),
        },
        ConditionCheck {
            name: "strict_ellipticity".into(),
            passed: !nodes.is_empty() && ellipticity_violation.is_none(),
            detail: match &ellipticity_violation {
                Some(x) => format!("ellipticity violated at {x:?} (min eigenvalue {min_eigenvalue})"),
                None => format!("min eigenvalue {min_eigenvalue} over {} nodes", nodes.len()),
            },
        },
        ConditionCheck {
            name: "symmetry".into(),
            passed: max_symmetry_defect <= SYMMETRY_TOL,
            detail: format!("max |a_ij - a_ji| = {max_symmetry_defect}"),
        },
        ConditionCheck {
            name: "log_gradient_integrability".into(),
            passed: integrable(&log_gradient_integral),
            detail: format!("{:?}", log_gradient_integral.estimates),
        },
        ConditionCheck {
            name: "sqrt_density_energy".into(),
            passed: integrable(&sqrt_density_energy),
            detail: format!("{:?}", sqrt_density_energy.estimates),
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    AdmissibilityReport {
        min_eigenvalue,
        min_eigenvalue_at,
        max_symmetry_defect,
        ellipticity_violation,
        log_gradient_integral,
        sqrt_density_energy,
        checks,
        passed,
    }
}
