use std::time::Instant;

use serde_json::json;

use crate::accum::Moments;
use crate::error::{Error, Result};
use crate::kernels::{martingale_paths, Sampling};
use crate::model::{ProblemSpec, ScalarFn};
use crate::sde::{simulate_batch_with, BatchPlan, MinDensity, Occupation, PathFunctional, SimConfig};

use super::report::{Check, TestReport};

/// Budget of the martingale test: `max(3 SE + c_h h, floor)` for means and
/// `3 SE + c_h h` for increment correlations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleBudget {
    pub c_h: f64,
    pub floor: f64,
}

impl Default for MartingaleBudget {
    fn default() -> Self {
        Self { c_h: 0.0, floor: 5e-3 }
    }
}

/// Sample correlation and its standard error under zero correlation,
/// `sqrt(mean(za^2 zb^2) / n)` on the standardised samples. Both are zero
/// when either side is constant.
fn correlation(a: &[f64], b: &[f64]) -> (f64, f64) {
    let ma: Moments = a.iter().copied().collect();
    let mb: Moments = b.iter().copied().collect();
    let (va, vb) = (ma.variance(), mb.variance());
    if !(va > 0.0 && vb > 0.0) {
        return (0.0, 0.0);
    }
    let (sa, sb) = (va.sqrt(), vb.sqrt());
    let z: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .map(|(x, y)| ((x - ma.mean()) / sa, (y - mb.mean()) / sb))
        .collect();
    let cov: Moments = z.iter().map(|(x, y)| x * y).collect();
    let fourth: Moments = z.iter().map(|(x, y)| x * x * y * y).collect();
    let n = a.len() as f64;
    (cov.mean() * n / (n - 1.0), (fourth.mean() / n).sqrt())
}

/// Checks that `M_t = u(X_t) - u(x) - int Lu` has mean zero at each time and
/// that its increments are uncorrelated with the coordinates and with `u`
/// at earlier times.
pub fn martingale_test(
    spec: &ProblemSpec,
    x: &[f64],
    times: &[f64],
    fns: &[ScalarFn],
    sampling: Sampling,
    config: &SimConfig,
    budget: MartingaleBudget,
) -> Result<TestReport> {
    let started = Instant::now();
    let margin = budget.c_h * config.h;
    let mut checks = Vec::new();
    for (a, u) in fns.iter().enumerate() {
        let paths = martingale_paths(x, times, u, sampling, spec, config)?;
        let ms: Vec<Vec<f64>> = (0..times.len()).map(|i| paths.martingale(i).collect()).collect();
        for (j, t) in times.iter().enumerate() {
            let m: Moments = ms[j].iter().copied().collect();
            let scale = margin.max(budget.floor);
            let b = (3.0 * m.std_err() + margin).max(budget.floor);
            checks.push(Check::bound(format!("mean[u{a}, t={t}]"), m.mean(), b).inconclusive_if(m.std_err() > scale));
        }
        for i in 0..times.len() {
            let mut past: Vec<(String, Vec<f64>)> = (0..x.len())
                .map(|k| (format!("x{}", k + 1), paths.coord(i, k).collect()))
                .collect();
            past.push(("u".into(), paths.u_value(i).collect()));
            for j in i + 1..times.len() {
                let inc: Vec<f64> = ms[j].iter().zip(&ms[i]).map(|(b, a)| b - a).collect();
                for (g, vals) in &past {
                    let (c, se) = correlation(&inc, vals);
                    let name = format!("corr[u{a}, {g}(t={}), t={}]", times[i], times[j]);
                    checks.push(Check::bound(name, c, 3.0 * se + margin));
                }
            }
        }
    }
    let inputs = json!({
        "x": x, "times": times, "functions": fns.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>(),
        "n": sampling.n, "seed": config.seed, "h": config.h, "eta": config.eta,
        "c_h": budget.c_h, "floor": budget.floor,
    });
    Ok(TestReport::finish(
        "martingale",
        "martingale problem for the generator",
        inputs,
        checks,
        started,
    ))
}

/// Fraction of paths whose density along the path drops to each level
/// before absorption or `T`; must be non-increasing in the level and below
/// `floor` at the smallest one.
pub fn avoidance_test(
    spec: &ProblemSpec,
    x0: &[f64],
    deltas: &[f64],
    sampling: Sampling,
    config: &SimConfig,
    floor: f64,
) -> Result<TestReport> {
    let started = Instant::now();
    if deltas.is_empty() || deltas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("levels must be strictly decreasing".into()));
    }
    let functional = MinDensity {
        density: spec.density(),
    };
    let plan = BatchPlan {
        first_path: sampling.first_path,
        ..BatchPlan::default()
    };
    let batch = simulate_batch_with(x0, sampling.n, spec, config, &plan, &[&functional], sampling.exec)?;
    let n = batch.n() as f64;
    let q: Vec<(f64, f64)> = deltas
        .iter()
        .map(|d| {
            let hits = batch.column(0).filter(|m| m <= d).count() as f64 / n;
            (hits, (hits * (1.0 - hits) / n).sqrt())
        })
        .collect();
    let mut checks = Vec::new();
    for k in 0..deltas.len() {
        checks.push(Check::condition(format!("q[{}]", deltas[k]), q[k].0, q[k].1, true));
    }
    for k in 1..deltas.len() {
        let slack = 2.0 * q[k].1.max(q[k - 1].1);
        let rise = q[k].0 - q[k - 1].0;
        checks.push(Check::condition(
            format!("trend[{} -> {}]", deltas[k - 1], deltas[k]),
            rise,
            slack,
            rise <= slack,
        ));
    }
    let last = q[deltas.len() - 1];
    checks.push(
        Check::bound(format!("floor[{}]", deltas[deltas.len() - 1]), last.0, floor).inconclusive_if(last.1 > floor),
    );
    let inputs = json!({
        "x0": x0, "deltas": deltas, "n": sampling.n, "seed": config.seed, "h": config.h,
        "eta": config.eta, "horizon": config.horizon, "floor": floor,
        "truncated_frac": batch.truncated_frac(),
    });
    Ok(TestReport::finish(
        "avoidance",
        "the zero set of the density is not hit",
        inputs,
        checks,
        started,
    ))
}

type Slab = Box<dyn Fn(&[f64]) -> bool + Sync>;

/// Occupation fraction of the slabs `|x_axis - center| < w` over `[0, t_max]`
/// for decreasing widths; must decrease with the width.
#[allow(clippy::too_many_arguments)]
pub fn occupation_test(
    spec: &ProblemSpec,
    x0: &[f64],
    axis: usize,
    center: f64,
    widths: &[f64],
    t_max: f64,
    sampling: Sampling,
    config: &SimConfig,
) -> Result<TestReport> {
    let started = Instant::now();
    if widths.is_empty() || widths.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("slab widths must be strictly decreasing".into()));
    }
    let regions: Vec<Slab> = widths
        .iter()
        .map(|&w| Box::new(move |x: &[f64]| (x[axis] - center).abs() < w) as Slab)
        .collect();
    let occ: Vec<Occupation<'_>> = regions
        .iter()
        .map(|r| Occupation {
            region: r.as_ref(),
            t_max,
        })
        .collect();
    let fs: Vec<&dyn PathFunctional> = occ.iter().map(|o| o as &dyn PathFunctional).collect();
    let plan = BatchPlan {
        horizon: Some(t_max),
        checkpoints: Vec::new(),
        first_path: sampling.first_path,
    };
    let batch = simulate_batch_with(x0, sampling.n, spec, config, &plan, &fs, sampling.exec)?;
    let stats: Vec<(f64, f64)> = batch.stats.values.iter().map(|m| (m.mean(), m.std_err())).collect();
    let mut checks = Vec::new();
    for (w, s) in widths.iter().zip(&stats) {
        checks.push(Check::condition(format!("occupation[{w}]"), s.0, s.1, true));
    }
    for k in 1..widths.len() {
        let rise = stats[k].0 - stats[k - 1].0;
        let flat_zero = rise == 0.0 && stats[k].0 == 0.0;
        checks.push(Check::condition(
            format!("trend[{} -> {}]", widths[k - 1], widths[k]),
            rise,
            0.0,
            rise < 0.0 || flat_zero,
        ));
    }
    let inputs = json!({
        "x0": x0, "axis": axis, "center": center, "widths": widths, "t_max": t_max,
        "n": sampling.n, "seed": config.seed, "h": config.h,
    });
    Ok(TestReport::finish(
        "occupation",
        "the zero set of the density has measure zero",
        inputs,
        checks,
        started,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DensityField, DomainGeometry, MatrixField};
    use crate::verify::Verdict;

    #[test]
    fn correlation_guards_constants() {
        assert_eq!(correlation(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), (0.0, 0.0));
        assert!((correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_error_reflects_heteroscedastic_noise() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let z: Vec<(f64, f64)> = (0..n)
            .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let b: Vec<f64> = z.iter().map(|p| p.1).collect();
        let plain: Vec<f64> = z.iter().map(|p| p.0).collect();
        // uncorrelated with b but with variance b^2: E[a^2 b^2] = E[z^4] = 3
        let scaled: Vec<f64> = z.iter().map(|p| p.0 * p.1.abs()).collect();
        let root_n = (n as f64).sqrt();
        let (_, se_plain) = correlation(&plain, &b);
        let (c, se_scaled) = correlation(&scaled, &b);
        assert!((se_plain * root_n - 1.0).abs() < 0.02, "{}", se_plain * root_n);
        assert!(
            (se_scaled * root_n - 3f64.sqrt()).abs() < 0.05,
            "{}",
            se_scaled * root_n
        );
        assert!(c.abs() < 3.0 * se_scaled);
    }

    #[test]
    fn zero_test_function_passes_with_exact_zeros() {
        let spec = ProblemSpec::new(
            DomainGeometry::ball(vec![0.0, 0.0], 1.0).unwrap(),
            MatrixField::Identity,
            DensityField::Const(1.0),
            3.0,
        )
        .unwrap();
        let cfg = SimConfig::new(1e-2, 0.2, 4);
        let r = martingale_test(
            &spec,
            &[0.2, 0.0],
            &[0.1, 0.2],
            &[ScalarFn::Zero],
            Sampling::new(100),
            &cfg,
            MartingaleBudget::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.checks.iter().all(|c| c.statistic == 0.0));
    }

    #[test]
    fn density_bounded_below_is_never_approached() {
        let spec = ProblemSpec::new(
            DomainGeometry::ball(vec![0.0, 0.0], 1.0).unwrap(),
            MatrixField::Identity,
            DensityField::Const(1.0),
            3.0,
        )
        .unwrap();
        let cfg = SimConfig::new(1e-2, 0.5, 4);
        let r = avoidance_test(&spec, &[0.0, 0.0], &[0.5, 0.1], Sampling::new(200), &cfg, 0.05).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_statistic("q["), 0.0);
    }
}
