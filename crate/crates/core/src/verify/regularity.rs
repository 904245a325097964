use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::form::{
    assemble_with, discrete_norms, modulus_of_continuity, resolvent_solve_with, CgOptions, DiscreteField, Grid, Region,
};
use crate::model::{FourierTerm, ProblemSpec, ScalarFn};
use crate::par::Exec;

use super::report::{Check, TestReport};

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityConfig {
    pub lambda: f64,
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    /// Grid box shared by all spacings.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cg_tol: f64,
    /// Allowed growth of the maximal ratios from one grid to the next.
    pub growth: f64,
    pub exec: Exec,
}

/// `count` fields `sum_k a_k sin(pi m_k . x + phi_k)` with integer
/// frequencies `|m_k,i| <= max_freq` and `sum |a_k| = 1`.
pub fn random_fourier_batch(seed: u64, count: usize, dim: usize, max_freq: i32) -> Vec<ScalarFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let total: f64 = raw.iter().map(|a| a.abs()).sum::<f64>().max(1e-12);
            ScalarFn::Fourier(
                raw.iter()
                    .map(|a| FourierTerm {
                        amp: a / total,
                        freq: (0..dim)
                            .map(|_| PI * f64::from(rng.random_range(-max_freq..=max_freq)))
                            .collect(),
                        phase: rng.random_range(0.0..2.0 * PI),
                    })
                    .collect(),
            )
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

struct GridResult {
    h: f64,
    holder: f64,
    sobolev: f64,
    /// Largest modulus over the batch, per radius.
    envelope: Vec<f64>,
}

/// Resolvent regularity diagnostics over a sequence of grids (coarse to
/// fine). For every `f` with `u = R_lambda f` on the ball `B`:
///
/// * Hölder ratio `|u|_{C^beta(B)} / (|u|_{L^p(B, mu)} + |Lu|_{L^p(B, mu)})`,
///   with the discrete generator `Lu = lambda u - f`;
/// * Sobolev ratio `|rho u|_{H^{1,p}(B)} / (|u|_{L^1(B, mu)} + |f|_{L^p(B, mu)})`.
///
/// The maximal ratios must not grow by more than `growth` per refinement,
/// and the moduli of continuity of all `u` on every grid must lie below one
/// dominating modulus `K r^beta`, with `K` fixed on the coarsest grid.
pub fn regularity_ratio_test(
    spec: &ProblemSpec,
    hs: &[f64],
    fns: &[ScalarFn],
    cfg: &RegularityConfig,
) -> Result<TestReport> {
    let started = Instant::now();
    if hs.len() < 2 || hs.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("need at least two decreasing grid spacings".into()));
    }
    let p = spec.p();
    let beta = spec.beta();
    let region = Region::Ball {
        center: cfg.ball_center.clone(),
        radius: cfg.ball_radius,
    };
    let coarse = Grid::new(spec, cfg.lo.clone(), cfg.hi.clone(), hs[0])?;
    let reach = cfg.ball_radius + hs[0];
    for n in 0..coarse.n_nodes() {
        let x = coarse.node_coords(n);
        let r: f64 = x
            .iter()
            .zip(&cfg.ball_center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        if r <= reach && !(spec.geometry().contains(&x) && spec.rho(&x) > 0.0) {
            return Err(Error::domain(
                &x,
                "the ball must lie compactly inside the positivity set of the density",
            ));
        }
    }
    let mut radii = Vec::new();
    let mut r = hs[0];
    while r <= 2.0 * cfg.ball_radius {
        radii.push(r);
        r *= 2.0;
    }
    let opts = CgOptions {
        tol: cfg.cg_tol,
        exec: cfg.exec,
        ..CgOptions::default()
    };
    let mut results = Vec::with_capacity(hs.len());
    for &h in hs {
        let grid = Grid::new(spec, cfg.lo.clone(), cfg.hi.clone(), h)?;
        let form = assemble_with(spec, &grid, cfg.exec)?;
        let mut res = GridResult {
            h,
            holder: 0.0,
            sobolev: 0.0,
            envelope: vec![0.0; radii.len()],
        };
        for f in fns {
            let fd = DiscreteField::sample(&grid, f);
            let (u, _) = resolvent_solve_with(&form, cfg.lambda, &fd, &opts, None)?;
            let lu = u.combine(cfg.lambda, &fd, -1.0)?;
            let nu = discrete_norms(&form, &u, &region, p, beta)?;
            let nlu = discrete_norms(&form, &lu, &region, p, beta)?;
            let nf = discrete_norms(&form, &fd, &region, p, beta)?;
            let rho_u = DiscreteField::from_values(
                &grid,
                u.values().iter().zip(form.rho_nodes()).map(|(a, b)| a * b).collect(),
            )?;
            let nru = discrete_norms(&form, &rho_u, &region, p, beta)?;
            res.holder = res.holder.max(ratio(nu.holder, nu.lp_mu + nlu.lp_mu));
            res.sobolev = res.sobolev.max(ratio(nru.h1p, nu.l1_mu + nf.lp_mu));
            let w = modulus_of_continuity(&form, &u, &region, &radii)?;
            for (e, v) in res.envelope.iter_mut().zip(w) {
                *e = e.max(v);
            }
        }
        results.push(res);
    }
    let mut checks = Vec::new();
    for pair in results.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        checks.push(Check::condition(
            format!("holder_ratio[{} -> {}]", a.h, b.h),
            b.holder,
            cfg.growth * a.holder,
            b.holder <= cfg.growth * a.holder,
        ));
        checks.push(Check::condition(
            format!("sobolev_ratio[{} -> {}]", a.h, b.h),
            b.sobolev,
            cfg.growth * a.sobolev,
            b.sobolev <= cfg.growth * a.sobolev,
        ));
    }
    let k0 = results[0]
        .envelope
        .iter()
        .zip(&radii)
        .fold(0.0f64, |m, (w, r)| m.max(w / r.powf(beta)));
    let dominating = cfg.growth * k0;
    for res in &results {
        let k = res
            .envelope
            .iter()
            .zip(&radii)
            .fold(0.0f64, |m, (w, r)| m.max(w / r.powf(beta)));
        checks.push(Check::condition(
            format!("modulus[{}]", res.h),
            k,
            dominating,
            k <= dominating,
        ));
    }
    let inputs = json!({
        "hs": hs, "lambda": cfg.lambda, "p": p, "beta": beta,
        "ball_center": cfg.ball_center, "ball_radius": cfg.ball_radius,
        "functions": fns.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>(),
        "radii": radii, "growth": cfg.growth,
        "holder_ratios": results.iter().map(|r| r.holder).collect::<Vec<_>>(),
        "sobolev_ratios": results.iter().map(|r| r.sobolev).collect::<Vec<_>>(),
    });
    Ok(TestReport::finish(
        "regularity_ratios",
        "Hölder and Sobolev regularity of resolvents, equicontinuity",
        inputs,
        checks,
        started,
    ))
}
