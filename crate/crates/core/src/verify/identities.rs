use std::time::Instant;

use serde_json::json;

use crate::error::{Error, Result};
use crate::form::{evolve_semigroup_with, m_inner, resolvent_solve_with, CgOptions, DiscreteField, DiscreteForm};
use crate::kernels::{laplace_residual, LaplaceRoute};
use crate::model::{ProblemSpec, ScalarFn};

use super::report::{Check, TestReport};

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityConfig {
    /// Implicit Euler step; every time must be a multiple of it.
    pub tau: f64,
    pub cg_tol: f64,
    /// Relative budget of the algebraic identities.
    pub identity_tol: f64,
    pub submarkov_tol: f64,
    /// Grid node for the Laplace check; defaults to the interior node
    /// closest to the box centre.
    pub laplace_point: Option<Vec<f64>>,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            cg_tol: 1e-13,
            identity_tol: 1e-9,
            submarkov_tol: 1e-8,
            laplace_point: None,
        }
    }
}

fn steps_for(t: f64, tau: f64) -> Result<usize> {
    let k = (t / tau).round();
    if (k * tau - t).abs() > 1e-9 * tau {
        return Err(Error::Config(format!("time {t} is not a multiple of the step {tau}")));
    }
    Ok(k as usize)
}

fn evolve_steps(
    form: &DiscreteForm,
    f: &DiscreteField,
    steps: usize,
    tau: f64,
    opts: &CgOptions,
) -> Result<DiscreteField> {
    let mut u = f.clone();
    for _ in 0..steps {
        u = evolve_semigroup_with(form, tau, &u, 1, opts)?;
    }
    Ok(u)
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn centre_node(form: &DiscreteForm) -> Vec<f64> {
    let g = form.grid();
    let mid: Vec<f64> = g
        .bbox()
        .lo
        .iter()
        .zip(&g.bbox().hi)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let best = g.interior_nodes().iter().map(|&n| g.node_coords(n)).min_by(|a, b| {
        let da: f64 = a.iter().zip(&mid).map(|(x, m)| (x - m) * (x - m)).sum();
        let db: f64 = b.iter().zip(&mid).map(|(x, m)| (x - m) * (x - m)).sum();
        da.total_cmp(&db)
    });
    best.unwrap_or(mid)
}

/// Grid-route kernel identities: semigroup composition, resolvent
/// equation, sub-Markov bound of `lambda R_lambda 1` (diagonal `A` only) and
/// the Laplace transform relation between resolvent and semigroup.
pub fn kernel_identity_test(
    spec: &ProblemSpec,
    form: &DiscreteForm,
    lambdas: &[f64],
    times: &[f64],
    fns: &[ScalarFn],
    cfg: &IdentityConfig,
) -> Result<TestReport> {
    let started = Instant::now();
    let opts = CgOptions {
        tol: cfg.cg_tol,
        exec: form.exec(),
        ..CgOptions::default()
    };
    let tau = cfg.tau;
    let steps: Vec<usize> = times.iter().map(|t| steps_for(*t, tau)).collect::<Result<_>>()?;
    let point = cfg.laplace_point.clone().unwrap_or_else(|| centre_node(form));
    let grid = form.grid();
    let mut checks = Vec::new();
    for (a, f) in fns.iter().enumerate() {
        let fd = DiscreteField::sample(grid, f);
        let scale = fd.max_abs();
        let evolved: Vec<DiscreteField> = steps
            .iter()
            .map(|k| evolve_steps(form, &fd, *k, tau, &opts))
            .collect::<Result<_>>()?;
        for (i, t) in times.iter().enumerate() {
            for (j, s) in times.iter().enumerate().skip(i) {
                let joint = evolve_steps(form, &fd, steps[i] + steps[j], tau, &opts)?;
                let composed = evolve_steps(form, &evolved[j], steps[i], tau, &opts)?;
                let r = relative(joint.max_diff(&composed)?, scale);
                checks.push(Check::bound(
                    format!("semigroup[f{a}, t={t}, s={s}]"),
                    r,
                    cfg.identity_tol,
                ));
            }
        }
        let resolvents: Vec<DiscreteField> = lambdas
            .iter()
            .map(|l| Ok(resolvent_solve_with(form, *l, &fd, &opts, None)?.0))
            .collect::<Result<_>>()?;
        for (i, l) in lambdas.iter().enumerate() {
            for (j, m) in lambdas.iter().enumerate().skip(i + 1) {
                let (rr, _) = resolvent_solve_with(form, *l, &resolvents[j], &opts, None)?;
                let lhs = resolvents[i].combine(1.0, &resolvents[j], -1.0)?;
                let diff = lhs.max_diff(&rr.scaled(m - l))?;
                let r = relative(diff, resolvents[i].max_abs().max(resolvents[j].max_abs()));
                checks.push(Check::bound(format!("resolvent[f{a}, {l}, {m}]"), r, cfg.identity_tol));
            }
        }
        for l in lambdas {
            let tail_steps = ((4.0 / (l * tau)).ln() / (l * tau).ln_1p()).ceil().max(2.0) as usize;
            let nodes: Vec<f64> = (0..=tail_steps).map(|k| k as f64 * tau).collect();
            let res = laplace_residual(&point, *l, f, &nodes, spec, &LaplaceRoute::Fem { form, opts })?;
            checks.push(Check::bound(format!("laplace[f{a}, {l}]"), res.residual, res.budget));
        }
    }
    if form.is_diagonal() {
        let one = DiscreteField::from_fn(grid, |_| 1.0);
        for l in lambdas {
            let (u, _) = resolvent_solve_with(form, *l, &one, &opts, None)?;
            let hi = u.values().iter().fold(f64::NEG_INFINITY, |m, v| m.max(l * v));
            let lo = u.values().iter().fold(f64::INFINITY, |m, v| m.min(l * v));
            let ok = hi <= 1.0 + cfg.submarkov_tol && lo >= -cfg.submarkov_tol;
            checks.push(Check::condition(
                format!("submarkov[{l}]"),
                hi,
                1.0 + cfg.submarkov_tol,
                ok,
            ));
        }
    }
    let inputs = json!({
        "lambdas": lambdas, "times": times, "tau": tau, "h": grid.h(),
        "functions": fns.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>(),
        "cg_tol": cfg.cg_tol, "laplace_point": point, "diagonal": form.is_diagonal(),
    });
    Ok(TestReport::finish(
        "kernel_identities",
        "semigroup property, resolvent equation, sub-Markov bound and Laplace transform",
        inputs,
        checks,
        started,
    ))
}

/// `|<P_t f, g>_M - <f, P_t g>_M| / (|f|_M |g|_M)` against `budget`.
pub fn symmetry_test(
    form: &DiscreteForm,
    t: f64,
    steps: usize,
    pairs: &[(DiscreteField, DiscreteField)],
    cg_tol: f64,
    budget: f64,
) -> Result<TestReport> {
    let started = Instant::now();
    let opts = CgOptions {
        tol: cg_tol,
        exec: form.exec(),
        ..CgOptions::default()
    };
    let mut checks = Vec::new();
    for (k, (f, g)) in pairs.iter().enumerate() {
        let pf = evolve_semigroup_with(form, t, f, steps, &opts)?;
        let pg = evolve_semigroup_with(form, t, g, steps, &opts)?;
        let defect = (m_inner(form, &pf, g)? - m_inner(form, f, &pg)?).abs();
        let norm = (m_inner(form, f, f)? * m_inner(form, g, g)?).sqrt();
        checks.push(Check::bound(format!("symmetry[{k}]"), relative(defect, norm), budget));
    }
    let inputs = json!({ "t": t, "steps": steps, "pairs": pairs.len(), "cg_tol": cg_tol, "h": form.grid().h() });
    Ok(TestReport::finish(
        "symmetry",
        "symmetry of the semigroup in L2(mu)",
        inputs,
        checks,
        started,
    ))
}
