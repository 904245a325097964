use serde::{Deserialize, Serialize};

use crate::accum::Moments;
use crate::error::{Error, Result};
use crate::form::{evolve_semigroup_with, m_inner, resolvent_solve_with, CgOptions, DiscreteField, DiscreteForm};
use crate::model::{ProblemSpec, ScalarFn};
use crate::sde::{simulate_batch_with, BatchPlan, SimConfig};

use super::mc::{check_start, rlambda_mc_with, AtCheckpoints, Sampling};

/// How both sides of the Laplace identity are computed.
pub enum LaplaceRoute<'a> {
    /// Discrete resolvent against implicit Euler semigroup steps on one grid.
    Fem { form: &'a DiscreteForm, opts: CgOptions },
    /// Monte Carlo resolvent against trapezoidal quadrature of Monte Carlo
    /// semigroup values on an independent set of paths.
    Mc { sampling: Sampling, config: &'a SimConfig },
}

/// `|R_lambda f(x) - sum_k w_k P_{t_k} f(x)|` and the budget it is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceResidual {
    pub resolvent: f64,
    pub quadrature: f64,
    pub residual: f64,
    /// Sum of the terms below.
    pub budget: f64,
    /// Three combined standard errors (zero on the grid route).
    pub statistical: f64,
    pub quadrature_bound: f64,
    pub tail_bound: f64,
    /// Solver or time-step bias allowance.
    pub scheme_bound: f64,
}

impl LaplaceResidual {
    pub fn passed(&self) -> bool {
        self.residual <= self.budget
    }
}

fn check_nodes(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 2 || nodes[0] != 0.0 || nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("quadrature nodes must start at 0 and increase".into()));
    }
    Ok(())
}

/// Residual of the Laplace-transform identity between resolvent and
/// semigroup at `x`, over quadrature nodes `0 = t_0 < ... < t_m`.
pub fn laplace_residual(
    x: &[f64],
    lambda: f64,
    f: &ScalarFn,
    nodes: &[f64],
    spec: &ProblemSpec,
    route: &LaplaceRoute<'_>,
) -> Result<LaplaceResidual> {
    check_nodes(nodes)?;
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "resolvent rate must be positive, got {lambda}"
        )));
    }
    match route {
        LaplaceRoute::Fem { form, opts } => fem(x, lambda, f, nodes, form, opts),
        LaplaceRoute::Mc { sampling, config } => mc(x, lambda, f, nodes, spec, *sampling, config),
    }
}

/// Implicit Euler steps of size `tau` discounted by `(1 + lambda tau)^{-k}`
/// sum to `(lambda + (1 + lambda tau) G)^{-1}`, which differs from the
/// resolvent by at most `tau / 4` in the `M`-operator norm. Truncating after
/// `m` steps costs at most `(1 + lambda tau)^{-m} / lambda`. Both bounds are
/// turned into pointwise bounds with `|v(x)| <= |v|_M / sqrt(M_xx)`.
fn fem(
    x: &[f64],
    lambda: f64,
    f: &ScalarFn,
    nodes: &[f64],
    form: &DiscreteForm,
    opts: &CgOptions,
) -> Result<LaplaceResidual> {
    let grid = form.grid();
    let m = nodes.len() - 1;
    let tau = nodes[m] / m as f64;
    if nodes
        .iter()
        .enumerate()
        .any(|(k, t)| (t - k as f64 * tau).abs() > 1e-12 * nodes[m])
    {
        return Err(Error::Config(
            "the grid route needs equally spaced quadrature nodes".into(),
        ));
    }
    let slot = grid
        .node_at(x)
        .and_then(|n| grid.interior_slot(n))
        .ok_or_else(|| Error::domain(x, "evaluation point is not an interior grid node"))?;
    let mxx = form.mass()[slot];
    if !(mxx > 0.0) {
        return Err(Error::domain(x, "evaluation node has zero mass"));
    }
    let fd = DiscreteField::sample(grid, f);
    let (r, _) = resolvent_solve_with(form, lambda, &fd, opts, None)?;
    let mut u = fd.clone();
    let mut sum = 0.0;
    let q = 1.0 / (1.0 + lambda * tau);
    let mut w = tau;
    for _ in 0..m {
        u = evolve_semigroup_with(form, tau, &u, 1, opts)?;
        w *= q;
        sum += w * u.values()[slot];
    }
    let f_m = m_inner(form, &fd, &fd)?.sqrt() / mxx.sqrt();
    let quadrature_bound = 0.25 * tau * f_m;
    let tail_bound = q.powi(m as i32) / lambda * f_m;
    let scheme_bound = 1e3 * opts.tol * (m as f64 + 1.0) * fd.max_abs() / lambda;
    let resolvent = r.values()[slot];
    Ok(LaplaceResidual {
        resolvent,
        quadrature: sum,
        residual: (resolvent - sum).abs(),
        budget: quadrature_bound + tail_bound + scheme_bound,
        statistical: 0.0,
        quadrature_bound,
        tail_bound,
        scheme_bound,
    })
}

/// The quadrature error is estimated by comparing the trapezoidal rule on
/// all nodes with the rule on every other node.
fn mc(
    x: &[f64],
    lambda: f64,
    f: &ScalarFn,
    nodes: &[f64],
    spec: &ProblemSpec,
    sampling: Sampling,
    config: &SimConfig,
) -> Result<LaplaceResidual> {
    check_start(x, spec)?;
    let m = nodes.len() - 1;
    if !m.is_multiple_of(2) {
        return Err(Error::Config(
            "the Monte Carlo route needs an even number of quadrature intervals".into(),
        ));
    }
    let horizon = nodes[m];
    let sup = f
        .sup_bound(spec.geometry().bounding_box())
        .ok_or_else(|| Error::Config("the Monte Carlo route needs a function with a known sup bound".into()))?;
    let mut cfg = config.clone();
    cfg.horizon = horizon;
    let lhs = rlambda_mc_with(x, lambda, f, sampling, spec, &cfg)?;

    let trapezoid = |idx: &[usize]| -> Vec<f64> {
        let mut w = vec![0.0; m + 1];
        for pair in idx.windows(2) {
            let dt = nodes[pair[1]] - nodes[pair[0]];
            w[pair[0]] += 0.5 * dt * (-lambda * nodes[pair[0]]).exp();
            w[pair[1]] += 0.5 * dt * (-lambda * nodes[pair[1]]).exp();
        }
        w
    };
    let all: Vec<usize> = (0..=m).collect();
    let even: Vec<usize> = (0..=m).step_by(2).collect();
    let (w_fine, w_coarse) = (trapezoid(&all), trapezoid(&even));

    let plan = BatchPlan {
        horizon: Some(horizon),
        checkpoints: nodes.to_vec(),
        first_path: sampling.first_path + sampling.n as u64,
    };
    let fs = [f];
    let functional = AtCheckpoints {
        fs: &fs,
        n_times: nodes.len(),
    };
    let batch = simulate_batch_with(x, sampling.n, spec, &cfg, &plan, &[&functional], sampling.exec)?;
    let mut fine = Moments::new();
    let mut coarse = Moments::new();
    for p in &batch.paths {
        fine.push(p.values.iter().zip(&w_fine).map(|(v, w)| v * w).sum());
        coarse.push(p.values.iter().zip(&w_coarse).map(|(v, w)| v * w).sum());
    }
    let quadrature_bound = (fine.mean() - coarse.mean()).abs() / 3.0;
    let statistical = 3.0 * (lhs.se * lhs.se + fine.std_err() * fine.std_err()).sqrt();
    let scheme_bound = config.h * sup;
    let resolvent = lhs.value;
    let quadrature = fine.mean();
    Ok(LaplaceResidual {
        resolvent,
        quadrature,
        residual: (resolvent - quadrature).abs(),
        budget: statistical + quadrature_bound + scheme_bound,
        statistical,
        quadrature_bound,
        tail_bound: lhs.tail_bound.unwrap_or(0.0),
        scheme_bound,
    })
}
