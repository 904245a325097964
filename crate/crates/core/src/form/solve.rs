use crate::error::{Error, Result};
use crate::par;

use super::assemble::DiscreteForm;
use super::field::DiscreteField;
use super::sparse::{cg, CgOptions, CgReport};

/// Solves `(alpha M + beta S) u = rhs` starting from `u`.
fn shifted_solve(
    form: &DiscreteForm,
    alpha: f64,
    beta: f64,
    rhs: &[f64],
    u: &mut [f64],
    opts: &CgOptions,
) -> Result<CgReport> {
    let s = &form.stiffness;
    let m = &form.mass;
    let diag: Vec<f64> = s.diag().iter().zip(m).map(|(sd, md)| beta * sd + alpha * md).collect();
    let exec = opts.exec;
    cg(
        |x, y| s.shifted_mul_into(exec, alpha, m, beta, x, y),
        &diag,
        rhs,
        u,
        opts,
    )
}

fn options(form: &DiscreteForm, tol: f64) -> Result<CgOptions> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("solver tolerance must be positive, got {tol}")));
    }
    Ok(CgOptions {
        tol,
        exec: form.exec,
        ..CgOptions::default()
    })
}

/// Discrete resolvent: solves `(lambda M + S) u = M f` to relative residual `tol`.
pub fn resolvent_solve(form: &DiscreteForm, lambda: f64, f: &DiscreteField, tol: f64) -> Result<DiscreteField> {
    Ok(resolvent_solve_with(form, lambda, f, &options(form, tol)?, None)?.0)
}

pub fn resolvent_solve_with(
    form: &DiscreteForm,
    lambda: f64,
    f: &DiscreteField,
    opts: &CgOptions,
    guess: Option<&DiscreteField>,
) -> Result<(DiscreteField, CgReport)> {
    f.check(&form.grid)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Precondition(format!(
            "resolvent rate must be positive, got {lambda}"
        )));
    }
    let rhs: Vec<f64> = form.mass.iter().zip(f.values()).map(|(m, v)| m * v).collect();
    let mut u = match guess {
        Some(g) => {
            g.check(&form.grid)?;
            g.values().to_vec()
        }
        None => vec![0.0; form.n()],
    };
    let rep = shifted_solve(form, lambda, 1.0, &rhs, &mut u, opts)?;
    Ok((f.with_values(u), rep))
}

/// Implicit Euler approximation of the semigroup at time `t`:
/// `(M + (t/steps) S) u_{k+1} = M u_k`.
pub fn evolve_semigroup(form: &DiscreteForm, t: f64, f: &DiscreteField, steps: usize) -> Result<DiscreteField> {
    evolve_semigroup_with(form, t, f, steps, &options(form, 1e-10)?)
}

pub fn evolve_semigroup_with(
    form: &DiscreteForm,
    t: f64,
    f: &DiscreteField,
    steps: usize,
    opts: &CgOptions,
) -> Result<DiscreteField> {
    f.check(&form.grid)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Precondition(format!("time must be nonnegative, got {t}")));
    }
    if steps == 0 {
        return Err(Error::Precondition("at least one time step is required".into()));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let tau = t / steps as f64;
    let mut u = f.values().to_vec();
    let mut rhs = vec![0.0; u.len()];
    for _ in 0..steps {
        for ((r, m), v) in rhs.iter_mut().zip(&form.mass).zip(&u) {
            *r = m * v;
        }
        shifted_solve(form, 1.0, tau, &rhs, &mut u, opts)?;
    }
    Ok(f.with_values(u))
}

fn check_pair(form: &DiscreteForm, u: &DiscreteField, v: &DiscreteField) -> Result<()> {
    u.check(&form.grid)?;
    v.check(&form.grid)
}

/// `u^T S v`.
pub fn energy(form: &DiscreteForm, u: &DiscreteField, v: &DiscreteField) -> Result<f64> {
    check_pair(form, u, v)?;
    let sv = form.stiffness.mul(form.exec, v.values());
    Ok(par::dot(form.exec, u.values(), &sv))
}

/// `u^T (S + M) v`.
pub fn energy_1(form: &DiscreteForm, u: &DiscreteField, v: &DiscreteField) -> Result<f64> {
    check_pair(form, u, v)?;
    let mut y = vec![0.0; form.n()];
    form.stiffness
        .shifted_mul_into(form.exec, 1.0, &form.mass, 1.0, v.values(), &mut y);
    Ok(par::dot(form.exec, u.values(), &y))
}

/// `u^T M v`.
pub fn m_inner(form: &DiscreteForm, u: &DiscreteField, v: &DiscreteField) -> Result<f64> {
    check_pair(form, u, v)?;
    // u_i v_i first, so the result is exactly symmetric in (u, v)
    let uv: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a * b).collect();
    Ok(par::dot(form.exec, &form.mass, &uv))
}

/// Discrete generator `-M^{-1} S u`; fails at nodes of zero mass.
pub fn apply_generator(form: &DiscreteForm, u: &DiscreteField) -> Result<DiscreteField> {
    u.check(&form.grid)?;
    let su = form.stiffness.mul(form.exec, u.values());
    let mut out = Vec::with_capacity(su.len());
    for (i, (s, m)) in su.iter().zip(&form.mass).enumerate() {
        if !(*m > 0.0) {
            let x = form.grid.node_coords(form.grid.interior_nodes()[i]);
            return Err(Error::domain(&x, "zero mass node, the discrete generator is singular"));
        }
        out.push(-s / m);
    }
    Ok(u.with_values(out))
}
