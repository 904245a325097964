//! Discrete `E_1`-capacities: equilibrium potentials of node sets, the
//! sublevel scan of the density's zero set and the logarithmic cutoff
//! energies that certify that this zero set has capacity zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{assemble, cg, energy_1, CgOptions, DiscreteField, DiscreteForm, Grid};
use crate::model::ProblemSpec;
use crate::par::{self, Exec};

/// Tolerance of the constrained solves.
pub const CAPACITY_TOL: f64 = 1e-13;

fn interior_slots(form: &DiscreteForm, set: &[usize]) -> Result<Vec<usize>> {
    let grid = form.grid();
    let mut slots = Vec::with_capacity(set.len());
    for &node in set {
        if node >= grid.n_nodes() {
            return Err(Error::Shape(format!("node {node} is not on the grid")));
        }
        match grid.interior_slot(node) {
            Some(s) => slots.push(s),
            None => {
                return Err(Error::domain(
                    &grid.node_coords(node),
                    "capacity target touches a non-interior node",
                ))
            }
        }
    }
    slots.sort_unstable();
    slots.dedup();
    Ok(slots)
}

/// Minimiser of `u^T (S + M) u` with `u = 1` on `set` (global node ids) and
/// zero off the interior, together with its energy.
pub fn equilibrium_potential(form: &DiscreteForm, set: &[usize], opts: &CgOptions) -> Result<(DiscreteField, f64)> {
    let slots = interior_slots(form, set)?;
    let n = form.n();
    if slots.is_empty() {
        return Ok((DiscreteField::zeros(form.grid()), 0.0));
    }
    let mut fixed = vec![false; n];
    for &s in &slots {
        fixed[s] = true;
    }
    let s = form.stiffness();
    let m = form.mass();
    let exec = opts.exec;
    let mut ones = vec![0.0; n];
    for &k in &slots {
        ones[k] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    s.shifted_mul_into(exec, 1.0, m, 1.0, &ones, &mut rhs);
    for (r, f) in rhs.iter_mut().zip(&fixed) {
        *r = if *f { 0.0 } else { -*r };
    }
    let diag: Vec<f64> = s
        .diag()
        .iter()
        .zip(m)
        .zip(&fixed)
        .map(|((a, b), f)| if *f { 1.0 } else { a + b })
        .collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        let masked: Vec<f64> = x.iter().zip(&fixed).map(|(v, f)| if *f { 0.0 } else { *v }).collect();
        s.shifted_mul_into(exec, 1.0, m, 1.0, &masked, y);
        for ((yi, xi), f) in y.iter_mut().zip(x).zip(&fixed) {
            if *f {
                *yi = *xi;
            }
        }
    };
    let mut u = vec![0.0; n];
    cg(apply, &diag, &rhs, &mut u, opts)?;
    for (ui, o) in u.iter_mut().zip(&ones) {
        if *o == 1.0 {
            *ui = 1.0;
        }
    }
    let field = DiscreteField::from_values(form.grid(), u)?;
    let cap = energy_1(form, &field, &field)?;
    Ok((field, cap))
}

/// `min { u^T (S + M) u : u = 1 on set }`; the empty set has capacity zero.
pub fn equilibrium_capacity(form: &DiscreteForm, set: &[usize]) -> Result<f64> {
    let opts = CgOptions {
        tol: CAPACITY_TOL,
        exec: form.exec(),
        ..CgOptions::default()
    };
    Ok(equilibrium_potential(form, set, &opts)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub delta: f64,
    pub cap: f64,
    pub n_nodes: usize,
}

/// Capacity of the interior node set `{rho <= delta}` for each `delta` of a
/// strictly decreasing positive list.
pub fn zero_set_scan(spec: &ProblemSpec, grid: &Grid, deltas: &[f64]) -> Result<Vec<ScanRow>> {
    zero_set_scan_form(&assemble(spec, grid)?, deltas)
}

pub fn zero_set_scan_form(form: &DiscreteForm, deltas: &[f64]) -> Result<Vec<ScanRow>> {
    if deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config("levels must be positive and strictly decreasing".into()));
    }
    let grid = form.grid();
    par::try_map_range(form.exec(), deltas.len(), |i| {
        let delta = deltas[i];
        let set: Vec<usize> = grid
            .interior_nodes()
            .iter()
            .zip(form.rho_nodes())
            .filter(|(_, r)| **r <= delta)
            .map(|(n, _)| *n)
            .collect();
        let opts = CgOptions {
            tol: CAPACITY_TOL,
            exec: Exec::Sequential,
            ..CgOptions::default()
        };
        let cap = equilibrium_potential(form, &set, &opts)?.1;
        Ok(ScanRow {
            delta,
            cap,
            n_nodes: set.len(),
        })
    })
}

/// Logarithmic cutoff `f_eps = ln(max(sqrt(rho), eps)) f` and its energy.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityProbe {
    pub eps: f64,
    pub f_eps: DiscreteField,
    pub energy: f64,
}

pub fn fukushima_probe(form: &DiscreteForm, cutoff: &DiscreteField, eps: f64) -> Result<CapacityProbe> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("cutoff level must be positive, got {eps}")));
    }
    if cutoff.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Precondition("cutoff field must take values in [0, 1]".into()));
    }
    let values = cutoff
        .values()
        .iter()
        .zip(form.rho_nodes())
        .map(|(f, r)| if *f == 0.0 { 0.0 } else { r.sqrt().max(eps).ln() * f })
        .collect();
    let f_eps = DiscreteField::from_values(form.grid(), values)?;
    if f_eps.key() != cutoff.key() {
        return Err(Error::Shape("cutoff belongs to a different grid".into()));
    }
    let energy = energy_1(form, &f_eps, &f_eps)?;
    Ok(CapacityProbe { eps, f_eps, energy })
}

/// `E_1(f_eps, f_eps)`.
pub fn fukushima_energy(form: &DiscreteForm, cutoff: &DiscreteField, eps: f64) -> Result<f64> {
    Ok(fukushima_probe(form, cutoff, eps)?.energy)
}

/// Writes `delta,cap,n_nodes`.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut w: W) -> Result<()> {
    writeln!(w, "delta,cap,n_nodes")?;
    for r in rows {
        writeln!(w, "{:e},{:e},{}", r.delta, r.cap, r.n_nodes)?;
    }
    Ok(())
}

/// Writes `eps,energy`.
pub fn write_probe_csv<W: Write>(rows: &[(f64, f64)], mut w: W) -> Result<()> {
    writeln!(w, "eps,energy")?;
    for (e, v) in rows {
        writeln!(w, "{e:e},{v:e}")?;
    }
    Ok(())
}
