use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoundingBox;
use crate::par;

use super::assemble::DiscreteForm;
use super::field::DiscreteField;

/// Closed subregion of a grid box.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box(BoundingBox),
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() <= radius * radius
            }
            Region::Box(b) => b.contains_closed(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteNorms {
    /// `(sum |u_i|^p M_ii)^(1/p)`
    pub lp_mu: f64,
    pub l1_mu: f64,
    /// `sup |u| + max |u_i - u_j| / |x_i - x_j|^beta`
    pub holder: f64,
    /// Lebesgue `L^p` norm of `u` and its forward differences.
    pub h1p: f64,
}

struct Selection {
    nodes: Vec<usize>,
    coords: Vec<Vec<f64>>,
    values: Vec<f64>,
    mass: Vec<f64>,
}

fn select(form: &DiscreteForm, u: &DiscreteField, region: &Region) -> Result<Selection> {
    u.check(&form.grid)?;
    let grid = &form.grid;
    let mut sel = Selection {
        nodes: Vec::new(),
        coords: Vec::new(),
        values: Vec::new(),
        mass: Vec::new(),
    };
    for n in 0..grid.n_nodes() {
        let x = grid.node_coords(n);
        if region.contains(&x) {
            let slot = grid.interior_slot(n);
            sel.nodes.push(n);
            sel.coords.push(x);
            sel.values.push(slot.map_or(0.0, |s| u.values()[s]));
            sel.mass.push(slot.map_or(0.0, |s| form.mass[s]));
        }
    }
    if sel.nodes.is_empty() {
        let probe = match region {
            Region::Ball { center, .. } => center.clone(),
            Region::Box(b) => b.lo.clone(),
        };
        return Err(Error::domain(&probe, "subregion contains no grid nodes"));
    }
    Ok(sel)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Weighted Lebesgue, Hölder and Sobolev-type norms of `u` over the grid
/// nodes in `region` (boundary nodes count with value zero).
pub fn discrete_norms(
    form: &DiscreteForm,
    u: &DiscreteField,
    region: &Region,
    p: f64,
    beta: f64,
) -> Result<DiscreteNorms> {
    if !(p >= 1.0) {
        return Err(Error::Precondition(format!(
            "norm exponent must be at least 1, got {p}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Precondition(format!(
            "Hölder index must lie in (0, 1), got {beta}"
        )));
    }
    let sel = select(form, u, region)?;
    let lp_mu = sel
        .values
        .iter()
        .zip(&sel.mass)
        .map(|(v, m)| v.abs().powf(p) * m)
        .sum::<f64>()
        .powf(1.0 / p);
    let l1_mu = sel.values.iter().zip(&sel.mass).map(|(v, m)| v.abs() * m).sum::<f64>();
    let sup = sel.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = sel.nodes.len();
    let quotient = par::map_range(form.exec, n, |i| {
        let mut best = 0.0f64;
        for j in i + 1..n {
            let q = (sel.values[i] - sel.values[j]).abs() / dist(&sel.coords[i], &sel.coords[j]).powf(beta);
            best = best.max(q);
        }
        best
    })
    .into_iter()
    .fold(0.0f64, f64::max);

    let grid = &form.grid;
    let h = grid.h();
    let hd = h.powi(grid.dim() as i32);
    let mut sum = 0.0;
    for (i, &node) in sel.nodes.iter().enumerate() {
        sum += sel.values[i].abs().powf(p);
        for axis in 0..grid.dim() {
            let Some(next) = grid.neighbor(node, axis, true) else {
                continue;
            };
            if sel.nodes.binary_search(&next).is_ok() {
                let dv = (u.at_node(grid, next) - sel.values[i]) / h;
                sum += dv.abs().powf(p);
            }
        }
    }
    Ok(DiscreteNorms {
        lp_mu,
        l1_mu,
        holder: sup + quotient,
        h1p: (sum * hd).powf(1.0 / p),
    })
}

/// Modulus of continuity `omega(r) = max { |u_i - u_j| : |x_i - x_j| <= r }`
/// over the nodes in `region`, for each radius.
pub fn modulus_of_continuity(
    form: &DiscreteForm,
    u: &DiscreteField,
    region: &Region,
    radii: &[f64],
) -> Result<Vec<f64>> {
    let sel = select(form, u, region)?;
    let n = sel.nodes.len();
    let per_node = par::map_range(form.exec, n, |i| {
        let mut best = vec![0.0f64; radii.len()];
        for j in i + 1..n {
            let r = dist(&sel.coords[i], &sel.coords[j]);
            let dv = (sel.values[i] - sel.values[j]).abs();
            for (b, rad) in best.iter_mut().zip(radii) {
                if r <= *rad * (1.0 + 1e-12) {
                    *b = b.max(dv);
                }
            }
        }
        best
    });
    let mut out = vec![0.0f64; radii.len()];
    for b in per_node {
        for (o, v) in out.iter_mut().zip(b) {
            *o = o.max(v);
        }
    }
    Ok(out)
}
