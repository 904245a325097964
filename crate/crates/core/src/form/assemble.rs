use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::par::{self, Exec};

use super::grid::Grid;
use super::sparse::Csr;

/// Stiffness `S` and lumped mass `M` of the weighted form on a grid,
/// restricted to interior nodes (zero Dirichlet data elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteForm {
    pub(crate) grid: Grid,
    pub(crate) stiffness: Csr,
    pub(crate) mass: Vec<f64>,
    pub(crate) rho: Vec<f64>,
    pub(crate) diagonal: bool,
    pub(crate) exec: Exec,
}

impl DiscreteForm {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn stiffness(&self) -> &Csr {
        &self.stiffness
    }

    /// Diagonal of `M`, `rho(x_i) h^d`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `rho` at the interior nodes.
    pub fn rho_nodes(&self) -> &[f64] {
        &self.rho
    }

    /// True when `A` is diagonal, so `lambda M + S` is an M-matrix.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }
}

/// Element key; rows visit their incident elements in this global order so
/// that `S_ij` and `S_ji` are summed identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Element {
    Face { base: usize, axis: usize },
    Square { base: usize, k: usize, l: usize },
}

struct Contribution {
    element: Element,
    col: usize,
    value: f64,
}

const GK: [f64; 4] = [-0.5, 0.5, -0.5, 0.5];
const GL: [f64; 4] = [-0.5, -0.5, 0.5, 0.5];

fn checked(x: &[f64], v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(x, format!("{what} is not finite")))
    }
}

fn assemble_row(spec: &ProblemSpec, grid: &Grid, slot: usize, cross: bool) -> Result<Vec<(usize, f64)>> {
    let d = grid.dim();
    let h = grid.h();
    let scale = h.powi(d as i32 - 2);
    let node = grid.interior_nodes()[slot];
    let mut x = vec![0.0; d];
    let mut m = vec![0; d];
    grid.multi_index(node, &mut m);
    let mut out = Vec::with_capacity(2 * d + 1 + if cross { 4 * d * d } else { 0 });
    let push = |element, other: usize, value: f64, out: &mut Vec<Contribution>| {
        if other == node {
            out.push(Contribution {
                element,
                col: slot,
                value,
            });
        } else if let Some(c) = grid.interior_slot(other) {
            out.push(Contribution { element, col: c, value });
        }
    };
    for axis in 0..d {
        for forward in [false, true] {
            let Some(other) = grid.neighbor(node, axis, forward) else {
                continue;
            };
            let base = node.min(other);
            grid.coords(base, &mut x);
            x[axis] += 0.5 * h;
            let rho = checked(&x, spec.rho(&x), "density")?;
            let a = checked(&x, spec.matrix().entry(&x, axis, axis), "matrix entry")?;
            let w = scale * rho * a;
            let element = Element::Face { base, axis };
            push(element, node, w, &mut out);
            push(element, other, -w, &mut out);
        }
    }
    if cross {
        for k in 0..d {
            for l in k + 1..d {
                for sl in 0..2 {
                    for sk in 0..2 {
                        if m[k] < sk
                            || m[l] < sl
                            || m[k] - sk + 1 >= grid.counts()[k]
                            || m[l] - sl + 1 >= grid.counts()[l]
                        {
                            continue;
                        }
                        let base = node - sk * grid.strides()[k] - sl * grid.strides()[l];
                        let corners = [
                            base,
                            base + grid.strides()[k],
                            base + grid.strides()[l],
                            base + grid.strides()[k] + grid.strides()[l],
                        ];
                        grid.coords(base, &mut x);
                        x[k] += 0.5 * h;
                        x[l] += 0.5 * h;
                        let rho = checked(&x, spec.rho(&x), "density")?;
                        let a = checked(&x, spec.matrix().entry(&x, k, l), "matrix entry")?;
                        let kappa = scale * rho * a;
                        if kappa == 0.0 {
                            continue;
                        }
                        let me = sk + 2 * sl;
                        let element = Element::Square { base, k, l };
                        for (c, &other) in corners.iter().enumerate() {
                            let v = kappa * (GK[me] * GL[c] + GL[me] * GK[c]);
                            push(element, other, v, &mut out);
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|c| c.element);
    out.sort_by_key(|c| c.col);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for c in out {
        match row.last_mut() {
            Some((col, v)) if *col == c.col => *v += c.value,
            _ => row.push((c.col, c.value)),
        }
    }
    Ok(row)
}

/// Face-flux assembly of the weighted Dirichlet form.
///
/// Each face between neighbours `i`, `i + e_k` carries the weight
/// `h^(d-2) rho a_kk` at the face midpoint. Off-diagonal entries `a_kl` enter
/// through a four-corner stencil on every `(k, l)` grid square, evaluated at
/// the square centre. `M_ii = rho(x_i) h^d`.
pub fn assemble(spec: &ProblemSpec, grid: &Grid) -> Result<DiscreteForm> {
    assemble_with(spec, grid, Exec::default())
}

pub fn assemble_with(spec: &ProblemSpec, grid: &Grid, exec: Exec) -> Result<DiscreteForm> {
    if grid.dim() != spec.dim() {
        return Err(Error::Shape(format!(
            "grid dimension {} differs from problem dimension {}",
            grid.dim(),
            spec.dim()
        )));
    }
    if !spec.geometry().bounding_box().contains_box(grid.bbox()) {
        return Err(Error::Config(
            "grid box must lie inside the bounding box of the domain".into(),
        ));
    }
    let cross = !spec.matrix().is_diagonal();
    let rows = par::try_map_range(exec, grid.n_interior(), |slot| assemble_row(spec, grid, slot, cross))?;
    let hd = grid.h().powi(grid.dim() as i32);
    let rho = par::try_map_range(exec, grid.n_interior(), |slot| {
        let x = grid.node_coords(grid.interior_nodes()[slot]);
        let r = spec.rho(&x);
        if r.is_finite() && r >= 0.0 {
            Ok(r)
        } else {
            Err(Error::domain(&x, "density must be finite and nonnegative"))
        }
    })?;
    Ok(DiscreteForm {
        grid: grid.clone(),
        stiffness: Csr::from_rows(rows),
        mass: rho.iter().map(|r| r * hd).collect(),
        rho,
        diagonal: !cross,
        exec,
    })
}
