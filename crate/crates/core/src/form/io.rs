use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::assemble::DiscreteForm;
use super::field::DiscreteField;
use super::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxJson {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Header accompanying a coordinate-list stiffness dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormHeader {
    pub d: usize,
    pub h: f64,
    #[serde(rename = "box")]
    pub bbox: BoxJson,
    pub n_interior: usize,
}

impl From<&DiscreteForm> for FormHeader {
    fn from(form: &DiscreteForm) -> Self {
        let g = form.grid();
        Self {
            d: g.dim(),
            h: g.h(),
            bbox: BoxJson {
                lo: g.bbox().lo.clone(),
                hi: g.bbox().hi.clone(),
            },
            n_interior: g.n_interior(),
        }
    }
}

/// Writes `row col value` lines of the stiffness matrix (interior numbering).
pub fn write_stiffness_coo<W: Write>(form: &DiscreteForm, mut w: W) -> Result<()> {
    for (i, j, v) in form.stiffness().triplets() {
        writeln!(w, "{i} {j} {v:e}")?;
    }
    Ok(())
}

/// Writes `node,x1..xd,value` for every grid node, boundary included.
pub fn write_field_csv<W: Write>(grid: &Grid, u: &DiscreteField, mut w: W) -> Result<()> {
    u.check(grid)?;
    let mut header = String::from("node");
    for k in 1..=grid.dim() {
        header.push_str(&format!(",x{k}"));
    }
    writeln!(w, "{header},value")?;
    let mut x = vec![0.0; grid.dim()];
    for n in 0..grid.n_nodes() {
        grid.coords(n, &mut x);
        write!(w, "{n}")?;
        for v in &x {
            write!(w, ",{v:e}")?;
        }
        writeln!(w, ",{:e}", u.at_node(grid, n))?;
    }
    Ok(())
}
