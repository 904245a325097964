use crate::error::{Error, Result};
use crate::model::ScalarFn;

use super::grid::Grid;

/// Values on the interior nodes of a grid; every other node holds zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    key: u64,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            key: grid.key(),
            values: vec![0.0; grid.n_interior()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(Error::Shape(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.n_interior()
            )));
        }
        Ok(Self {
            key: grid.key(),
            values,
        })
    }

    /// Nodewise samples of `f`.
    pub fn sample(grid: &Grid, f: &ScalarFn) -> Self {
        Self::from_fn(grid, |x| f.value(x))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = grid
            .interior_nodes()
            .iter()
            .map(|&n| {
                grid.coords(n, &mut x);
                f(&x)
            })
            .collect();
        Self {
            key: grid.key(),
            values,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        if self.key != grid.key() || self.values.len() != grid.n_interior() {
            return Err(Error::Shape("field belongs to a different grid".into()));
        }
        Ok(())
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self { key: self.key, values }
    }

    /// Value at a global node id (zero off the interior).
    pub fn at_node(&self, grid: &Grid, node: usize) -> f64 {
        grid.interior_slot(node).map_or(0.0, |s| self.values[s])
    }

    /// All nodes, boundary included, in global order.
    pub fn to_full(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.n_nodes()).map(|n| self.at_node(grid, n)).collect()
    }

    /// Multilinear interpolation at a point of the grid box.
    pub fn interpolate(&self, grid: &Grid, x: &[f64]) -> Result<f64> {
        let d = grid.dim();
        if x.len() != d {
            return Err(Error::Shape(format!("point has dimension {}", x.len())));
        }
        if !grid.bbox().contains_closed(x) {
            return Err(Error::domain(x, "point outside the grid box"));
        }
        let mut base = vec![0; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let s = (x[k] - grid.bbox().lo[k]) / grid.h();
            let i = (s.floor() as usize).min(grid.counts()[k] - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        let b = grid.node_of(&base);
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut node = b;
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    node += grid.strides()[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * self.at_node(grid, node);
            }
        }
        Ok(acc)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &DiscreteField, b: f64) -> Result<DiscreteField> {
        if self.key != other.key {
            return Err(Error::Shape("fields belong to different grids".into()));
        }
        Ok(self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| a * u + b * v)
                .collect(),
        ))
    }

    pub fn scaled(&self, c: f64) -> DiscreteField {
        self.with_values(self.values.iter().map(|v| c * v).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|`.
    pub fn max_diff(&self, other: &DiscreteField) -> Result<f64> {
        Ok(self.combine(1.0, other, -1.0)?.max_abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DensityField, DomainGeometry, MatrixField, ProblemSpec};

    #[test]
    fn interpolation_reproduces_bilinear_functions() {
        let spec = ProblemSpec::new(
            DomainGeometry::box_domain(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            MatrixField::Identity,
            DensityField::Const(1.0),
            3.0,
        )
        .unwrap();
        let grid = Grid::new(&spec, vec![0.0, 0.0], vec![1.0, 1.0], 0.125).unwrap();
        let f = |x: &[f64]| x[0] * x[1];
        let u = DiscreteField::from_fn(&grid, f);
        // boundary nodes hold 0, so stay inside the first interior cell ring
        let v = u.interpolate(&grid, &[0.3, 0.41]).unwrap();
        assert!((v - 0.3 * 0.41).abs() < 1e-14);
        assert_eq!(u.at_node(&grid, 0), 0.0);
        assert!(u.interpolate(&grid, &[1.2, 0.5]).is_err());
    }
}
