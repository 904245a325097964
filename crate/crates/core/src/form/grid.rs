use std::hash::{DefaultHasher, Hash, Hasher};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, ProblemSpec};

const NOT_INTERIOR: u32 = u32::MAX;

/// Uniform tensor grid on a box. Nodes are numbered with axis 0 varying
/// fastest. A node is interior when it lies strictly inside the box and in
/// the domain; every other node carries the zero boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bbox: BoundingBox,
    h: f64,
    counts: Vec<usize>,
    strides: Vec<usize>,
    slot: Vec<u32>,
    interior: Vec<usize>,
    key: u64,
}

impl Grid {
    /// Grid of spacing `h` on `[lo, hi]`; each side must be a multiple of `h`.
    pub fn new(spec: &ProblemSpec, lo: Vec<f64>, hi: Vec<f64>, h: f64) -> Result<Self> {
        let bbox = BoundingBox::new(lo, hi)?;
        if bbox.dim() != spec.dim() {
            return Err(Error::Shape(format!(
                "grid box has dimension {}, problem has {}",
                bbox.dim(),
                spec.dim()
            )));
        }
        if !spec.geometry().bounding_box().contains_box(&bbox) {
            return Err(Error::Config(
                "grid box must lie inside the bounding box of the domain".into(),
            ));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
        }
        let mut counts = Vec::with_capacity(bbox.dim());
        for (a, b) in bbox.lo.iter().zip(&bbox.hi) {
            let cells = (b - a) / h;
            let n = cells.round();
            if (cells - n).abs() > 1e-9 * n.max(1.0) {
                return Err(Error::Config(format!(
                    "box side {} is not a multiple of h = {h}",
                    b - a
                )));
            }
            if n < 4.0 {
                return Err(Error::Config(format!(
                    "grid too coarse: {} interior nodes along an axis, need at least 3",
                    (n as i64 - 1).max(0)
                )));
            }
            counts.push(n as usize + 1);
        }
        let mut strides = vec![1; counts.len()];
        for k in 1..counts.len() {
            strides[k] = strides[k - 1] * counts[k - 1];
        }
        let total: usize = counts.iter().product();
        let mut grid = Self {
            bbox,
            h,
            counts,
            strides,
            slot: vec![NOT_INTERIOR; total],
            interior: Vec::new(),
            key: 0,
        };
        let mut x = vec![0.0; grid.dim()];
        let mut m = vec![0; grid.dim()];
        for g in 0..total {
            grid.multi_index(g, &mut m);
            if m.iter().zip(&grid.counts).any(|(i, n)| *i == 0 || *i == n - 1) {
                continue;
            }
            grid.coords(g, &mut x);
            if spec.geometry().contains(&x) {
                grid.slot[g] = grid.interior.len() as u32;
                grid.interior.push(g);
            }
        }
        if grid.interior.is_empty() {
            return Err(Error::Config("grid has no interior nodes inside the domain".into()));
        }
        let mut hasher = DefaultHasher::new();
        for v in grid.bbox.lo.iter().chain(&grid.bbox.hi).chain([&h]) {
            v.to_bits().hash(&mut hasher);
        }
        grid.interior.hash(&mut hasher);
        grid.key = hasher.finish();
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    /// Nodes per axis, boundary included.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn n_nodes(&self) -> usize {
        self.slot.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Identifies the node layout; fields compare keys before mixing.
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Global node ids of the interior nodes, increasing.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Position of a global node among the interior nodes.
    pub fn interior_slot(&self, node: usize) -> Option<usize> {
        match self.slot[node] {
            NOT_INTERIOR => None,
            s => Some(s as usize),
        }
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.slot[node] != NOT_INTERIOR
    }

    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        let mut rest = node;
        for (o, n) in out.iter_mut().zip(&self.counts) {
            *o = rest % n;
            rest /= n;
        }
    }

    pub fn node_of(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for (k, n) in self.counts.iter().enumerate() {
            out[k] = self.bbox.lo[k] + (rest % n) as f64 * self.h;
            rest /= n;
        }
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords(node, &mut x);
        x
    }

    /// Node whose coordinates are within `h * 1e-6` of `x`.
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        let mut m = vec![0; self.dim()];
        for k in 0..self.dim() {
            let s = (x[k] - self.bbox.lo[k]) / self.h;
            let i = s.round();
            if (s - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.counts[k] {
                return None;
            }
            m[k] = i as usize;
        }
        Some(self.node_of(&m))
    }

    /// Neighbour of `node` one step along `axis` (`+1` or `-1`), if on the grid.
    pub fn neighbor(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let i = (node / self.strides[axis]) % self.counts[axis];
        if forward {
            (i + 1 < self.counts[axis]).then(|| node + self.strides[axis])
        } else {
            (i > 0).then(|| node - self.strides[axis])
        }
    }
}
