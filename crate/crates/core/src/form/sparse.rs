use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Compressed sparse row matrix with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(col, value)` lists that are already sorted and merged.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for r in rows {
            for (c, v) in r {
                debug_assert!(c < n);
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `(i, j, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.vals[k] * x[self.cols[k]];
        }
        s
    }

    /// `y = A x`.
    pub fn mul_into(&self, exec: Exec, x: &[f64], y: &mut [f64]) {
        par::fill(exec, y, |i| self.row_dot(i, x));
    }

    /// `y = beta A x + alpha diag(m) x`.
    pub fn shifted_mul_into(&self, exec: Exec, alpha: f64, m: &[f64], beta: f64, x: &[f64], y: &mut [f64]) {
        par::fill(exec, y, |i| beta * self.row_dot(i, x) + alpha * m[i] * x[i]);
    }

    pub fn mul(&self, exec: Exec, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(exec, x, &mut y);
        y
    }

    /// Dense row-major copy, for small matrices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for (i, j, v) in self.triplets() {
            a[i * self.n + j] = v;
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Target `|b - A x| / |b|`.
    pub tol: f64,
    pub max_iter: usize,
    pub exec: Exec,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator given as a
/// mat-vec closure. `x` holds the initial guess on entry.
pub fn cg<F>(apply: F, precond: &[f64], b: &[f64], x: &mut [f64], opts: &CgOptions) -> Result<CgReport>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let exec = opts.exec;
    let b_norm = par::dot(exec, b, b).sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv: Vec<f64> = precond.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = par::dot(exec, &r, &z);
    let mut res = par::dot(exec, &r, &r).sqrt() / b_norm;
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(CgReport {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut q);
        let pq = par::dot(exec, &p, &q);
        if !(pq > 0.0) {
            return Err(Error::Solver {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] * inv[i];
        }
        let rz_new = par::dot(exec, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = par::dot(exec, &r, &r).sqrt() / b_norm;
    }
    if res <= opts.tol {
        return Ok(CgReport {
            iterations: opts.max_iter,
            residual: res,
        });
    }
    Err(Error::Solver {
        iterations: opts.max_iter,
        residual: res,
    })
}
