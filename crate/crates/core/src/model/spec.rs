use crate::error::{Error, Result};

use super::fields::{DensityField, MatrixField};
use super::functions::ScalarFn;
use super::geometry::DomainGeometry;

/// A complete problem instance: domain, matrix field, density and the
/// integrability exponent `p > d`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    geometry: DomainGeometry,
    matrix: MatrixField,
    density: DensityField,
    p: f64,
}

/// Reusable buffers for coefficient evaluation in hot loops.
#[derive(Debug, Clone)]
pub struct CoefScratch {
    pub a: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    tmp: Vec<f64>,
}

impl CoefScratch {
    pub fn new(d: usize) -> Self {
        Self {
            a: vec![0.0; d * d],
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
            tmp: vec![0.0; d],
        }
    }
}

/// Lower-triangular `L` with `L L^T = 2 A`, or `false` if `A` is not
/// positive definite.
pub(crate) fn cholesky_twice(a: &[f64], d: usize, out: &mut [f64]) -> bool {
    out.fill(0.0);
    for i in 0..d {
        for j in 0..=i {
            let mut s = 2.0 * a[i * d + j];
            for k in 0..j {
                s -= out[i * d + k] * out[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return false;
                }
                out[i * d + i] = s.sqrt();
            } else {
                out[i * d + j] = s / out[j * d + j];
            }
        }
    }
    true
}

impl ProblemSpec {
    pub fn new(geometry: DomainGeometry, matrix: MatrixField, density: DensityField, p: f64) -> Result<Self> {
        let d = geometry.dim();
        if let Some(md) = matrix.fixed_dim() {
            if md != d {
                return Err(Error::Config(format!(
                    "matrix field has dimension {md}, domain has {d}"
                )));
            }
        }
        if !(p > d as f64) || !p.is_finite() {
            return Err(Error::Config(format!(
                "integrability exponent violated: p must exceed d (p = {p}, d = {d})"
            )));
        }
        Ok(Self {
            geometry,
            matrix,
            density,
            p,
        })
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn geometry(&self) -> &DomainGeometry {
        &self.geometry
    }

    pub fn matrix(&self) -> &MatrixField {
        &self.matrix
    }

    pub fn density(&self) -> &DensityField {
        &self.density
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Hoelder index `1 - d/p` of functions in the generator domain.
    pub fn beta(&self) -> f64 {
        1.0 - self.dim() as f64 / self.p
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        self.density.value(x)
    }

    /// Same problem with `rho` replaced.
    pub fn with_density(&self, density: DensityField) -> Self {
        Self {
            density,
            ..self.clone()
        }
    }

    /// Same problem with `Omega` replaced (used for nested-domain comparisons).
    pub fn with_geometry(&self, geometry: DomainGeometry) -> Result<Self> {
        Self::new(geometry, self.matrix.clone(), self.density.clone(), self.p)
    }

    fn check_regular_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point of dimension {} for a {}-d problem",
                x.len(),
                self.dim()
            )));
        }
        if !self.geometry.in_omega(x) {
            return Err(Error::domain(x, "point outside the domain"));
        }
        if !(self.rho(x) > 0.0) {
            return Err(Error::domain(x, "density vanishes, drift is singular"));
        }
        Ok(())
    }

    /// Drift `b_i = sum_j d_j a_ij + a_ij d_j(ln rho)` into `out`; `s.a`
    /// holds `A(x)` afterwards.
    pub fn drift_into(&self, x: &[f64], s: &mut CoefScratch, out: &mut [f64]) -> Result<()> {
        self.check_regular_point(x)?;
        let d = x.len();
        self.matrix.eval(x, &mut s.a);
        self.matrix.divergence(x, out);
        self.density.log_gradient(x, &mut s.tmp)?;
        for i in 0..d {
            let row = &s.a[i * d..(i + 1) * d];
            out[i] += row.iter().zip(&s.tmp).map(|(a, g)| a * g).sum::<f64>();
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(x, "non-finite drift"));
        }
        Ok(())
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = CoefScratch::new(x.len());
        let mut b = vec![0.0; x.len()];
        self.drift_into(x, &mut s, &mut b)?;
        Ok(b)
    }

    /// Lower-triangular `sigma(x)` with `sigma sigma^T = 2 A(x)`, row-major.
    pub fn diffusion_factor(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = x.len();
        let mut a = vec![0.0; d * d];
        self.matrix.eval(x, &mut a);
        let mut l = vec![0.0; d * d];
        if !cholesky_twice(&a, d, &mut l) {
            return Err(Error::Factorization { point: x.to_vec() });
        }
        Ok(l)
    }

    /// `Lu(x) = sum a_ij d_i d_j u + b . grad u`. Vanishes without touching
    /// the drift wherever `u` is locally flat, so compactly supported test
    /// functions can be evaluated anywhere.
    pub fn generator(&self, u: &ScalarFn, x: &[f64], s: &mut CoefScratch) -> Result<f64> {
        let d = x.len();
        let mut grad = std::mem::take(&mut s.grad);
        let mut hess = std::mem::take(&mut s.hess);
        let r = (|| {
            u.derivatives(x, &mut grad, &mut hess)?;
            if grad.iter().all(|v| *v == 0.0) && hess.iter().all(|v| *v == 0.0) {
                return Ok(0.0);
            }
            let mut b = vec![0.0; d];
            self.drift_into(x, s, &mut b)?;
            let second: f64 = s.a.iter().zip(&hess).map(|(a, h)| a * h).sum();
            let first: f64 = b.iter().zip(&grad).map(|(b, g)| b * g).sum();
            Ok(second + first)
        })();
        s.grad = grad;
        s.hess = hess;
        r
    }
}
