use crate::error::{Error, Result};
use crate::model::{cholesky_twice, norm_sq, CoefScratch, ProblemSpec};

use super::SimConfig;

/// Buffers for one path.
#[derive(Debug, Clone)]
pub(crate) struct Stepper {
    pub scratch: CoefScratch,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub next: Vec<f64>,
}

impl Stepper {
    pub fn new(d: usize) -> Self {
        Self {
            scratch: CoefScratch::new(d),
            b: vec![0.0; d],
            sigma: vec![0.0; d * d],
            z: vec![0.0; d],
            next: vec![0.0; d],
        }
    }

    /// Effective step for drift magnitude `|b|`: the base step, shortened so
    /// the drift moves at most `eta`, but never below the substep floor (or
    /// the remaining time to the next stop).
    pub fn effective_step(h_allowed: f64, b_norm: f64, cfg: &SimConfig) -> f64 {
        let capped = if b_norm > 0.0 { cfg.eta / b_norm } else { f64::INFINITY };
        h_allowed.min(capped.max(cfg.substep_floor()))
    }

    /// One substep from `x` with the normals already in `self.z`; the new
    /// point lands in `self.next`. Returns the step actually taken.
    pub fn step(&mut self, spec: &ProblemSpec, cfg: &SimConfig, x: &[f64], h_allowed: f64) -> Result<f64> {
        let d = x.len();
        spec.drift_into(x, &mut self.scratch, &mut self.b)?;
        if !cholesky_twice(&self.scratch.a, d, &mut self.sigma) {
            return Err(Error::Factorization { point: x.to_vec() });
        }
        let h_eff = Self::effective_step(h_allowed, norm_sq(&self.b).sqrt(), cfg);
        let sq = h_eff.sqrt();
        for i in 0..d {
            let noise: f64 = (0..=i).map(|k| self.sigma[i * d + k] * self.z[k]).sum();
            self.next[i] = x[i] + self.b[i] * h_eff + noise * sq;
        }
        Ok(h_eff)
    }
}

/// Single Euler-Maruyama substep `x + b(x) h_eff + sigma(x) sqrt(h_eff) z`
/// with `h_eff = min(h, max(eta / |b(x)|, floor))`.
pub fn em_step(x: &[f64], h: f64, z: &[f64], spec: &ProblemSpec, config: &SimConfig) -> Result<(Vec<f64>, f64)> {
    let mut s = Stepper::new(x.len());
    s.z.copy_from_slice(z);
    let h_eff = s.step(spec, config, x, h)?;
    Ok((s.next, h_eff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DensityField, DomainGeometry, MatrixField};

    fn spec(density: DensityField) -> ProblemSpec {
        let g = DomainGeometry::whole(vec![-200.0, -200.0], vec![200.0, 200.0]).unwrap();
        ProblemSpec::new(g, MatrixField::Identity, density, 3.0).unwrap()
    }

    #[test]
    fn driftless_zero_noise_is_a_fixed_point() {
        let cfg = SimConfig::new(0.01, 1.0, 1);
        let (x, h) = em_step(&[0.0, 0.0], 0.01, &[0.0, 0.0], &spec(DensityField::Const(1.0)), &cfg).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(h, 0.01);
    }

    #[test]
    fn zero_noise_moves_along_the_drift() {
        let cfg = SimConfig::new(0.01, 1.0, 1);
        let s = spec(DensityField::Gauss);
        let (x, h) = em_step(&[0.5, -0.25], 0.01, &[0.0, 0.0], &s, &cfg).unwrap();
        assert_eq!(h, 0.01);
        assert_eq!(x, vec![0.5 - 0.01, -0.25 + 0.005]);
    }

    #[test]
    fn substep_rule_caps_drift_displacement() {
        let mut cfg = SimConfig::new(0.01, 1.0, 1).with_eta(0.1);
        cfg.substep_limit = 100;
        // |x|^100 has drift 100 x / |x|^2, i.e. (100, 0) at (1, 0)
        let rho = DensityField::RadialPow(100.0);
        let (x, h) = em_step(&[1.0, 0.0], 0.01, &[0.0, 0.0], &spec(rho.clone()), &cfg).unwrap();
        assert!((h - 0.001).abs() < 1e-18);
        assert!((x[0] - 1.1).abs() < 1e-12);
        // the floor wins when the limit is small
        cfg.substep_limit = 4;
        let (_, h) = em_step(&[1.0, 0.0], 0.01, &[0.0, 0.0], &spec(rho), &cfg).unwrap();
        assert_eq!(h, 0.0025);
    }
}
