use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::geometry::BoundingBox;

pub type ScalarClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One term `amp * sin(freq . x + phase)` of a [`ScalarFn::Fourier`] field.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    pub amp: f64,
    pub freq: Vec<f64>,
    pub phase: f64,
}

/// Scalar functions on `R^d` used as observables `f` and as martingale test
/// functions `u`. All variants except [`ScalarFn::Indicator`] and
/// [`ScalarFn::Custom`] carry analytic first and second derivatives.
#[derive(Clone)]
pub enum ScalarFn {
    Zero,
    Const(f64),
    /// `x[i]`
    Coord(usize),
    /// `prod_i sin(pi (x_i - lo_i) / (hi_i - lo_i))`, the first Dirichlet
    /// eigenfunction of a box.
    SinProduct {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `x_0^2 - x_1^2`, harmonic.
    Saddle,
    /// `amp * phi(|x - center| / radius)` with `phi(s) = exp(-1 / (1 - s^2))`.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amp: f64,
    },
    /// `amp * phi((|x| - r_mid) / half_width)`, supported in an annulus
    /// around the origin.
    AnnulusBump {
        r_mid: f64,
        half_width: f64,
        amp: f64,
    },
    /// Sum of sines; bounded by the sum of the amplitudes.
    Fourier(Vec<FourierTerm>),
    /// Indicator of the open box `(lo, hi)`.
    Indicator {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Scaled(f64, Box<ScalarFn>),
    Custom(ScalarClosure),
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Zero => write!(f, "Zero"),
            ScalarFn::Const(c) => write!(f, "Const({c})"),
            ScalarFn::Coord(i) => write!(f, "Coord({i})"),
            ScalarFn::SinProduct { lo, hi } => write!(f, "SinProduct({lo:?}, {hi:?})"),
            ScalarFn::Saddle => write!(f, "Saddle"),
            ScalarFn::Bump { center, radius, amp } => write!(f, "Bump({center:?}, {radius}, {amp})"),
            ScalarFn::AnnulusBump { r_mid, half_width, amp } => {
                write!(f, "AnnulusBump({r_mid}, {half_width}, {amp})")
            }
            ScalarFn::Fourier(t) => write!(f, "Fourier({} terms)", t.len()),
            ScalarFn::Indicator { lo, hi } => write!(f, "Indicator({lo:?}, {hi:?})"),
            ScalarFn::Scaled(c, g) => write!(f, "Scaled({c}, {g:?})"),
            ScalarFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// `phi(s2) = exp(-1/(1-s2))` for `s2 < 1` as a function of `s2 = s^2`,
/// with its first and second derivatives in `s2`.
fn bump_profile(s2: f64) -> (f64, f64, f64) {
    if s2 >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 / (1.0 - s2);
    let g = (-q).exp();
    let g1 = -q * q * g;
    let g2 = g * (q.powi(4) - 2.0 * q.powi(3));
    (g, g1, g2)
}

/// Same profile as a function of `s` (not squared).
fn bump_profile_1d(s: f64) -> (f64, f64, f64) {
    let (g, g1, g2) = bump_profile(s * s);
    // d/ds g(s^2) = 2 s g1, d2/ds2 = 2 g1 + 4 s^2 g2
    (g, 2.0 * s * g1, 2.0 * g1 + 4.0 * s * s * g2)
}

impl ScalarFn {
    /// Bump over the unit ball rescaled so its maximum is one.
    pub fn unit_bump(center: Vec<f64>, radius: f64) -> Self {
        ScalarFn::Bump {
            center,
            radius,
            amp: std::f64::consts::E,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        ScalarFn::Scaled(c, Box::new(self))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Const(c) => *c,
            ScalarFn::Coord(i) => x[*i],
            ScalarFn::SinProduct { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (a, b))| (PI * (v - a) / (b - a)).sin())
                .product(),
            ScalarFn::Saddle => x[0] * x[0] - x[1] * x[1],
            ScalarFn::Bump { center, radius, amp } => {
                let s2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum::<f64>() / (radius * radius);
                amp * bump_profile(s2).0
            }
            ScalarFn::AnnulusBump { r_mid, half_width, amp } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = (r - r_mid) / half_width;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    amp * bump_profile(s * s).0
                }
            }
            ScalarFn::Fourier(terms) => terms
                .iter()
                .map(|t| t.amp * (t.freq.iter().zip(x).map(|(k, v)| k * v).sum::<f64>() + t.phase).sin())
                .sum(),
            ScalarFn::Indicator { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v > a && v < b);
                f64::from(u8::from(inside))
            }
            ScalarFn::Scaled(c, g) => c * g.value(x),
            ScalarFn::Custom(f) => f(x),
        }
    }

    pub fn has_derivatives(&self) -> bool {
        match self {
            ScalarFn::Indicator { .. } | ScalarFn::Custom(_) => false,
            ScalarFn::Scaled(_, g) => g.has_derivatives(),
            _ => true,
        }
    }

    /// Identically zero (structurally).
    pub fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Zero => true,
            ScalarFn::Const(c) => *c == 0.0,
            ScalarFn::Scaled(c, g) => *c == 0.0 || g.is_zero(),
            ScalarFn::Bump { amp, .. } | ScalarFn::AnnulusBump { amp, .. } => *amp == 0.0,
            _ => false,
        }
    }

    /// Writes the gradient and the row-major Hessian. Errors for functions
    /// without analytic derivatives.
    pub fn derivatives(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Result<()> {
        let d = x.len();
        grad.fill(0.0);
        hess.fill(0.0);
        match self {
            ScalarFn::Zero | ScalarFn::Const(_) => {}
            ScalarFn::Coord(i) => grad[*i] = 1.0,
            ScalarFn::SinProduct { lo, hi } => {
                let k: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| PI / (b - a)).collect();
                let s: Vec<f64> = (0..d).map(|i| (k[i] * (x[i] - lo[i])).sin()).collect();
                let c: Vec<f64> = (0..d).map(|i| (k[i] * (x[i] - lo[i])).cos()).collect();
                let prod_except =
                    |skip: &[usize]| -> f64 { (0..d).filter(|m| !skip.contains(m)).map(|m| s[m]).product() };
                for i in 0..d {
                    grad[i] = k[i] * c[i] * prod_except(&[i]);
                    for j in 0..d {
                        hess[i * d + j] = if i == j {
                            -k[i] * k[i] * s[i] * prod_except(&[i])
                        } else {
                            k[i] * c[i] * k[j] * c[j] * prod_except(&[i, j])
                        };
                    }
                }
            }
            ScalarFn::Saddle => {
                grad[0] = 2.0 * x[0];
                grad[1] = -2.0 * x[1];
                hess[0] = 2.0;
                hess[d + 1] = -2.0;
            }
            ScalarFn::Bump { center, radius, amp } => {
                let y: Vec<f64> = x.iter().zip(center).map(|(v, c)| (v - c) / radius).collect();
                let s2: f64 = y.iter().map(|v| v * v).sum();
                let (_, g1, g2) = bump_profile(s2);
                for i in 0..d {
                    grad[i] = amp * g1 * 2.0 * y[i] / radius;
                    for j in 0..d {
                        let diag = if i == j { 2.0 * g1 } else { 0.0 };
                        hess[i * d + j] = amp * (g2 * 4.0 * y[i] * y[j] + diag) / (radius * radius);
                    }
                }
            }
            ScalarFn::AnnulusBump { r_mid, half_width, amp } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = (r - r_mid) / half_width;
                if s.abs() < 1.0 && r > 0.0 {
                    let (_, p1, p2) = bump_profile_1d(s);
                    // radial profile F(r) with F' = p1/w, F'' = p2/w^2
                    let f1 = amp * p1 / half_width;
                    let f2 = amp * p2 / (half_width * half_width);
                    for i in 0..d {
                        let ni = x[i] / r;
                        grad[i] = f1 * ni;
                        for j in 0..d {
                            let nj = x[j] / r;
                            let delta = if i == j { 1.0 } else { 0.0 };
                            hess[i * d + j] = f2 * ni * nj + f1 * (delta - ni * nj) / r;
                        }
                    }
                }
            }
            ScalarFn::Fourier(terms) => {
                for t in terms {
                    let arg = t.freq.iter().zip(x).map(|(k, v)| k * v).sum::<f64>() + t.phase;
                    let (s, c) = arg.sin_cos();
                    for i in 0..d {
                        grad[i] += t.amp * c * t.freq[i];
                        for j in 0..d {
                            hess[i * d + j] -= t.amp * s * t.freq[i] * t.freq[j];
                        }
                    }
                }
            }
            ScalarFn::Scaled(c, g) => {
                g.derivatives(x, grad, hess)?;
                grad.iter_mut().for_each(|v| *v *= c);
                hess.iter_mut().for_each(|v| *v *= c);
            }
            ScalarFn::Indicator { .. } | ScalarFn::Custom(_) => {
                return Err(Error::Config("test function has no analytic derivatives".into()));
            }
        }
        Ok(())
    }

    /// Upper bound of `|f|` over the closed box, where one is known.
    pub fn sup_bound(&self, bbox: &BoundingBox) -> Option<f64> {
        let e_inv = (-1.0f64).exp();
        match self {
            ScalarFn::Zero => Some(0.0),
            ScalarFn::Const(c) => Some(c.abs()),
            ScalarFn::Coord(i) => Some(bbox.lo[*i].abs().max(bbox.hi[*i].abs())),
            ScalarFn::SinProduct { .. } | ScalarFn::Indicator { .. } => Some(1.0),
            ScalarFn::Saddle => {
                let m0 = bbox.lo[0].abs().max(bbox.hi[0].abs());
                let m1 = bbox.lo[1].abs().max(bbox.hi[1].abs());
                Some((m0 * m0).max(m1 * m1))
            }
            ScalarFn::Bump { amp, .. } | ScalarFn::AnnulusBump { amp, .. } => Some(amp.abs() * e_inv),
            ScalarFn::Fourier(t) => Some(t.iter().map(|t| t.amp.abs()).sum()),
            ScalarFn::Scaled(c, g) => g.sup_bound(bbox).map(|b| c.abs() * b),
            ScalarFn::Custom(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &ScalarFn, x: &[f64]) {
        let d = x.len();
        let h = 1e-5;
        let mut g = vec![0.0; d];
        let mut hs = vec![0.0; d * d];
        f.derivatives(x, &mut g, &mut hs).unwrap();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        let mut scratch = vec![0.0; d * d];
        let mut y = x.to_vec();
        for j in 0..d {
            y[j] = x[j] + h;
            let fp = f.value(&y);
            f.derivatives(&y, &mut gp, &mut scratch).unwrap();
            y[j] = x[j] - h;
            let fm = f.value(&y);
            f.derivatives(&y, &mut gm, &mut scratch).unwrap();
            y[j] = x[j];
            let scale = 1.0 + g[j].abs();
            assert!(((fp - fm) / (2.0 * h) - g[j]).abs() < 1e-6 * scale, "{f:?} grad {j}");
            for i in 0..d {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!(
                    (fd - hs[i * d + j]).abs() < 1e-5 * (1.0 + hs[i * d + j].abs()),
                    "{f:?} hess {i}{j}: {fd} vs {}",
                    hs[i * d + j]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fns = [
            ScalarFn::SinProduct {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 2.0],
            },
            ScalarFn::Saddle,
            ScalarFn::Bump {
                center: vec![0.6, 0.0],
                radius: 0.25,
                amp: 2.0,
            },
            ScalarFn::AnnulusBump {
                r_mid: 0.6,
                half_width: 0.3,
                amp: 1.0,
            },
            ScalarFn::Fourier(vec![FourierTerm {
                amp: 0.5,
                freq: vec![2.0, -1.0],
                phase: 0.3,
            }]),
            ScalarFn::Coord(1).scaled(3.0),
        ];
        for f in &fns {
            for x in [[0.62, 0.05], [0.5, 0.3], [0.41, -0.2]] {
                fd_check(f, &x);
            }
        }
    }

    #[test]
    fn bumps_vanish_outside_support() {
        let b = ScalarFn::unit_bump(vec![0.0, 0.0], 1.0);
        assert!((b.value(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(b.value(&[1.0, 0.0]), 0.0);
        let a = ScalarFn::AnnulusBump {
            r_mid: 0.6,
            half_width: 0.3,
            amp: 1.0,
        };
        assert_eq!(a.value(&[0.25, 0.0]), 0.0);
        assert_eq!(a.value(&[0.0, 0.95]), 0.0);
        assert!(a.value(&[0.6, 0.0]) > 0.36);
    }

    #[test]
    fn indicator_has_no_derivatives() {
        let f = ScalarFn::Indicator {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        let mut g = [0.0; 2];
        let mut h = [0.0; 4];
        assert!(f.derivatives(&[0.5, 0.5], &mut g, &mut h).is_err());
        assert!(!f.has_derivatives());
    }
}
