use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type MatrixFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Relative spacing for the central-difference fallback used by custom fields.
pub const FD_REL_STEP: f64 = 1e-5;

fn fd_step(v: f64) -> f64 {
    FD_REL_STEP * v.abs().max(1.0)
}

/// Diagonal entry `base + coeff * x[axis]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagEntry {
    pub base: f64,
    pub coeff: f64,
    pub axis: Option<usize>,
}

impl DiagEntry {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            coeff: 0.0,
            axis: None,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self.axis {
            Some(k) => self.base + self.coeff * x[k] * x[k],
            None => self.base,
        }
    }

    fn partial(&self, x: &[f64], j: usize) -> f64 {
        match self.axis {
            Some(k) if k == j => 2.0 * self.coeff * x[k],
            _ => 0.0,
        }
    }
}

impl fmt::Display for DiagEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.axis {
            Some(k) => write!(f, "{}{:+}*x{}^2", self.base, self.coeff, k + 1),
            None => write!(f, "{}", self.base),
        }
    }
}

/// Symmetric matrix field `x -> A(x)` with its row divergence
/// `(sum_j d_j a_ij)(x)`.
#[derive(Clone)]
pub enum MatrixField {
    Identity,
    Diagonal(Vec<DiagEntry>),
    /// `[[a11, a12 cos(freq (x1 + x2))], [.., a22]]`, two dimensions only.
    Smooth2x2 {
        a11: f64,
        a22: f64,
        a12: f64,
        freq: f64,
    },
    /// Constant row-major `d x d` matrix.
    Constant {
        dim: usize,
        entries: Vec<f64>,
    },
    /// Arbitrary evaluator writing row-major entries; divergence by central
    /// differences.
    Custom {
        dim: usize,
        eval: MatrixFn,
    },
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixField({})", self.tag())
    }
}

impl MatrixField {
    /// Dimension the family is tied to, `None` for dimension-free families.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            MatrixField::Identity => None,
            MatrixField::Diagonal(e) => Some(e.len()),
            MatrixField::Smooth2x2 { .. } => Some(2),
            MatrixField::Constant { dim, .. } | MatrixField::Custom { dim, .. } => Some(*dim),
        }
    }

    /// True when the off-diagonal entries vanish identically.
    pub fn is_diagonal(&self) -> bool {
        match self {
            MatrixField::Identity | MatrixField::Diagonal(_) => true,
            MatrixField::Smooth2x2 { a12, .. } => *a12 == 0.0,
            MatrixField::Constant { dim, entries } => {
                (0..*dim).all(|i| (0..*dim).all(|j| i == j || entries[i * dim + j] == 0.0))
            }
            MatrixField::Custom { .. } => false,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            MatrixField::Identity => "identity".into(),
            MatrixField::Diagonal(e) => {
                let parts: Vec<String> = e.iter().map(|d| d.to_string()).collect();
                format!("diag:{}", parts.join(","))
            }
            MatrixField::Smooth2x2 { a11, a22, a12, freq } => format!("smooth2x2:{a11},{a22},{a12},{freq}"),
            MatrixField::Constant { entries, .. } => {
                let parts: Vec<String> = entries.iter().map(|v| v.to_string()).collect();
                format!("const:{}", parts.join(","))
            }
            MatrixField::Custom { .. } => "custom".into(),
        }
    }

    /// Writes `A(x)` row-major into `out` (length `d*d`).
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        debug_assert_eq!(out.len(), d * d);
        match self {
            MatrixField::Identity => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = 1.0;
                }
            }
            MatrixField::Diagonal(entries) => {
                out.fill(0.0);
                for (i, e) in entries.iter().enumerate() {
                    out[i * d + i] = e.value(x);
                }
            }
            MatrixField::Smooth2x2 { a11, a22, a12, freq } => {
                let off = a12 * (freq * (x[0] + x[1])).cos();
                out.copy_from_slice(&[*a11, off, off, *a22]);
            }
            MatrixField::Constant { entries, .. } => out.copy_from_slice(entries),
            MatrixField::Custom { eval, .. } => eval(x, out),
        }
    }

    /// Single entry `a_ij(x)`.
    pub fn entry(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let d = x.len();
        match self {
            MatrixField::Identity => f64::from(u8::from(i == j)),
            MatrixField::Diagonal(entries) => {
                if i == j {
                    entries[i].value(x)
                } else {
                    0.0
                }
            }
            MatrixField::Smooth2x2 { a11, a22, a12, freq } => match (i, j) {
                (0, 0) => *a11,
                (1, 1) => *a22,
                _ => a12 * (freq * (x[0] + x[1])).cos(),
            },
            MatrixField::Constant { entries, .. } => entries[i * d + j],
            MatrixField::Custom { eval, .. } => {
                let mut buf = vec![0.0; d * d];
                eval(x, &mut buf);
                buf[i * d + j]
            }
        }
    }

    /// Writes the row divergence `sum_j d_j a_ij(x)` into `out`.
    pub fn divergence(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self {
            MatrixField::Identity | MatrixField::Constant { .. } => out.fill(0.0),
            MatrixField::Diagonal(entries) => {
                for (i, e) in entries.iter().enumerate() {
                    out[i] = e.partial(x, i);
                }
            }
            MatrixField::Smooth2x2 { a12, freq, .. } => {
                let v = -a12 * freq * (freq * (x[0] + x[1])).sin();
                out[0] = v;
                out[1] = v;
            }
            MatrixField::Custom { eval, .. } => {
                let mut plus = vec![0.0; d * d];
                let mut minus = vec![0.0; d * d];
                let mut y = x.to_vec();
                out.fill(0.0);
                for j in 0..d {
                    let s = fd_step(x[j]);
                    y[j] = x[j] + s;
                    eval(&y, &mut plus);
                    y[j] = x[j] - s;
                    eval(&y, &mut minus);
                    y[j] = x[j];
                    for i in 0..d {
                        out[i] += (plus[i * d + j] - minus[i * d + j]) / (2.0 * s);
                    }
                }
            }
        }
    }

    /// Central-difference divergence, used to cross-check the analytic one.
    pub fn divergence_fd(&self, x: &[f64], step: f64, out: &mut [f64]) {
        let d = x.len();
        let mut y = x.to_vec();
        out.fill(0.0);
        for j in 0..d {
            for i in 0..d {
                y[j] = x[j] + step;
                let p = self.entry(&y, i, j);
                y[j] = x[j] - step;
                let m = self.entry(&y, i, j);
                y[j] = x[j];
                out[i] += (p - m) / (2.0 * step);
            }
        }
    }
}

/// Nonnegative continuous density `rho`.
#[derive(Clone)]
pub enum DensityField {
    Const(f64),
    /// `exp(-|x|^2)`
    Gauss,
    /// `|x|^alpha`
    RadialPow(f64),
    Product(Vec<DensityField>),
    /// Evaluator only; gradients by central differences.
    Custom(DensityFn),
}

impl fmt::Debug for DensityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityField({})", self.tag())
    }
}

impl DensityField {
    pub fn tag(&self) -> String {
        match self {
            DensityField::Const(c) if *c == 1.0 => "const".into(),
            DensityField::Const(c) => format!("const:{c}"),
            DensityField::Gauss => "gauss".into(),
            DensityField::RadialPow(a) => format!("radial_pow:{a}"),
            DensityField::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(|f| f.tag()).collect();
                format!("product:{}", parts.join("*"))
            }
            DensityField::Custom(_) => "custom".into(),
        }
    }

    /// True when `rho` is a positive constant.
    pub fn is_constant(&self) -> bool {
        match self {
            DensityField::Const(_) => true,
            DensityField::RadialPow(a) => *a == 0.0,
            DensityField::Product(fs) => fs.iter().all(|f| f.is_constant()),
            _ => false,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            DensityField::Const(c) => *c,
            DensityField::Gauss => (-norm_sq(x)).exp(),
            DensityField::RadialPow(a) => norm_sq(x).sqrt().powf(*a),
            DensityField::Product(fs) => fs.iter().map(|f| f.value(x)).product(),
            DensityField::Custom(f) => f(x),
        }
    }

    /// Writes `grad rho(x)` into `out`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DensityField::Const(_) => out.fill(0.0),
            DensityField::Gauss => {
                let v = self.value(x);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -2.0 * xi * v;
                }
            }
            DensityField::RadialPow(a) => {
                let r2 = norm_sq(x);
                if r2 == 0.0 {
                    let v = if *a > 1.0 { 0.0 } else { f64::NAN };
                    out.fill(v);
                    return;
                }
                let c = a * r2.sqrt().powf(a - 2.0);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = c * xi;
                }
            }
            DensityField::Product(fs) => {
                let vals: Vec<f64> = fs.iter().map(|f| f.value(x)).collect();
                let mut g = vec![0.0; x.len()];
                out.fill(0.0);
                for (k, f) in fs.iter().enumerate() {
                    f.gradient(x, &mut g);
                    let others: f64 = vals
                        .iter()
                        .enumerate()
                        .filter(|(m, _)| *m != k)
                        .map(|(_, v)| v)
                        .product();
                    for (o, gi) in out.iter_mut().zip(&g) {
                        *o += gi * others;
                    }
                }
            }
            DensityField::Custom(_) => self.gradient_fd(x, None, out),
        }
    }

    /// Central differences of the evaluator; `step = None` uses the default
    /// relative spacing.
    pub fn gradient_fd(&self, x: &[f64], step: Option<f64>, out: &mut [f64]) {
        let mut y = x.to_vec();
        for j in 0..x.len() {
            let s = step.unwrap_or_else(|| fd_step(x[j]));
            y[j] = x[j] + s;
            let p = self.value(&y);
            y[j] = x[j] - s;
            let m = self.value(&y);
            y[j] = x[j];
            out[j] = (p - m) / (2.0 * s);
        }
    }

    /// Writes `grad ln rho(x)`. Fails where `rho(x) <= 0`.
    pub fn log_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            DensityField::Const(c) => {
                if *c <= 0.0 {
                    return Err(Error::domain(x, "density vanishes"));
                }
                out.fill(0.0);
            }
            DensityField::Gauss => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -2.0 * xi;
                }
            }
            DensityField::RadialPow(a) => {
                let r2 = norm_sq(x);
                if *a == 0.0 {
                    out.fill(0.0);
                } else if r2 == 0.0 {
                    return Err(Error::domain(x, "radial density is singular at the origin"));
                } else {
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o = a * xi / r2;
                    }
                }
            }
            DensityField::Product(fs) => {
                let mut g = vec![0.0; x.len()];
                out.fill(0.0);
                for f in fs {
                    f.log_gradient(x, &mut g)?;
                    for (o, gi) in out.iter_mut().zip(&g) {
                        *o += gi;
                    }
                }
            }
            DensityField::Custom(_) => {
                let v = self.value(x);
                if !(v > 0.0) {
                    return Err(Error::domain(x, "density vanishes"));
                }
                self.gradient_fd(x, None, out);
                for o in out.iter_mut() {
                    *o /= v;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(x, "non-finite log-density gradient"));
        }
        Ok(())
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub const DENSITY_FAMILIES: &[&str] = &["const", "gauss", "radial_pow", "product"];
pub const MATRIX_FAMILIES: &[&str] = &["identity", "diag", "smooth2x2", "const"];

fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != *cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn unknown_family(kind: &str, name: &str, known: &[&str]) -> Error {
    let mut ranked: Vec<&str> = known.to_vec();
    ranked.sort_by_key(|k| levenshtein(name, k));
    Error::Config(format!(
        "unknown {kind} family '{name}'; did you mean '{}'? known: {}",
        ranked[0],
        known.join(", ")
    ))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse {what} '{s}' as a number")))
}

fn split_family(s: &str) -> (&str, Option<&str>) {
    match s.trim().split_once(':') {
        Some((name, args)) => (name.trim(), Some(args.trim())),
        None => (s.trim(), None),
    }
}

/// Parses `const`, `const:c`, `gauss`, `radial_pow:alpha` or
/// `product:fam*fam*...`.
pub fn parse_density(s: &str) -> Result<DensityField> {
    let (name, args) = split_family(s);
    match (name, args) {
        ("const", None) => Ok(DensityField::Const(1.0)),
        ("const", Some(a)) => {
            let c = parse_f64(a, "constant density")?;
            if !(c > 0.0) {
                return Err(Error::Config(format!("constant density must be positive, got {c}")));
            }
            Ok(DensityField::Const(c))
        }
        ("gauss", None) => Ok(DensityField::Gauss),
        ("radial_pow", Some(a)) => {
            let alpha = parse_f64(a, "radial exponent")?;
            if alpha < 0.0 {
                return Err(Error::Config("radial_pow exponent must be nonnegative".into()));
            }
            Ok(DensityField::RadialPow(alpha))
        }
        ("product", Some(a)) => {
            let factors = a
                .split('*')
                .map(|f| {
                    if f.trim().starts_with("product") {
                        Err(Error::Config("nested product densities are not supported".into()))
                    } else {
                        parse_density(f)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if factors.is_empty() {
                return Err(Error::Config("empty product density".into()));
            }
            Ok(DensityField::Product(factors))
        }
        ("gauss", Some(_)) => Err(Error::Config("gauss takes no arguments".into())),
        ("radial_pow" | "product", None) => Err(Error::Config(format!("density family '{name}' needs arguments"))),
        _ => Err(unknown_family("density", name, DENSITY_FAMILIES)),
    }
}

fn parse_diag_entry(s: &str, dim: usize) -> Result<DiagEntry> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    // find the sign separating the constant from the quadratic term (skip a leading sign / exponent sign)
    let bytes = t.as_bytes();
    let split = (1..bytes.len())
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'e' && bytes[i - 1] != b'E');
    let (base_s, term) = match split {
        Some(i) => (&t[..i], Some(&t[i..])),
        None => (t.as_str(), None),
    };
    if term.is_none() && base_s.contains('x') {
        return parse_quadratic(base_s, dim).map(|(coeff, axis)| DiagEntry {
            base: 0.0,
            coeff,
            axis: Some(axis),
        });
    }
    let base = parse_f64(base_s, "diagonal constant")?;
    match term {
        None => Ok(DiagEntry::constant(base)),
        Some(q) => {
            let (coeff, axis) = parse_quadratic(q, dim)?;
            Ok(DiagEntry {
                base,
                coeff,
                axis: Some(axis),
            })
        }
    }
}

// `[+|-][k*]x<i>^2`
fn parse_quadratic(q: &str, dim: usize) -> Result<(f64, usize)> {
    let bad = || Error::Config(format!("cannot parse diagonal term '{q}', expected [k*]x<i>^2"));
    let (sign, body) = match q.as_bytes().first() {
        Some(b'+') => (1.0, &q[1..]),
        Some(b'-') => (-1.0, &q[1..]),
        _ => (1.0, q),
    };
    let body = body.strip_suffix("^2").ok_or_else(bad)?;
    let (coeff, var) = match body.split_once('*') {
        Some((k, v)) => (parse_f64(k, "diagonal coefficient")?, v),
        None => (1.0, body),
    };
    let idx: usize = var.strip_prefix('x').ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if idx == 0 || idx > dim {
        return Err(Error::Config(format!(
            "coordinate x{idx} out of range for dimension {dim}"
        )));
    }
    Ok((sign * coeff, idx - 1))
}

/// Parses `identity`, `diag:e1,...,ed` (entries `c` or `c+k*x<i>^2`),
/// `smooth2x2:a11,a22,a12[,freq]` or `const:a11,a12,...` (row-major).
pub fn parse_matrix(s: &str, dim: usize) -> Result<MatrixField> {
    let (name, args) = split_family(s);
    match (name, args) {
        ("identity", None) => Ok(MatrixField::Identity),
        ("diag", Some(a)) => {
            let entries = a
                .split(',')
                .map(|e| parse_diag_entry(e, dim))
                .collect::<Result<Vec<_>>>()?;
            if entries.len() != dim {
                return Err(Error::Config(format!(
                    "diag needs {dim} entries, got {}",
                    entries.len()
                )));
            }
            Ok(MatrixField::Diagonal(entries))
        }
        ("smooth2x2", Some(a)) => {
            if dim != 2 {
                return Err(Error::Config("smooth2x2 requires dimension 2".into()));
            }
            let v = a
                .split(',')
                .map(|x| parse_f64(x, "smooth2x2 parameter"))
                .collect::<Result<Vec<_>>>()?;
            match v.as_slice() {
                [a11, a22, a12] => Ok(MatrixField::Smooth2x2 {
                    a11: *a11,
                    a22: *a22,
                    a12: *a12,
                    freq: 0.0,
                }),
                [a11, a22, a12, freq] => Ok(MatrixField::Smooth2x2 {
                    a11: *a11,
                    a22: *a22,
                    a12: *a12,
                    freq: *freq,
                }),
                _ => Err(Error::Config("smooth2x2 takes a11,a22,a12[,freq]".into())),
            }
        }
        ("const", Some(a)) => {
            let entries = a
                .split(',')
                .map(|x| parse_f64(x, "matrix entry"))
                .collect::<Result<Vec<_>>>()?;
            if entries.len() != dim * dim {
                return Err(Error::Config(format!("const matrix needs {} entries", dim * dim)));
            }
            Ok(MatrixField::Constant { dim, entries })
        }
        ("identity", Some(_)) => Err(Error::Config("identity takes no arguments".into())),
        ("diag" | "smooth2x2" | "const", None) => Err(Error::Config(format!("matrix family '{name}' needs arguments"))),
        _ => Err(unknown_family("matrix", name, MATRIX_FAMILIES)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_grammar() {
        let m = parse_matrix("diag:1+x1^2, 1", 2).unwrap();
        let mut a = [0.0; 4];
        m.eval(&[2.0, 5.0], &mut a);
        assert_eq!(a, [5.0, 0.0, 0.0, 1.0]);
        let m = parse_matrix("diag:2-0.5*x2^2,3e-1", 2).unwrap();
        m.eval(&[0.0, 2.0], &mut a);
        assert_eq!(a, [0.0, 0.0, 0.0, 0.3]);
        assert!(parse_matrix("diag:1", 2).is_err());
        assert!(parse_matrix("diag:1+x3^2,1", 2).is_err());
    }

    #[test]
    fn unknown_families_suggest() {
        let e = parse_density("gaus").unwrap_err().to_string();
        assert!(e.contains("did you mean 'gauss'"), "{e}");
        let e = parse_matrix("identiy", 2).unwrap_err().to_string();
        assert!(e.contains("'identity'"), "{e}");
    }

    #[test]
    fn tags_round_trip() {
        for s in [
            "const",
            "const:2.5",
            "gauss",
            "radial_pow:1",
            "product:gauss*radial_pow:0.5",
        ] {
            assert_eq!(parse_density(s).unwrap().tag(), s);
        }
        for s in ["identity", "smooth2x2:2,1,0.5,3"] {
            assert_eq!(parse_matrix(s, 2).unwrap().tag(), s);
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let h = 1e-4;
        let pts = [[0.3, -0.7], [1.1, 0.4], [-0.5, 0.9]];
        let mats = [
            parse_matrix("diag:1+x1^2,2+0.5*x2^2", 2).unwrap(),
            parse_matrix("smooth2x2:2,1.5,0.7,1.3", 2).unwrap(),
        ];
        for m in &mats {
            for x in &pts {
                let mut a = [0.0; 2];
                let mut b = [0.0; 2];
                m.divergence(x, &mut a);
                m.divergence_fd(x, h, &mut b);
                for k in 0..2 {
                    assert!((a[k] - b[k]).abs() < 1e-7, "{a:?} vs {b:?}");
                }
            }
        }
        let dens = [
            DensityField::Gauss,
            DensityField::RadialPow(1.5),
            parse_density("product:gauss*radial_pow:1*const:3").unwrap(),
        ];
        for rho in &dens {
            for x in &pts {
                let mut a = [0.0; 2];
                let mut b = [0.0; 2];
                rho.gradient(x, &mut a);
                rho.gradient_fd(x, Some(h), &mut b);
                for k in 0..2 {
                    assert!((a[k] - b[k]).abs() < 1e-7, "{a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn custom_fields_use_differences() {
        let rho = DensityField::Custom(Arc::new(|x: &[f64]| 1.0 + x[0] * x[0] + 0.5 * x[1]));
        let mut g = [0.0; 2];
        rho.log_gradient(&[1.0, 2.0], &mut g).unwrap();
        assert!((g[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((g[1] - 0.5 / 3.0).abs() < 1e-9);
        let m = MatrixField::Custom {
            dim: 2,
            eval: Arc::new(|x: &[f64], out: &mut [f64]| {
                out.copy_from_slice(&[1.0 + x[0] * x[1], 0.1 * x[0], 0.1 * x[0], 2.0]);
            }),
        };
        let mut div = [0.0; 2];
        m.divergence(&[0.5, 3.0], &mut div);
        assert!((div[0] - 3.0).abs() < 1e-8);
        assert!((div[1] - 0.1).abs() < 1e-8);
    }
}
