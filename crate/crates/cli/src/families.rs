//! Test-function grammar used by jobs.
//!
//! | string                         | function                                  |
//! |--------------------------------|-------------------------------------------|
//! | `zero`                         | `0`                                       |
//! | `const:c`                      | `c`                                       |
//! | `coord:i`                      | `x_i` (1-based)                           |
//! | `saddle`                       | `x1^2 - x2^2`                             |
//! | `sin_product`                  | first Dirichlet eigenfunction of the grid box |
//! | `bump:c1,..,cd;r[;amp]`        | smooth bump of height `amp` (default 1)   |
//! | `annulus:r_mid,half_width[,amp]` | bump profile in `|x|` around `r_mid`    |
//! | `indicator:lo1,..,lod;hi1,..,hid` | indicator of an open box               |
//! | `fourier:seed,index[,max_freq]`  | member `index` of a random sine batch   |

use sdlab::verify::random_fourier_batch;
use sdlab::{Error, Result, ScalarFn};

pub const FUNCTION_FAMILIES: &[&str] = &[
    "zero",
    "const",
    "coord",
    "saddle",
    "sin_product",
    "bump",
    "annulus",
    "indicator",
    "fourier",
];

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

/// The known name closest to `name` in edit distance.
pub fn closest<'a>(name: &str, known: &[&'a str]) -> &'a str {
    known.iter().min_by_key(|k| levenshtein(name, k)).copied().unwrap_or("")
}

fn numbers(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse '{v}' in {what}")))
        })
        .collect()
}

fn exactly(v: Vec<f64>, n: usize, what: &str) -> Result<Vec<f64>> {
    if v.len() == n {
        Ok(v)
    } else {
        Err(Error::Config(format!("{what} needs {n} values, got {}", v.len())))
    }
}

/// Parses a test function; `lo`, `hi` is the grid box.
pub fn parse_function(s: &str, lo: &[f64], hi: &[f64]) -> Result<ScalarFn> {
    let d = lo.len();
    let (name, args) = match s.trim().split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (s.trim(), None),
    };
    let need = || args.ok_or_else(|| Error::Config(format!("function '{name}' needs arguments")));
    match name {
        "zero" => Ok(ScalarFn::Zero),
        "const" => Ok(ScalarFn::Const(exactly(numbers(need()?, "const")?, 1, "const")?[0])),
        "coord" => {
            let i: usize = need()?
                .parse()
                .map_err(|_| Error::Config(format!("coord index '{}' is not an integer", args.unwrap_or(""))))?;
            if i == 0 || i > d {
                return Err(Error::Config(format!("coord index must lie in 1..={d}, got {i}")));
            }
            Ok(ScalarFn::Coord(i - 1))
        }
        "saddle" => {
            if d != 2 {
                return Err(Error::Config("saddle needs dimension 2".into()));
            }
            Ok(ScalarFn::Saddle)
        }
        "sin_product" => Ok(ScalarFn::SinProduct {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }),
        "bump" => {
            let parts: Vec<&str> = need()?.split(';').collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(Error::Config("bump expects 'center;radius[;amp]'".into()));
            }
            let center = exactly(numbers(parts[0], "bump center")?, d, "bump center")?;
            let radius = exactly(numbers(parts[1], "bump radius")?, 1, "bump radius")?[0];
            let amp = match parts.get(2) {
                Some(a) => exactly(numbers(a, "bump amplitude")?, 1, "bump amplitude")?[0],
                None => 1.0,
            };
            if !(radius > 0.0) {
                return Err(Error::Config(format!("bump radius must be positive, got {radius}")));
            }
            Ok(ScalarFn::Bump {
                center,
                radius,
                amp: amp * std::f64::consts::E,
            })
        }
        "annulus" => {
            let v = numbers(need()?, "annulus")?;
            if !(2..=3).contains(&v.len()) || !(v[1] > 0.0) {
                return Err(Error::Config(
                    "annulus expects 'r_mid,half_width[,amp]' with half_width > 0".into(),
                ));
            }
            Ok(ScalarFn::AnnulusBump {
                r_mid: v[0],
                half_width: v[1],
                amp: v.get(2).copied().unwrap_or(1.0) * std::f64::consts::E,
            })
        }
        "indicator" => {
            let (a, b) = need()?
                .split_once(';')
                .ok_or_else(|| Error::Config("indicator expects 'lo;hi'".into()))?;
            Ok(ScalarFn::Indicator {
                lo: exactly(numbers(a, "indicator corner")?, d, "indicator corner")?,
                hi: exactly(numbers(b, "indicator corner")?, d, "indicator corner")?,
            })
        }
        "fourier" => {
            let v = numbers(need()?, "fourier")?;
            if !(2..=3).contains(&v.len()) || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
                return Err(Error::Config(
                    "fourier expects nonnegative integers 'seed,index[,max_freq]'".into(),
                ));
            }
            let max_freq = v.get(2).copied().unwrap_or(4.0) as i32;
            let index = v[1] as usize;
            Ok(random_fourier_batch(v[0] as u64, index + 1, d, max_freq).swap_remove(index))
        }
        other => Err(Error::Config(format!(
            "unknown function family '{other}'; did you mean '{}'? known: {}",
            closest(other, FUNCTION_FAMILIES),
            FUNCTION_FAMILIES.join(", ")
        ))),
    }
}
