use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type DistanceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape("box corners differ in dimension".into()));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config(format!("degenerate box {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Open box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v > *a && *v < *b)
    }

    /// Closed box membership.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.contains_closed(&other.lo) && self.contains_closed(&other.hi)
    }

    /// Signed distance to the box boundary, positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let mut inside = f64::INFINITY;
        let mut outside = 0.0f64;
        for (v, (a, b)) in x.iter().zip(self.lo.iter().zip(&self.hi)) {
            inside = inside.min(v - a).min(b - v);
            let gap = (a - v).max(v - b).max(0.0);
            outside += gap * gap;
        }
        if inside > 0.0 {
            inside
        } else if outside > 0.0 {
            -outside.sqrt()
        } else {
            inside
        }
    }

    pub fn translated(&self, shift: &[f64]) -> BoundingBox {
        BoundingBox {
            lo: self.lo.iter().zip(shift).map(|(a, s)| a + s).collect(),
            hi: self.hi.iter().zip(shift).map(|(a, s)| a + s).collect(),
        }
    }
}

#[derive(Clone)]
pub enum Shape {
    /// The domain is the (open) bounding box itself.
    Box,
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `Omega = R^d`; only the truncation box limits it.
    Whole,
    Implicit {
        contains: Predicate,
        /// Positive inside, negative outside.
        signed_distance: DistanceFn,
    },
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Box => write!(f, "Box"),
            Shape::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            Shape::Whole => write!(f, "Whole"),
            Shape::Implicit { .. } => write!(f, "Implicit"),
        }
    }
}

/// An open set `Omega` in `R^d` together with the finite box used to
/// truncate it.
#[derive(Debug, Clone)]
pub struct DomainGeometry {
    shape: Shape,
    bbox: BoundingBox,
}

/// How a point sits relative to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    /// Left `Omega` itself.
    Exited,
    /// Still in `Omega` but outside the truncation box.
    Truncated,
}

impl DomainGeometry {
    fn check_dim(d: usize) -> Result<()> {
        if d < 2 {
            return Err(Error::Config(format!("dimension must be at least 2, got {d}")));
        }
        Ok(())
    }

    pub fn box_domain(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let bbox = BoundingBox::new(lo, hi)?;
        Self::check_dim(bbox.dim())?;
        Ok(Self {
            shape: Shape::Box,
            bbox,
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::check_dim(center.len())?;
        if !(radius > 0.0) {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        let bbox = BoundingBox::new(
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        )?;
        Ok(Self {
            shape: Shape::Ball { center, radius },
            bbox,
        })
    }

    /// `Omega = R^d`, truncated to `[lo, hi]`.
    pub fn whole(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let bbox = BoundingBox::new(lo, hi)?;
        Self::check_dim(bbox.dim())?;
        Ok(Self {
            shape: Shape::Whole,
            bbox,
        })
    }

    pub fn implicit(contains: Predicate, signed_distance: DistanceFn, bbox: BoundingBox) -> Result<Self> {
        Self::check_dim(bbox.dim())?;
        Ok(Self {
            shape: Shape::Implicit {
                contains,
                signed_distance,
            },
            bbox,
        })
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bounding_box(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn tag(&self) -> &'static str {
        match self.shape {
            Shape::Box => "box",
            Shape::Ball { .. } => "ball",
            Shape::Whole => "whole",
            Shape::Implicit { .. } => "implicit",
        }
    }

    /// Membership in `Omega`, ignoring the truncation box.
    pub fn in_omega(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Box => self.bbox.contains(x),
            Shape::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2 < radius * radius
            }
            Shape::Whole => true,
            Shape::Implicit { contains, .. } => contains(x),
        }
    }

    /// Membership in the computational domain `Omega ∩ box`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.in_omega(x) && self.bbox.contains(x)
    }

    pub fn locate(&self, x: &[f64]) -> Location {
        if !self.in_omega(x) {
            Location::Exited
        } else if !self.bbox.contains(x) {
            Location::Truncated
        } else {
            Location::Inside
        }
    }

    /// Signed distance to the boundary of `Omega`, positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Box => self.bbox.signed_distance(x),
            Shape::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                radius - r2.sqrt()
            }
            Shape::Whole => f64::INFINITY,
            Shape::Implicit { signed_distance, .. } => signed_distance(x),
        }
    }

    /// Probe points where the membership predicate and the signed distance
    /// disagree in sign. Points with zero distance are skipped.
    pub fn sign_mismatches<'a>(&self, points: impl IntoIterator<Item = &'a [f64]>) -> Vec<Vec<f64>> {
        points
            .into_iter()
            .filter(|x| {
                let d = self.signed_distance(x);
                d != 0.0 && (d > 0.0) != self.in_omega(x)
            })
            .map(|x| x.to_vec())
            .collect()
    }

    /// Same geometry shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> DomainGeometry {
        let bbox = self.bbox.translated(shift);
        let shape = match &self.shape {
            Shape::Box => Shape::Box,
            Shape::Whole => Shape::Whole,
            Shape::Ball { center, radius } => Shape::Ball {
                center: center.iter().zip(shift).map(|(c, s)| c + s).collect(),
                radius: *radius,
            },
            Shape::Implicit {
                contains,
                signed_distance,
            } => {
                let s: Vec<f64> = shift.to_vec();
                let s2 = s.clone();
                let c = contains.clone();
                let sd = signed_distance.clone();
                Shape::Implicit {
                    contains: Arc::new(move |x: &[f64]| {
                        let y: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a - b).collect();
                        c(&y)
                    }),
                    signed_distance: Arc::new(move |x: &[f64]| {
                        let y: Vec<f64> = x.iter().zip(&s2).map(|(a, b)| a - b).collect();
                        sd(&y)
                    }),
                }
            }
        };
        DomainGeometry { shape, bbox }
    }
}
