//! Problem instances and the coefficients derived from them.

mod fields;
mod functions;
mod geometry;
mod probe;
mod spec;

pub use fields::{
    parse_density, parse_matrix, DensityField, DensityFn, DiagEntry, MatrixField, MatrixFn, DENSITY_FAMILIES,
    FD_REL_STEP, MATRIX_FAMILIES,
};
pub use functions::{FourierTerm, ScalarClosure, ScalarFn};
pub use geometry::{BoundingBox, DistanceFn, DomainGeometry, Location, Predicate, Shape};
pub use probe::{condition_probe, AdmissibilityReport, ConditionCheck, QuadratureTrend, Trend};
pub use spec::{CoefScratch, ProblemSpec};

pub(crate) use fields::norm_sq;
pub(crate) use spec::cholesky_twice;
