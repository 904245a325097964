//! Weighted Dirichlet form on rectangular grids: assembly of the stiffness
//! and lumped mass matrices, resolvent and semigroup solves, energies and
//! discrete norms.

mod assemble;
mod field;
mod grid;
mod io;
mod norms;
mod solve;
mod sparse;

pub use assemble::{assemble, assemble_with, DiscreteForm};
pub use field::DiscreteField;
pub use grid::Grid;
pub use io::{write_field_csv, write_stiffness_coo, BoxJson, FormHeader};
pub use norms::{discrete_norms, modulus_of_continuity, DiscreteNorms, Region};
pub use solve::{
    apply_generator, energy, energy_1, evolve_semigroup, evolve_semigroup_with, m_inner, resolvent_solve,
    resolvent_solve_with,
};
pub use sparse::{cg, CgOptions, CgReport, Csr};
