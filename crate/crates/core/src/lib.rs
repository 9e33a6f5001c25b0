//! Principal Dirichlet frequency of p-sub-Laplacians built from general
//! families of vector fields, on masked lattices, together with numerical
//! checks of the Picone identity, Barta-type lower bounds, uniqueness and
//! simplicity of the ground state, domain monotonicity, dilation scaling and
//! Caccioppoli inequalities.

pub mod caccioppoli;
pub mod cli;
pub mod domain_grid;
pub mod eigensolver;
pub mod error;
pub mod expr;
pub mod json;
pub mod p_sub_laplacian;
pub mod picone;
pub mod report;
pub mod vector_fields;

pub use caccioppoli::{CaccioppoliReport, CaccioppoliTolerance};
pub use domain_grid::{random_positive_function, GridDomain, GridFunction};
pub use eigensolver::{solve_principal, EigenPair, SolverOptions};
pub use error::{Error, Result};
pub use picone::{PiconeMode, PiconeReport, PiconeTolerance};
pub use report::{Status, VerificationReport};
pub use vector_fields::{
    CustomFamily, CustomFamilySpec, DiscreteGradient, FamilyKind, HorizontalVectorField,
    VectorFieldFamily,
};
