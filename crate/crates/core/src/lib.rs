//! Symmetry-resolved Neumann spectra on planar domains with finite point-group
//! symmetry, and splitting of multiple eigenvalues by symmetric perturbations.

pub mod domain;
pub mod error;
pub mod exec;
pub mod fem;
pub mod grouprep;
pub mod eigen;
pub mod mesh;
pub mod oracle;
pub mod problem;
pub mod shapederiv;
pub mod sparse;
pub mod specsym;
pub mod splitter;

pub use error::{Error, ErrorCategory, Result};
pub use exec::Execution;
