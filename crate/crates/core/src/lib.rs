//! Linear symplectic geometry, metaplectic propagation of Gaussian and grid
//! wavefunctions, symplectic capacities and uncertainty certification.

pub mod capacity;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod metaplectic;
pub mod reference;
pub mod symplectic;
pub mod uncertainty;

pub use error::{Error, Result};

/// Version stamped into every JSON document this crate writes; CSV layouts are fixed by their headers.
pub const FORMAT_VERSION: u32 = 1;
