//! Discrete Witten-deformed Hodge theory on triangulated manifolds with
//! boundary carrying a cyclic isometric action.

pub mod cohomology;
pub mod complex;
pub mod decomp;
pub mod error;
pub mod geometry;
pub mod intmat;
pub mod mesh;
pub mod quadrature;
pub mod scenario;
pub mod spectral;
pub mod symmetry;
pub mod witten;

pub use error::{Error, Result};
