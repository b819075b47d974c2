//! Anisotropic dilation structures, dyadic grids, atomic decompositions and
//! maximal operators built from dilated surface measures.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`). The `*64` aliases below fix the scalar
//! to `f64`, which is what the experiment runner uses.

pub mod atoms;
pub mod cli;
pub mod decomposition;
pub mod dilation;
mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod maximal;
mod real;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
pub use real::{lit, Real};

/// Largest ambient dimension supported.
pub const MAX_DIM: usize = 4;

pub type Mat64 = linalg::Mat<f64>;
pub type Dilation64 = dilation::DilationStructure<f64>;
pub type Parallelepiped64 = geometry::Parallelepiped<f64>;
pub type TendrilBound64 = grid::TendrilBound<f64>;
pub type Atom64 = atoms::Atom<f64>;
pub type AtomicSum64 = atoms::AtomicSum<f64>;
pub type WhitneyResult64 = decomposition::WhitneyResult<f64>;
pub type StoppingResult64 = decomposition::StoppingResult<f64>;
pub type GraphSurface64 = surface::GraphSurface<f64>;
pub type SurfacePiece64 = surface::SurfacePiece<f64>;
pub type Lattice64 = maximal::Lattice<f64>;
pub type SampledField64 = maximal::SampledField<f64>;
