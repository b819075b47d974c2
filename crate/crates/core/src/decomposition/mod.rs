//! Whitney-type selection of disjoint cubes and the stopping-time
//! construction of the exceptional set `E` and the levels `κ(Q)`.

mod raster;
mod stopping;
mod whitney;

use serde::Serialize;

use crate::geometry::Parallelepiped;
use crate::grid::{GridCube, TendrilBound};
use crate::rng::Rng;
use crate::Real;

pub use raster::{SurfaceTendril, TendrilRaster, TendrilReach};
pub use stopping::{
    recompute_selection_sums, selected_with_selected_parent, stopping_time, verify_stopping, Class, StoppingChecks, StoppingConfig, StoppingReport, StoppingResult,
    TendrilModel, TraceEvent,
};
pub use whitney::{max_density, verify_whitney, whitney_decompose, WhitneyReport, WhitneyResult};

/// Access to the support of the measure `μ` (a compact subset of the closed
/// unit ball) as needed to build and test exceptional sets.
pub trait MeasureSupport<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    /// Points of the support such that every support point is within
    /// `spacing` of one of them.
    fn cover(&self, spacing: T) -> Vec<Vec<T>>;
    /// A random point of the support.
    fn sample_point(&self, rng: &mut Rng) -> Vec<T>;
}

/// Outcome of one numbered check, with the worst ratio seen and a witness.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub pass: bool,
    /// `observed / allowed` at the worst witness (≤ 1 means pass).
    pub worst_ratio: f64,
    pub witness: Option<String>,
}

impl CheckResult {
    pub fn vacuous() -> Self {
        CheckResult { pass: true, worst_ratio: 0.0, witness: None }
    }

    fn from_ratio(ratio: f64, witness: Option<String>) -> Self {
        CheckResult { pass: ratio <= 1.0, worst_ratio: ratio, witness }
    }
}

/// One component of an exceptional set.
#[derive(Clone, Debug, Serialize)]
pub enum Primitive<T: Real> {
    /// `q** ⊕ A^{τ+2}B₂` with its zonotope volume bound.
    BallTendril(TendrilBound<T>),
    /// `q** ⊕ A^{τ+2}(⋃_{j≥0} A^{-j} supp μ)`, rasterised.
    SurfaceTendril(SurfaceTendril<T>),
    /// `S**`.
    Quadruple { base: GridCube, shape: Parallelepiped<T> },
}

impl<T: Real> Primitive<T> {
    pub fn volume(&self) -> T {
        match self {
            Primitive::BallTendril(t) => t.volume_bound,
            Primitive::SurfaceTendril(t) => t.volume,
            Primitive::Quadruple { shape, .. } => shape.volume(),
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            Primitive::BallTendril(t) => t.contains(x),
            Primitive::SurfaceTendril(t) => t.contains(x),
            Primitive::Quadruple { shape, .. } => shape.contains_closed(x, crate::lit(1e-12)),
        }
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match self {
            Primitive::BallTendril(t) => t.bounding_box(),
            Primitive::SurfaceTendril(t) => t.bounding_box(),
            Primitive::Quadruple { shape, .. } => shape.bounding_box(),
        }
    }

    pub fn base(&self) -> &GridCube {
        match self {
            Primitive::BallTendril(t) => &t.base,
            Primitive::SurfaceTendril(t) => &t.base,
            Primitive::Quadruple { base, .. } => base,
        }
    }
}

/// A union of primitives with bounding-box prefiltering for membership.
#[derive(Clone, Debug, Serialize)]
pub struct ExceptionalSet<T: Real> {
    pub primitives: Vec<Primitive<T>>,
    #[serde(skip)]
    boxes: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> ExceptionalSet<T> {
    pub fn new(primitives: Vec<Primitive<T>>) -> Self {
        let boxes = primitives.iter().map(|p| p.bounding_box()).collect();
        ExceptionalSet { primitives, boxes }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.primitives.iter().zip(&self.boxes).any(|(p, (lo, hi))| {
            x.iter().zip(lo.iter().zip(hi)).all(|(&v, (&l, &h))| v >= l && v <= h) && p.contains(x)
        })
    }

    /// Sum of primitive volumes (an upper bound for `|E|`).
    pub fn volume_bound(&self) -> T {
        self.primitives.iter().map(|p| p.volume()).sum()
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}
