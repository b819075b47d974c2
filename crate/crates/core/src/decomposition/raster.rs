//! Conservative rasterisation of surface-aware tendrils.
//!
//! In the frame `z = A^{-(τ+ℓ)} x` the tendril of `q ∈ R_{σ,τ}` is
//! `R̂ ⊕ U` with `R̂` the pulled-back expansion of `q` (edges
//! `e·2^σ A^{-ℓ}`, independent of `τ`) and `U = ⋃_{j≥0} A^{-j} supp μ`. The
//! shape only depends on `σ`, so one raster per `σ` serves every tendril at
//! that level.

use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use super::MeasureSupport;
use crate::dilation::DilationStructure;
use crate::geometry::Parallelepiped;
use crate::grid::{self, GridCube};
use crate::linalg::{self, Mat};
use crate::{lit, Error, Real, Result, MAX_DIM};

/// How far a tendril reaches: `Full` is `q** + ⋃_{k≤τ+2} supp μ_k`;
/// `Needed` is `q* + ⋃_{k≤τ} supp μ_k`, the least set containing
/// `Q + supp μ_j` for every `Q ⊂ q*` and `j < τ(q)+1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TendrilReach {
    #[default]
    Full,
    Needed,
}

impl TendrilReach {
    fn expansion(self) -> u32 {
        match self {
            TendrilReach::Full => 4,
            TendrilReach::Needed => 2,
        }
    }

    fn lift(self) -> i32 {
        match self {
            TendrilReach::Full => 2,
            TendrilReach::Needed => 0,
        }
    }
}

/// Largest number of marked cells in one raster.
const CELL_BUDGET: usize = 20_000_000;

type Key = [i64; MAX_DIM];

#[derive(Debug)]
pub struct TendrilRaster<T: Real> {
    pub h: T,
    pub dim: usize,
    cells: HashSet<Key>,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> TendrilRaster<T> {
    /// Marks every cell of side `h` that can meet `R̂₀ ⊕ U`, where `R̂₀` has
    /// edges `edges` at the origin and `points ∪ {0}` covers `U` within `delta`.
    fn build(edges: &Mat<T>, points: &[Vec<T>], delta: T, h: T) -> Result<Self> {
        let d = edges.dim();
        let einv = edges.inverse().ok_or_else(|| Error::NumericalFailure("degenerate tendril core".into()))?;
        let row_norms: Vec<T> = (0..d).map(|i| linalg::norm(einv.row(i))).collect();
        let margin = delta + h * lit::<T>(d as f64).sqrt() / lit(2.0);
        let core = Parallelepiped::new(vec![T::zero(); d], edges.clone());
        let (clo, chi) = core.bounding_box();
        let mut cells: HashSet<Key> = HashSet::new();
        let mut lo = vec![T::infinity(); d];
        let mut hi = vec![T::neg_infinity(); d];
        let mut z = [T::zero(); MAX_DIM];
        let mut u = [T::zero(); MAX_DIM];
        for p in points {
            let mut range = [(0i64, 0i64); MAX_DIM];
            for i in 0..d {
                let a = ((clo[i] + p[i] - margin) / h).floor().to_i64().unwrap_or(i64::MIN / 2);
                let b = ((chi[i] + p[i] + margin) / h).floor().to_i64().unwrap_or(i64::MAX / 2);
                range[i] = (a, b);
            }
            let mut idx: Key = [0; MAX_DIM];
            for i in 0..d {
                idx[i] = range[i].0;
            }
            'cells: loop {
                if !cells.contains(&idx) {
                    for i in 0..d {
                        z[i] = (lit::<T>(idx[i] as f64) + lit(0.5)) * h - p[i];
                    }
                    einv.mul_vec_into(&z[..d], &mut u[..d]);
                    let inside = (0..d).all(|i| {
                        let s = margin * row_norms[i];
                        u[i] >= -s && u[i] <= T::one() + s
                    });
                    if inside {
                        cells.insert(idx);
                        for i in 0..d {
                            let c = lit::<T>(idx[i] as f64) * h;
                            lo[i] = lo[i].min(c);
                            hi[i] = hi[i].max(c + h);
                        }
                        if cells.len() > CELL_BUDGET {
                            return Err(Error::BudgetExceeded(format!("tendril raster exceeds {CELL_BUDGET} cells")));
                        }
                    }
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break 'cells;
                    }
                    idx[k] += 1;
                    if idx[k] <= range[k].1 {
                        break;
                    }
                    idx[k] = range[k].0;
                    k += 1;
                }
            }
        }
        Ok(TendrilRaster { h, dim: d, cells, lo, hi })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Volume of the union of marked cells, in normalised units.
    pub fn volume(&self) -> T {
        lit::<T>(self.cells.len() as f64) * self.h.powi(self.dim as i32)
    }

    pub fn contains(&self, z: &[T]) -> bool {
        let mut key: Key = [0; MAX_DIM];
        for i in 0..self.dim {
            match (z[i] / self.h).floor().to_i64() {
                Some(k) => key[i] = k,
                None => return false,
            }
        }
        self.cells.contains(&key)
    }

    pub fn bounds(&self) -> (&[T], &[T]) {
        (&self.lo, &self.hi)
    }
}

/// Raster for level `σ`. `refinement` cells span the thinnest width of `R̂₀`.
pub(super) fn raster_for_sigma<T: Real>(
    dil: &DilationStructure<T>,
    support: &dyn MeasureSupport<T>,
    sigma: i32,
    refinement: usize,
    reach: TendrilReach,
) -> Result<TendrilRaster<T>> {
    let d = dil.dim;
    let e = lit::<T>(reach.expansion() as f64);
    let edges = dil.power(-reach.lift()).scale(e * lit::<T>(2.0).powi(sigma));
    let einv = edges.inverse().ok_or_else(|| Error::NumericalFailure("degenerate tendril core".into()))?;
    let width = (0..d).map(|i| T::one() / linalg::norm(einv.row(i))).fold(T::infinity(), T::min);
    let h = width / lit(refinement.max(1) as f64);
    let spacing = h / lit(2.0);
    let base = support.cover(spacing);
    // beyond K the contracted copies sit inside B(0, spacing)
    let mut k_max = 0usize;
    while dil.power(-(k_max as i32 + 1)).op_norm() > spacing {
        k_max += 1;
        if k_max > 200 {
            return Err(Error::BudgetExceeded("contraction depth for tendril cover".into()));
        }
    }
    let quantum = spacing / lit(4.0);
    let mut seen: HashSet<Key> = HashSet::new();
    let mut points: Vec<Vec<T>> = Vec::new();
    let mut add = |p: Vec<T>, seen: &mut HashSet<Key>| {
        let mut key: Key = [0; MAX_DIM];
        for i in 0..d {
            key[i] = (p[i] / quantum).floor().to_i64().unwrap_or(0);
        }
        if seen.insert(key) {
            points.push(p);
        }
    };
    add(vec![T::zero(); d], &mut seen);
    let mut layer = base;
    for j in 0..=k_max {
        if j > 0 {
            layer = layer.iter().map(|p| dil.inverse.apply(p)).collect();
        }
        for p in &layer {
            add(p.clone(), &mut seen);
        }
    }
    let delta = spacing + quantum * lit::<T>(d as f64).sqrt();
    TendrilRaster::build(&edges, &points, delta, h)
}

/// A rasterised tendril placed at a specific cube.
#[derive(Clone, Debug, Serialize)]
pub struct SurfaceTendril<T: Real> {
    pub base: GridCube,
    /// Volume of the rasterised superset.
    pub volume: T,
    pub cells: usize,
    #[serde(skip)]
    frame_inv: Mat<T>,
    #[serde(skip)]
    origin: Vec<T>,
    #[serde(skip)]
    raster: Arc<TendrilRaster<T>>,
    #[serde(skip)]
    bbox: (Vec<T>, Vec<T>),
}

impl<T: Real> SurfaceTendril<T> {
    pub(super) fn place(
        dil: &DilationStructure<T>,
        q: &GridCube,
        raster: Arc<TendrilRaster<T>>,
        reach: TendrilReach,
    ) -> Result<Self> {
        let core = grid::expand_cube(dil, q, reach.expansion())?;
        let lift = q.tau + reach.lift();
        let frame = dil.power(lift);
        let frame_inv = dil.power(-lift);
        let origin = frame_inv.apply(&core.origin);
        let volume = raster.volume() * dil.volume(lift);
        let (rlo, rhi) = raster.bounds();
        let lo: Vec<T> = rlo.iter().zip(&origin).map(|(&a, &o)| a + o).collect();
        let hi: Vec<T> = rhi.iter().zip(&origin).map(|(&a, &o)| a + o).collect();
        let bbox = Parallelepiped::from_box(&lo, &hi).transformed(&frame).bounding_box();
        Ok(SurfaceTendril { base: q.clone(), volume, cells: raster.cell_count(), frame_inv, origin, raster, bbox })
    }

    pub fn contains(&self, x: &[T]) -> bool {
        let mut z = [T::zero(); MAX_DIM];
        let d = x.len();
        self.frame_inv.mul_vec_into(x, &mut z[..d]);
        for i in 0..d {
            z[i] = z[i] - self.origin[i];
        }
        self.raster.contains(&z[..d])
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        self.bbox.clone()
    }
}
