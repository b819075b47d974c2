//! The grids `R_{σ,τ} = A^τ(D_σ)`: addressing, realization, expansion,
//! covering enumeration and tendril bounds.

use rand::Rng as _;
use serde::Serialize;

use crate::dilation::DilationStructure;
use crate::geometry::{self, Parallelepiped};
use crate::linalg::{self, Mat};
use crate::rng;
use crate::{lit, Error, Real, Result};

/// Largest number of cubes [`enumerate_cover`] will return.
pub const ENUMERATION_BUDGET: u64 = 10_000_000;

/// The cube `A^τ(2^σ([0,1)^d + index))` of `R_{σ,τ}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct GridCube {
    pub sigma: i32,
    pub tau: i32,
    pub index: Vec<i64>,
}

impl GridCube {
    pub fn new(sigma: i32, tau: i32, index: Vec<i64>) -> Self {
        assert!(sigma <= 0, "grid cubes have σ ≤ 0");
        GridCube { sigma, tau, index }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Exact volume `2^{dσ} a^τ`.
    pub fn volume<T: Real>(&self, dil: &DilationStructure<T>) -> T {
        lit::<T>(2.0).powi(self.sigma * self.dim() as i32) * dil.volume(self.tau)
    }

    /// The dyadic parent in `R_{σ+1,τ}` (requires σ < 0).
    pub fn dyadic_parent(&self) -> GridCube {
        assert!(self.sigma < 0);
        GridCube::new(self.sigma + 1, self.tau, self.index.iter().map(|n| n.div_euclid(2)).collect())
    }
}

/// `2^σ A^τ`, the linear part of every cube of `R_{σ,τ}`.
pub fn level_map<T: Real>(dil: &DilationStructure<T>, sigma: i32, tau: i32) -> Mat<T> {
    dil.power(tau).scale(lit::<T>(2.0).powi(sigma))
}

/// Geometric realization as a parallelepiped.
pub fn realize<T: Real>(dil: &DilationStructure<T>, c: &GridCube) -> Parallelepiped<T> {
    let m = level_map(dil, c.sigma, c.tau);
    let n: Vec<T> = c.index.iter().map(|&i| lit::<T>(i as f64)).collect();
    Parallelepiped::new(m.apply(&n), m)
}

/// The `2^d` vertices of the realization.
pub fn realize_cube<T: Real>(dil: &DilationStructure<T>, c: &GridCube) -> Vec<Vec<T>> {
    realize(dil, c).vertices()
}

/// `q*` (factor 2) or `q**` (factor 4).
pub fn expand_cube<T: Real>(dil: &DilationStructure<T>, c: &GridCube, factor: u32) -> Result<Parallelepiped<T>> {
    if factor != 2 && factor != 4 {
        return Err(Error::InputInvalid(format!("expansion factor must be 2 or 4, got {factor}")));
    }
    Ok(realize(dil, c).expand(lit(factor as f64)))
}

/// Every vertex of `inner` lies in `outer` (closed, tolerance `1e-12·diam`).
pub fn cube_contains<T: Real>(outer: &Parallelepiped<T>, dil: &DilationStructure<T>, inner: &GridCube) -> bool {
    outer.contains_parallelepiped(&realize(dil, inner))
}

/// The cube of `R_{σ,τ}` containing `x` (half-open convention).
pub fn locate<T: Real>(dil: &DilationStructure<T>, sigma: i32, tau: i32, x: &[T]) -> GridCube {
    let inv = dil.power(-tau).scale(lit::<T>(2.0).powi(-sigma));
    let u = inv.apply(x);
    GridCube::new(sigma, tau, u.iter().map(|v| v.floor().to_i64().expect("finite coordinate")).collect())
}

/// Anisotropic parent: the cube of `R_{σ,τ+1}` containing the center of `c`.
pub fn tau_parent<T: Real>(dil: &DilationStructure<T>, c: &GridCube) -> GridCube {
    locate(dil, c.sigma, c.tau + 1, &realize(dil, c).center())
}

/// All cubes of `R_{σ,τ}` whose realization meets the box `[lo, hi]` in a set
/// of positive measure (cubes that merely touch the box are excluded, matching
/// the half-open tiling).
pub fn enumerate_cover<T: Real>(
    dil: &DilationStructure<T>,
    sigma: i32,
    tau: i32,
    lo: &[T],
    hi: &[T],
) -> Result<Vec<GridCube>> {
    let d = dil.dim;
    if lo.len() != d || hi.len() != d {
        return Err(Error::InputInvalid("box dimension mismatch".into()));
    }
    if lo.iter().zip(hi).any(|(&l, &h)| !(h > l)) {
        return Ok(Vec::new());
    }
    let inv = dil.power(-tau).scale(lit::<T>(2.0).powi(-sigma));
    // the box in the integer frame where cubes are unit cubes
    let pulled = Parallelepiped::from_box(lo, hi).transformed(&inv);
    let (plo, phi) = pulled.bounding_box();
    let mut ranges = Vec::with_capacity(d);
    let mut count: u64 = 1;
    for i in 0..d {
        let a = plo[i].floor().to_i64().ok_or_else(|| Error::BudgetExceeded("index overflow".into()))?;
        let b = phi[i].ceil().to_i64().ok_or_else(|| Error::BudgetExceeded("index overflow".into()))?;
        let len = (b - a).max(0) as u64;
        count = count.saturating_mul(len);
        ranges.push((a, b));
    }
    if count > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "{count} candidate cubes at (σ={sigma}, τ={tau}) exceed {ENUMERATION_BUDGET}"
        )));
    }
    let axis_aligned = (0..d).all(|i| (0..d).all(|j| i == j || pulled.edges[(i, j)] == T::zero()));
    let mut out = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|r| r.1 <= r.0) {
        return Ok(out);
    }
    loop {
        let keep = axis_aligned || {
            let lo_n: Vec<T> = idx.iter().map(|&n| lit::<T>(n as f64)).collect();
            let hi_n: Vec<T> = lo_n.iter().map(|&v| v + T::one()).collect();
            Parallelepiped::from_box(&lo_n, &hi_n).interiors_overlap(&pulled)
        };
        if keep {
            out.push(GridCube::new(sigma, tau, idx.clone()));
        }
        // odometer
        let mut k = 0;
        loop {
            if k == d {
                return Ok(out);
            }
            idx[k] += 1;
            if idx[k] < ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
            k += 1;
        }
    }
}

/// Outer bound `q** ⊕ A^{τ+2} B₂(0)` for the tendril of `q`.
#[derive(Clone, Debug, Serialize)]
pub struct TendrilBound<T: Real> {
    pub base: GridCube,
    /// `q**` in ambient coordinates.
    pub core: Parallelepiped<T>,
    /// `A^{τ+2}`, the frame of the ball term.
    pub frame: Mat<T>,
    pub radius: T,
    /// Exact volume of `q** ⊕ A^{τ+2}[−2,2]^d`, an upper bound of the outer set.
    pub volume_bound: T,
    /// `2^σ a^τ`, the scale in which tendril volumes are usually quoted.
    pub nominal_scale: T,
    #[serde(skip)]
    pulled_core: Parallelepiped<T>,
    #[serde(skip)]
    frame_inv: Mat<T>,
}

impl<T: Real> TendrilBound<T> {
    /// Exact membership test, done in the `A^{-(τ+2)}` frame where the ball
    /// term is round.
    pub fn contains(&self, x: &[T]) -> bool {
        let y = self.frame_inv.apply(x);
        self.pulled_core.distance_to(&y) <= self.radius * (T::one() + lit(1e-12))
    }

    /// Axis-aligned bounding box of the outer set.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let (mut lo, mut hi) = self.core.bounding_box();
        for i in 0..lo.len() {
            let w = self.radius * linalg::norm(self.frame.row(i));
            lo[i] = lo[i] - w;
            hi[i] = hi[i] + w;
        }
        (lo, hi)
    }
}

/// The tendril bound of `c`. Requires `A^{-1}B₁ ⊂ B_{1/2}`.
pub fn tendril_of<T: Real>(dil: &DilationStructure<T>, c: &GridCube) -> Result<TendrilBound<T>> {
    if !dil.is_normalized() {
        return Err(Error::NotNormalized(dil.inverse.op_norm().to_f64_lossy()));
    }
    let core = expand_cube(dil, c, 4)?;
    let frame = dil.power(c.tau + 2);
    let frame_inv = dil.power(-(c.tau + 2));
    let pulled_core = core.transformed(&frame_inv);
    let d = dil.dim;
    let radius = lit::<T>(2.0);
    let mut gens: Vec<Vec<T>> = (0..d).map(|j| pulled_core.edges.column(j)).collect();
    for i in 0..d {
        let mut e = vec![T::zero(); d];
        e[i] = lit(4.0);
        gens.push(e);
    }
    let volume_bound = geometry::zonotope_volume(&gens) * dil.volume(c.tau + 2);
    let nominal_scale = lit::<T>(2.0).powi(c.sigma) * dil.volume(c.tau);
    Ok(TendrilBound { base: c.clone(), core, frame, radius, volume_bound, nominal_scale, pulled_core, frame_inv })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub rel_std_error: f64,
    pub samples: usize,
}

/// Monte Carlo volume of `{x ∈ [lo,hi] : member(x)}`.
pub fn monte_carlo_volume<T: Real>(
    lo: &[T],
    hi: &[T],
    samples: usize,
    seed: u64,
    member: impl Fn(&[T]) -> bool,
) -> VolumeEstimate {
    let mut rng = rng::seeded(seed);
    let d = lo.len();
    let mut x = vec![T::zero(); d];
    let mut hits = 0usize;
    for _ in 0..samples {
        for i in 0..d {
            let u: f64 = rng.gen();
            x[i] = lo[i] + lit::<T>(u) * (hi[i] - lo[i]);
        }
        if member(&x) {
            hits += 1;
        }
    }
    let box_vol: f64 = lo.iter().zip(hi).map(|(&l, &h)| (h - l).to_f64_lossy()).product();
    let p = hits as f64 / samples as f64;
    let rel = if hits == 0 { f64::INFINITY } else { ((1.0 - p) / (p * samples as f64)).sqrt() };
    VolumeEstimate { estimate: p * box_vol, rel_std_error: rel, samples }
}

/// Monte Carlo estimate of the outer set's volume, checked against the bound.
pub fn tendril_volume_estimate<T: Real>(t: &TendrilBound<T>, samples: usize, seed: u64) -> Result<VolumeEstimate> {
    if samples < 1000 {
        return Err(Error::InputInvalid(format!("need at least 1000 samples, got {samples}")));
    }
    let (lo, hi) = t.bounding_box();
    let est = monte_carlo_volume(&lo, &hi, samples, seed, |x| t.contains(x));
    let bound = t.volume_bound.to_f64_lossy();
    // allow four standard errors of sampling noise above the bound
    if est.estimate > bound * (1.0 + 4.0 * est.rel_std_error) {
        return Err(Error::NumericalFailure(format!(
            "tendril volume estimate {} exceeds bound {bound}",
            est.estimate
        )));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::validate_rows;

    fn diag24() -> DilationStructure<f64> {
        validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap()
    }

    fn two_i() -> DilationStructure<f64> {
        validate_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap()
    }

    fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn realization_examples() {
        let d = diag24();
        let unit = realize_cube(&d, &GridCube::new(0, 0, vec![0, 0]));
        assert_eq!(sorted(unit), vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let r = realize_cube(&d, &GridCube::new(0, -1, vec![0, 0]));
        assert_eq!(sorted(r), vec![vec![0.0, 0.0], vec![0.0, 0.25], vec![0.5, 0.0], vec![0.5, 0.25]]);
        let s = realize_cube(&d, &GridCube::new(-1, 0, vec![1, 0]));
        assert_eq!(sorted(s), vec![vec![0.5, 0.0], vec![0.5, 0.5], vec![1.0, 0.0], vec![1.0, 0.5]]);
        assert_eq!(GridCube::new(-2, 3, vec![1, 1]).volume(&d), 2f64.powi(-4) * 512.0);
    }

    #[test]
    fn expansion_examples() {
        let d = diag24();
        let e = expand_cube(&d, &GridCube::new(0, -1, vec![0, 0]), 4).unwrap();
        assert_eq!(e.bounding_box(), (vec![-0.75, -0.375], vec![1.25, 0.625]));
        assert!(expand_cube(&d, &GridCube::new(0, 0, vec![0, 0]), 3).is_err());
    }

    #[test]
    fn containment_examples() {
        let d = diag24();
        let unit = GridCube::new(0, 0, vec![0, 0]);
        let star = expand_cube(&d, &unit, 2).unwrap();
        assert!(cube_contains(&star, &d, &unit));
        let unit_p = realize(&d, &unit);
        assert!(cube_contains(&unit_p, &d, &GridCube::new(0, -1, vec![0, 0])));
        assert!(!cube_contains(&unit_p, &d, &GridCube::new(0, 0, vec![3, 0])));
    }

    #[test]
    fn cover_examples() {
        let d = diag24();
        let c = enumerate_cover(&d, 0, 0, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c, vec![GridCube::new(0, 0, vec![0, 0])]);
        let c = enumerate_cover(&d, -1, 0, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.len(), 4);
        assert!(enumerate_cover(&d, 0, 0, &[1.0, 0.0], &[1.0, 1.0]).unwrap().is_empty());
        assert!(matches!(
            enumerate_cover(&d, -12, -6, &[0.0, 0.0], &[4.0, 4.0]),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn cover_is_complete_for_sheared_grid() {
        let d = validate_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let (lo, hi) = ([-0.3, 0.2], [0.9, 1.1]);
        let cover = enumerate_cover(&d, -1, -1, &lo, &hi).unwrap();
        for i in 0..100 {
            for j in 0..100 {
                let x = [lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / 100.0, lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / 100.0];
                let c = locate(&d, -1, -1, &x);
                assert!(cover.contains(&c), "{x:?} in {c:?} not covered");
            }
        }
    }

    #[test]
    fn tau_parent_contains_center() {
        let d = diag24();
        let c = GridCube::new(0, -2, vec![3, -5]);
        let p = tau_parent(&d, &c);
        assert_eq!(p.tau, -1);
        assert!(realize(&d, &p).contains_half_open(&realize(&d, &c).center()));
    }

    #[test]
    fn tendril_examples() {
        let d = two_i();
        let q = GridCube::new(0, 0, vec![0, 0]);
        let t = tendril_of(&d, &q).unwrap();
        assert!(t.contains(&[0.0, 0.0]));
        assert!(t.contains(&[-1.5 - 7.9, 0.5]));
        assert!(!t.contains(&[30.0, 30.0]));
        let t2 = tendril_of(&d, &GridCube::new(0, 1, vec![0, 0])).unwrap();
        assert!((t2.volume_bound / t.volume_bound - 4.0).abs() < 1e-9);
        let jordan = validate_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(tendril_of(&jordan, &q), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn tendril_volume_sandwich_and_scaling() {
        let d = two_i();
        let t0 = tendril_of(&d, &GridCube::new(0, 0, vec![0, 0])).unwrap();
        let e0 = tendril_volume_estimate(&t0, 200_000, 1).unwrap();
        assert!(e0.estimate >= 16.0 && e0.estimate <= t0.volume_bound);
        let t1 = tendril_of(&d, &GridCube::new(0, -1, vec![0, 0])).unwrap();
        let e1 = tendril_volume_estimate(&t1, 200_000, 2).unwrap();
        let ratio = e1.estimate / e0.estimate;
        assert!((ratio * 4.0 - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn monte_carlo_calibration() {
        let est = monte_carlo_volume(&[0.0, 0.0], &[2.0, 2.0], 1_000_000, 3, |x| x[0] < 1.5 && x[1] < 0.5);
        assert!((est.estimate / 0.75 - 1.0).abs() < 0.01);
    }

    #[test]
    fn tendril_contains_dilated_supports() {
        let d = diag24();
        let q = GridCube::new(-1, -1, vec![1, 2]);
        let t = tendril_of(&d, &q).unwrap();
        let star = expand_cube(&d, &q, 2).unwrap();
        let mut rng = rng::seeded(9);
        for _ in 0..1000 {
            let u: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let x = star.point_at(&u);
            let ang: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let rad: f64 = rng.gen();
            let y = [rad * ang.cos(), rad * ang.sin()];
            let k = q.tau + 2 - rng.gen_range(0..8);
            let ay = d.power(k).apply(&y);
            assert!(t.contains(&[x[0] + ay[0], x[1] + ay[1]]));
        }
    }
}
