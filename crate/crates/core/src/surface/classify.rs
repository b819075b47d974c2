//! Flags for low-curvature caps (`I¹`) and caps concentrating too much mass
//! on some cube of `R_0` relative to `|Q|/diam(Q)` (`I²`).

use std::collections::{BTreeSet, HashMap};
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use super::{gauss_legendre, gaussian_curvature, partition_measure, GraphSurface, SurfacePiece};
use crate::dilation::{ols_slope, DilationStructure};
use crate::linalg::Mat;
use crate::{lit, Error, Real, Result};

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyParams<T> {
    pub eps: T,
    pub zeta: T,
    /// Levels `τ` searched for `I²`; `None` means `[−s−8, 0]`.
    pub tau_window: Option<RangeInclusive<i32>>,
}

impl<T: Real> ClassifyParams<T> {
    /// `ζ = ε/8`, default window.
    pub fn new(eps: T) -> Self {
        ClassifyParams { eps, zeta: eps / lit(8.0), tau_window: None }
    }

    fn window(&self, s: u32) -> RangeInclusive<i32> {
        self.tau_window.clone().unwrap_or(-(s as i32) - 8..=0)
    }
}

const CURVATURE_SLACK: f64 = 1e-9;

/// Sets `in_i1`, `in_i2`, `min_abs_curvature`, `max_mass_ratio` and
/// `worst_tau` on every piece. The mass ratio is `μ_ρ^s(Q)·diam(Q)/|Q|`, so
/// `in_i2` means the ratio exceeded `2^{ζs}`.
pub fn classify_pieces<T: Real>(
    pieces: &mut [SurfacePiece<T>],
    surface: &GraphSurface<T>,
    dil: &DilationStructure<T>,
    params: &ClassifyParams<T>,
) -> Result<()> {
    if dil.dim != surface.dim {
        return Err(Error::InputInvalid("surface and dilation dimensions differ".into()));
    }
    let levels: Vec<Level<T>> = {
        let mut taus: Vec<i32> = pieces.iter().flat_map(|p| params.window(p.s)).collect();
        taus.sort_unstable();
        taus.dedup();
        taus.into_iter().map(|tau| Level::new(dil, tau)).collect()
    };
    pieces.par_iter_mut().for_each(|p| {
        let two = lit::<T>(2.0);
        let s = lit::<T>(p.s as f64);
        let min_k = p
            .quad_nodes
            .iter()
            .map(|(y, _)| gaussian_curvature(surface, y).abs())
            .fold(T::infinity(), T::min);
        p.min_abs_curvature = Some(min_k);
        // relative slack so K ≡ 2^{-εs} computed with rounding is not flagged
        p.in_i1 = min_k < two.powf(-params.eps * s) * (T::one() - lit(CURVATURE_SLACK));

        let limit = two.powf(params.zeta * s);
        let mut worst = (T::zero(), None);
        for tau in params.window(p.s) {
            let level = levels.iter().find(|l| l.tau == tau).expect("level precomputed");
            let ratio = level.max_mass(surface, p) / level.scale;
            if ratio > worst.0 {
                worst = (ratio, Some(tau));
            }
            if ratio > limit {
                break;
            }
        }
        p.max_mass_ratio = Some(worst.0);
        p.worst_tau = worst.1;
        p.in_i2 = worst.0 > limit;
    });
    Ok(())
}

struct Level<T: Real> {
    tau: i32,
    /// `A^{-τ}`, taking `R_{0,τ}` to the unit lattice.
    pull: Mat<T>,
    /// `|Q|/diam(Q)`.
    scale: T,
}

impl<T: Real> Level<T> {
    fn new(dil: &DilationStructure<T>, tau: i32) -> Self {
        Level { tau, pull: dil.power(-tau), scale: dil.volume(tau) / dil.cube_diameter(tau) }
    }

    fn max_mass(&self, surface: &GraphSurface<T>, piece: &SurfacePiece<T>) -> T {
        if surface.param_dim() == 1 {
            self.max_mass_curve(surface, piece)
        } else {
            self.max_mass_sampled(surface, piece)
        }
    }

    fn u(&self, surface: &GraphSurface<T>, y: T) -> [T; 2] {
        let x = surface.embed(&[y]);
        let v = self.pull.apply(&x);
        [v[0], v[1]]
    }

    fn du(&self, surface: &GraphSurface<T>, y: T) -> [T; 2] {
        let v = self.pull.apply(&surface.tangent(&[y], 0));
        [v[0], v[1]]
    }

    /// Curves: candidate cubes are those met at coarse samples and along the
    /// curve around the point where it moves slowest in the unit-lattice
    /// frame; `μ_ρ(Q)` is integrated exactly between the crossings.
    fn max_mass_curve(&self, surface: &GraphSurface<T>, piece: &SurfacePiece<T>) -> T {
        let (a, b) = (piece.lo[0], piece.hi[0]);
        let speed = |y: T| {
            let d = self.du(surface, y);
            (d[0] * d[0] + d[1] * d[1]).sqrt()
        };
        let n = 128;
        let at = |i: usize| a + (b - a) * lit(i as f64 / n as f64);
        let imin = (0..=n).min_by(|&i, &j| speed(at(i)).partial_cmp(&speed(at(j))).expect("finite speed")).unwrap_or(0);
        let ystar = golden_min(speed, at(imin.saturating_sub(1)), at((imin + 1).min(n)));
        let mut cubes: BTreeSet<[i64; 2]> = BTreeSet::new();
        let mut add = |y: T| {
            let u = self.u(surface, y);
            if let (Some(p), Some(q)) = (u[0].floor().to_i64(), u[1].floor().to_i64()) {
                cubes.insert([p, q]);
            }
        };
        for i in 0..=32 {
            add(a + (b - a) * lit(i as f64 / 32.0));
        }
        let step = lit::<T>(0.5) / speed(ystar).max(T::min_positive_value());
        for k in -4..=4 {
            let y = ystar + step * lit(k as f64);
            if y >= a && y <= b {
                add(y);
            }
        }
        let segments: [Vec<T>; 2] = [0, 1].map(|k| monotone_breaks(|y| self.du(surface, y)[k], a, b));
        cubes
            .iter()
            .map(|n| self.exact_mass(surface, piece, n, &segments))
            .fold(T::zero(), T::max)
    }

    fn exact_mass(&self, surface: &GraphSurface<T>, piece: &SurfacePiece<T>, n: &[i64; 2], segments: &[Vec<T>; 2]) -> T {
        let (a, b) = (piece.lo[0], piece.hi[0]);
        let mut breaks = vec![a, b];
        for k in 0..2 {
            let g = |y: T| self.u(surface, y)[k];
            for c in [lit::<T>(n[k] as f64), lit::<T>((n[k] + 1) as f64)] {
                for w in segments[k].windows(2) {
                    if let Some(r) = bisect_root(|y| g(y) - c, w[0], w[1]) {
                        breaks.push(r);
                    }
                }
            }
        }
        breaks.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
        let inside = |y: T| {
            let u = self.u(surface, y);
            (0..2).all(|k| u[k] >= lit(n[k] as f64) && u[k] < lit((n[k] + 1) as f64))
        };
        let mut mass = T::zero();
        for w in breaks.windows(2) {
            if w[1] <= w[0] || !inside((w[0] + w[1]) / lit(2.0)) {
                continue;
            }
            for (y, wt) in gauss_legendre(w[0], w[1], 2) {
                mass = mass + wt * piece.bump_at(surface, &[y]);
            }
        }
        mass
    }

    /// Higher-dimensional caps: masses of every cube met by a fine midpoint
    /// grid over the cap, accumulated by cube.
    fn max_mass_sampled(&self, surface: &GraphSurface<T>, piece: &SurfacePiece<T>) -> T {
        let k = surface.param_dim();
        let m = 64usize;
        let steps: Vec<T> = (0..k).map(|i| (piece.hi[i] - piece.lo[i]) / lit(m as f64)).collect();
        let cell: T = steps.iter().copied().fold(T::one(), |a, b| a * b);
        let mut masses: HashMap<Vec<i64>, T> = HashMap::new();
        let mut y = vec![T::zero(); k];
        for mut c in 0..m.pow(k as u32) {
            for i in 0..k {
                y[i] = piece.lo[i] + steps[i] * (lit::<T>((c % m) as f64) + lit(0.5));
                c /= m;
            }
            let w = piece.bump_at(surface, &y);
            if w == T::zero() {
                continue;
            }
            let u = self.pull.apply(&surface.embed(&y));
            let key: Vec<i64> = u.iter().map(|v| v.floor().to_i64().unwrap_or(i64::MAX)).collect();
            let e = masses.entry(key).or_insert(T::zero());
            *e = *e + w * cell;
        }
        masses.values().copied().fold(T::zero(), T::max)
    }
}

/// Endpoints of intervals on which `g` has constant sign, from sign changes
/// over 64 samples refined by bisection.
fn monotone_breaks<T: Real>(g: impl Fn(T) -> T, a: T, b: T) -> Vec<T> {
    let n = 64;
    let mut out = vec![a];
    let mut prev = (a, g(a));
    for i in 1..=n {
        let y = a + (b - a) * lit(i as f64 / n as f64);
        let v = g(y);
        if (prev.1 < T::zero()) != (v < T::zero()) {
            if let Some(r) = bisect_root(&g, prev.0, y) {
                out.push(r);
            }
        }
        prev = (y, v);
    }
    out.push(b);
    out
}

/// A root of `g` in `[a, b]` when `g` changes sign across it.
fn bisect_root<T: Real>(g: impl Fn(T) -> T, a: T, b: T) -> Option<T> {
    let (mut lo, mut hi) = (a, b);
    let (glo, ghi) = (g(lo), g(hi));
    if glo == T::zero() {
        return Some(lo);
    }
    if (glo < T::zero()) == (ghi < T::zero()) {
        return None;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) < T::zero()) == (glo < T::zero()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((lo + hi) / lit(2.0))
}

fn golden_min<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T) -> T {
    let r: T = lit(0.618_033_988_749_895);
    for _ in 0..80 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (a + b) / lit(2.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct MercuryRow {
    pub s: u32,
    pub pieces: usize,
    pub i1: usize,
    pub i2: usize,
    pub union: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MercuryReport {
    pub rows: Vec<MercuryRow>,
    /// Fitted slope of `log₂(1 + |I¹ ∪ I²|)` against `s`.
    pub growth: f64,
    /// `(d−1)ε − growth`.
    pub eta: f64,
}

/// Partitions and classifies at every `s`, then fits the growth exponent of
/// the number of excluded caps.
pub fn mercury_check<T: Real>(
    surface: &GraphSurface<T>,
    dil: &DilationStructure<T>,
    params: &ClassifyParams<T>,
    s_values: &[u32],
) -> Result<MercuryReport> {
    let distinct: BTreeSet<u32> = s_values.iter().copied().collect();
    if distinct.len() < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 distinct s values, got {}", distinct.len())));
    }
    let mut rows = Vec::new();
    for &s in &distinct {
        let mut pieces = partition_measure(surface, s, params.eps)?;
        classify_pieces(&mut pieces, surface, dil, params)?;
        rows.push(mercury_row(s, &pieces));
    }
    fit_growth(rows, params.eps.to_f64_lossy(), surface.param_dim())
}

/// Counts for one scale from classified pieces.
pub fn mercury_row<T: Real>(s: u32, pieces: &[SurfacePiece<T>]) -> MercuryRow {
    MercuryRow {
        s,
        pieces: pieces.len(),
        i1: pieces.iter().filter(|p| p.in_i1).count(),
        i2: pieces.iter().filter(|p| p.in_i2).count(),
        union: pieces.iter().filter(|p| p.in_i1 || p.in_i2).count(),
    }
}

/// Fits the growth exponent over rows with at least 5 distinct `s`.
pub fn fit_growth(rows: Vec<MercuryRow>, eps: f64, param_dim: usize) -> Result<MercuryReport> {
    let distinct: BTreeSet<u32> = rows.iter().map(|r| r.s).collect();
    if distinct.len() < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 distinct s values, got {}", distinct.len())));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.s as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (1.0 + r.union as f64).log2()).collect();
    let growth = ols_slope(&xs, &ys).ok_or_else(|| Error::DegenerateFit("s values do not spread".into()))?;
    Ok(MercuryReport { rows, growth, eta: param_dim as f64 * eps - growth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::validate_rows;

    fn diag24() -> DilationStructure<f64> {
        validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap()
    }

    #[test]
    fn circle_has_no_low_curvature_caps() {
        let c = GraphSurface::<f64>::circle_arc(2, 0, 0.7).unwrap();
        let params = ClassifyParams::new(0.25);
        for s in [4u32, 10, 16] {
            let mut pieces = partition_measure(&c, s, 0.25).unwrap();
            classify_pieces(&mut pieces, &c, &diag24(), &params).unwrap();
            assert!(pieces.iter().all(|p| !p.in_i1));
        }
    }

    #[test]
    fn quartic_flags_match_curvature_threshold() {
        let q = GraphSurface::<f64>::quartic_flat(2, 0, 0.7).unwrap();
        let eps = 0.25;
        let s = 16u32;
        let mut pieces = partition_measure(&q, s, eps).unwrap();
        classify_pieces(&mut pieces, &q, &diag24(), &ClassifyParams::new(eps)).unwrap();
        // oracle: |K(y)| = 12y²/(1+16y⁶)^{3/2} < 2^{-εs} near 0, solved by bisection
        let target = 2f64.powf(-eps * s as f64);
        let k = |y: f64| 12.0 * y * y / (1.0 + 16.0 * y.powi(6)).powf(1.5);
        let y0 = bisect_root(|y| k(y) - target, 0.0, 0.5).unwrap();
        for p in &pieces {
            // nodes lie strictly inside the support, so only caps reaching well
            // into (−y0, y0) must be flagged
            let reaches = p.lo[0] < y0 * 0.9 && p.hi[0] > -y0 * 0.9;
            let beyond = p.lo[0] > y0 || p.hi[0] < -y0;
            if reaches {
                assert!(p.in_i1, "cap {:?} should be flagged", (p.lo[0], p.hi[0]));
            }
            if beyond {
                assert!(!p.in_i1, "cap {:?} should not be flagged", (p.lo[0], p.hi[0]));
            }
        }
    }

    #[test]
    fn exact_mass_matches_fine_sampling() {
        let c = GraphSurface::<f64>::circle_arc(2, 0, 0.7).unwrap();
        let pieces = partition_measure(&c, 4, 0.25).unwrap();
        let dil = diag24();
        let level = Level::new(&dil, -2);
        let p = &pieces[pieces.len() / 2];
        let segs = [0, 1].map(|k| monotone_breaks(|y| level.du(&c, y)[k], p.lo[0], p.hi[0]));
        let n = 200_000;
        let mut brute: HashMap<[i64; 2], f64> = HashMap::new();
        let step = (p.hi[0] - p.lo[0]) / n as f64;
        for i in 0..n {
            let y = p.lo[0] + (i as f64 + 0.5) * step;
            let u = level.u(&c, y);
            *brute.entry([u[0].floor() as i64, u[1].floor() as i64]).or_default() += step * p.bump_at(&c, &[y]);
        }
        for (cube, m) in &brute {
            let exact = level.exact_mass(&c, p, cube, &segs);
            assert!((exact - m).abs() < 1e-6, "{cube:?}: {exact} vs {m}");
        }
    }

    #[test]
    fn transversal_cap_is_not_concentrated() {
        // height along the slow axis: the curve crosses cubes through their short side
        let c = GraphSurface::<f64>::paraboloid(2, 0, 0.7).unwrap();
        let eps = 0.25;
        let mut pieces = partition_measure(&c, 8, eps).unwrap();
        classify_pieces(&mut pieces, &c, &diag24(), &ClassifyParams::new(eps)).unwrap();
        let mid = pieces.iter().find(|p| p.lo[0] < 0.0 && p.hi[0] > 0.0).unwrap();
        assert!(!mid.in_i2, "ratio {:?}", mid.max_mass_ratio);
        // the same cap with the height on the fast axis lies along the long side
        let flat = GraphSurface::<f64>::paraboloid(2, 1, 0.7).unwrap();
        let mut pieces = partition_measure(&flat, 8, eps).unwrap();
        classify_pieces(&mut pieces, &flat, &diag24(), &ClassifyParams::new(eps)).unwrap();
        let mid_flat = pieces.iter().find(|p| p.lo[0] < 0.0 && p.hi[0] > 0.0).unwrap();
        assert!(mid_flat.max_mass_ratio.unwrap() > mid.max_mass_ratio.unwrap());
    }

    #[test]
    fn mercury_needs_five_scales() {
        let c = GraphSurface::<f64>::circle_arc(2, 0, 0.7).unwrap();
        let r = mercury_check(&c, &diag24(), &ClassifyParams::new(0.25), &[4]);
        assert!(matches!(r, Err(Error::DegenerateFit(_))));
    }
}
