//! Parallelepipeds (affine images of the unit cube) and the exact queries the
//! grid and decomposition code needs on them.

use serde::Serialize;

use crate::linalg::{self, generalized_cross, Mat};
use crate::{lit, Real};

/// `{origin + E u : u ∈ [0,1]^d}` where the columns of `E` are the edges.
#[derive(Clone, Debug, Serialize)]
pub struct Parallelepiped<T: Real> {
    pub origin: Vec<T>,
    pub edges: Mat<T>,
    #[serde(skip)]
    inv: Mat<T>,
}

impl<T: Real> Parallelepiped<T> {
    pub fn new(origin: Vec<T>, edges: Mat<T>) -> Self {
        let inv = edges.inverse().expect("non-degenerate parallelepiped");
        Parallelepiped { origin, edges, inv }
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn from_box(lo: &[T], hi: &[T]) -> Self {
        let side: Vec<T> = hi.iter().zip(lo).map(|(&h, &l)| h - l).collect();
        Self::new(lo.to_vec(), Mat::diag(&side))
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn center(&self) -> Vec<T> {
        let half = vec![lit::<T>(0.5); self.dim()];
        let off = self.edges.apply(&half);
        self.origin.iter().zip(off).map(|(&o, e)| o + e).collect()
    }

    pub fn volume(&self) -> T {
        self.edges.det().abs()
    }

    pub fn vertices(&self) -> Vec<Vec<T>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                let u: Vec<T> = (0..d).map(|i| if mask >> i & 1 == 1 { T::one() } else { T::zero() }).collect();
                self.point_at(&u)
            })
            .collect()
    }

    pub fn point_at(&self, u: &[T]) -> Vec<T> {
        let off = self.edges.apply(u);
        self.origin.iter().zip(off).map(|(&o, e)| o + e).collect()
    }

    /// Diameter, attained on a pair of vertices.
    pub fn diameter(&self) -> T {
        let d = self.dim();
        let mut best = T::zero();
        let mut u = vec![T::zero(); d];
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            for ui in u.iter_mut() {
                *ui = lit::<T>((c % 3) as f64 - 1.0);
                c /= 3;
            }
            best = best.max(linalg::norm(&self.edges.apply(&u)));
        }
        best
    }

    /// Dilate about the center by `factor`.
    pub fn expand(&self, factor: T) -> Self {
        let c = self.center();
        let edges = self.edges.scale(factor);
        let half = vec![lit::<T>(0.5); self.dim()];
        let off = edges.apply(&half);
        let origin = c.iter().zip(off).map(|(&ci, o)| ci - o).collect();
        Parallelepiped { origin, edges, inv: self.inv.scale(T::one() / factor) }
    }

    /// Image under the linear map `m`.
    pub fn transformed(&self, m: &Mat<T>) -> Self {
        Self::new(m.apply(&self.origin), m.matmul(&self.edges))
    }

    pub fn translated(&self, by: &[T]) -> Self {
        Parallelepiped {
            origin: self.origin.iter().zip(by).map(|(&o, &b)| o + b).collect(),
            edges: self.edges.clone(),
            inv: self.inv.clone(),
        }
    }

    /// Coordinates `u` with `p = origin + E u`.
    #[inline]
    pub fn local_coords_into(&self, p: &[T], out: &mut [T]) {
        let d = self.dim();
        let mut diff = [T::zero(); crate::MAX_DIM];
        for i in 0..d {
            diff[i] = p[i] - self.origin[i];
        }
        self.inv.mul_vec_into(&diff[..d], out);
    }

    pub fn local_coords(&self, p: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.local_coords_into(p, &mut out);
        out
    }

    /// Closed membership with slack `tol` in local coordinates.
    pub fn contains_closed(&self, p: &[T], tol: T) -> bool {
        let mut u = [T::zero(); crate::MAX_DIM];
        self.local_coords_into(p, &mut u[..self.dim()]);
        u[..self.dim()].iter().all(|&x| x >= -tol && x <= T::one() + tol)
    }

    /// Half-open membership, `u ∈ [0,1)^d`.
    pub fn contains_half_open(&self, p: &[T]) -> bool {
        let mut u = [T::zero(); crate::MAX_DIM];
        self.local_coords_into(p, &mut u[..self.dim()]);
        u[..self.dim()].iter().all(|&x| x >= T::zero() && x < T::one())
    }

    /// True iff every vertex of `inner` lies in `self` (closed, tolerance
    /// `1e-12 · diam(self)` measured in the ambient metric).
    pub fn contains_parallelepiped(&self, inner: &Parallelepiped<T>) -> bool {
        let tol = self.local_tolerance();
        inner.vertices().iter().all(|v| self.contains_closed(v, tol))
    }

    fn local_tolerance(&self) -> T {
        // 1e-12·diam in ambient units, converted to local units through ‖E^{-1}‖
        lit::<T>(1e-12) * self.diameter() * self.inv.op_norm()
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let d = self.dim();
        let mut lo = self.origin.clone();
        let mut hi = self.origin.clone();
        for i in 0..d {
            for j in 0..d {
                let e = self.edges[(i, j)];
                if e < T::zero() {
                    lo[i] = lo[i] + e;
                } else {
                    hi[i] = hi[i] + e;
                }
            }
        }
        (lo, hi)
    }

    /// Interval of `⟨n, x⟩` over the parallelepiped.
    fn project(&self, n: &[T]) -> (T, T) {
        let base = linalg::dot(n, &self.origin);
        let (mut lo, mut hi) = (base, base);
        for j in 0..self.dim() {
            let c: T = (0..self.dim()).map(|i| n[i] * self.edges[(i, j)]).sum();
            if c < T::zero() {
                lo = lo + c;
            } else {
                hi = hi + c;
            }
        }
        (lo, hi)
    }

    /// Whether the interiors intersect (separating-axis test over normals of
    /// hyperplanes spanned by `d − 1` edge directions of either body).
    pub fn interiors_overlap(&self, other: &Parallelepiped<T>) -> bool {
        let d = self.dim();
        let dirs: Vec<Vec<T>> = (0..d).map(|j| self.edges.column(j)).chain((0..d).map(|j| other.edges.column(j))).collect();
        let scale = self.diameter().max(other.diameter());
        let mut subset = Vec::with_capacity(d.saturating_sub(1));
        let mut found_sep = false;
        let mut visit = |subset: &Vec<usize>| {
            let vs: Vec<&[T]> = subset.iter().map(|&k| dirs[k].as_slice()).collect();
            let n = generalized_cross(&vs);
            let len = linalg::norm(&n);
            if len <= T::epsilon() * lit(1e3) * scale.powi(d as i32 - 1).max(T::min_positive_value()) {
                return;
            }
            let n: Vec<T> = n.iter().map(|&v| v / len).collect();
            let (a0, a1) = self.project(&n);
            let (b0, b1) = other.project(&n);
            let overlap = a1.min(b1) - a0.max(b0);
            if overlap <= lit::<T>(1e-12) * scale {
                found_sep = true;
            }
        };
        combinations(dirs.len(), d - 1, &mut subset, 0, &mut visit);
        if d == 1 {
            let (a0, a1) = self.project(&[T::one()]);
            let (b0, b1) = other.project(&[T::one()]);
            return a1.min(b1) - a0.max(b0) > lit::<T>(1e-12) * scale;
        }
        !found_sep
    }

    /// Euclidean distance from `p` to the (closed) parallelepiped. Exact: the
    /// minimiser of a box-constrained least-squares problem is the
    /// unconstrained minimiser on one of the `3^d` faces.
    pub fn distance_to(&self, p: &[T]) -> T {
        let d = self.dim();
        let r: Vec<T> = p.iter().zip(&self.origin).map(|(&a, &b)| a - b).collect();
        // fast path: inside
        let mut u = vec![T::zero(); d];
        self.inv.mul_vec_into(&r, &mut u);
        if u.iter().all(|&x| x >= T::zero() && x <= T::one()) {
            return T::zero();
        }
        let cols: Vec<Vec<T>> = (0..d).map(|j| self.edges.column(j)).collect();
        let mut best = T::infinity();
        let mut state = vec![0u8; d];
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            for s in state.iter_mut() {
                *s = (c % 3) as u8;
                c /= 3;
            }
            // fixed coordinates: 0 → u=0, 1 → u=1, 2 → free
            let mut rhs = r.clone();
            for (j, &s) in state.iter().enumerate() {
                if s == 1 {
                    for i in 0..d {
                        rhs[i] = rhs[i] - cols[j][i];
                    }
                }
            }
            let free: Vec<usize> = (0..d).filter(|&j| state[j] == 2).collect();
            let mut point_off = vec![T::zero(); d];
            if !free.is_empty() {
                let k = free.len();
                let mut g = Mat::zeros(k);
                let mut b = vec![T::zero(); k];
                for (a, &ja) in free.iter().enumerate() {
                    b[a] = linalg::dot(&cols[ja], &rhs);
                    for (bb, &jb) in free.iter().enumerate() {
                        g[(a, bb)] = linalg::dot(&cols[ja], &cols[jb]);
                    }
                }
                let Some(sol) = g.solve(&b) else { continue };
                if sol.iter().any(|&x| x < T::zero() || x > T::one()) {
                    continue;
                }
                for (a, &ja) in free.iter().enumerate() {
                    for i in 0..d {
                        point_off[i] = point_off[i] + sol[a] * cols[ja][i];
                    }
                }
            }
            let dist: T = rhs.iter().zip(&point_off).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt();
            best = best.min(dist);
        }
        best
    }
}

fn combinations<F: FnMut(&Vec<usize>)>(n: usize, k: usize, cur: &mut Vec<usize>, start: usize, f: &mut F) {
    if cur.len() == k {
        if k > 0 {
            f(cur);
        }
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, cur, i + 1, f);
        cur.pop();
    }
}

/// Volume of the zonotope `Σ [0, g_i]`: sum of `|det|` over `d`-subsets.
pub fn zonotope_volume<T: Real>(generators: &[Vec<T>]) -> T {
    let d = generators.first().map_or(0, |g| g.len());
    let mut total = T::zero();
    let mut cur = Vec::new();
    let mut visit = |s: &Vec<usize>| {
        let cols: Vec<Vec<T>> = s.iter().map(|&i| generators[i].clone()).collect();
        total = total + Mat::from_columns(&cols).det().abs();
    };
    combinations(generators.len(), d, &mut cur, 0, &mut visit);
    total
}

/// Volume of the Euclidean ball of radius `r` in R^d.
pub fn ball_volume<T: Real>(d: usize, r: T) -> T {
    let pi = T::PI();
    let unit = match d {
        1 => lit(2.0),
        2 => pi,
        3 => lit::<T>(4.0 / 3.0) * pi,
        4 => pi * pi / lit(2.0),
        _ => {
            let h = d as f64 / 2.0;
            lit(std::f64::consts::PI.powf(h) / gamma_half_int(h + 1.0))
        }
    };
    unit * r.powi(d as i32)
}

fn gamma_half_int(x: f64) -> f64 {
    // Γ for positive integers and half-integers
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut t = 0.5;
        while t < x - 0.25 {
            g *= t;
            t += 1.0;
        }
        g
    }
}
