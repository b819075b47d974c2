//! Expanding dilation matrices and their spectral data.
//!
//! A [`DilationStructure`] caches what the rest of the crate needs from the
//! matrix `A`: the volume scale `a = |det A|`, the slowest eigenvalue modulus
//! `r`, the largest Jordan block `n` attached to it, a direction of slowest
//! contraction and the power `m` with `‖A^{-m}‖ ≤ 1/2`.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::linalg::{self, Mat};
use crate::{lit, Error, Real, Result, MAX_DIM};

/// Strictness margin for "every eigenvalue has modulus > 1".
pub const SPECTRAL_TOL: f64 = 1e-9;
/// Relative rank tolerance used when measuring Jordan chains.
pub const RANK_TOL: f64 = 1e-7;
/// Eigenvalues closer than this (relative) are treated as one eigenvalue.
const CLUSTER_TOL: f64 = 1e-3;
/// Scan window for the quasi-metric and normalization searches.
pub const SCAN_WINDOW: i32 = 64;

#[derive(Clone, Debug, Serialize)]
pub struct DilationStructure<T: Real> {
    pub matrix: Mat<T>,
    pub inverse: Mat<T>,
    pub dim: usize,
    /// `a = |det A|`
    pub det_scale: T,
    /// `r`, the minimum eigenvalue modulus.
    pub r_min: T,
    /// `n`, largest Jordan block among eigenvalues of modulus `r`.
    pub block_size: usize,
    pub slow_vector: Vec<T>,
    /// Orthonormal basis of the 1- or 2-dimensional limit subspace `W`.
    pub slow_subspace: Vec<Vec<T>>,
    /// Smallest `m ≥ 1` with `‖A^{-m}‖ ≤ 1/2`.
    pub norm_power: u32,
    pub eigen_moduli: Vec<T>,
}

#[derive(Clone, Copy, Debug)]
struct Cluster {
    value: Complex<f64>,
    multiplicity: usize,
}

fn to_na<T: Real>(m: &Mat<T>) -> DMatrix<f64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m[(i, j)].to_f64_lossy())
}

fn numerical_rank(m: &DMatrix<f64>, scale: f64) -> usize {
    let sv = m.clone().singular_values();
    let tol = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Validates an expanding matrix given as rows.
pub fn validate_rows<T: Real>(rows: &[Vec<T>]) -> Result<DilationStructure<T>> {
    let cols = rows.first().map_or(0, |r| r.len());
    let m = Mat::from_rows(rows).ok_or(Error::NonSquare { rows: rows.len(), cols })?;
    validate_dilation(&m)
}

pub fn validate_dilation<T: Real>(matrix: &Mat<T>) -> Result<DilationStructure<T>> {
    let d = matrix.dim();
    if d == 0 || d > MAX_DIM {
        return Err(Error::InputInvalid(format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    if matrix.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InputInvalid("non-finite matrix entry".into()));
    }
    let a = to_na(matrix);
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    for e in eig.iter() {
        let modulus = e.norm();
        if !(modulus > 1.0 + SPECTRAL_TOL) {
            return Err(Error::EigenvalueNotExpanding { modulus });
        }
    }
    let clusters = cluster_eigenvalues(eig.iter().copied().collect());
    let r = clusters.iter().map(|c| c.value.norm()).fold(f64::INFINITY, f64::min);
    let norm_a = a.norm();

    // Jordan index of every cluster on the circle |λ| = r.
    let mut best: Option<(Cluster, usize, DMatrix<f64>)> = None;
    for c in clusters.iter().filter(|c| (c.value.norm() - r).abs() <= CLUSTER_TOL * r) {
        if c.value.im < 0.0 {
            continue; // conjugate pairs handled once through their upper member
        }
        let nil = chain_operator(&a, c.value);
        let idx = jordan_index(&nil, norm_a + c.value.norm(), c.multiplicity);
        if best.as_ref().is_none_or(|(_, n, _)| idx > *n) {
            best = Some((*c, idx, nil));
        }
    }
    let (cluster, block_size, nil) =
        best.ok_or_else(|| Error::NumericalFailure("no eigenvalue on the slowest circle".into()))?;
    let (slow_vector, slow_subspace) = slow_pair(&a, &nil, block_size, cluster.value.im.abs() > 0.0, norm_a);

    let det_scale = matrix.det().abs();
    if !(det_scale > T::one()) {
        return Err(Error::EigenvalueNotExpanding { modulus: det_scale.to_f64_lossy() });
    }
    let inverse = matrix
        .inverse()
        .ok_or_else(|| Error::NumericalFailure("matrix not invertible".into()))?;
    let norm_power = normalization_power_of(&inverse)?;

    Ok(DilationStructure {
        matrix: matrix.clone(),
        inverse,
        dim: d,
        det_scale,
        r_min: lit(r),
        block_size,
        slow_vector: slow_vector.iter().map(|&v| lit(v)).collect(),
        slow_subspace: slow_subspace.iter().map(|w| w.iter().map(|&v| lit(v)).collect()).collect(),
        norm_power,
        eigen_moduli: eig.iter().map(|e| lit(e.norm())).collect(),
    })
}

fn cluster_eigenvalues(mut eig: Vec<Complex<f64>>) -> Vec<Cluster> {
    eig.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    let mut out: Vec<(Complex<f64>, usize)> = Vec::new();
    for e in eig {
        match out.iter_mut().find(|(c, k)| ((*c / *k as f64) - e).norm() <= CLUSTER_TOL * e.norm()) {
            Some((sum, k)) => {
                *sum += e;
                *k += 1;
            }
            None => out.push((e, 1)),
        }
    }
    out.into_iter()
        .map(|(sum, k)| {
            let mut value = sum / k as f64;
            if value.im.abs() <= CLUSTER_TOL * value.norm() {
                value.im = 0.0;
            }
            Cluster { value, multiplicity: k }
        })
        .collect()
}

/// `A − λI` for real λ, `A² − 2Re(λ)A + |λ|²I` for a complex pair.
fn chain_operator(a: &DMatrix<f64>, lambda: Complex<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    if lambda.im == 0.0 {
        a - id * lambda.re
    } else {
        a * a - a * (2.0 * lambda.re) + id * lambda.norm_sqr()
    }
}

fn jordan_index(nil: &DMatrix<f64>, scale: f64, multiplicity: usize) -> usize {
    let d = nil.nrows();
    let mut pow = DMatrix::<f64>::identity(d, d);
    let mut prev_rank = d;
    for j in 1..=d {
        pow = &pow * nil;
        let rank = numerical_rank(&pow, scale.powi(j as i32));
        if rank == prev_rank {
            return (j - 1).max(1);
        }
        prev_rank = rank;
    }
    multiplicity.clamp(1, d)
}

/// Top-of-chain vector `v` in the generalized eigenspace and the limit space `W`.
fn slow_pair(
    a: &DMatrix<f64>,
    nil: &DMatrix<f64>,
    n: usize,
    complex: bool,
    norm_a: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.nrows();
    let nil_n = nil.pow(n as u32);
    let svd = nil_n.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let tol = RANK_TOL * nil_n.norm().max(norm_a.powi(n as i32)).max(1.0);
    let kernel: Vec<nalgebra::DVector<f64>> = (0..d)
        .filter(|&k| svd.singular_values[k] <= tol)
        .map(|k| vt.row(k).transpose())
        .collect();
    let nil_top = nil.pow((n - 1) as u32);

    let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
    for i in 0..d {
        let mut w = nalgebra::DVector::<f64>::zeros(d);
        for k in &kernel {
            w += k * k[i];
        }
        let len = w.norm();
        if len < 1e-8 {
            continue;
        }
        let w = w / len;
        let score = (&nil_top * &w).norm();
        if best.as_ref().is_none_or(|(s, _)| score > *s * (1.0 + 1e-9) + 1e-15) {
            best = Some((score, w));
        }
    }
    let v = best.map(|(_, w)| w).unwrap_or_else(|| {
        let mut e = nalgebra::DVector::zeros(d);
        e[0] = 1.0;
        e
    });
    let w1 = &nil_top * &v;
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let push = |x: nalgebra::DVector<f64>, basis: &mut Vec<nalgebra::DVector<f64>>| {
        let mut y = x.clone();
        for b in basis.iter() {
            y -= b * b.dot(&x);
        }
        if y.norm() > 1e-10 * x.norm().max(1e-300) {
            basis.push(y.normalize());
        }
    };
    push(w1.clone(), &mut basis);
    if complex {
        push(a * &w1, &mut basis);
    }
    if basis.is_empty() {
        basis.push(v.clone());
    }
    (v.iter().copied().collect(), basis.iter().map(|b| b.iter().copied().collect()).collect())
}

fn normalization_power_of<T: Real>(inverse: &Mat<T>) -> Result<u32> {
    let half = lit::<T>(0.5) * (T::one() + lit(1e-12));
    let mut p = inverse.clone();
    for m in 1..=SCAN_WINDOW as u32 {
        if p.op_norm() <= half {
            return Ok(m);
        }
        p = p.matmul(inverse);
    }
    Err(Error::WindowExhausted(format!("no m ≤ {SCAN_WINDOW} with ||A^-m|| ≤ 1/2")))
}

impl<T: Real> DilationStructure<T> {
    /// `A^k` for any integer `k`.
    pub fn power(&self, k: i32) -> Mat<T> {
        if k >= 0 {
            self.matrix.powu(k as u32)
        } else {
            self.inverse.powu(k.unsigned_abs())
        }
    }

    /// Volume of `A^τ([0,1]^d)`, i.e. `a^τ`.
    pub fn volume(&self, tau: i32) -> T {
        self.det_scale.powi(tau)
    }

    /// `ρ(x, y) = exp(min{k : |A^{-k}(y − x)| ≤ 1})`, with `ρ(x, x) = 0`.
    pub fn quasi_metric(&self, x: &[T], y: &[T]) -> Result<T> {
        let diff: Vec<T> = y.iter().zip(x).map(|(&b, &a)| b - a).collect();
        if diff.iter().all(|v| *v == T::zero()) {
            return Ok(T::zero());
        }
        let mut pulled = self.power(SCAN_WINDOW).apply(&diff);
        // scan k upward from −window: membership |A^{-k} z| ≤ 1
        for k in -SCAN_WINDOW..=SCAN_WINDOW {
            if linalg::norm(&pulled) <= T::one() {
                if k == -SCAN_WINDOW {
                    return Err(Error::WindowExhausted("minimal k below scan window".into()));
                }
                return Ok(lit::<T>(k as f64).exp());
            }
            pulled = self.inverse.apply(&pulled);
        }
        Err(Error::WindowExhausted(format!("|y − x| beyond A^{SCAN_WINDOW} B_1")))
    }

    /// Exact diameter of `A^τ([0,1]^d)`: max over `u ∈ {−1,0,1}^d` of `|A^τ u|`.
    pub fn cube_diameter(&self, tau: i32) -> T {
        let p = self.power(tau);
        let d = self.dim;
        let mut best = T::zero();
        let mut u = vec![T::zero(); d];
        let mut out = vec![T::zero(); d];
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            for ui in u.iter_mut() {
                *ui = lit::<T>((c % 3) as f64 - 1.0);
                c /= 3;
            }
            p.mul_vec_into(&u, &mut out);
            best = best.max(linalg::norm(&out));
        }
        best
    }

    /// Least-squares exponent `p` in `log diam(τ) ≈ τ log r + p log|τ| + c`.
    pub fn fit_diameter_exponent(&self, taus: std::ops::RangeInclusive<i32>) -> Result<T> {
        let pts: Vec<i32> = taus.collect();
        if pts.len() < 10 || pts.iter().any(|&t| t >= 0) {
            return Err(Error::DegenerateFit(format!(
                "need ≥ 10 negative τ values, got {:?}",
                (pts.first(), pts.last(), pts.len())
            )));
        }
        let log_r = self.r_min.ln();
        let xs: Vec<T> = pts.iter().map(|&t| lit::<T>(t.unsigned_abs() as f64).ln()).collect();
        let ys: Vec<T> = pts
            .iter()
            .map(|&t| self.cube_diameter(t).ln() - lit::<T>(t as f64) * log_r)
            .collect();
        ols_slope(&xs, &ys).ok_or_else(|| Error::DegenerateFit("zero variance in log|τ|".into()))
    }

    /// `(v, W)` together with a numerical check that `A^τ v / |A^τ v|`
    /// approaches `W` at `τ = −40`.
    pub fn slowest_direction(&self) -> Result<(Vec<T>, Vec<Vec<T>>)> {
        let dist = self.slow_subspace_distance(-40);
        if !(dist < lit(0.05)) {
            return Err(Error::NumericalFailure(format!(
                "normalized A^-40 v is {dist} from W"
            )));
        }
        Ok((self.slow_vector.clone(), self.slow_subspace.clone()))
    }

    /// Distance from `A^τ v / |A^τ v|` to the subspace `W`.
    pub fn slow_subspace_distance(&self, tau: i32) -> T {
        let mut x = self.power(tau).apply(&self.slow_vector);
        let len = linalg::norm(&x);
        x.iter_mut().for_each(|v| *v = *v / len);
        let mut resid = x.clone();
        for w in &self.slow_subspace {
            let c = linalg::dot(&x, w);
            resid.iter_mut().zip(w).for_each(|(r, &wi)| *r = *r - c * wi);
        }
        linalg::norm(&resid)
    }

    pub fn normalization_power(&self) -> u32 {
        self.norm_power
    }

    /// True when `A^{-1} B_1 ⊂ B_{1/2}`.
    pub fn is_normalized(&self) -> bool {
        self.inverse.op_norm() <= lit::<T>(0.5) * (T::one() + lit(1e-12))
    }

    /// The structure of `A^m` with `m` the normalization power.
    pub fn normalized(&self) -> Result<DilationStructure<T>> {
        if self.norm_power == 1 {
            return Ok(self.clone());
        }
        validate_dilation(&self.matrix.powu(self.norm_power))
    }
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope<T: Real>(xs: &[T], ys: &[T]) -> Option<T> {
    let n = lit::<T>(xs.len() as f64);
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    if sxx <= T::epsilon() * n {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dil(rows: &[&[f64]]) -> DilationStructure<f64> {
        validate_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn spectral_data_of_fixtures() {
        let d = dil(&[&[2.0, 0.0], &[0.0, 4.0]]);
        assert_eq!((d.det_scale, d.r_min, d.block_size), (8.0, 2.0, 1));
        let j = dil(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!((j.det_scale - 4.0).abs() < 1e-12 && (j.r_min - 2.0).abs() < 1e-6);
        assert_eq!(j.block_size, 2);
    }

    #[test]
    fn rejects_non_expanding_and_non_square() {
        let e = validate_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap_err();
        assert!(matches!(e, Error::EigenvalueNotExpanding { .. }));
        let e = validate_rows(&[vec![2.0, 0.0, 1.0], vec![0.0, 2.0, 1.0]]).unwrap_err();
        assert!(matches!(e, Error::NonSquare { .. }));
    }

    #[test]
    fn rotation_block_counts_once() {
        // 2·R(θ) ⊕ 2·R(θ): a 4×4 real matrix with a complex pair of multiplicity 2
        // and no nilpotent part, plus a Jordan-coupled copy.
        let (c, s) = (2.0 * 0.3f64.cos(), 2.0 * 0.3f64.sin());
        let rot = dil(&[&[c, -s, 0.0, 0.0], &[s, c, 0.0, 0.0], &[0.0, 0.0, c, -s], &[0.0, 0.0, s, c]]);
        assert_eq!(rot.block_size, 1);
        assert_eq!(rot.slow_subspace.len(), 2);
        let coupled = dil(&[&[c, -s, 1.0, 0.0], &[s, c, 0.0, 1.0], &[0.0, 0.0, c, -s], &[0.0, 0.0, s, c]]);
        assert_eq!(coupled.block_size, 2);
        assert!(coupled.slowest_direction().is_ok());
    }

    #[test]
    fn quasi_metric_examples() {
        let d = dil(&[&[2.0, 0.0], &[0.0, 2.0]]);
        // oracle: scan k upward, first k with |2^{-k}(3,0)| ≤ 1
        let k = (-64..=64).find(|&k| 3.0 * 2f64.powi(-k) <= 1.0).unwrap();
        assert_eq!(k, 2);
        assert!((d.quasi_metric(&[0.0, 0.0], &[3.0, 0.0]).unwrap() - 2f64.exp()).abs() < 1e-12);
        assert_eq!(d.quasi_metric(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((d.quasi_metric(&[0.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(d.quasi_metric(&[0.0, 0.0], &[1e30, 0.0]), Err(Error::WindowExhausted(_))));
    }

    #[test]
    fn cube_diameter_examples() {
        let d = dil(&[&[2.0, 0.0], &[0.0, 4.0]]);
        assert!((d.cube_diameter(0) - 2f64.sqrt()).abs() < 1e-14);
        assert!((d.cube_diameter(-1) - 5f64.sqrt() / 4.0).abs() < 1e-14);
        let iso = dil(&[&[2.0, 0.0], &[0.0, 2.0]]);
        assert!((iso.cube_diameter(-3) - 2f64.sqrt() / 8.0).abs() < 1e-14);
        for t in -20..20 {
            assert!(d.cube_diameter(t + 1) > d.cube_diameter(t));
        }
    }

    #[test]
    fn diameter_exponent_fits() {
        let d = dil(&[&[2.0, 0.0], &[0.0, 4.0]]);
        assert!(d.fit_diameter_exponent(-40..=-10).unwrap().abs() < 0.2);
        let j = dil(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!((j.fit_diameter_exponent(-40..=-10).unwrap() - 1.0).abs() < 0.2);
        let iso3 = dil(&[&[2.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 2.0]]);
        assert!(iso3.fit_diameter_exponent(-40..=-10).unwrap().abs() < 0.2);
        assert!(matches!(d.fit_diameter_exponent(-5..=-1), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn slowest_direction_examples() {
        let d = dil(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let (v, w) = d.slowest_direction().unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-12 && w.len() == 1 && (w[0][0].abs() - 1.0).abs() < 1e-12);
        let iso = dil(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let (v, w) = iso.slowest_direction().unwrap();
        assert_eq!((v[0], v[1]), (1.0, 0.0));
        assert!((w[0][0].abs() - 1.0).abs() < 1e-12);
        let j = dil(&[&[2.0, 1.0], &[0.0, 2.0]]);
        let (_, w) = j.slowest_direction().unwrap();
        assert!((w[0][0].abs() - 1.0).abs() < 1e-9);
        // independent oracle: iterate A^{-1} on (0,1) and normalise
        let mut x = [0.0f64, 1.0];
        for _ in 0..40 {
            x = [0.5 * x[0] - 0.25 * x[1], 0.5 * x[1]];
            let l = (x[0] * x[0] + x[1] * x[1]).sqrt();
            x = [x[0] / l, x[1] / l];
        }
        assert!(x[1].abs() < 0.05 && (x[0].abs() - 1.0).abs() < 0.002);
    }

    #[test]
    fn normalization_power_examples() {
        assert_eq!(dil(&[&[2.0, 0.0], &[0.0, 4.0]]).norm_power, 1);
        assert_eq!(dil(&[&[2.0, 0.0], &[0.0, 2.0]]).norm_power, 1);
        // oracle: singular values of A^{-1}, A^{-2} by closed form 2×2 formula
        let sv_max = |m: [[f64; 2]; 2]| {
            let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
            let s1 = a * a + b * b + c * c + d * d;
            let det = a * d - b * c;
            ((s1 + (s1 * s1 - 4.0 * det * det).sqrt()) / 2.0).sqrt()
        };
        assert!(sv_max([[0.5, -0.25], [0.0, 0.5]]) > 0.5);
        assert!(sv_max([[0.25, -0.25], [0.0, 0.25]]) <= 0.5);
        let j = dil(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert_eq!(j.norm_power, 2);
        assert!(!j.is_normalized());
        assert!(j.normalized().unwrap().is_normalized());
    }

    #[test]
    fn volume_matches_determinant() {
        let d = dil(&[&[2.0, 1.0], &[0.0, 4.0]]);
        for t in -6..6 {
            let v = d.power(t).det().abs();
            assert!((v - d.volume(t)).abs() <= 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn generic_over_f32() {
        let d = validate_rows::<f32>(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(d.block_size, 1);
        assert!((d.cube_diameter(0) - 2f32.sqrt()).abs() < 1e-6);
    }
}
