//! Small dense matrices (d ≤ 4) over a generic scalar.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use serde::{Deserialize, Serialize};

use crate::{lit, Real};

/// Square matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<T>> = (0..self.n).map(|i| self.row(i).to_vec()).collect();
        write!(f, "Mat{:?}", rows)
    }
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn scalar(n: usize, s: T) -> Self {
        Self::identity(n).scale(s)
    }

    /// Builds a matrix from rows; `None` when the rows do not form a square.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Mat { n, data: rows.iter().flatten().copied().collect() })
    }

    pub fn from_row_major(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n);
        Mat { n, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Self {
        let n = cols.len();
        let mut m = Self::zeros(n);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                m[(i, j)] = c[i];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.to_f64_lossy()).collect())
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat { n: self.n, data: self.data.iter().map(|v| lit::<U>(v.to_f64_lossy())).collect() }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: T) -> Self {
        Mat { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Mat { n: self.n, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Mat { n: self.n, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect() }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `out = self * x`.
    #[inline]
    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = T::zero();
            for j in 0..n {
                acc = acc + row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> T {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = T::one();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[i * n + c].abs().partial_cmp(&a[j * n + c].abs()).unwrap())
                .unwrap();
            if a[p * n + c] == T::zero() {
                return T::zero();
            }
            if p != c {
                for j in 0..n {
                    a.swap(p * n + j, c * n + j);
                }
                det = -det;
            }
            let piv = a[c * n + c];
            det = det * piv;
            for i in c + 1..n {
                let f = a[i * n + c] / piv;
                for j in c..n {
                    a[i * n + j] = a[i * n + j] - f * a[c * n + j];
                }
            }
        }
        det
    }

    /// Inverse by Gauss–Jordan elimination; `None` for singular input.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = Self::identity(n).data;
        let scale = self.max_abs();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[i * n + c].abs().partial_cmp(&a[j * n + c].abs()).unwrap())
                .unwrap();
            if a[p * n + c].abs() <= scale * T::epsilon() * lit(16.0) {
                return None;
            }
            if p != c {
                for j in 0..n {
                    a.swap(p * n + j, c * n + j);
                    inv.swap(p * n + j, c * n + j);
                }
            }
            let piv = a[c * n + c];
            for j in 0..n {
                a[c * n + j] = a[c * n + j] / piv;
                inv[c * n + j] = inv[c * n + j] / piv;
            }
            for i in 0..n {
                if i == c {
                    continue;
                }
                let f = a[i * n + c];
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    a[i * n + j] = a[i * n + j] - f * a[c * n + j];
                    inv[i * n + j] = inv[i * n + j] - f * inv[c * n + j];
                }
            }
        }
        Some(Mat { n, data: inv })
    }

    /// Non-negative integer power by repeated squaring.
    pub fn powu(&self, mut e: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::identity(self.n);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.matmul(&base);
            }
            base = base.matmul(&base);
            e >>= 1;
        }
        acc
    }

    /// Solves `self * x = b`; `None` when singular.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        self.inverse().map(|inv| inv.apply(b))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.
    /// Returns eigenvalues (descending) and the matching eigenvectors as columns.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Mat<T>) {
        let n = self.n;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        let tol = T::epsilon() * lit(4.0);
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..n {
                for j in i + 1..n {
                    off = off + a[(i, j)] * a[(i, j)];
                }
            }
            if off.sqrt() <= tol * a.frobenius().max(T::min_positive_value()) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (lit::<T>(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
        let vals = order.iter().map(|&i| a[(i, i)]).collect();
        let vecs = Mat::from_columns(&order.iter().map(|&i| v.column(i)).collect::<Vec<_>>());
        (vals, vecs)
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Vec<T> {
        let (vals, _) = self.transpose().matmul(self).symmetric_eigen();
        vals.into_iter().map(|v| v.max(T::zero()).sqrt()).collect()
    }

    /// Spectral (ℓ² operator) norm.
    pub fn op_norm(&self) -> T {
        self.singular_values()[0]
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline(always)]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline(always)]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Vector orthogonal to the `d − 1` given vectors in R^d (cofactor expansion).
/// Zero when they are linearly dependent.
pub fn generalized_cross<T: Real>(vs: &[&[T]]) -> Vec<T> {
    let d = vs.len() + 1;
    let mut out = vec![T::zero(); d];
    for (k, o) in out.iter_mut().enumerate() {
        // minor with column k removed
        let cols: Vec<usize> = (0..d).filter(|&c| c != k).collect();
        let rows: Vec<Vec<T>> = vs.iter().map(|v| cols.iter().map(|&c| v[c]).collect()).collect();
        let minor = if d == 1 {
            T::one()
        } else {
            Mat::from_rows(&rows).unwrap().det()
        };
        let sign = if (k + d - 1).is_multiple_of(2) { T::one() } else { -T::one() };
        *o = sign * minor;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_det() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(a.det(), 4.0);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        assert!((id[(0, 0)] - 1.0f64).abs() < 1e-15 && id[(0, 1)].abs() < 1e-15);
        assert!(Mat::<f64>::zeros(2).inverse().is_none());
    }

    #[test]
    fn op_norm_of_jordan_inverse() {
        let a = Mat::from_rows(&[vec![0.5, -0.25], vec![0.0, 0.5]]).unwrap();
        // σ_max² = largest eigenvalue of [[.25,-.125],[-.125,.3125]]
        let expect = ((0.5625 + (0.5625f64 * 0.5625 - 4.0 * 0.0625).sqrt()) / 2.0).sqrt();
        assert!((a.op_norm() - expect).abs() < 1e-12);
    }

    #[test]
    fn cross_is_orthogonal() {
        let u = [1.0, 2.0, 3.0];
        let v = [-1.0, 0.5, 2.0];
        let n = generalized_cross::<f64>(&[&u, &v]);
        assert!(dot(&n, &u).abs() < 1e-12 && dot(&n, &v).abs() < 1e-12);
        let n2 = generalized_cross::<f64>(&[&[1.0, 0.0]]);
        assert!(dot(&n2, &[1.0, 0.0]).abs() < 1e-15 && norm(&n2) > 0.5);
    }

    #[test]
    fn f32_works() {
        let a: Mat<f32> = Mat::diag(&[2.0, 4.0]);
        assert_eq!(a.powu(3)[(1, 1)], 64.0);
    }
}
