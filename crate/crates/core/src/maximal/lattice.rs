//! Axis-aligned sample lattices, sampled fields, and FFT convolution of a
//! lattice field with a weighted point cloud.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{lit, Error, Real, Result};

/// Points `origin + i ⊙ spacing` for `0 ≤ i < shape`, axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice<T> {
    pub origin: Vec<T>,
    pub spacing: Vec<T>,
    pub shape: Vec<usize>,
}

impl<T: Real> Lattice<T> {
    pub fn new(origin: Vec<T>, spacing: Vec<T>, shape: Vec<usize>) -> Result<Self> {
        let d = origin.len();
        if spacing.len() != d || shape.len() != d || d == 0 {
            return Err(Error::InputInvalid("lattice origin/spacing/shape dimension mismatch".into()));
        }
        if spacing.iter().any(|&h| !(h > T::zero())) || shape.contains(&0) {
            return Err(Error::InputInvalid("lattice spacing must be positive and shape non-empty".into()));
        }
        Ok(Lattice { origin, spacing, shape })
    }

    /// `n` points per axis spanning `[lo, hi]` (endpoints included).
    pub fn spanning(lo: &[T], hi: &[T], n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InputInvalid("need at least two points per axis".into()));
        }
        let spacing = lo.iter().zip(hi).map(|(&l, &h)| (h - l) / lit((n - 1) as f64)).collect();
        Self::new(lo.to_vec(), spacing, vec![n; lo.len()])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        self.spacing.iter().copied().fold(T::one(), |a, b| a * b)
    }

    pub fn min_spacing(&self) -> T {
        self.spacing.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn upper(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.origin[i] + self.spacing[i] * lit((self.shape[i] - 1) as f64)).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; d];
        for k in (0..d).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    pub fn point_into(&self, flat: usize, out: &mut [T]) {
        let mut f = flat;
        for k in (0..self.dim()).rev() {
            let i = f % self.shape[k];
            f /= self.shape[k];
            out[k] = self.origin[k] + self.spacing[k] * lit(i as f64);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<T> {
        let mut p = vec![T::zero(); self.dim()];
        self.point_into(flat, &mut p);
        p
    }

    /// The image of the lattice under a diagonal linear map.
    pub fn scaled(&self, factors: &[T]) -> Self {
        Lattice {
            origin: self.origin.iter().zip(factors).map(|(&o, &f)| o * f).collect(),
            spacing: self.spacing.iter().zip(factors).map(|(&h, &f)| h * f.abs()).collect(),
            shape: self.shape.clone(),
        }
    }
}

/// Values on a lattice with a free-form provenance tag.
#[derive(Clone, Debug, Serialize)]
pub struct SampledField<T> {
    pub lattice: Lattice<T>,
    pub values: Vec<T>,
    pub provenance: String,
}

impl<T: Real> SampledField<T> {
    pub fn sample(lattice: &Lattice<T>, provenance: impl Into<String>, f: impl Fn(&[T]) -> T + Sync) -> Self {
        let d = lattice.dim();
        let values = (0..lattice.len())
            .into_par_iter()
            .map_init(|| vec![T::zero(); d], |p, i| {
                lattice.point_into(i, p);
                f(p)
            })
            .collect();
        SampledField { lattice: lattice.clone(), values, provenance: provenance.into() }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `Σ v · cell volume`.
    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.lattice.cell_volume()
    }

    pub fn l1_norm(&self) -> T {
        self.values.iter().map(|v| v.abs()).sum::<T>() * self.lattice.cell_volume()
    }

    /// Flat binary export: `u64` dimension, `u64` shape per axis, `f64`
    /// spacing per axis, `f64` origin per axis, then row-major `f64` values,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.lattice.dim();
        w.write_all(&(d as u64).to_le_bytes())?;
        for &n in &self.lattice.shape {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for &h in &self.lattice.spacing {
            w.write_all(&h.to_f64_lossy().to_le_bytes())?;
        }
        for &o in &self.lattice.origin {
            w.write_all(&o.to_f64_lossy().to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut u = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let d = next_u64(&mut r)? as usize;
        if d == 0 || d > crate::MAX_DIM {
            return Err(Error::InputInvalid(format!("field dimension {d} out of range")));
        }
        let shape: Vec<usize> = (0..d).map(|_| next_u64(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let read_f64s = |r: &mut R, n: usize| -> Result<Vec<T>> {
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes.chunks_exact(8).map(|c| lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect())
        };
        let spacing = read_f64s(&mut r, d)?;
        let origin = read_f64s(&mut r, d)?;
        let lattice = Lattice::new(origin, spacing, shape)?;
        let values = read_f64s(&mut r, lattice.len())?;
        Ok(SampledField { lattice, values, provenance: String::from("binary import") })
    }

    /// CSV with one row per lattice point: coordinates then value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.lattice.dim();
        let header: Vec<String> = (0..d).map(|i| format!("x{i}")).chain(std::iter::once("value".to_string())).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut p = vec![T::zero(); d];
        for (i, v) in self.values.iter().enumerate() {
            self.lattice.point_into(i, &mut p);
            let cols: Vec<String> = p.iter().map(|c| format!("{:.9e}", c.to_f64_lossy())).collect();
            writeln!(w, "{},{:.9e}", cols.join(","), v.to_f64_lossy())?;
        }
        Ok(())
    }
}

/// In-place n-dimensional FFT over a row-major array.
struct FftNd<T: Real> {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> FftNd<T> {
    fn new(shape: Vec<usize>) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        FftNd { shape, forward, inverse }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn run(&self, data: &mut [Complex<T>], inverse: bool) {
        let d = self.shape.len();
        let plans = if inverse { &self.inverse } else { &self.forward };
        for axis in 0..d {
            let n = self.shape[axis];
            let inner: usize = self.shape[axis + 1..].iter().product();
            let outer: usize = self.shape[..axis].iter().product();
            let plan = &plans[axis];
            if inner == 1 {
                data.par_chunks_mut(n).for_each(|line| plan.process(line));
                continue;
            }
            // gather lines of this axis block by block; each outer block is independent
            data.par_chunks_mut(n * inner).for_each(|block| {
                let mut line = vec![Complex::new(T::zero(), T::zero()); n];
                for j in 0..inner {
                    for i in 0..n {
                        line[i] = block[i * inner + j];
                    }
                    plan.process(&mut line);
                    for i in 0..n {
                        block[i * inner + j] = line[i];
                    }
                }
            });
            debug_assert_eq!(data.len(), outer * n * inner);
        }
        if inverse {
            let scale = T::one() / lit(self.len() as f64);
            data.par_iter_mut().for_each(|c| *c = *c * scale);
        }
    }
}

/// Linear convolution of a fixed lattice field with point clouds:
/// `g(x_i) = Σ_j w_j f(x_i − p_j)`, with `f` taken as zero off the lattice and
/// each `p_j` spread onto neighbouring lattice offsets by multilinear
/// (cloud-in-cell) weights.
pub struct Convolver<T: Real> {
    lattice: Lattice<T>,
    padded: Vec<usize>,
    fft: FftNd<T>,
    f_hat: Vec<Complex<T>>,
}

impl<T: Real> Convolver<T> {
    pub fn new(field: &SampledField<T>) -> Self {
        let lattice = field.lattice.clone();
        let padded: Vec<usize> = lattice.shape.iter().map(|&n| 2 * n).collect();
        let fft = FftNd::new(padded.clone());
        let mut buf = vec![Complex::new(T::zero(), T::zero()); fft.len()];
        for (i, &v) in field.values.iter().enumerate() {
            buf[padded_index(&lattice.multi_index(i), &padded)] = Complex::new(v, T::zero());
        }
        fft.run(&mut buf, false);
        Convolver { lattice, padded, fft, f_hat: buf }
    }

    pub fn lattice(&self) -> &Lattice<T> {
        &self.lattice
    }

    /// Offsets `p_j` (ambient units) with weights `w_j`. Offsets at or beyond
    /// the lattice extent cannot reach any output point and are dropped.
    pub fn convolve(&self, offsets: &[Vec<T>], weights: &[T]) -> Vec<T> {
        let d = self.lattice.dim();
        let mut kernel = vec![Complex::new(T::zero(), T::zero()); self.fft.len()];
        let n: Vec<i64> = self.lattice.shape.iter().map(|&s| s as i64).collect();
        let corners = 1usize << d;
        let mut base = [0i64; crate::MAX_DIM];
        let mut frac = [T::zero(); crate::MAX_DIM];
        'points: for (p, &w) in offsets.iter().zip(weights) {
            for k in 0..d {
                let u = p[k] / self.lattice.spacing[k];
                let f = u.floor();
                let Some(b) = f.to_i64() else { continue 'points };
                if b < -n[k] || b >= n[k] {
                    continue 'points;
                }
                base[k] = b;
                frac[k] = u - f;
            }
            for c in 0..corners {
                let mut weight = w;
                let mut flat = 0usize;
                let mut skip = false;
                for k in 0..d {
                    let hi = (c >> k) & 1 == 1;
                    let m = base[k] + hi as i64;
                    if m <= -n[k] || m >= n[k] {
                        skip = true;
                        break;
                    }
                    weight = weight * if hi { frac[k] } else { T::one() - frac[k] };
                    let wrapped = m.rem_euclid(self.padded[k] as i64) as usize;
                    flat = flat * self.padded[k] + wrapped;
                }
                if !skip {
                    kernel[flat].re = kernel[flat].re + weight;
                }
            }
        }
        self.fft.run(&mut kernel, false);
        kernel.par_iter_mut().zip(self.f_hat.par_iter()).for_each(|(k, f)| *k = *k * *f);
        self.fft.run(&mut kernel, true);
        (0..self.lattice.len()).map(|i| kernel[padded_index(&self.lattice.multi_index(i), &self.padded)].re).collect()
    }
}

fn padded_index(idx: &[usize], padded: &[usize]) -> usize {
    idx.iter().zip(padded).fold(0, |acc, (&i, &n)| acc * n + i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_points_and_indices() {
        let l = Lattice::new(vec![0.0, 1.0], vec![0.5, 0.25], vec![3, 4]).unwrap();
        assert_eq!(l.len(), 12);
        assert_eq!(l.point(0), vec![0.0, 1.0]);
        assert_eq!(l.point(5), vec![0.5, 1.25]);
        assert_eq!(l.multi_index(11), vec![2, 3]);
        assert_eq!(l.upper(), vec![1.0, 1.75]);
        assert!(Lattice::new(vec![0.0], vec![0.0], vec![3]).is_err());
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let l = Lattice::<f64>::new(vec![-1.0, -1.0], vec![0.1, 0.1], vec![21, 21]).unwrap();
        let f = SampledField::sample(&l, "test", |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp());
        let conv = Convolver::new(&f);
        // offsets on lattice nodes make the cloud-in-cell spread exact
        let offs = vec![vec![0.3, -0.2], vec![-0.5, 0.1], vec![0.0, 0.0]];
        let w = vec![1.0, 0.5, -2.0];
        let g = conv.convolve(&offs, &w);
        for i in 0..l.len() {
            let x = l.point(i);
            let direct: f64 = offs
                .iter()
                .zip(&w)
                .map(|(p, &wi)| {
                    let y = [x[0] - p[0], x[1] - p[1]];
                    let inside = y.iter().all(|&v| (-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
                    if inside { wi * (-(y[0] * y[0] + 2.0 * y[1] * y[1])).exp() } else { 0.0 }
                })
                .sum();
            assert!((g[i] - direct).abs() < 1e-10, "{x:?}: {} vs {direct}", g[i]);
        }
    }

    #[test]
    fn binary_round_trip() {
        let l = Lattice::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.25, 1.0], vec![2, 3, 2]).unwrap();
        let f = SampledField::sample(&l, "t", |x| x[0] + 10.0 * x[1] - x[2]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 3 * 8 * 3 + 12 * 8);
        let g = SampledField::<f64>::read_binary(&buf[..]).unwrap();
        assert_eq!(g.lattice, l);
        assert_eq!(g.values, f.values);
    }
}
