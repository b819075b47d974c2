//! H¹_A atoms supported on cubes of `R_{0,τ}` and finite atomic sums.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dilation::DilationStructure;
use crate::geometry::Parallelepiped;
use crate::grid::{self, GridCube};
use crate::rng;
use crate::{lit, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// `+1` on the lower half of the parameter cube along an axis, `−1` on the upper half.
    HaarSplit,
    /// Product of smooth bumps, with the bump along one axis replaced by a
    /// bump on the lower half minus its mirror on the upper half.
    TensorBump,
}

/// A profile together with the split axis. `axis: None` lets the seed pick it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub kind: ProfileKind,
    #[serde(default)]
    pub axis: Option<usize>,
}

impl Profile {
    pub fn haar(axis: usize) -> Self {
        Profile { kind: ProfileKind::HaarSplit, axis: Some(axis) }
    }

    pub fn bump(axis: usize) -> Self {
        Profile { kind: ProfileKind::TensorBump, axis: Some(axis) }
    }
}

/// `exp(1 − 1/(1 − (2t−1)²))` on `(0,1)`, zero elsewhere; peak 1 at `t = ½`.
fn unit_bump<T: Real>(t: T) -> T {
    let s = lit::<T>(2.0) * t - T::one();
    let q = T::one() - s * s;
    if q <= T::zero() {
        T::zero()
    } else {
        (T::one() - T::one() / q).exp()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Atom<T: Real> {
    pub support: GridCube,
    pub kind: ProfileKind,
    pub axis: usize,
    /// `|Q|^{-1} = a^{-τ}`, the sup norm.
    pub amplitude: T,
    /// Realization of the support cube.
    pub cube: Parallelepiped<T>,
}

impl<T: Real> Atom<T> {
    /// Profile value at parameter coordinates `u ∈ [0,1)^d`, before scaling.
    pub fn profile_at(&self, u: &[T]) -> T {
        if u.iter().any(|&v| v < T::zero() || v >= T::one()) {
            return T::zero();
        }
        let half = lit::<T>(0.5);
        match self.kind {
            ProfileKind::HaarSplit => {
                if u[self.axis] < half {
                    T::one()
                } else {
                    -T::one()
                }
            }
            ProfileKind::TensorBump => {
                let mut v = T::one();
                for (i, &ui) in u.iter().enumerate() {
                    if i == self.axis {
                        let two = lit::<T>(2.0);
                        v = v * if ui < half { unit_bump(two * ui) } else { -unit_bump(two * ui - T::one()) };
                    } else {
                        v = v * unit_bump(ui);
                    }
                }
                v
            }
        }
    }

    pub fn eval(&self, x: &[T]) -> T {
        let mut u = [T::zero(); crate::MAX_DIM];
        let d = x.len();
        self.cube.local_coords_into(x, &mut u[..d]);
        self.amplitude * self.profile_at(&u[..d])
    }

    /// `|Q| ∫_{[0,1]^d} profile · amplitude`, midpoint rule with `n` cells per
    /// axis (`n` even, so both halves are sampled symmetrically).
    pub fn integral(&self, n: usize) -> T {
        self.quadrature(n, |v| v)
    }

    pub fn l1_norm(&self, n: usize) -> T {
        self.quadrature(n, |v| v.abs())
    }

    fn quadrature(&self, n: usize, g: impl Fn(T) -> T) -> T {
        let n = n + n % 2;
        let d = self.support.dim();
        let h = T::one() / lit::<T>(n as f64);
        let mut u = vec![T::zero(); d];
        let mut idx = vec![0usize; d];
        let mut total = T::zero();
        let cells = n.pow(d as u32);
        for _ in 0..cells {
            for i in 0..d {
                u[i] = (lit::<T>(idx[i] as f64) + lit(0.5)) * h;
            }
            total = total + g(self.profile_at(&u));
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        total * h.powi(d as i32) * self.amplitude * self.cube.volume()
    }
}

/// Atom on `q` (which must lie in `R_0`, i.e. σ = 0).
pub fn make_atom<T: Real>(dil: &DilationStructure<T>, q: &GridCube, profile: Profile, seed: u64) -> Result<Atom<T>> {
    if q.sigma != 0 {
        return Err(Error::InputInvalid(format!("atoms live on R_0 cubes, got σ = {}", q.sigma)));
    }
    if q.dim() != dil.dim {
        return Err(Error::InputInvalid("cube dimension does not match dilation".into()));
    }
    let axis = match profile.axis {
        Some(a) if a < dil.dim => a,
        Some(a) => return Err(Error::InputInvalid(format!("split axis {a} out of range"))),
        None => rng::seeded(seed).gen_range(0..dil.dim),
    };
    let cube = grid::realize(dil, q);
    let amplitude = T::one() / dil.volume(q.tau);
    Ok(Atom { support: q.clone(), kind: profile.kind, axis, amplitude, cube })
}

/// `Σ λ_Q a_Q` with `λ_Q > 0`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct AtomicSum<T: Real> {
    pub terms: Vec<(Atom<T>, T)>,
}

impl<T: Real> AtomicSum<T> {
    pub fn new() -> Self {
        AtomicSum { terms: Vec::new() }
    }

    pub fn push(&mut self, atom: Atom<T>, lambda: T) -> Result<()> {
        if !(lambda > T::zero()) {
            return Err(Error::InputInvalid(format!("coefficients must be positive, got {lambda}")));
        }
        self.terms.push((atom, lambda));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms.iter().map(|(a, l)| *l * a.eval(x)).sum()
    }

    pub fn scaled(&self, c: T) -> Self {
        AtomicSum { terms: self.terms.iter().map(|(a, l)| (a.clone(), *l * c)).collect() }
    }

    /// `(Q, λ_Q)` pairs, the input of the decompositions.
    pub fn cubes(&self) -> Vec<(GridCube, T)> {
        self.terms.iter().map(|(a, l)| (a.support.clone(), *l)).collect()
    }
}

/// `‖f‖_{H¹_A} = Σ λ_Q`.
pub fn h1_norm<T: Real>(f: &AtomicSum<T>) -> T {
    f.terms.iter().map(|(_, l)| *l).sum()
}

pub fn eval_atomic_sum<T: Real>(f: &AtomicSum<T>, x: &[T]) -> T {
    f.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::validate_rows;

    fn diag24() -> DilationStructure<f64> {
        validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap()
    }

    #[test]
    fn haar_on_unit_cube() {
        let d = diag24();
        let a = make_atom(&d, &GridCube::new(0, 0, vec![0, 0]), Profile::haar(0), 0).unwrap();
        assert_eq!(a.eval(&[0.25, 0.25]), 1.0);
        assert_eq!(a.eval(&[0.75, 0.25]), -1.0);
        assert_eq!(a.eval(&[1.25, 0.25]), 0.0);
    }

    #[test]
    fn amplitude_is_inverse_volume() {
        let d = diag24();
        let a = make_atom(&d, &GridCube::new(0, -2, vec![0, 0]), Profile::bump(1), 0).unwrap();
        assert!((a.amplitude - 64.0f64).abs() < 1e-9);
        assert!(make_atom(&d, &GridCube::new(-1, 0, vec![0, 0]), Profile::haar(0), 0).is_err());
    }

    #[test]
    fn atoms_have_mean_zero_and_unit_l1_bound() {
        let d = diag24();
        for kind in [ProfileKind::HaarSplit, ProfileKind::TensorBump] {
            for seed in 0..4 {
                let q = GridCube::new(0, seed as i32 - 2, vec![seed, -1]);
                let a = make_atom(&d, &q, Profile { kind, axis: None }, seed as u64).unwrap();
                let l1 = a.l1_norm(64);
                assert!(a.integral(64).abs() <= 1e-8 * l1);
                assert!(l1 <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn sums_and_norms() {
        let d = diag24();
        let mut f = AtomicSum::new();
        assert_eq!(h1_norm(&f), 0.0);
        let a = make_atom(&d, &GridCube::new(0, 0, vec![0, 0]), Profile::haar(0), 0).unwrap();
        let b = make_atom(&d, &GridCube::new(0, -1, vec![0, 0]), Profile::haar(1), 0).unwrap();
        f.push(a.clone(), 1.0).unwrap();
        f.push(b.clone(), 2.0).unwrap();
        f.push(a.clone(), 3.0).unwrap();
        assert_eq!(h1_norm(&f), 6.0);
        assert_eq!(h1_norm(&f.scaled(2.0)), 12.0);
        let x = [0.1, 0.05];
        assert_eq!(eval_atomic_sum(&f, &x), 1.0 * a.eval(&x) + 2.0 * b.eval(&x) + 3.0 * a.eval(&x));
        assert_eq!(f.eval(&[5.0, 5.0]), 0.0);
        assert!(f.push(a, 0.0).is_err());
    }

    #[test]
    fn pushforward_is_atom_on_dilated_cube() {
        let d = diag24();
        let q = GridCube::new(0, -1, vec![1, 2]);
        let aq = GridCube::new(0, 0, vec![1, 2]);
        for p in [Profile::haar(0), Profile::bump(1)] {
            let a = make_atom(&d, &q, p, 0).unwrap();
            let b = make_atom(&d, &aq, p, 0).unwrap();
            for x in [[0.6, 0.55], [0.9, 0.7], [0.7, 0.74]] {
                let ax = d.matrix.apply(&x);
                assert!((b.eval(&ax) - a.eval(&x) / 8.0).abs() < 1e-12);
            }
        }
    }
}
