//! Graph hypersurfaces carrying a smooth density, their curvature, and the
//! partition of the measure into caps of scale `2^{-εs}`.
//!
//! The measure is `⟨μ, f⟩ = ∫ χ(y) f(γ(y)) dy` over parameters
//! `y ∈ [−R, R]^{d−1}`, where `γ` places `ψ(y)` on the height axis and `y` on
//! the remaining axes in increasing order.

mod classify;
mod kernel;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::decomposition::MeasureSupport;
use crate::linalg::Mat;
use crate::rng::Rng;
use crate::{lit, Error, Real, Result};

pub use classify::{classify_pieces, fit_growth, mercury_check, mercury_row, ClassifyParams, MercuryReport, MercuryRow};
pub use kernel::{
    autocorrelation_kernel, cap_inner_product, check_kernel_decay, check_linfty_bound, check_pair_bound, field_of_atoms, DecayReport, LinftyReport, ScaleParams,
    PairReport,
};

/// Largest number of caps produced by one partition.
pub const PIECE_BUDGET: usize = 1_000_000;

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss–Legendre rule on `[a, b]` with `panels` panels.
pub fn gauss_legendre<T: Real>(a: T, b: T, panels: usize) -> Vec<(T, T)> {
    let panels = panels.max(1);
    let w = (b - a) / lit(panels as f64);
    let mut out = Vec::with_capacity(8 * panels);
    for p in 0..panels {
        let lo = a + w * lit(p as f64);
        let mid = lo + w / lit(2.0);
        for (x, g) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            out.push((mid + w / lit(2.0) * lit(*x), w / lit(2.0) * lit(g)));
        }
    }
    out
}

/// Tensor product of a one-dimensional rule over a box.
fn tensor_rule<T: Real>(lo: &[T], hi: &[T], panels: usize) -> Vec<(Vec<T>, T)> {
    let axes: Vec<Vec<(T, T)>> = lo.iter().zip(hi).map(|(&a, &b)| gauss_legendre(a, b, panels)).collect();
    let mut out = vec![(Vec::new(), T::one())];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for (p, w) in &out {
            for &(x, wx) in axis {
                let mut q = p.clone();
                q.push(x);
                next.push((q, *w * wx));
            }
        }
        out = next;
    }
    out
}

/// `exp(1 − 1/(1 − t²))` on `(−1, 1)`, zero elsewhere.
pub fn bump<T: Real>(t: T) -> T {
    let q = T::one() - t * t;
    if q <= T::zero() {
        T::zero()
    } else {
        (T::one() - T::one() / q).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogId {
    /// `1 − √(1 − |y|²)`, a piece of the unit sphere.
    CircleArc,
    /// `|y|²/2`.
    Paraboloid,
    /// `Σ y_i⁴`, curvature vanishing to finite order at 0.
    QuarticFlat,
    /// `Σ c_m y^m` with total degree ≤ 6.
    CustomPolynomial,
}

impl std::str::FromStr for CatalogId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle-arc" => Ok(CatalogId::CircleArc),
            "paraboloid" => Ok(CatalogId::Paraboloid),
            "quartic-flat" => Ok(CatalogId::QuarticFlat),
            "custom-polynomial" => Ok(CatalogId::CustomPolynomial),
            other => Err(Error::InputInvalid(format!("unknown surface `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial<T> {
    pub coeff: T,
    pub powers: Vec<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphSurface<T: Real> {
    pub catalog_id: CatalogId,
    pub dim: usize,
    /// Ambient axis carrying `ψ(y)`.
    pub height_axis: usize,
    /// `χ(y) = Π bump(y_i / R)`.
    pub chi_radius: T,
    pub poly: Vec<Monomial<T>>,
    /// `√(1 + max|∇ψ|²)` over the parameter box, the Lipschitz constant of `γ`.
    pub lipschitz: T,
}

impl<T: Real> GraphSurface<T> {
    pub fn new(catalog_id: CatalogId, dim: usize, height_axis: usize, chi_radius: T, poly: Vec<Monomial<T>>) -> Result<Self> {
        if !(2..=crate::MAX_DIM).contains(&dim) {
            return Err(Error::InputInvalid(format!("surface dimension {dim} out of range")));
        }
        if height_axis >= dim {
            return Err(Error::InputInvalid(format!("height axis {height_axis} out of range")));
        }
        if !(chi_radius > T::zero() && chi_radius <= T::one()) {
            return Err(Error::InputInvalid(format!("cutoff radius {chi_radius} must lie in (0, 1]")));
        }
        if catalog_id == CatalogId::CircleArc && chi_radius * lit::<T>((dim - 1) as f64).sqrt() >= T::one() {
            return Err(Error::InputInvalid("circle arc parameter box must stay inside the unit disc".into()));
        }
        if catalog_id == CatalogId::CustomPolynomial {
            for m in &poly {
                if m.powers.len() != dim - 1 {
                    return Err(Error::InputInvalid("monomial arity must be d − 1".into()));
                }
                if m.powers.iter().sum::<u32>() > 6 {
                    return Err(Error::InputInvalid("custom polynomials are limited to degree 6".into()));
                }
            }
        }
        let mut s = GraphSurface { catalog_id, dim, height_axis, chi_radius, poly, lipschitz: T::one() };
        let mut max_grad = T::zero();
        let mut max_norm = T::zero();
        let mut g = vec![T::zero(); dim - 1];
        for y in s.parameter_grid(if dim == 2 { 401 } else { 41 }) {
            s.grad_into(&y, &mut g);
            max_grad = max_grad.max(g.iter().map(|&v| v * v).sum::<T>());
            max_norm = max_norm.max(crate::linalg::norm(&s.embed(&y)));
        }
        if max_norm > T::one() + lit(1e-12) {
            return Err(Error::InputInvalid(format!("surface leaves the unit ball (|x| up to {max_norm})")));
        }
        // small margin for the sampled maximum
        s.lipschitz = (T::one() + max_grad).sqrt() * lit(1.01);
        Ok(s)
    }

    pub fn circle_arc(dim: usize, height_axis: usize, chi_radius: T) -> Result<Self> {
        Self::new(CatalogId::CircleArc, dim, height_axis, chi_radius, Vec::new())
    }

    pub fn paraboloid(dim: usize, height_axis: usize, chi_radius: T) -> Result<Self> {
        Self::new(CatalogId::Paraboloid, dim, height_axis, chi_radius, Vec::new())
    }

    pub fn quartic_flat(dim: usize, height_axis: usize, chi_radius: T) -> Result<Self> {
        Self::new(CatalogId::QuarticFlat, dim, height_axis, chi_radius, Vec::new())
    }

    pub fn param_dim(&self) -> usize {
        self.dim - 1
    }

    /// `n` points per axis over the closed parameter box.
    fn parameter_grid(&self, n: usize) -> Vec<Vec<T>> {
        let k = self.param_dim();
        let r = self.chi_radius;
        let step = lit::<T>(2.0) * r / lit((n - 1) as f64);
        let total = n.pow(k as u32);
        (0..total)
            .map(|mut c| {
                (0..k)
                    .map(|_| {
                        let i = c % n;
                        c /= n;
                        -r + step * lit(i as f64)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn psi(&self, y: &[T]) -> T {
        let r2: T = y.iter().map(|&v| v * v).sum();
        match self.catalog_id {
            CatalogId::CircleArc => T::one() - (T::one() - r2).sqrt(),
            CatalogId::Paraboloid => r2 / lit(2.0),
            CatalogId::QuarticFlat => y.iter().map(|&v| v.powi(4)).sum(),
            CatalogId::CustomPolynomial => self.poly.iter().map(|m| m.coeff * monomial(y, &m.powers, None)).sum(),
        }
    }

    pub fn grad_into(&self, y: &[T], out: &mut [T]) {
        match self.catalog_id {
            CatalogId::CircleArc => {
                let w = (T::one() - y.iter().map(|&v| v * v).sum::<T>()).sqrt();
                for (o, &v) in out.iter_mut().zip(y) {
                    *o = v / w;
                }
            }
            CatalogId::Paraboloid => out.copy_from_slice(y),
            CatalogId::QuarticFlat => {
                for (o, &v) in out.iter_mut().zip(y) {
                    *o = lit::<T>(4.0) * v.powi(3);
                }
            }
            CatalogId::CustomPolynomial => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.poly.iter().map(|m| m.coeff * monomial(y, &m.powers, Some(&[i]))).sum();
                }
            }
        }
    }

    pub fn grad(&self, y: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); y.len()];
        self.grad_into(y, &mut g);
        g
    }

    pub fn hessian(&self, y: &[T]) -> Mat<T> {
        let k = y.len();
        let mut h = Mat::zeros(k);
        match self.catalog_id {
            CatalogId::CircleArc => {
                let w2 = T::one() - y.iter().map(|&v| v * v).sum::<T>();
                let w = w2.sqrt();
                for i in 0..k {
                    for j in 0..k {
                        let delta = if i == j { T::one() / w } else { T::zero() };
                        h[(i, j)] = delta + y[i] * y[j] / (w2 * w);
                    }
                }
            }
            CatalogId::Paraboloid => h = Mat::identity(k),
            CatalogId::QuarticFlat => {
                for i in 0..k {
                    h[(i, i)] = lit::<T>(12.0) * y[i] * y[i];
                }
            }
            CatalogId::CustomPolynomial => {
                for i in 0..k {
                    for j in 0..k {
                        h[(i, j)] = self.poly.iter().map(|m| m.coeff * monomial(y, &m.powers, Some(&[i, j]))).sum();
                    }
                }
            }
        }
        h
    }

    /// `γ(y)`: `ψ(y)` on the height axis, `y` on the others.
    pub fn embed_into(&self, y: &[T], out: &mut [T]) {
        let mut k = 0;
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            if i == self.height_axis {
                *o = self.psi(y);
            } else {
                *o = y[k];
                k += 1;
            }
        }
    }

    pub fn embed(&self, y: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim];
        self.embed_into(y, &mut x);
        x
    }

    /// `∂γ/∂y_i`.
    pub fn tangent(&self, y: &[T], i: usize) -> Vec<T> {
        let g = self.grad(y);
        let mut t = vec![T::zero(); self.dim];
        let mut k = 0;
        for (a, slot) in t.iter_mut().enumerate() {
            if a == self.height_axis {
                *slot = g[i];
            } else {
                if k == i {
                    *slot = T::one();
                }
                k += 1;
            }
        }
        t
    }

    pub fn chi(&self, y: &[T]) -> T {
        y.iter().map(|&v| bump(v / self.chi_radius)).fold(T::one(), |a, b| a * b)
    }

    pub fn in_domain(&self, y: &[T]) -> bool {
        y.iter().all(|v| v.abs() <= self.chi_radius)
    }

    /// `μ(R^d) = ∫ χ`, by a fine composite Gauss–Legendre rule.
    pub fn total_mass(&self) -> T {
        let k = self.param_dim();
        let lo = vec![-self.chi_radius; k];
        let hi = vec![self.chi_radius; k];
        let panels = if k == 1 { 256 } else { 32 };
        tensor_rule(&lo, &hi, panels).into_iter().map(|(y, w)| w * self.chi(&y)).sum()
    }

    /// Midpoint-rule discretisation of `μ` with `n` cells per parameter axis:
    /// points `γ(y)` with weights `χ(y)·cell volume`, zero-weight points dropped.
    pub fn discretize(&self, n: usize) -> (Vec<Vec<T>>, Vec<T>) {
        let k = self.param_dim();
        let r = self.chi_radius;
        let step = lit::<T>(2.0) * r / lit(n as f64);
        let cell = step.powi(k as i32);
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        let mut y = vec![T::zero(); k];
        for mut c in 0..n.pow(k as u32) {
            for yi in y.iter_mut() {
                *yi = -r + step * (lit::<T>((c % n) as f64) + lit(0.5));
                c /= n;
            }
            let w = self.chi(&y) * cell;
            if w > T::zero() {
                pts.push(self.embed(&y));
                wts.push(w);
            }
        }
        (pts, wts)
    }
}

/// `∂^{deriv} y^{powers}` for up to two derivative indices.
fn monomial<T: Real>(y: &[T], powers: &[u32], deriv: Option<&[usize]>) -> T {
    let mut p: Vec<i64> = powers.iter().map(|&v| v as i64).collect();
    let mut coeff = T::one();
    if let Some(ds) = deriv {
        for &i in ds {
            if p[i] == 0 {
                return T::zero();
            }
            coeff = coeff * lit(p[i] as f64);
            p[i] -= 1;
        }
    }
    y.iter().zip(&p).fold(coeff, |acc, (&v, &e)| acc * v.powi(e as i32))
}

/// `K(y) = det ψ''(y) / (1 + |∇ψ(y)|²)^{(d+1)/2}`.
pub fn gaussian_curvature<T: Real>(s: &GraphSurface<T>, y: &[T]) -> T {
    let g2: T = s.grad(y).iter().map(|&v| v * v).sum();
    s.hessian(y).det() / (T::one() + g2).powf(lit::<T>((s.dim + 1) as f64) / lit(2.0))
}

/// One cap `μ_ρ^s` of the partition.
#[derive(Clone, Debug, Serialize)]
pub struct SurfacePiece<T: Real> {
    pub s: u32,
    pub rho: usize,
    /// Grid position of the bump along each parameter axis.
    pub cell: Vec<i64>,
    /// Parameter centre `cell · h`.
    pub center: Vec<T>,
    /// Ambient diameter bound `2^{-εs}`.
    pub radius: T,
    /// Parameter grid step; the bump along an axis is supported on `((j−1)h, (j+1)h)`.
    pub h: T,
    /// Parameter support, clipped to the domain.
    pub lo: Vec<T>,
    pub hi: Vec<T>,
    /// Parameter nodes with weights that include the bump.
    pub quad_nodes: Vec<(Vec<T>, T)>,
    pub in_i1: bool,
    pub in_i2: bool,
    pub min_abs_curvature: Option<T>,
    pub max_mass_ratio: Option<T>,
    /// The `τ` at which the largest mass ratio was seen.
    pub worst_tau: Option<i32>,
    /// The whole measure as a single cap (bump `= χ`).
    pub whole: bool,
}

/// `ω(t/h − j) / Σ_k ω(t/h − k)`, the one-dimensional partition function.
fn partition_factor<T: Real>(t: T, h: T, j: i64) -> T {
    let u = t / h;
    let mine = bump(u - lit(j as f64));
    if mine == T::zero() {
        return T::zero();
    }
    let base = u.floor().to_i64().unwrap_or(0);
    let total: T = (base - 1..=base + 2).map(|k| bump(u - lit(k as f64))).sum();
    mine / total
}

impl<T: Real> SurfacePiece<T> {
    /// `χ(y) Π_i ω(y_i/h − j_i)/Σ_k ω(y_i/h − k)`.
    pub fn bump_at(&self, surface: &GraphSurface<T>, y: &[T]) -> T {
        let mut v = surface.chi(y);
        if self.whole {
            return v;
        }
        for (i, &t) in y.iter().enumerate() {
            if v == T::zero() {
                break;
            }
            v = v * partition_factor(t, self.h, self.cell[i]);
        }
        v
    }

    /// The undivided measure `μ` as one cap of scale 1.
    pub fn whole(surface: &GraphSurface<T>) -> Self {
        let k = surface.param_dim();
        let r = surface.chi_radius;
        let lo = vec![-r; k];
        let hi = vec![r; k];
        let quad_nodes = tensor_rule(&lo, &hi, if k == 1 { 256 } else { 32 })
            .into_iter()
            .map(|(y, w)| {
                let c = surface.chi(&y);
                (y, w * c)
            })
            .collect();
        SurfacePiece {
            s: 0,
            rho: 0,
            cell: vec![0; k],
            center: vec![T::zero(); k],
            radius: T::one(),
            h: r * lit(2.0),
            lo,
            hi,
            quad_nodes,
            in_i1: false,
            in_i2: false,
            min_abs_curvature: None,
            max_mass_ratio: None,
            worst_tau: None,
            whole: true,
        }
    }

    /// `μ_ρ^s(R^d)`.
    pub fn mass(&self) -> T {
        self.quad_nodes.iter().map(|(_, w)| *w).sum()
    }

    /// Ambient nodes and weights of the cap measure.
    pub fn ambient_nodes(&self, surface: &GraphSurface<T>) -> (Vec<Vec<T>>, Vec<T>) {
        self.quad_nodes.iter().filter(|(_, w)| *w > T::zero()).map(|(y, w)| (surface.embed(y), *w)).unzip()
    }
}

/// Parameter grid step for scale `s`: caps of parameter side `2h` have ambient
/// diameter at most `2^{-εs}`.
pub fn piece_step<T: Real>(surface: &GraphSurface<T>, s: u32, eps: T) -> T {
    let k = lit::<T>(surface.param_dim() as f64);
    lit::<T>(2.0).powf(-eps * lit(s as f64)) / (lit::<T>(2.0) * k.sqrt() * surface.lipschitz)
}

/// Splits `μ` into caps `μ_ρ^s` by a tensor partition of unity on the
/// parameter box. Each cap carries a composite Gauss–Legendre rule
/// (8 nodes per panel, at least 4 panels per axis).
pub fn partition_measure<T: Real>(surface: &GraphSurface<T>, s: u32, eps: T) -> Result<Vec<SurfacePiece<T>>> {
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::InputInvalid(format!("ε = {eps} must lie in (0, 1)")));
    }
    let k = surface.param_dim();
    let h = piece_step(surface, s, eps);
    let r = surface.chi_radius;
    let jmin = (-r / h).floor().to_i64().unwrap_or(0) - 1;
    let jmax = (r / h).ceil().to_i64().unwrap_or(0) + 1;
    let span = (jmax as i128 - jmin as i128 + 1) as f64;
    if span.powi(k as i32) > PIECE_BUDGET as f64 * 4f64.powi(k as i32) {
        return Err(Error::BudgetExceeded(format!("≈{:.3e} caps exceed {PIECE_BUDGET}", span.powi(k as i32))));
    }
    let axis: Vec<i64> = (jmin..=jmax)
        .filter(|&j| lit::<T>((j - 1) as f64) * h < r && lit::<T>((j + 1) as f64) * h > -r)
        .collect();
    let count = axis.len().checked_pow(k as u32).unwrap_or(usize::MAX);
    if count > PIECE_BUDGET {
        return Err(Error::BudgetExceeded(format!("{count} caps exceed {PIECE_BUDGET}")));
    }
    let radius = lit::<T>(2.0).powf(-eps * lit(s as f64));
    let mut pieces = Vec::with_capacity(count);
    for rho in 0..count {
        let mut c = rho;
        let cell: Vec<i64> = (0..k)
            .map(|_| {
                let j = axis[c % axis.len()];
                c /= axis.len();
                j
            })
            .collect();
        let lo: Vec<T> = cell.iter().map(|&j| (lit::<T>((j - 1) as f64) * h).max(-r)).collect();
        let hi: Vec<T> = cell.iter().map(|&j| (lit::<T>((j + 1) as f64) * h).min(r)).collect();
        let center = cell.iter().map(|&j| lit::<T>(j as f64) * h).collect();
        let mut piece = SurfacePiece {
            s,
            rho,
            cell,
            center,
            radius,
            h,
            lo,
            hi,
            quad_nodes: Vec::new(),
            in_i1: false,
            in_i2: false,
            min_abs_curvature: None,
            max_mass_ratio: None,
            worst_tau: None,
            whole: false,
        };
        // panels shrink with the cutoff radius so large caps resolve χ's boundary layer
        let width = piece.hi.iter().zip(&piece.lo).map(|(&a, &b)| a - b).fold(T::zero(), T::max);
        let cap = if k == 1 { 256 } else { 12 };
        let panels = (width / (r / lit(96.0))).ceil().to_usize().unwrap_or(4).clamp(4, cap);
        // even, so a panel break sits on the cap centre, where the weight is not analytic
        let panels = panels + panels % 2;
        let nodes = tensor_rule(&piece.lo, &piece.hi, panels);
        piece.quad_nodes = nodes.into_iter().map(|(y, w)| {
            let b = piece.bump_at(surface, &y);
            (y, w * b)
        }).collect();
        pieces.push(piece);
    }
    Ok(pieces)
}

impl<T: Real> MeasureSupport<T> for GraphSurface<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cover(&self, spacing: T) -> Vec<Vec<T>> {
        let k = self.param_dim();
        let step = lit::<T>(2.0) * spacing / (self.lipschitz * lit::<T>(k as f64).sqrt());
        let n = ((lit::<T>(2.0) * self.chi_radius / step).ceil().to_usize().unwrap_or(1)).max(1) + 1;
        self.parameter_grid(n).iter().map(|y| self.embed(y)).collect()
    }

    fn sample_point(&self, rng: &mut Rng) -> Vec<T> {
        let r = self.chi_radius.to_f64_lossy();
        let y: Vec<T> = (0..self.param_dim()).map(|_| lit(rng.gen_range(-r..=r))).collect();
        self.embed(&y)
    }
}
