//! Convolution of atomic sums with dilated surface measures, the maximal
//! field `Mf = sup_k |μ_k ∗ f|`, distribution functions and weak-type ratios.

mod lattice;

use rayon::prelude::*;
use serde::Serialize;

use crate::atoms::{h1_norm, AtomicSum};
use crate::decomposition::ExceptionalSet;
use crate::dilation::DilationStructure;
use crate::surface::{gauss_legendre, GraphSurface, SurfacePiece};
use crate::{lit, Error, Real, Result};

pub use lattice::{Convolver, Lattice, SampledField};

/// Largest number of nodes used to represent one dilated measure.
pub const NODE_BUDGET: usize = 20_000_000;

/// The measure being dilated: the whole surface measure or one cap.
#[derive(Clone, Copy, Debug)]
pub enum Measure<'a, T: Real> {
    Surface(&'a GraphSurface<T>),
    Piece(&'a GraphSurface<T>, &'a SurfacePiece<T>),
}

impl<'a, T: Real> Measure<'a, T> {
    pub fn surface(&self) -> &'a GraphSurface<T> {
        match *self {
            Measure::Surface(s) | Measure::Piece(s, _) => s,
        }
    }

    fn param_box(&self) -> (Vec<T>, Vec<T>) {
        match *self {
            Measure::Surface(s) => (vec![-s.chi_radius; s.param_dim()], vec![s.chi_radius; s.param_dim()]),
            Measure::Piece(_, p) => (p.lo.clone(), p.hi.clone()),
        }
    }

    fn density(&self, y: &[T]) -> T {
        match *self {
            Measure::Surface(s) => s.chi(y),
            Measure::Piece(s, p) => p.bump_at(s, y),
        }
    }

    pub fn id(&self) -> String {
        match *self {
            Measure::Surface(s) => format!("{:?}", s.catalog_id),
            Measure::Piece(s, p) => format!("{:?} s={} rho={}", s.catalog_id, p.s, p.rho),
        }
    }
}

/// Nodes and weights of `μ_k`, the pushforward of the measure under `A^k`.
///
/// The parameter box is subdivided until each cell's image has diameter at
/// most `step`; each cell becomes one node at the image of its centre whose
/// weight is the cell's mass (8-point Gauss–Legendre per axis). Cells whose
/// image lies entirely outside `[−reach, reach]` are dropped.
pub fn dilated_nodes<T: Real>(
    measure: Measure<'_, T>,
    dil: &DilationStructure<T>,
    k: i32,
    step: T,
    reach: &[T],
) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    let surface = measure.surface();
    let m = surface.param_dim();
    let ak = dil.power(k);
    let stretch = ak.op_norm() * surface.lipschitz;
    let (lo, hi) = measure.param_box();
    let initial = [0usize, 32, 8, 4][m];
    let mut stack: Vec<(Vec<T>, Vec<T>)> = Vec::new();
    for c in (0..initial.pow(m as u32)).rev() {
        let mut cl = Vec::with_capacity(m);
        let mut ch = Vec::with_capacity(m);
        let mut cc = c;
        for i in 0..m {
            let w = (hi[i] - lo[i]) / lit(initial as f64);
            let j = cc % initial;
            cc /= initial;
            cl.push(lo[i] + w * lit(j as f64));
            ch.push(lo[i] + w * lit((j + 1) as f64));
        }
        stack.push((cl, ch));
    }
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    while let Some((cl, ch)) = stack.pop() {
        let center: Vec<T> = cl.iter().zip(&ch).map(|(&a, &b)| (a + b) / lit(2.0)).collect();
        let half: T = cl.iter().zip(&ch).map(|(&a, &b)| ((b - a) / lit(2.0)).powi(2)).sum::<T>().sqrt();
        let rho = stretch * half;
        let z = ak.apply(&surface.embed(&center));
        if z.iter().zip(reach).any(|(&zi, &r)| zi.abs() - rho >= r) {
            continue;
        }
        if lit::<T>(2.0) * rho <= step {
            let w = cell_mass(&measure, &cl, &ch);
            if w > T::zero() {
                pts.push(z);
                wts.push(w);
                if pts.len() > NODE_BUDGET {
                    return Err(Error::BudgetExceeded(format!("dilated measure at k={k} needs more than {NODE_BUDGET} nodes")));
                }
            }
            continue;
        }
        // children pushed in reverse so they pop in index order
        for c in (0..1usize << m).rev() {
            let mut a = cl.clone();
            let mut b = ch.clone();
            for i in 0..m {
                if (c >> i) & 1 == 1 {
                    a[i] = center[i];
                } else {
                    b[i] = center[i];
                }
            }
            stack.push((a, b));
        }
    }
    Ok((pts, wts))
}

fn cell_mass<T: Real>(measure: &Measure<'_, T>, lo: &[T], hi: &[T]) -> T {
    let rules: Vec<Vec<(T, T)>> = lo.iter().zip(hi).map(|(&a, &b)| gauss_legendre(a, b, 1)).collect();
    let m = lo.len();
    let mut total = T::zero();
    let mut y = vec![T::zero(); m];
    for mut c in 0..8usize.pow(m as u32) {
        let mut w = T::one();
        for i in 0..m {
            let (x, wx) = rules[i][c % 8];
            c /= 8;
            y[i] = x;
            w = w * wx;
        }
        total = total + w * measure.density(&y);
    }
    total
}

/// Offsets beyond this box cannot reach any lattice point.
fn reach_of<T: Real>(lattice: &Lattice<T>) -> Vec<T> {
    let up = lattice.upper();
    (0..lattice.dim())
        .map(|i| (up[i] - lattice.origin[i]) + lattice.spacing[i] * lit(2.0))
        .collect()
}

/// Lattice spacing must resolve every atom: at most an eighth of the cube's
/// extent along each axis.
fn check_resolution<T: Real>(f: &AtomicSum<T>, lattice: &Lattice<T>) -> Result<()> {
    for (atom, _) in &f.terms {
        let (lo, hi) = atom.cube.bounding_box();
        for i in 0..lattice.dim() {
            if lattice.spacing[i] > (hi[i] - lo[i]) / lit(8.0) {
                return Err(Error::ResolutionTooCoarse(format!(
                    "spacing {} on axis {i} exceeds 1/8 of atom extent {}",
                    lattice.spacing[i],
                    hi[i] - lo[i]
                )));
            }
        }
    }
    Ok(())
}

/// `μ_k ∗ f` at the lattice points, with `f` sampled on the lattice and `μ_k`
/// spread onto lattice offsets.
pub fn convolve_dilated<T: Real>(
    f: &AtomicSum<T>,
    measure: Measure<'_, T>,
    dil: &DilationStructure<T>,
    k: i32,
    lattice: &Lattice<T>,
) -> Result<SampledField<T>> {
    check_resolution(f, lattice)?;
    let sampled = SampledField::sample(lattice, "f", |x| f.eval(x));
    let conv = Convolver::new(&sampled);
    let values = convolve_with(&conv, measure, dil, k)?;
    Ok(SampledField { lattice: lattice.clone(), values, provenance: format!("mu_k*f measure={} k={k}", measure.id()) })
}

fn convolve_with<T: Real>(conv: &Convolver<T>, measure: Measure<'_, T>, dil: &DilationStructure<T>, k: i32) -> Result<Vec<T>> {
    let lattice = conv.lattice();
    let step = lattice.min_spacing() / lit(2.0);
    let (pts, wts) = dilated_nodes(measure, dil, k, step, &reach_of(lattice))?;
    Ok(conv.convolve(&pts, &wts))
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    /// `‖A^{k_min}‖ ≤ h/2`: smaller `k` give the same lattice values.
    pub lower_exact: bool,
    /// `max|μ_{k_max} ∗ f| / max Mf`.
    pub upper_ratio: f64,
    /// Both ends negligible (upper ratio below 1%).
    pub negligible: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaximalField<T: Real> {
    pub field: SampledField<T>,
    /// The `k` attaining the maximum at each lattice point.
    pub argmax: Vec<i32>,
    /// `(k, max |μ_k ∗ f|)`.
    pub per_k_max: Vec<(i32, f64)>,
    pub tail: TailReport,
}

/// `max_{k ∈ k_range} |μ_k ∗ f|` pointwise, with the argmax and a tail report.
/// A non-negligible tail is reported, not raised.
pub fn maximal_field<T: Real>(
    f: &AtomicSum<T>,
    measure: Measure<'_, T>,
    dil: &DilationStructure<T>,
    k_range: std::ops::RangeInclusive<i32>,
    lattice: &Lattice<T>,
) -> Result<MaximalField<T>> {
    if k_range.is_empty() {
        return Err(Error::InputInvalid("empty k range".into()));
    }
    check_resolution(f, lattice)?;
    let sampled = SampledField::sample(lattice, "f", |x| f.eval(x));
    let conv = Convolver::new(&sampled);
    let ks: Vec<i32> = k_range.clone().collect();
    let fields: Vec<Vec<T>> = ks.par_iter().map(|&k| convolve_with(&conv, measure, dil, k)).collect::<Result<_>>()?;
    let n = lattice.len();
    let mut values = vec![T::zero(); n];
    let mut argmax = vec![ks[0]; n];
    let mut per_k_max = Vec::with_capacity(ks.len());
    for (&k, g) in ks.iter().zip(&fields) {
        let mut top = T::zero();
        for i in 0..n {
            let v = g[i].abs();
            top = top.max(v);
            if v > values[i] {
                values[i] = v;
                argmax[i] = k;
            }
        }
        per_k_max.push((k, top.to_f64_lossy()));
    }
    let field_max = values.iter().fold(T::zero(), |m, &v| m.max(v)).to_f64_lossy();
    let upper_ratio = if field_max > 0.0 { per_k_max.last().map(|p| p.1).unwrap_or(0.0) / field_max } else { 0.0 };
    let lower_exact = dil.power(*k_range.start()).op_norm() <= lattice.min_spacing() / lit(2.0);
    let tail = TailReport { lower_exact, upper_ratio, negligible: upper_ratio < 0.01 };
    let (k0, k1) = (k_range.start(), k_range.end());
    let field = SampledField { lattice: lattice.clone(), values, provenance: format!("Mf measure={} k={k0}..={k1}", measure.id()) };
    Ok(MaximalField { field, argmax, per_k_max, tail })
}

#[derive(Clone, Debug, Serialize)]
pub struct DistributionReport {
    pub thresholds: Vec<f64>,
    /// `|{Mf > λ}|` (cells × cell volume), optionally outside `E`.
    pub measures: Vec<f64>,
    /// `sup_λ λ·|{Mf > λ}|`.
    pub weak_ratio: f64,
    pub h1: Option<f64>,
}

/// Lattice points lying in `E`.
pub fn exclusion_mask<T: Real>(lattice: &Lattice<T>, e: &ExceptionalSet<T>) -> Vec<bool> {
    let d = lattice.dim();
    (0..lattice.len())
        .into_par_iter()
        .map_init(|| vec![T::zero(); d], |p, i| {
            lattice.point_into(i, p);
            e.contains(p)
        })
        .collect()
}

/// Superlevel-set measures by cell counting. `excluded` marks cells dropped
/// from the count (the `x ∉ E` variant).
pub fn distribution_function<T: Real>(field: &SampledField<T>, thresholds: &[f64], excluded: Option<&[bool]>) -> Result<DistributionReport> {
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InputInvalid("thresholds must be sorted ascending".into()));
    }
    let mut vals: Vec<f64> = field
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded.is_some_and(|m| m[*i]))
        .map(|(_, v)| v.to_f64_lossy())
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite field values"));
    let cell = field.lattice.cell_volume().to_f64_lossy();
    let measures: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let above = vals.len() - vals.partition_point(|&v| v <= t);
            above as f64 * cell
        })
        .collect();
    let weak_ratio = thresholds.iter().zip(&measures).map(|(t, m)| t * m).fold(0.0, f64::max);
    Ok(DistributionReport { thresholds: thresholds.to_vec(), measures, weak_ratio, h1: None })
}

/// `n` log-spaced thresholds spanning `[10⁻³, 1]·max`.
pub fn log_thresholds(max: f64, n: usize) -> Vec<f64> {
    if n < 2 || max <= 0.0 {
        return vec![max.max(f64::MIN_POSITIVE)];
    }
    (0..n).map(|i| max * 10f64.powf(-3.0 + 3.0 * i as f64 / (n - 1) as f64)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakTypeReport<T: Real> {
    /// `sup_λ λ·|{Mf > λ} \ E| / ‖f‖_{H¹_A}`.
    pub ratio: f64,
    pub distribution: DistributionReport,
    #[serde(skip)]
    pub maximal: MaximalField<T>,
}

/// Weak-type ratio over the 64-point threshold grid.
pub fn weak_type_ratio<T: Real>(
    f: &AtomicSum<T>,
    measure: Measure<'_, T>,
    dil: &DilationStructure<T>,
    k_range: std::ops::RangeInclusive<i32>,
    lattice: &Lattice<T>,
    e: Option<&ExceptionalSet<T>>,
) -> Result<WeakTypeReport<T>> {
    let h1 = h1_norm(f).to_f64_lossy();
    if !(h1 > 0.0) {
        return Err(Error::InputInvalid("‖f‖_{H¹_A} must be positive".into()));
    }
    let maximal = maximal_field(f, measure, dil, k_range, lattice)?;
    let mask = e.map(|e| exclusion_mask(lattice, e));
    let thresholds = log_thresholds(maximal.field.max_abs().to_f64_lossy(), 64);
    let mut distribution = distribution_function(&maximal.field, &thresholds, mask.as_deref())?;
    distribution.h1 = Some(h1);
    Ok(WeakTypeReport { ratio: distribution.weak_ratio / h1, distribution, maximal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{make_atom, Profile};
    use crate::dilation::validate_rows;
    use crate::grid::GridCube;

    fn circle() -> GraphSurface<f64> {
        GraphSurface::<f64>::circle_arc(2, 0, 0.7).unwrap()
    }

    #[test]
    fn dilated_nodes_preserve_mass() {
        let dil = validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let c = circle();
        let mass = c.total_mass();
        for k in [-6, -1, 0, 2] {
            let (pts, w) = dilated_nodes(Measure::Surface(&c), &dil, k, 0.01, &[1e9, 1e9]).unwrap();
            let total: f64 = w.iter().sum();
            assert!((total - mass).abs() < 1e-8 * mass, "k={k}: {total} vs {mass}");
            assert!(!pts.is_empty());
        }
    }

    #[test]
    fn constant_function_is_reproduced_in_the_interior() {
        // f ≡ 1 on a large box (a positive bump with sup 1 on a big cube, no cancellation needed)
        let dil = validate_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let l = Lattice::<f64>::spanning(&[-4.0, -4.0], &[4.0, 4.0], 161).unwrap();
        let one = SampledField::sample(&l, "one", |x| if x.iter().all(|v| v.abs() <= 4.0) { 1.0 } else { 0.0 });
        let conv = Convolver::new(&one);
        let c = circle();
        let g = convolve_with(&conv, Measure::Surface(&c), &dil, 0).unwrap();
        let mid = l.len() / 2;
        assert!((g[mid] - c.total_mass()).abs() < 1e-9, "{} vs {}", g[mid], c.total_mass());
    }

    #[test]
    fn singleton_range_equals_abs_convolution() {
        let dil = validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let atom = make_atom(&dil, &GridCube::new(0, 0, vec![0, 0]), Profile::haar(0), 0).unwrap();
        let mut f = AtomicSum::new();
        f.push(atom, 1.0).unwrap();
        let l = Lattice::spanning(&[-2.0, -2.0], &[3.0, 3.0], 81).unwrap();
        let c = circle();
        let g = convolve_dilated(&f, Measure::Surface(&c), &dil, 1, &l).unwrap();
        let m = maximal_field(&f, Measure::Surface(&c), &dil, 1..=1, &l).unwrap();
        for (a, b) in g.values.iter().zip(&m.field.values) {
            assert!((a.abs() - b).abs() < 1e-15);
        }
        let coarse = Lattice::spanning(&[-2.0, -2.0], &[3.0, 3.0], 11).unwrap();
        assert!(matches!(convolve_dilated(&f, Measure::Surface(&c), &dil, 0, &coarse), Err(Error::ResolutionTooCoarse(_))));
    }

    #[test]
    fn distribution_basics() {
        let l = Lattice::new(vec![0.0], vec![0.5], vec![4]).unwrap();
        let f = SampledField { lattice: l, values: vec![0.0, 1.0, 2.0, 3.0], provenance: String::new() };
        let r = distribution_function(&f, &[0.5, 1.5, 2.5, 10.0], None).unwrap();
        assert_eq!(r.measures, vec![1.5, 1.0, 0.5, 0.0]);
        assert!((r.weak_ratio - 1.5).abs() < 1e-15);
        let mask = [false, false, false, true];
        let r2 = distribution_function(&f, &[0.5, 1.5, 2.5, 10.0], Some(&mask)).unwrap();
        assert!(r2.measures.iter().zip(&r.measures).all(|(a, b)| a <= b));
        assert!(distribution_function(&f, &[2.0, 1.0], None).is_err());
    }
}
