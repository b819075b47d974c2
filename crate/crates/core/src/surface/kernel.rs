//! Autocorrelation kernels of caps and lattice checks of the single-cube and
//! pairwise bounds for atoms convolved with a cap measure.

use serde::Serialize;

use super::{GraphSurface, SurfacePiece};
use crate::atoms::AtomicSum;
use crate::dilation::ols_slope;
use crate::maximal::{Convolver, Lattice, SampledField};
use crate::{lit, Error, Real, Result};

/// `ν∗ν̃` for the cap measure `ν = μ_ρ^s`, as a density on a lattice
/// centred at 0 with the given spacing.
///
/// `nodes` midpoint nodes are spread over the cap's parameter box; every
/// pair difference `γ(y_i) − γ(y_j)` is deposited with weight `w_i w_j` onto
/// the lattice by multilinear weights and divided by the cell volume.
pub fn autocorrelation_kernel<T: Real>(
    surface: &GraphSurface<T>,
    piece: &SurfacePiece<T>,
    spacing: T,
    nodes: usize,
) -> Result<SampledField<T>> {
    if spacing > piece.radius / lit(8.0) {
        return Err(Error::ResolutionTooCoarse(format!(
            "lattice spacing {spacing} exceeds cap scale {} / 8",
            piece.radius
        )));
    }
    let k = surface.param_dim();
    let d = surface.dim;
    let per_axis = ((nodes as f64).powf(1.0 / k as f64).round() as usize).max(2);
    let steps: Vec<T> = (0..k).map(|i| (piece.hi[i] - piece.lo[i]) / lit(per_axis as f64)).collect();
    let cell: T = steps.iter().copied().fold(T::one(), |a, b| a * b);
    let mut pts: Vec<Vec<T>> = Vec::new();
    let mut wts: Vec<T> = Vec::new();
    let mut y = vec![T::zero(); k];
    for mut c in 0..per_axis.pow(k as u32) {
        for i in 0..k {
            y[i] = piece.lo[i] + steps[i] * (lit::<T>((c % per_axis) as f64) + lit(0.5));
            c /= per_axis;
        }
        let w = piece.bump_at(surface, &y) * cell;
        if w > T::zero() {
            pts.push(surface.embed(&y));
            wts.push(w);
        }
    }
    let mut half = vec![0usize; d];
    for (a, slot) in half.iter_mut().enumerate() {
        let lo = pts.iter().map(|p| p[a]).fold(T::infinity(), T::min);
        let hi = pts.iter().map(|p| p[a]).fold(T::neg_infinity(), T::max);
        *slot = ((hi - lo) / spacing).ceil().to_usize().unwrap_or(0) + 2;
    }
    let shape: Vec<usize> = half.iter().map(|&n| 2 * n + 1).collect();
    let origin: Vec<T> = half.iter().map(|&n| -spacing * lit(n as f64)).collect();
    let lattice = Lattice::new(origin, vec![spacing; d], shape.clone())?;
    let mut values = vec![T::zero(); lattice.len()];
    let corners = 1usize << d;
    let mut base = [0i64; crate::MAX_DIM];
    let mut frac = [T::zero(); crate::MAX_DIM];
    for (p, &wp) in pts.iter().zip(&wts) {
        for (q, &wq) in pts.iter().zip(&wts) {
            for a in 0..d {
                let u = (p[a] - q[a]) / spacing + lit(half[a] as f64);
                let f = u.floor();
                base[a] = f.to_i64().expect("difference inside lattice");
                frac[a] = u - f;
            }
            for c in 0..corners {
                let mut w = wp * wq;
                let mut flat = 0usize;
                for a in 0..d {
                    let hi = (c >> a) & 1 == 1;
                    w = w * if hi { frac[a] } else { T::one() - frac[a] };
                    flat = flat * shape[a] + (base[a] + hi as i64) as usize;
                }
                values[flat] = values[flat] + w;
            }
        }
    }
    let inv_cell = T::one() / lattice.cell_volume();
    for v in values.iter_mut() {
        *v = *v * inv_cell;
    }
    Ok(SampledField {
        lattice,
        values,
        provenance: format!("autocorrelation s={} rho={}", piece.s, piece.rho),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub radii: Vec<f64>,
    /// `max |field|` over the annulus `R/1.15 ≤ |x| ≤ 1.15R`.
    pub maxima: Vec<f64>,
    /// Log-log slope of the maxima against `R`.
    pub slope: f64,
    /// `slope ≤ −0.7`.
    pub pass: bool,
}

/// Log-log regression of the annulus maxima of `field` over `count`
/// log-spaced radii in `[r_min, r_max]`.
pub fn check_kernel_decay<T: Real>(field: &SampledField<T>, r_min: f64, r_max: f64, count: usize) -> Result<DecayReport> {
    if count < 3 || !(r_max > r_min && r_min > 0.0) {
        return Err(Error::DegenerateFit(format!("need ≥ 3 radii over a positive range, got {count} in [{r_min}, {r_max}]")));
    }
    let radii: Vec<f64> = (0..count)
        .map(|i| r_min * (r_max / r_min).powf(i as f64 / (count - 1) as f64))
        .collect();
    let mut maxima = vec![f64::NAN; count];
    let mut p = vec![T::zero(); field.lattice.dim()];
    for (i, v) in field.values.iter().enumerate() {
        field.lattice.point_into(i, &mut p);
        let r = p.iter().map(|c| c.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        let v = v.to_f64_lossy().abs();
        for (j, &rj) in radii.iter().enumerate() {
            if r >= rj / 1.15 && r <= rj * 1.15 && !(maxima[j] >= v) {
                maxima[j] = v;
            }
        }
    }
    if maxima.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::DegenerateFit("an annulus is empty or vanishes".into()));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = maxima.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&xs, &ys).ok_or_else(|| Error::DegenerateFit("radii do not spread".into()))?;
    Ok(DecayReport { radii, maxima, slope, pass: slope <= -0.7 })
}

/// `(f ∗ ν)(x) = Σ_j w_j f(x − p_j)` on a lattice, with `f` sampled at the
/// lattice points and the measure nodes spread by multilinear weights.
pub fn field_of_atoms<T: Real>(f: &AtomicSum<T>, nodes: &[Vec<T>], weights: &[T], lattice: &Lattice<T>) -> SampledField<T> {
    let sampled = SampledField::sample(lattice, "atoms", |x| f.eval(x));
    let values = Convolver::new(&sampled).convolve(nodes, weights);
    SampledField { lattice: lattice.clone(), values, provenance: "atoms convolved with cap".into() }
}

#[derive(Clone, Debug, Serialize)]
pub struct LinftyReport {
    pub lambda: f64,
    pub sup: f64,
    pub l1: f64,
    /// `2^{−σ+ζs} λ_q`.
    pub sup_bound: f64,
    /// `2^{(ζ+ε(1−d))s} λ_q`.
    pub l1_bound: f64,
    pub sup_ratio: f64,
    pub l1_ratio: f64,
    pub constant: f64,
    pub pass: bool,
    /// The cap was flagged in `I¹ ∪ I²`, where the bound is not claimed.
    pub excluded: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScaleParams<T> {
    pub eps: T,
    pub zeta: T,
    pub s: u32,
    /// Check constant, 64 by default.
    pub constant: T,
}

/// Sup and `L¹` norms of `A_q ∗ μ_{ρ,0}^s` against their bounds.
pub fn check_linfty_bound<T: Real>(
    a_q: &AtomicSum<T>,
    surface: &GraphSurface<T>,
    piece: &SurfacePiece<T>,
    sigma: i32,
    scale: &ScaleParams<T>,
    lattice: &Lattice<T>,
) -> LinftyReport {
    let (nodes, weights) = piece.ambient_nodes(surface);
    let g = field_of_atoms(a_q, &nodes, &weights, lattice);
    let lambda = crate::atoms::h1_norm(a_q).to_f64_lossy();
    let (eps, zeta, s) = (scale.eps.to_f64_lossy(), scale.zeta.to_f64_lossy(), scale.s as f64);
    let d = surface.dim as f64;
    let sup = g.max_abs().to_f64_lossy();
    let l1 = g.l1_norm().to_f64_lossy();
    let sup_bound = 2f64.powf(-sigma as f64 + zeta * s) * lambda;
    let l1_bound = 2f64.powf((zeta + eps * (1.0 - d)) * s) * lambda;
    let constant = scale.constant.to_f64_lossy();
    let (sup_ratio, l1_ratio) = (sup / sup_bound, l1 / l1_bound);
    LinftyReport {
        lambda,
        sup,
        l1,
        sup_bound,
        l1_bound,
        sup_ratio,
        l1_ratio,
        constant,
        pass: sup_ratio <= constant && l1_ratio <= constant,
        excluded: piece.in_i1 || piece.in_i2,
    }
}

/// `⟨f₁ ∗ μ_{ρ,0}^s, f₂ ∗ μ_{ρ,0}^s⟩` for two fields on the same lattice.
pub fn cap_inner_product<T: Real>(f1: &SampledField<T>, f2: &SampledField<T>, surface: &GraphSurface<T>, piece: &SurfacePiece<T>) -> T {
    let (nodes, weights) = piece.ambient_nodes(surface);
    let g1 = Convolver::new(f1).convolve(&nodes, &weights);
    let g2 = Convolver::new(f2).convolve(&nodes, &weights);
    g1.iter().zip(&g2).map(|(&a, &b)| a * b).sum::<T>() * f1.lattice.cell_volume()
}

#[derive(Clone, Debug, Serialize)]
pub struct PairReport {
    pub distance: f64,
    pub inner: f64,
    /// `2^{σ′+εs(5−d)} d(q,q′)^{−2} λ_q λ_{q′}`.
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// `|⟨A_q ∗ μ_{ρ,0}^s, A_{q′} ∗ μ_{ρ,0}^s⟩|` by lattice quadrature against
/// its bound at distance `d(q, q′) = distance ≥ 2^{σ′}`.
#[allow(clippy::too_many_arguments)]
pub fn check_pair_bound<T: Real>(
    a_q: &AtomicSum<T>,
    a_q2: &AtomicSum<T>,
    surface: &GraphSurface<T>,
    piece: &SurfacePiece<T>,
    distance: T,
    sigma_prime: i32,
    scale: &ScaleParams<T>,
    lattice: &Lattice<T>,
) -> Result<PairReport> {
    let distance = distance.to_f64_lossy();
    if distance < 2f64.powi(sigma_prime) {
        return Err(Error::InputInvalid(format!("distance {distance} is below 2^{sigma_prime}")));
    }
    let sampled1 = SampledField::sample(lattice, "a_q", |x| a_q.eval(x));
    let sampled2 = SampledField::sample(lattice, "a_q'", |x| a_q2.eval(x));
    let inner = cap_inner_product(&sampled1, &sampled2, surface, piece).to_f64_lossy().abs();
    let lambdas = crate::atoms::h1_norm(a_q).to_f64_lossy() * crate::atoms::h1_norm(a_q2).to_f64_lossy();
    let (eps, s, d) = (scale.eps.to_f64_lossy(), scale.s as f64, surface.dim as f64);
    let bound = 2f64.powf(sigma_prime as f64 + eps * s * (5.0 - d)) * distance.powi(-2) * lambdas;
    let ratio = inner / bound;
    Ok(PairReport { distance, inner, bound, ratio, pass: ratio <= scale.constant.to_f64_lossy() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::partition_measure;

    #[test]
    fn autocorrelation_is_symmetric_with_squared_mass() {
        let c = GraphSurface::<f64>::circle_arc(2, 0, 0.7).unwrap();
        let pieces = partition_measure(&c, 4, 0.25).unwrap();
        let p = &pieces[pieces.len() / 2];
        let field = autocorrelation_kernel(&c, p, p.radius / 16.0, 800).unwrap();
        let n = field.values.len();
        for i in 0..n {
            assert!((field.values[i] - field.values[n - 1 - i]).abs() <= 1e-9 * field.max_abs());
        }
        let m = p.mass();
        assert!((field.integral() - m * m).abs() < 0.02 * m * m, "{} vs {}", field.integral(), m * m);
        assert!(matches!(autocorrelation_kernel(&c, p, p.radius / 4.0, 800), Err(Error::ResolutionTooCoarse(_))));
    }

    #[test]
    fn constant_field_has_flat_decay() {
        let l = Lattice::<f64>::new(vec![-1.0, -1.0], vec![0.01, 0.01], vec![201, 201]).unwrap();
        let f = SampledField::sample(&l, "const", |_| 3.0);
        let r = check_kernel_decay(&f, 0.05, 0.5, 8).unwrap();
        assert!(r.slope.abs() < 1e-12 && !r.pass);
        let g = SampledField::sample(&l, "inverse", |x| 1.0 / (x[0] * x[0] + x[1] * x[1]).sqrt().max(1e-3));
        let r = check_kernel_decay(&g, 0.05, 0.5, 8).unwrap();
        assert!((r.slope + 1.0).abs() < 0.05 && r.pass, "{}", r.slope);
        assert!(matches!(check_kernel_decay(&g, 0.05, 0.5, 2), Err(Error::DegenerateFit(_))));
    }
}
