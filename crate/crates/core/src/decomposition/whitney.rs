//! Selection of pairwise disjoint cubes `S ∈ R_0` controlling the density of
//! a weighted family of cubes `(Q, λ_Q)`.

use std::collections::HashSet;

use serde::Serialize;

use super::CheckResult;
use crate::dilation::DilationStructure;
use crate::geometry::Parallelepiped;
use crate::grid::{self, GridCube};
use crate::linalg;
use crate::{lit, Error, Real, Result};

/// Longest τ-parent chain followed from one cube.
const CHAIN_LIMIT: usize = 200;

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyResult<T: Real> {
    pub selected: Vec<GridCube>,
    /// For each input cube, the index into `selected` of the cube whose double
    /// contains it, if any.
    pub assigned: Vec<Option<usize>>,
    /// Indices of input cubes contained in no `S*`.
    pub leftover: Vec<usize>,
    /// Inputs contained in the doubles of selected cubes of different τ.
    pub dimension_mismatches: Vec<usize>,
    pub alpha: T,
    pub c_w: T,
}

/// Overlap volume `|P ∩ Q|` of two realized cubes.
fn overlap_volume<T: Real>(p: &Parallelepiped<T>, q: &Parallelepiped<T>) -> T {
    if !p.interiors_overlap(q) {
        return T::zero();
    }
    if p.contains_parallelepiped(q) {
        return q.volume();
    }
    if q.contains_parallelepiped(p) {
        return p.volume();
    }
    if p.dim() == 2 {
        return polygon_area(&clip_polygon(&ccw_vertices(p), &ccw_vertices(q)));
    }
    // midpoint rule on q's parameter cube
    let n = 24usize;
    let d = q.dim();
    let mut hits = 0usize;
    let mut idx = vec![0usize; d];
    let mut u = vec![T::zero(); d];
    for _ in 0..n.pow(d as u32) {
        for i in 0..d {
            u[i] = (lit::<T>(idx[i] as f64) + lit(0.5)) / lit(n as f64);
        }
        if p.contains_closed(&q.point_at(&u), T::zero()) {
            hits += 1;
        }
        for s in idx.iter_mut() {
            *s += 1;
            if *s < n {
                break;
            }
            *s = 0;
        }
    }
    q.volume() * lit(hits as f64 / n.pow(d as u32) as f64)
}

fn ccw_vertices<T: Real>(p: &Parallelepiped<T>) -> Vec<[T; 2]> {
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut v: Vec<[T; 2]> = corners
        .iter()
        .map(|c| {
            let x = p.point_at(&[lit(c[0]), lit(c[1])]);
            [x[0], x[1]]
        })
        .collect();
    if polygon_signed_area(&v) < T::zero() {
        v.reverse();
    }
    v
}

fn polygon_signed_area<T: Real>(v: &[[T; 2]]) -> T {
    let n = v.len();
    let mut s = T::zero();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        s = s + a[0] * b[1] - a[1] * b[0];
    }
    s / lit(2.0)
}

fn polygon_area<T: Real>(v: &[[T; 2]]) -> T {
    if v.len() < 3 {
        T::zero()
    } else {
        polygon_signed_area(v).abs()
    }
}

/// Sutherland–Hodgman clipping of `subject` by the convex ccw polygon `clip`.
fn clip_polygon<T: Real>(subject: &[[T; 2]], clip: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let side = |p: [T; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        let m = input.len();
        for j in 0..m {
            let (p, q) = (input[j], input[(j + 1) % m]);
            let (sp, sq) = (side(p), side(q));
            if sp >= T::zero() {
                out.push(p);
            }
            if (sp >= T::zero()) != (sq >= T::zero()) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

struct Density<'a, T: Real> {
    dil: &'a DilationStructure<T>,
    cubes: Vec<(Parallelepiped<T>, T)>,
    boxes: Vec<(Vec<T>, Vec<T>)>,
}

impl<'a, T: Real> Density<'a, T> {
    fn new(dil: &'a DilationStructure<T>, items: &[(GridCube, T)]) -> Self {
        let cubes: Vec<_> = items.iter().map(|(q, l)| (grid::realize(dil, q), *l)).collect();
        let boxes = cubes.iter().map(|(p, _)| p.bounding_box()).collect();
        Density { dil, cubes, boxes }
    }

    fn candidates<'b>(&'b self, p: &'b Parallelepiped<T>) -> impl Iterator<Item = usize> + 'b {
        let (lo, hi) = p.bounding_box();
        self.boxes.iter().enumerate().filter_map(move |(k, (a, b))| {
            let meets = (0..lo.len()).all(|i| a[i] < hi[i] && b[i] > lo[i]);
            meets.then_some(k)
        })
    }

    /// `∫_P F` with `F = Σ λ χ_Q / |Q|`.
    fn mass_in(&self, p: &Parallelepiped<T>) -> T {
        self.candidates(p)
            .map(|k| {
                let (q, l) = &self.cubes[k];
                *l * overlap_volume(p, q) / q.volume()
            })
            .sum()
    }

    /// `Σ_{Q ⊂ P*} λ_Q`.
    fn star_sum(&self, p: &GridCube) -> Result<T> {
        let star = grid::expand_cube(self.dil, p, 2)?;
        Ok(self
            .candidates(&star)
            .filter(|&k| star.contains_parallelepiped(&self.cubes[k].0))
            .map(|k| self.cubes[k].1)
            .sum())
    }
}

/// Calderón–Zygmund selection along τ-parent chains. A cube `P ∈ R_0` is a
/// candidate when `avg_P F > α` or `Σ_{Q⊂P*} λ_Q > (C_W/a)·α|P|`, on chains
/// capped at `|P| ≤ α^{-1}Σλ`. Candidates are accepted largest first when
/// they miss every accepted cube, satisfy `Σ_{Q⊂S*} λ_Q ≤ C_W·α|S|`, and
/// more than `α|S|` of not yet consumed mass lies in `S*` (whole cubes) or
/// `S` (partial overlaps); exactly `α|S|` is then consumed, which gives
/// `Σ|S| < α^{-1}Σλ`.
pub fn whitney_decompose<T: Real>(
    dil: &DilationStructure<T>,
    cubes: &[(GridCube, T)],
    alpha: T,
    c_w: T,
) -> Result<WhitneyResult<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::InputInvalid(format!("α must be positive, got {alpha}")));
    }
    for (q, l) in cubes {
        if q.sigma != 0 || q.dim() != dil.dim {
            return Err(Error::InputInvalid(format!("cube {q:?} is not in R_0")));
        }
        if !(*l > T::zero()) {
            return Err(Error::InputInvalid("coefficients must be positive".into()));
        }
    }
    let total: T = cubes.iter().map(|(_, l)| *l).sum();
    let ceiling = total / alpha;
    let density = Density::new(dil, cubes);
    let star_factor = c_w / dil.det_scale * alpha;
    let mut seen: HashSet<GridCube> = HashSet::new();
    let mut candidates: Vec<GridCube> = Vec::new();
    for (q, _) in cubes {
        let mut p = q.clone();
        for step in 0.. {
            if step >= CHAIN_LIMIT {
                return Err(Error::BudgetExceeded(format!("τ-parent chain from {q:?} exceeds {CHAIN_LIMIT} levels")));
            }
            let vol = p.volume(dil);
            if vol > ceiling {
                break;
            }
            if seen.insert(p.clone()) {
                let real = grid::realize(dil, &p);
                if density.mass_in(&real) > alpha * vol || density.star_sum(&p)? > star_factor * vol {
                    candidates.push(p.clone());
                }
            }
            p = grid::tau_parent(dil, &p);
        }
    }
    candidates.sort_by(|a, b| b.tau.cmp(&a.tau).then_with(|| a.index.cmp(&b.index)));
    // Each accepted cube consumes the mass that justifies it, so no unit of
    // λ pays for two cubes and Σ|S| < α^{-1}Σλ.
    let mut remaining: Vec<T> = cubes.iter().map(|(_, l)| *l).collect();
    let mut selected: Vec<GridCube> = Vec::new();
    let mut shapes: Vec<Parallelepiped<T>> = Vec::new();
    for s in candidates {
        let shape = grid::realize(dil, &s);
        if shapes.iter().any(|k| k.interiors_overlap(&shape)) {
            continue;
        }
        let vol = shape.volume();
        let star = shape.expand(lit(2.0));
        let inside: Vec<usize> = density.candidates(&star).filter(|&k| star.contains_parallelepiped(&density.cubes[k].0)).collect();
        let full: T = inside.iter().map(|&k| density.cubes[k].1).sum();
        if full > c_w * alpha * vol {
            continue;
        }
        let pool: Vec<(usize, T)> = density
            .candidates(&shape)
            .map(|k| {
                let (q, l) = &density.cubes[k];
                let avail = if star.contains_parallelepiped(q) {
                    remaining[k]
                } else {
                    (*l * overlap_volume(&shape, q) / q.volume()).min(remaining[k])
                };
                (k, avail)
            })
            .filter(|(_, m)| *m > T::zero())
            .collect();
        let available: T = pool.iter().map(|(_, m)| *m).sum();
        let need = alpha * vol;
        if !(available > need) {
            continue;
        }
        let share = need / available;
        for (k, m) in pool {
            remaining[k] = remaining[k] - m * share;
        }
        selected.push(s);
        shapes.push(shape);
    }
    let stars: Vec<Parallelepiped<T>> = shapes.iter().map(|s| s.expand(lit(2.0))).collect();
    let mut assigned = Vec::with_capacity(cubes.len());
    let mut leftover = Vec::new();
    let mut dimension_mismatches = Vec::new();
    for (k, (q, _)) in cubes.iter().enumerate() {
        let hits: Vec<usize> = (0..selected.len()).filter(|&i| grid::cube_contains(&stars[i], dil, q)).collect();
        if hits.is_empty() {
            leftover.push(k);
            assigned.push(None);
            continue;
        }
        if hits.iter().any(|&i| selected[i].tau != selected[hits[0]].tau) {
            dimension_mismatches.push(k);
        }
        let best = hits
            .iter()
            .copied()
            .min_by(|&a, &b| selected[a].tau.cmp(&selected[b].tau).then_with(|| selected[a].index.cmp(&selected[b].index)))
            .expect("non-empty");
        assigned.push(Some(best));
    }
    Ok(WhitneyResult { selected, assigned, leftover, dimension_mismatches, alpha, c_w })
}

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyReport {
    pub disjoint: CheckResult,
    pub condition1: CheckResult,
    pub condition2: CheckResult,
    pub condition3: CheckResult,
}

impl WhitneyReport {
    pub fn all_pass(&self) -> bool {
        self.disjoint.pass && self.condition1.pass && self.condition2.pass && self.condition3.pass
    }
}

/// `‖Σ λ_Q χ_Q/|Q|‖_∞` for a family of cubes.
///
/// Exact when any two cubes with overlapping interiors are nested (the
/// maximum then sits on the smallest cube of a chain). Otherwise, in `d = 2`
/// the value is taken at points just off every vertex of the arrangement,
/// which meets every cell; for `d ≥ 3` it falls back to a fixed sample of
/// points in each cube.
pub fn max_density<T: Real>(dil: &DilationStructure<T>, cubes: &[(GridCube, T)]) -> T {
    let shapes: Vec<Parallelepiped<T>> = cubes.iter().map(|(q, _)| grid::realize(dil, q)).collect();
    let weights: Vec<T> = cubes.iter().zip(&shapes).map(|((_, l), s)| *l / s.volume()).collect();
    let n = shapes.len();
    if n == 0 {
        return T::zero();
    }
    let mut nested = true;
    let mut containers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if cubes[i].0 == cubes[j].0 || shapes[j].contains_parallelepiped(&shapes[i]) {
                containers[i].push(j);
            } else if j > i && shapes[i].interiors_overlap(&shapes[j]) && !shapes[i].contains_parallelepiped(&shapes[j]) {
                nested = false;
            }
        }
    }
    let value_at = |x: &[T]| -> T {
        shapes.iter().zip(&weights).filter(|(s, _)| s.contains_half_open(x)).map(|(_, w)| *w).sum()
    };
    if nested {
        return (0..n).map(|i| weights[i] + containers[i].iter().map(|&j| weights[j]).sum::<T>()).fold(T::zero(), T::max);
    }
    let mut best = T::zero();
    if dil.dim == 2 {
        let min_diam = shapes.iter().map(|s| s.diameter()).fold(T::infinity(), T::min);
        let eps = min_diam * lit(1e-7);
        let mut points: Vec<Vec<T>> = shapes.iter().flat_map(|s| s.vertices()).collect();
        let edges: Vec<([T; 2], [T; 2])> = shapes
            .iter()
            .flat_map(|s| {
                let v = ccw_vertices(s);
                (0..4).map(move |i| (v[i], v[(i + 1) % 4])).collect::<Vec<_>>()
            })
            .collect();
        for a in 0..edges.len() {
            for b in a + 1..edges.len() {
                if let Some(p) = segment_intersection(edges[a], edges[b]) {
                    points.push(vec![p[0], p[1]]);
                }
            }
        }
        for p in &points {
            for k in 0..16 {
                let th = lit::<T>(k as f64 * std::f64::consts::TAU / 16.0 + 0.1);
                best = best.max(value_at(&[p[0] + eps * th.cos(), p[1] + eps * th.sin()]));
            }
        }
    } else {
        let grid_n = 8usize;
        let d = dil.dim;
        for s in &shapes {
            let mut idx = vec![0usize; d];
            for _ in 0..grid_n.pow(d as u32) {
                let u: Vec<T> = idx.iter().map(|&i| (lit::<T>(i as f64) + lit(0.5)) / lit(grid_n as f64)).collect();
                best = best.max(value_at(&s.point_at(&u)));
                for v in idx.iter_mut() {
                    *v += 1;
                    if *v < grid_n {
                        break;
                    }
                    *v = 0;
                }
            }
        }
    }
    best
}

fn segment_intersection<T: Real>(a: ([T; 2], [T; 2]), b: ([T; 2], [T; 2])) -> Option<[T; 2]> {
    let r = [a.1[0] - a.0[0], a.1[1] - a.0[1]];
    let s = [b.1[0] - b.0[0], b.1[1] - b.0[1]];
    let den = r[0] * s[1] - r[1] * s[0];
    if den.abs() <= T::epsilon() * linalg::norm(&r) * linalg::norm(&s) {
        return None;
    }
    let w = [b.0[0] - a.0[0], b.0[1] - a.0[1]];
    let t = (w[0] * s[1] - w[1] * s[0]) / den;
    let u = (w[0] * r[1] - w[1] * r[0]) / den;
    let (zero, one) = (T::zero(), T::one());
    (t >= zero && t <= one && u >= zero && u <= one).then(|| [a.0[0] + t * r[0], a.0[1] + t * r[1]])
}

/// Re-checks disjointness and the three selection conditions.
pub fn verify_whitney<T: Real>(
    dil: &DilationStructure<T>,
    res: &WhitneyResult<T>,
    cubes: &[(GridCube, T)],
    alpha: T,
    c_w: T,
) -> WhitneyReport {
    let shapes: Vec<Parallelepiped<T>> = res.selected.iter().map(|s| grid::realize(dil, s)).collect();
    let mut disjoint = CheckResult::vacuous();
    'outer: for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            if shapes[i].interiors_overlap(&shapes[j]) {
                disjoint = CheckResult::from_ratio(
                    f64::INFINITY,
                    Some(format!("{:?} overlaps {:?}", res.selected[i], res.selected[j])),
                );
                break 'outer;
            }
        }
    }
    let total: T = cubes.iter().map(|(_, l)| *l).sum();
    let mut c1 = CheckResult::vacuous();
    for (s, shape) in res.selected.iter().zip(&shapes) {
        let star = shape.expand(lit(2.0));
        let sum: T = cubes.iter().filter(|(q, _)| grid::cube_contains(&star, dil, q)).map(|(_, l)| *l).sum();
        let ratio = (sum / (c_w * alpha * shape.volume())).to_f64_lossy();
        if ratio > c1.worst_ratio {
            c1 = CheckResult::from_ratio(ratio, Some(format!("{s:?}")));
        }
    }
    let sum_s: T = shapes.iter().map(|s| s.volume()).sum();
    let c2 = if cubes.is_empty() {
        CheckResult::vacuous()
    } else {
        CheckResult::from_ratio((sum_s * alpha / total).to_f64_lossy(), Some(format!("Σ|S| = {sum_s}")))
    };
    let stars: Vec<Parallelepiped<T>> = shapes.iter().map(|s| s.expand(lit(2.0))).collect();
    let left: Vec<(GridCube, T)> = cubes
        .iter()
        .filter(|(q, _)| !stars.iter().any(|st| grid::cube_contains(st, dil, q)))
        .cloned()
        .collect();
    let c3 = if left.is_empty() {
        CheckResult::vacuous()
    } else {
        let m = max_density(dil, &left);
        CheckResult::from_ratio((m / alpha).to_f64_lossy(), Some(format!("sup of leftover density = {m}")))
    };
    WhitneyReport { disjoint, condition1: c1, condition2: c2, condition3: c3 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::validate_rows;

    fn diag24() -> DilationStructure<f64> {
        validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap()
    }

    #[test]
    fn single_heavy_cube_selects_itself() {
        let d = diag24();
        let q = GridCube::new(0, -2, vec![3, 1]);
        let vol = q.volume(&d);
        let res = whitney_decompose(&d, &[(q.clone(), 2.0 * vol)], 1.0, 16.0).unwrap();
        // the parent has density α/4, so the chain stops at Q itself
        assert_eq!(res.selected, vec![q]);
        assert!(verify_whitney(&d, &res, &[(res.selected[0].clone(), 2.0 * vol)], 1.0, 16.0).all_pass());
    }

    #[test]
    fn sparse_light_cubes_are_all_leftover() {
        let d = diag24();
        let cubes: Vec<_> = (0..5).map(|i| (GridCube::new(0, -1, vec![4 * i, 0]), 1e-3 / 8.0)).collect();
        let res = whitney_decompose(&d, &cubes, 1.0, 16.0).unwrap();
        assert!(res.selected.is_empty());
        assert_eq!(res.leftover.len(), 5);
        assert!(verify_whitney(&d, &res, &cubes, 1.0, 16.0).all_pass());
    }

    #[test]
    fn two_identical_cubes_share_one_selection() {
        let d = diag24();
        let q = GridCube::new(0, 0, vec![0, 0]);
        let cubes = vec![(q.clone(), 1.0), (q.clone(), 1.0)];
        let res = whitney_decompose(&d, &cubes, 1.0, 16.0).unwrap();
        assert_eq!(res.selected.len(), 1);
        assert_eq!(res.assigned, vec![Some(0), Some(0)]);
        let report = verify_whitney(&d, &res, &cubes, 1.0, 16.0);
        assert!(report.all_pass(), "{report:?}");
        assert!(report.condition2.worst_ratio <= 1.0);
    }

    #[test]
    fn small_selection_fails_condition_one() {
        let d = diag24();
        let q = GridCube::new(0, 0, vec![0, 0]);
        let cubes = vec![(q.clone(), 100.0)];
        let fake = WhitneyResult {
            selected: vec![GridCube::new(0, -3, vec![0, 0])],
            assigned: vec![None],
            leftover: vec![0],
            dimension_mismatches: vec![],
            alpha: 1.0,
            c_w: 16.0,
        };
        let report = verify_whitney(&d, &fake, &cubes, 1.0, 16.0);
        assert!(report.condition3.worst_ratio > 1.0);
        let fake2 = WhitneyResult { selected: vec![q.clone()], ..fake };
        let report = verify_whitney(&d, &fake2, &cubes, 1.0, 16.0);
        assert!(!report.condition1.pass);
        assert!(report.condition1.witness.unwrap().contains("tau: 0"));
    }

    #[test]
    fn empty_input_passes() {
        let d = diag24();
        let res = whitney_decompose::<f64>(&d, &[], 1.0, 16.0).unwrap();
        assert!(verify_whitney(&d, &res, &[], 1.0, 16.0).all_pass());
    }

    #[test]
    fn polygon_overlap_matches_box_formula() {
        let p = Parallelepiped::<f64>::from_box(&[0.0, 0.0], &[2.0, 1.0]);
        let q = Parallelepiped::from_box(&[1.5, 0.5], &[3.0, 3.0]);
        assert!((overlap_volume(&p, &q) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn max_density_of_overlapping_family() {
        let d = validate_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let a = GridCube::new(0, 0, vec![0, 0]);
        let b = GridCube::new(0, 1, vec![0, 0]);
        let fam = vec![(a.clone(), 1.0), (b.clone(), 4.0)];
        // the τ=1 cube is a parallelogram that contains the centre of `a`
        let m = max_density(&d, &fam);
        assert!((m - 2.0f64).abs() < 1e-9, "{m}");
    }
}
