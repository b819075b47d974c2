//! Double induction over `(τ, σ)` producing the exceptional set `E` and the
//! levels `κ(Q)`, plus a verifier for the four output conditions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng as _;
use serde::Serialize;

use super::raster::{raster_for_sigma, SurfaceTendril, TendrilRaster, TendrilReach};
use super::{CheckResult, ExceptionalSet, MeasureSupport, Primitive};
use crate::dilation::DilationStructure;
use crate::geometry::Parallelepiped;
use crate::grid::{self, GridCube};
use crate::{lit, rng, Error, Real, Result};

/// Slack, in parameter units, when testing `Q ⊂ q*` by pulled-back vertices.
const CONTAIN_TOL: f64 = 1e-9;

#[derive(Clone)]
pub enum TendrilModel<T: Real> {
    /// `q** ⊕ A^{τ+2}B₂`.
    Ball,
    /// Expansion of `q` plus the dilated supports up to the level set by
    /// `reach`, rasterised with `refinement` cells across the thinnest width
    /// of the core.
    Surface { support: Arc<dyn MeasureSupport<T>>, refinement: usize, reach: TendrilReach },
}

impl<T: Real> std::fmt::Debug for TendrilModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TendrilModel::Ball => write!(f, "Ball"),
            TendrilModel::Surface { refinement, reach, .. } => {
                write!(f, "Surface {{ refinement: {refinement}, reach: {reach:?} }}")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StoppingConfig<T: Real> {
    pub model: TendrilModel<T>,
    /// Deepest `−σ` explored at one `τ`.
    pub max_sigma_depth: u32,
    /// Largest `τ₀ − min τ(Q)`.
    pub max_tau_span: u32,
}

impl<T: Real> Default for StoppingConfig<T> {
    fn default() -> Self {
        StoppingConfig { model: TendrilModel::Ball, max_sigma_depth: 256, max_tau_span: 4096 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Class {
    C1,
    C2,
}

/// One line of the selection trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub sigma: i32,
    pub tau: i32,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cube: Option<GridCube>,
    /// Index of the input cube concerned, for classification events.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<usize>,
    /// `Λ_{σ,τ}(q)` for selections, the new `κ` for classifications.
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StoppingResult<T: Real> {
    pub exceptional: ExceptionalSet<T>,
    pub kappa: Vec<i32>,
    pub classification: Vec<Class>,
    /// Selected `q` a C₁ cube was assigned to.
    pub assigned_q: Vec<Option<GridCube>>,
    /// Index of the `S` with `Q ⊂ S*` used for C₂ and for the repair pass.
    pub assigned_s: Vec<usize>,
    /// `(τ, σ)` of the step that classified each input (`σ = i32::MIN` for C₂).
    pub classified_at: Vec<(i32, i32)>,
    pub selected: Vec<(GridCube, T)>,
    pub trace: Vec<TraceEvent>,
    pub tau0: i32,
    /// Inputs whose containing doubles have different τ.
    pub dimension_mismatches: Vec<usize>,
}

impl<T: Real> StoppingResult<T> {
    /// Trace as line-delimited JSON.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Integer indices `n` with `Q ⊂ q*` for `q = 2^σA^τ([0,1]^d + n)`, given the
/// vertices of `Q` pulled back by `(2^σA^τ)^{-1}`.
fn containing_stars<T: Real>(pulled: &[Vec<T>]) -> Vec<Vec<i64>> {
    let d = pulled[0].len();
    let tol = lit::<T>(CONTAIN_TOL);
    let mut ranges = Vec::with_capacity(d);
    for i in 0..d {
        let lo = pulled.iter().map(|v| v[i]).fold(T::infinity(), T::min);
        let hi = pulled.iter().map(|v| v[i]).fold(T::neg_infinity(), T::max);
        let a = (hi - lit(1.5) - tol).ceil().to_i64();
        let b = (lo + lit(0.5) + tol).floor().to_i64();
        match (a, b) {
            (Some(a), Some(b)) if a <= b => ranges.push((a, b)),
            _ => return Vec::new(),
        }
    }
    let mut out = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(idx.clone());
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            idx[k] += 1;
            if idx[k] <= ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
            k += 1;
        }
    }
}

struct Inputs<T: Real> {
    vertices: Vec<Vec<Vec<T>>>,
    diam: Vec<T>,
}

impl<T: Real> Inputs<T> {
    fn new(dil: &DilationStructure<T>, cubes: &[(GridCube, T)]) -> Self {
        let shapes: Vec<Parallelepiped<T>> = cubes.iter().map(|(q, _)| grid::realize(dil, q)).collect();
        Inputs { vertices: shapes.iter().map(|s| s.vertices()).collect(), diam: shapes.iter().map(|s| s.diameter()).collect() }
    }

    fn stars(&self, k: usize, inv: &crate::linalg::Mat<T>) -> Vec<Vec<i64>> {
        let pulled: Vec<Vec<T>> = self.vertices[k].iter().map(|v| inv.apply(v)).collect();
        containing_stars(&pulled)
    }
}

fn level_inverse<T: Real>(dil: &DilationStructure<T>, sigma: i32, tau: i32) -> crate::linalg::Mat<T> {
    dil.power(-tau).scale(lit::<T>(2.0).powi(-sigma))
}

/// Whether some `Q` of diameter `min_diam` can still fit in a `q*` at `(σ, τ)`.
fn level_can_fit<T: Real>(dil: &DilationStructure<T>, sigma: i32, tau: i32, min_diam: T) -> bool {
    lit::<T>(2.0).powi(sigma + 1) * dil.cube_diameter(tau) >= min_diam * (T::one() - lit(1e-9))
}

/// Indices of `S` whose double contains `Q`, sorted by `(τ(S), index)`.
fn containing_doubles<T: Real>(dil: &DilationStructure<T>, s_list: &[GridCube], q: &GridCube) -> Vec<usize> {
    let mut hits: Vec<usize> = s_list
        .iter()
        .enumerate()
        .filter(|(_, s)| grid::cube_contains(&grid::realize(dil, s).expand(lit(2.0)), dil, q))
        .map(|(i, _)| i)
        .collect();
    hits.sort_by(|&a, &b| s_list[a].tau.cmp(&s_list[b].tau).then_with(|| s_list[a].index.cmp(&s_list[b].index)));
    hits
}

/// Builds `E`, `κ` and the selection trace.
pub fn stopping_time<T: Real>(
    dil: &DilationStructure<T>,
    s_list: &[GridCube],
    cubes: &[(GridCube, T)],
    alpha: T,
    config: &StoppingConfig<T>,
) -> Result<StoppingResult<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::InputInvalid(format!("α must be positive, got {alpha}")));
    }
    let n = cubes.len();
    let mut assigned_s = Vec::with_capacity(n);
    let mut dimension_mismatches = Vec::new();
    let mut trace = Vec::new();
    for (k, (q, l)) in cubes.iter().enumerate() {
        if q.sigma != 0 || !(*l > T::zero()) {
            return Err(Error::InputInvalid(format!("input {k} must be an R_0 cube with λ > 0")));
        }
        let hits = containing_doubles(dil, s_list, q);
        // the tallest S decides κ, so condition (iii) holds for all of them
        let Some(first) = hits.iter().copied().max_by(|&a, &b| s_list[a].tau.cmp(&s_list[b].tau).then(b.cmp(&a))) else {
            return Err(Error::InputInvalid(format!("cube {q:?} lies in no S*")));
        };
        if hits.iter().any(|&i| s_list[i].tau != s_list[first].tau) {
            dimension_mismatches.push(k);
            trace.push(TraceEvent {
                sigma: 0,
                tau: q.tau,
                action: "dimension-mismatch".into(),
                cube: Some(q.clone()),
                input: Some(k),
                value: hits.len() as f64,
            });
        }
        assigned_s.push(first);
    }

    let total: T = cubes.iter().map(|(_, l)| *l).sum();
    let tau_max = cubes.iter().map(|(q, _)| q.tau).max().unwrap_or(0);
    let tau_min = cubes.iter().map(|(q, _)| q.tau).min().unwrap_or(0);
    let mut tau0 = tau_max + 1;
    while !(alpha * dil.volume(tau0) > total) {
        tau0 += 1;
        if (tau0 - tau_min) as u32 > config.max_tau_span {
            return Err(Error::BudgetExceeded(format!("τ₀ beyond span {}", config.max_tau_span)));
        }
    }

    let inputs = Inputs::new(dil, cubes);
    let mut live = vec![true; n];
    let mut kappa = vec![0i32; n];
    let mut classification = vec![Class::C2; n];
    let mut assigned_q = vec![None; n];
    let mut classified_at = vec![(0, 0); n];
    let mut selected: Vec<(GridCube, T)> = Vec::new();

    if n > 0 {
        for tau in (tau_min..tau0).rev() {
            for sigma in (i32::MIN..=0).rev() {
                let min_diam = (0..n).filter(|&k| live[k]).map(|k| inputs.diam[k]).fold(T::infinity(), T::min);
                if min_diam == T::infinity() || !level_can_fit(dil, sigma, tau, min_diam) {
                    break;
                }
                if sigma.unsigned_abs() > config.max_sigma_depth {
                    return Err(Error::BudgetExceeded(format!("σ-descent below −{}", config.max_sigma_depth)));
                }
                let inv = level_inverse(dil, sigma, tau);
                let mut lambda: BTreeMap<Vec<i64>, T> = BTreeMap::new();
                let mut stars: Vec<(usize, Vec<Vec<i64>>)> = Vec::new();
                for k in (0..n).filter(|&k| live[k]) {
                    let st = inputs.stars(k, &inv);
                    for idx in &st {
                        let e = lambda.entry(idx.clone()).or_insert(T::zero());
                        *e = *e + cubes[k].1;
                    }
                    if !st.is_empty() {
                        stars.push((k, st));
                    }
                }
                let threshold = alpha * lit::<T>(2.0).powi(sigma) * dil.volume(tau);
                let chosen: BTreeSet<Vec<i64>> =
                    lambda.iter().filter(|(_, &v)| v > threshold).map(|(i, _)| i.clone()).collect();
                for idx in &chosen {
                    let q = GridCube::new(sigma, tau, idx.clone());
                    let v = lambda[idx];
                    trace.push(TraceEvent {
                        sigma,
                        tau,
                        action: "select".into(),
                        cube: Some(q.clone()),
                        input: None,
                        value: v.to_f64_lossy(),
                    });
                    selected.push((q, v));
                }
                if chosen.is_empty() {
                    continue;
                }
                for (k, st) in stars {
                    // stars come out of the odometer unsorted; take the lexicographically least
                    let Some(best) = st.iter().filter(|i| chosen.contains(*i)).min() else { continue };
                    let q = GridCube::new(sigma, tau, best.clone());
                    live[k] = false;
                    kappa[k] = tau + 1;
                    classification[k] = Class::C1;
                    classified_at[k] = (tau, sigma);
                    trace.push(TraceEvent {
                        sigma,
                        tau,
                        action: "classify-c1".into(),
                        cube: Some(q.clone()),
                        input: Some(k),
                        value: (tau + 1) as f64,
                    });
                    assigned_q[k] = Some(q);
                }
            }
            for k in 0..n {
                if live[k] && cubes[k].0.tau == tau {
                    let s = &s_list[assigned_s[k]];
                    live[k] = false;
                    kappa[k] = s.tau + 1;
                    classification[k] = Class::C2;
                    classified_at[k] = (tau, i32::MIN);
                    trace.push(TraceEvent {
                        sigma: i32::MIN,
                        tau,
                        action: "classify-c2".into(),
                        cube: Some(s.clone()),
                        input: Some(k),
                        value: (s.tau + 1) as f64,
                    });
                }
            }
        }
    }

    for k in 0..n {
        let need = s_list[assigned_s[k]].tau + 1;
        if kappa[k] < need {
            trace.push(TraceEvent {
                sigma: 0,
                tau: need - 1,
                action: "repair".into(),
                cube: Some(cubes[k].0.clone()),
                input: Some(k),
                value: need as f64,
            });
            kappa[k] = need;
        }
    }

    let mut primitives = Vec::with_capacity(selected.len() + s_list.len());
    let mut rasters: HashMap<i32, Arc<TendrilRaster<T>>> = HashMap::new();
    for (q, _) in &selected {
        let p = match &config.model {
            TendrilModel::Ball => Primitive::BallTendril(grid::tendril_of(dil, q)?),
            TendrilModel::Surface { support, refinement, reach } => {
                if !dil.is_normalized() {
                    return Err(Error::NotNormalized(dil.inverse.op_norm().to_f64_lossy()));
                }
                let raster = match rasters.get(&q.sigma) {
                    Some(r) => r.clone(),
                    None => {
                        let r = Arc::new(raster_for_sigma(dil, support.as_ref(), q.sigma, *refinement, *reach)?);
                        rasters.insert(q.sigma, r.clone());
                        r
                    }
                };
                Primitive::SurfaceTendril(SurfaceTendril::place(dil, q, raster, *reach)?)
            }
        };
        primitives.push(p);
    }
    for s in s_list {
        primitives.push(Primitive::Quadruple { base: s.clone(), shape: grid::expand_cube(dil, s, 4)? });
    }

    Ok(StoppingResult {
        exceptional: ExceptionalSet::new(primitives),
        kappa,
        classification,
        assigned_q,
        assigned_s,
        classified_at,
        selected,
        trace,
        tau0,
        dimension_mismatches,
    })
}

/// Recomputes `Λ_{σ,τ}(q)` for every selection from scratch: the sum of
/// `λ_Q` over inputs with `Q ⊂ q*` that were still unclassified at that step.
pub fn recompute_selection_sums<T: Real>(
    dil: &DilationStructure<T>,
    res: &StoppingResult<T>,
    cubes: &[(GridCube, T)],
) -> Vec<T> {
    let inputs = Inputs::new(dil, cubes);
    res.selected
        .iter()
        .map(|(q, _)| {
            let inv = level_inverse(dil, q.sigma, q.tau);
            let mut sum = T::zero();
            for k in 0..cubes.len() {
                let (tc, sc) = res.classified_at[k];
                let live = tc < q.tau || (tc == q.tau && sc <= q.sigma);
                if live && inputs.stars(k, &inv).contains(&q.index) {
                    sum = sum + cubes[k].1;
                }
            }
            sum
        })
        .collect()
}

/// Selected cubes whose dyadic parent (σ < 0) or τ-parent (σ = 0) was also
/// selected.
pub fn selected_with_selected_parent<T: Real>(dil: &DilationStructure<T>, res: &StoppingResult<T>) -> Vec<GridCube> {
    let chosen: BTreeSet<&GridCube> = res.selected.iter().map(|(q, _)| q).collect();
    res.selected
        .iter()
        .filter(|(q, _)| {
            let parent = if q.sigma < 0 { q.dyadic_parent() } else { grid::tau_parent(dil, q) };
            chosen.contains(&parent)
        })
        .map(|(q, _)| q.clone())
        .collect()
}

pub struct StoppingChecks<'a, T: Real> {
    pub c_i: T,
    pub c_iv: T,
    pub samples: usize,
    pub seed: u64,
    pub support: Option<&'a dyn MeasureSupport<T>>,
}

impl<'a, T: Real> StoppingChecks<'a, T> {
    pub fn new(support: Option<&'a dyn MeasureSupport<T>>) -> Self {
        StoppingChecks { c_i: lit(100.0), c_iv: lit(32.0), samples: 1000, seed: 0, support }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StoppingReport {
    pub volume: CheckResult,
    pub support: CheckResult,
    pub levels: CheckResult,
    pub stopping: CheckResult,
}

impl StoppingReport {
    pub fn all_pass(&self) -> bool {
        self.volume.pass && self.support.pass && self.levels.pass && self.stopping.pass
    }
}

/// Checks (i) volume, (ii) support, (iii) levels against `S`, (iv) the
/// stopping inequality.
pub fn verify_stopping<T: Real>(
    dil: &DilationStructure<T>,
    res: &StoppingResult<T>,
    s_list: &[GridCube],
    cubes: &[(GridCube, T)],
    alpha: T,
    checks: &StoppingChecks<'_, T>,
) -> StoppingReport {
    let total: T = cubes.iter().map(|(_, l)| *l).sum();
    let sum_s: T = s_list.iter().map(|s| s.volume(dil)).sum();

    let vol = res.exceptional.volume_bound();
    let allowed = checks.c_i * (total / alpha + sum_s);
    let volume = if allowed > T::zero() {
        CheckResult::from_ratio((vol / allowed).to_f64_lossy(), Some(format!("Σ|primitive| = {vol}, allowed {allowed}")))
    } else {
        CheckResult::from_ratio(if vol > T::zero() { f64::INFINITY } else { 0.0 }, None)
    };

    let support = match checks.support {
        None => CheckResult { pass: true, worst_ratio: 0.0, witness: Some("skipped: no support supplied".into()) },
        Some(sup) => {
            let mut misses = 0usize;
            let mut tried = 0usize;
            let mut witness = None;
            for (k, (q, _)) in cubes.iter().enumerate() {
                let shape = grid::realize(dil, q);
                let mut rng = rng::substream(checks.seed, k as u64);
                for j in [res.kappa[k] - 1, res.kappa[k] - 3, res.kappa[k] - 8] {
                    let aj = dil.power(j);
                    for _ in 0..checks.samples {
                        let u: Vec<T> = (0..dil.dim).map(|_| lit::<T>(rng.gen::<f64>())).collect();
                        let x = shape.point_at(&u);
                        let y = aj.apply(&sup.sample_point(&mut rng));
                        let z: Vec<T> = x.iter().zip(&y).map(|(&a, &b)| a + b).collect();
                        tried += 1;
                        if !res.exceptional.contains(&z) {
                            misses += 1;
                            if witness.is_none() {
                                witness = Some(format!("input {k} ({q:?}), j = {j}, point {z:?} outside E"));
                            }
                        }
                    }
                }
            }
            CheckResult {
                pass: misses == 0,
                worst_ratio: if tried == 0 { 0.0 } else { misses as f64 / tried as f64 },
                witness,
            }
        }
    };

    let mut levels = CheckResult::vacuous();
    for (k, (q, _)) in cubes.iter().enumerate() {
        for i in containing_doubles(dil, s_list, q) {
            if res.kappa[k] <= s_list[i].tau {
                levels = CheckResult::from_ratio(
                    f64::INFINITY,
                    Some(format!("input {k}: κ = {} ≤ τ(S) = {}", res.kappa[k], s_list[i].tau)),
                );
            }
        }
    }

    let stopping = check_stopping_inequality(dil, res, cubes, alpha, checks.c_iv);
    StoppingReport { volume, support, levels, stopping }
}

/// `Σ_{Q⊂q*, κ(Q)≤τ} λ_Q ≤ C α 2^σ a^τ` over every level from `τ₀` down and
/// every `q` whose double holds at least one input.
fn check_stopping_inequality<T: Real>(
    dil: &DilationStructure<T>,
    res: &StoppingResult<T>,
    cubes: &[(GridCube, T)],
    alpha: T,
    c_iv: T,
) -> CheckResult {
    let mut out = CheckResult::vacuous();
    if cubes.is_empty() {
        return out;
    }
    let inputs = Inputs::new(dil, cubes);
    let tau_min = cubes.iter().map(|(q, _)| q.tau).min().unwrap_or(0) - 2;
    let top = res.tau0.max(res.kappa.iter().copied().max().unwrap_or(res.tau0));
    for tau in (tau_min..=top).rev() {
        let counted: Vec<usize> = (0..cubes.len()).filter(|&k| res.kappa[k] <= tau).collect();
        if counted.is_empty() {
            continue;
        }
        let min_diam = counted.iter().map(|&k| inputs.diam[k]).fold(T::infinity(), T::min);
        for sigma in (i32::MIN..=0).rev() {
            if !level_can_fit(dil, sigma, tau, min_diam) || sigma < -4096 {
                break;
            }
            let inv = level_inverse(dil, sigma, tau);
            let mut lambda: BTreeMap<Vec<i64>, T> = BTreeMap::new();
            for &k in &counted {
                for idx in inputs.stars(k, &inv) {
                    let e = lambda.entry(idx).or_insert(T::zero());
                    *e = *e + cubes[k].1;
                }
            }
            let bound = c_iv * alpha * lit::<T>(2.0).powi(sigma) * dil.volume(tau);
            for (idx, v) in lambda {
                let ratio = (v / bound).to_f64_lossy();
                if ratio > out.worst_ratio {
                    out = CheckResult::from_ratio(ratio, Some(format!("q = (σ={sigma}, τ={tau}, n={idx:?}), sum = {v}")));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::validate_rows;

    fn diag24() -> DilationStructure<f64> {
        validate_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap()
    }

    #[test]
    fn star_inversion_matches_containment() {
        let d = diag24();
        let q = GridCube::new(0, -2, vec![5, -3]);
        for sigma in [0, -1, -2] {
            for tau in [-2, -1, 0] {
                let inv = level_inverse(&d, sigma, tau);
                let verts = grid::realize_cube(&d, &q);
                let pulled: Vec<Vec<f64>> = verts.iter().map(|v| inv.apply(v)).collect();
                let found = containing_stars(&pulled);
                let (lo, hi) = grid::realize(&d, &q).expand(3.0).bounding_box();
                for c in grid::enumerate_cover(&d, sigma, tau, &lo, &hi).unwrap() {
                    let star = grid::expand_cube(&d, &c, 2).unwrap();
                    assert_eq!(grid::cube_contains(&star, &d, &q), found.contains(&c.index), "{c:?}");
                }
            }
        }
    }

    #[test]
    fn huge_alpha_selects_nothing() {
        let d = diag24();
        let s = GridCube::new(0, 0, vec![0, 0]);
        let cubes = vec![(GridCube::new(0, -1, vec![0, 1]), 1.0), (GridCube::new(0, -2, vec![1, 5]), 2.0)];
        let res = stopping_time(&d, std::slice::from_ref(&s), &cubes, 3e6, &StoppingConfig::default()).unwrap();
        assert!(res.selected.is_empty());
        assert!(res.trace.iter().all(|e| e.action != "select"));
        assert_eq!(res.kappa, vec![1, 1]);
        assert_eq!(res.exceptional.len(), 1);
    }

    #[test]
    fn heavy_cube_selected_at_first_step() {
        let d = diag24();
        let q = GridCube::new(0, -1, vec![0, 0]);
        let s = GridCube::new(0, 0, vec![0, 0]);
        let lambda = 1000.0;
        let alpha = 1.0;
        let res = stopping_time(&d, &[s], &[(q, lambda)], alpha, &StoppingConfig::default()).unwrap();
        // τ₀ is the least τ > −1 with a^τ > 1000, i.e. 4
        assert_eq!(res.tau0, 4);
        let first = &res.trace[0];
        assert_eq!((first.action.as_str(), first.tau), ("select", 3));
        assert_eq!(res.kappa, vec![4]);
        assert_eq!(res.classification, vec![Class::C1]);
    }

    #[test]
    fn repair_raises_kappa_to_level_of_s() {
        let d = diag24();
        // a light cube in the double of a large S: classified C₁ low down, or
        // C₂, and in either case κ must end above τ(S)
        let s = GridCube::new(0, 2, vec![0, 0]);
        let q = GridCube::new(0, -3, vec![1, 1]);
        let heavy = GridCube::new(0, -3, vec![1, 2]);
        let cubes = vec![(q, 0.002), (heavy, 0.01)];
        let res = stopping_time(&d, &[s], &cubes, 1.0, &StoppingConfig::default()).unwrap();
        assert!(res.kappa.iter().all(|&k| k >= 3));
        assert!(res.trace.iter().any(|e| e.action == "repair"));
        let report = verify_stopping(&d, &res, &[GridCube::new(0, 2, vec![0, 0])], &cubes, 1.0, &StoppingChecks::new(None));
        assert!(report.levels.pass);
    }

    #[test]
    fn input_outside_doubles_is_rejected() {
        let d = diag24();
        let s = GridCube::new(0, 0, vec![0, 0]);
        let cubes = vec![(GridCube::new(0, 0, vec![5, 5]), 1.0)];
        assert!(matches!(stopping_time(&d, &[s], &cubes, 1.0, &StoppingConfig::default()), Err(Error::InputInvalid(_))));
    }

    #[test]
    fn empty_input_gives_quadruples() {
        let d = diag24();
        let s = GridCube::new(0, 0, vec![0, 0]);
        let res = stopping_time::<f64>(&d, std::slice::from_ref(&s), &[], 1.0, &StoppingConfig::default()).unwrap();
        assert_eq!(res.exceptional.len(), 1);
        assert!((res.exceptional.volume_bound() - 16.0).abs() < 1e-12);
        let report = verify_stopping(&d, &res, &[s], &[], 1.0, &StoppingChecks::new(None));
        assert!(report.levels.pass && report.stopping.pass);
    }
}
