//! Seeded inputs for the experiments: weighted cube collections and atom
//! families.

use rand::Rng;

use super::config::ExperimentConfig;
use crate::atoms::{make_atom, AtomicSum, Profile};
use crate::dilation::DilationStructure;
use crate::grid::{self, GridCube};
use crate::maximal::Lattice;
use crate::{rng, Error, Result};

/// Between 1 and `max_cubes` cubes of `R_{0,τ}` with `τ` uniform in
/// `[tau_min, tau_max]`, placed uniformly in `[−spread, spread]^d`. The first
/// cube gets density `10^U(2,3)` so the instance always has something to
/// select; the rest get `10^U(−1.5,1.5)`.
pub fn random_cubes(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, rng: &mut rng::Rng) -> Vec<(GridCube, f64)> {
    let a = &cfg.atoms;
    let n = rng.gen_range(1..=cfg.suite.max_cubes.max(1));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let tau = rng.gen_range(a.tau_min..=a.tau_max);
        let x: Vec<f64> = (0..dil.dim).map(|_| rng.gen_range(-a.spread..a.spread)).collect();
        let q = grid::locate(dil, 0, tau, &x);
        let exp = if i == 0 { rng.gen_range(2.0..3.0) } else { rng.gen_range(-1.5..1.5) };
        out.push((q, 10f64.powf(exp) * dil.volume(tau)));
    }
    out
}

/// The explicit atom list as weighted cubes.
pub fn listed_cubes(cfg: &ExperimentConfig) -> Vec<(GridCube, f64)> {
    cfg.atoms.list.iter().map(|a| (GridCube::new(0, a.tau, a.index.clone()), a.lambda)).collect()
}

/// The configured atoms, or `atoms.count` generated ones with `λ ∈ [0.5, 2]`.
pub fn atom_family(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, seed: u64) -> Result<AtomicSum<f64>> {
    let mut rng = rng::seeded(seed);
    let mut f = AtomicSum::new();
    let d = dil.dim;
    if !cfg.atoms.list.is_empty() {
        for (k, a) in cfg.atoms.list.iter().enumerate() {
            let q = GridCube::new(0, a.tau, a.index.clone());
            let profile = Profile { kind: a.profile, axis: Some(a.axis.unwrap_or(k % d)) };
            f.push(make_atom(dil, &q, profile, rng.gen())?, a.lambda)?;
        }
        return Ok(f);
    }
    let a = &cfg.atoms;
    for k in 0..a.count {
        let tau = rng.gen_range(a.tau_min..=a.tau_max);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-a.spread..a.spread)).collect();
        let q = grid::locate(dil, 0, tau, &x);
        let profile = Profile { kind: a.profile, axis: Some(k % d) };
        f.push(make_atom(dil, &q, profile, rng.gen())?, rng.gen_range(0.5..2.0))?;
    }
    Ok(f)
}

/// `count` atoms on the cubes of `R_{0,τ}` touching the origin
/// (indices in `{−1, 0}^d`), so families at different `τ` are dilates of one
/// another in distribution.
pub fn scale_family(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, tau: i32) -> Result<AtomicSum<f64>> {
    let mut rng = rng::substream(cfg.seed, tau as i64 as u64);
    let mut f = AtomicSum::new();
    for k in 0..cfg.atoms.count {
        let index: Vec<i64> = (0..dil.dim).map(|_| rng.gen_range(-1..=0i64)).collect();
        let q = GridCube::new(0, tau, index);
        let profile = Profile { kind: cfg.atoms.profile, axis: Some(k % dil.dim) };
        f.push(make_atom(dil, &q, profile, rng.gen())?, rng.gen_range(0.5..2.0))?;
    }
    Ok(f)
}

/// The configured lattice mapped by `A^τ`, so every scale sees the same
/// number of points per atom. Needs a diagonal `A`.
pub fn covariant_lattice(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, tau: i32) -> Result<Lattice<f64>> {
    let d = dil.dim;
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || dil.matrix[(i, j)] == 0.0));
    if !diagonal {
        return Err(Error::ConfigInvalid("the scale sweep maps the lattice by A^τ and needs a diagonal matrix".into()));
    }
    let base = Lattice::spanning(&cfg.lattice.lo, &cfg.lattice.hi, cfg.lattice.n)?;
    let m = dil.power(tau);
    let factors: Vec<f64> = (0..d).map(|i| m[(i, i)].abs()).collect();
    Ok(base.scaled(&factors))
}
