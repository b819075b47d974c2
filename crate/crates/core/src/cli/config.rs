//! TOML experiment configuration with dotted-key overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atoms::ProfileKind;
use crate::decomposition::TendrilReach;
use crate::dilation::{validate_rows, DilationStructure};
use crate::surface::{CatalogId, GraphSurface, Monomial};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_matrix")]
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// `None` means `ε/8`.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub atoms: AtomConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default = "default_k_range")]
    pub k_range: [i32; 2],
    #[serde(default = "default_s_range")]
    pub s_range: [u32; 2],
    #[serde(default)]
    pub verifier: VerifierConfig,
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub catalog: CatalogId,
    pub height_axis: usize,
    pub chi_radius: f64,
    #[serde(default)]
    pub poly: Vec<Monomial<f64>>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { catalog: CatalogId::CircleArc, height_axis: 0, chi_radius: 0.7, poly: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub tau: i32,
    pub index: Vec<i64>,
    pub lambda: f64,
    #[serde(default = "default_profile")]
    pub profile: ProfileKind,
    #[serde(default)]
    pub axis: Option<usize>,
}

/// Explicit atoms, or a seeded generator when `list` is empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomConfig {
    #[serde(default)]
    pub list: Vec<AtomSpec>,
    pub count: usize,
    pub tau_min: i32,
    pub tau_max: i32,
    /// Generated cubes lie in `[−spread, spread]^d`.
    pub spread: f64,
    pub profile: ProfileKind,
}

impl Default for AtomConfig {
    fn default() -> Self {
        AtomConfig { list: Vec::new(), count: 8, tau_min: -6, tau_max: 0, spread: 2.0, profile: ProfileKind::HaarSplit }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per axis.
    pub n: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { lo: vec![-2.0, -2.0], hi: vec![2.0, 2.0], n: 512 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierConfig {
    pub c_w: f64,
    pub c: f64,
    pub c_iv: f64,
    pub samples: usize,
    /// `ball` or `surface`.
    pub tendril: String,
    pub reach: TendrilReach,
    pub refinement: usize,
    /// Bound for `α·|{Mf>α}\E| / ‖f‖_{H¹_A}` in the full pipeline.
    pub weak_bound: f64,
    /// Largest allowed spread (max/min) of weak-type ratios across scales.
    pub scale_spread: f64,
    /// Constant of the cap checks.
    pub cap_constant: f64,
    /// Smallest accepted exponent gap in the excluded-cap count.
    pub eta_min: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            c_w: 16.0,
            c: 100.0,
            c_iv: 32.0,
            samples: 1000,
            tendril: "surface".into(),
            reach: TendrilReach::Needed,
            refinement: 8,
            weak_bound: 100.0,
            scale_spread: 3.0,
            cap_constant: 64.0,
            eta_min: 0.05,
        }
    }
}

/// Randomised suites: instance counts and the scales of the weak-type run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub instances: usize,
    pub mutations: usize,
    pub max_cubes: usize,
    pub scales: Vec<i32>,
    /// `τ` range for the diameter fit.
    pub fit_range: [i32; 2],
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { instances: 200, mutations: 20, max_cubes: 50, scales: vec![0, -2, -4, -6], fit_range: [-40, -10] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Scale index of the cap; 0 with the whole surface as one cap.
    pub s: u32,
    pub spacing: f64,
    pub nodes: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { s: 0, spacing: 0.004, nodes: 2000, r_min: 0.03, r_max: 0.3, radii: 8 }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_matrix() -> Vec<Vec<f64>> {
    vec![vec![2.0, 0.0], vec![0.0, 4.0]]
}
fn default_eps() -> f64 {
    0.25
}
fn default_alpha() -> f64 {
    1.0
}
fn default_k_range() -> [i32; 2] {
    [-8, 8]
}
fn default_s_range() -> [u32; 2] {
    [4, 16]
}
fn default_profile() -> ProfileKind {
    ProfileKind::HaarSplit
}

impl ExperimentConfig {
    /// Parses a TOML file and applies `key=value` overrides (dotted keys,
    /// values parsed as TOML with a bare-string fallback).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps = {} must lie in (0, 1)", self.eps));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if self.k_range[0] > self.k_range[1] || self.s_range[0] > self.s_range[1] {
            return bad("k_range and s_range must be ascending".into());
        }
        if self.atoms.tau_min > self.atoms.tau_max {
            return bad("atoms.tau_min exceeds atoms.tau_max".into());
        }
        if self.suite.fit_range[0] > self.suite.fit_range[1] {
            return bad("suite.fit_range must be ascending".into());
        }
        if !matches!(self.verifier.tendril.as_str(), "ball" | "surface") {
            return bad(format!("verifier.tendril must be `ball` or `surface`, got `{}`", self.verifier.tendril));
        }
        let d = self.matrix.len();
        if self.lattice.lo.len() != d || self.lattice.hi.len() != d || self.lattice.n < 2 {
            return bad("lattice must match the matrix dimension and have n ≥ 2".into());
        }
        for a in &self.atoms.list {
            if a.index.len() != d {
                return bad(format!("atom index {:?} does not match dimension {d}", a.index));
            }
            if !(a.lambda > 0.0) {
                return bad("atom coefficients must be positive".into());
            }
        }
        Ok(())
    }

    pub fn zeta(&self) -> f64 {
        self.zeta.unwrap_or(self.eps / 8.0)
    }

    /// The dilation structure; matrix errors are configuration errors.
    pub fn dilation(&self) -> Result<DilationStructure<f64>> {
        validate_rows(&self.matrix).map_err(|e| Error::ConfigInvalid(format!("matrix: {e}")))
    }

    pub fn surface(&self) -> Result<GraphSurface<f64>> {
        let s = &self.surface;
        GraphSurface::new(s.catalog, self.matrix.len(), s.height_axis, s.chi_radius, s.poly.clone())
            .map_err(|e| Error::ConfigInvalid(format!("surface: {e}")))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::ConfigInvalid(format!("override `{spec}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for (i, p) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            cur.insert((*p).to_string(), value);
            return Ok(());
        }
        let entry = cur.entry((*p).to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::ConfigInvalid(format!("override `{key}`: `{p}` is not a table")))?;
    }
    Err(Error::ConfigInvalid(format!("empty override key in `{spec}`")))
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::parse("seed = 3\n[surface]\ncatalog = \"quartic-flat\"\nheight_axis = 0\nchi_radius = 0.7\n", &[
            "alpha=2.5".into(),
            "verifier.c_w=8".into(),
            "surface.catalog=paraboloid".into(),
            "k_range=[-2, 3]".into(),
        ])
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.alpha, 2.5);
        assert_eq!(cfg.verifier.c_w, 8.0);
        assert_eq!(cfg.surface.catalog, CatalogId::Paraboloid);
        assert_eq!(cfg.k_range, [-2, 3]);
        assert_eq!(cfg.zeta(), 0.25 / 8.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in ["eps = 2.0", "alpha = -1.0", "unknown = 1", "matrix = [[1.0, 0.0], [0.0, 1.0]]\n", "k_range = [3, 1]"] {
            let r = ExperimentConfig::parse(text, &[]).and_then(|c| c.dilation().map(|_| c));
            assert!(matches!(r, Err(Error::ConfigInvalid(_))), "{text}");
        }
        assert!(ExperimentConfig::parse("", &["novalue".into()]).is_err());
    }
}
