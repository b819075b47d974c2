//! The named experiments. Each returns an [`Outcome`]; writing it to disk is
//! the runner's job.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::config::ExperimentConfig;
use super::instances;
use crate::atoms::h1_norm;
use crate::decomposition::{
    stopping_time, verify_stopping, verify_whitney, whitney_decompose, Primitive, StoppingChecks, StoppingConfig,
    StoppingResult, TendrilModel, TendrilReach,
};
use crate::dilation::{DilationStructure, RANK_TOL, SCAN_WINDOW, SPECTRAL_TOL};
use crate::grid::GridCube;
use crate::maximal::{self, distribution_function, weak_type_ratio, Lattice, Measure, SampledField};
use crate::surface::{
    autocorrelation_kernel, check_kernel_decay, classify_pieces, fit_growth, mercury_row, partition_measure,
    ClassifyParams, GraphSurface, SurfacePiece,
};
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    ValidateDilation,
    Whitney,
    Stopping,
    SurfaceClassify,
    KernelDecay,
    MaximalWeakType,
    FullPipeline,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ValidateDilation => "validate-dilation",
            Experiment::Whitney => "whitney",
            Experiment::Stopping => "stopping",
            Experiment::SurfaceClassify => "surface-classify",
            Experiment::KernelDecay => "kernel-decay",
            Experiment::MaximalWeakType => "maximal-weak-type",
            Experiment::FullPipeline => "full-pipeline",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub fields: Vec<(String, SampledField<f64>)>,
    pub trace: Vec<String>,
    pub summary: Vec<String>,
    pub constants: BTreeMap<String, f64>,
}

impl Outcome {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check { name: name.into(), pass, detail });
    }

    fn note(&mut self, line: String) {
        self.summary.push(line);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn index_str(q: &GridCube) -> String {
    q.index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run(cfg: &ExperimentConfig, which: Experiment) -> Result<Outcome> {
    let dil = cfg.dilation()?;
    let mut out = Outcome::default();
    out.constants.insert("spectral_tol".into(), SPECTRAL_TOL);
    out.constants.insert("rank_tol".into(), RANK_TOL);
    out.constants.insert("scan_window".into(), SCAN_WINDOW as f64);
    out.constants.insert("det_scale".into(), dil.det_scale);
    out.constants.insert("r_min".into(), dil.r_min);
    match which {
        Experiment::ValidateDilation => validate_dilation(cfg, &dil, &mut out)?,
        Experiment::Whitney => whitney(cfg, &dil, &mut out)?,
        Experiment::Stopping => stopping(cfg, &dil, &mut out)?,
        Experiment::SurfaceClassify => surface_classify(cfg, &dil, &mut out)?,
        Experiment::KernelDecay => kernel_decay(cfg, &mut out)?,
        Experiment::MaximalWeakType => maximal_weak_type(cfg, &dil, &mut out)?,
        Experiment::FullPipeline => full_pipeline(cfg, &dil, &mut out)?,
    }
    Ok(out)
}

fn validate_dilation(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, out: &mut Outcome) -> Result<()> {
    out.note(format!("a = {}", dil.det_scale));
    out.note(format!("r = {}", dil.r_min));
    out.note(format!("n = {}", dil.block_size));
    out.note(format!("norm_power = {}", dil.norm_power));
    out.note(format!("normalized = {}", dil.is_normalized()));
    out.note(format!("eigenvalue moduli = {:?}", dil.eigen_moduli));
    out.constants.insert("block_size".into(), dil.block_size as f64);
    out.constants.insert("norm_power".into(), dil.norm_power as f64);

    let [t0, t1] = cfg.suite.fit_range;
    let mut t = Table::new("diameters", &["tau", "diameter", "scaled"]);
    for tau in t0..=t1 {
        let diam = dil.cube_diameter(tau);
        t.push(vec![tau.to_string(), num(diam), num(diam / dil.r_min.powi(tau))]);
    }
    out.tables.push(t);
    let exponent = dil.fit_diameter_exponent(t0..=t1)?;
    let expected = dil.block_size as f64 - 1.0;
    out.note(format!("fitted diameter exponent over τ ∈ [{t0}, {t1}] = {exponent:.4}"));
    out.check(
        "diameter exponent",
        (exponent - expected).abs() <= 0.2,
        format!("fitted {exponent:.4}, block size {} gives {expected}, tolerance 0.2", dil.block_size),
    );
    Ok(())
}

/// The configured list (if any) followed by `suite.instances` random ones.
fn cube_instances(cfg: &ExperimentConfig, dil: &DilationStructure<f64>) -> Vec<Vec<(GridCube, f64)>> {
    let mut all = Vec::new();
    if !cfg.atoms.list.is_empty() {
        all.push(instances::listed_cubes(cfg));
    }
    for i in 0..cfg.suite.instances {
        let mut r = rng::substream(cfg.seed, i as u64);
        all.push(instances::random_cubes(cfg, dil, &mut r));
    }
    all
}

fn whitney(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, out: &mut Outcome) -> Result<()> {
    let v = &cfg.verifier;
    let mut summary = Table::new(
        "whitney",
        &["instance", "cubes", "selected", "leftover", "disjoint", "condition1", "condition2", "condition3", "pass"],
    );
    let mut selected = Table::new("selected", &["instance", "sigma", "tau", "index", "volume"]);
    let (mut failed, mut worst) = (0usize, [0.0f64; 3]);
    let all = cube_instances(cfg, dil);
    for (i, cubes) in all.iter().enumerate() {
        let w = whitney_decompose(dil, cubes, cfg.alpha, v.c_w)?;
        let r = verify_whitney(dil, &w, cubes, cfg.alpha, v.c_w);
        for (k, c) in [&r.condition1, &r.condition2, &r.condition3].iter().enumerate() {
            worst[k] = worst[k].max(c.worst_ratio);
        }
        if !r.all_pass() {
            failed += 1;
        }
        summary.push(vec![
            i.to_string(),
            cubes.len().to_string(),
            w.selected.len().to_string(),
            w.leftover.len().to_string(),
            r.disjoint.pass.to_string(),
            num(r.condition1.worst_ratio),
            num(r.condition2.worst_ratio),
            num(r.condition3.worst_ratio),
            r.all_pass().to_string(),
        ]);
        for s in &w.selected {
            selected.push(vec![i.to_string(), s.sigma.to_string(), s.tau.to_string(), index_str(s), num(s.volume(dil))]);
        }
    }
    out.tables.push(summary);
    out.tables.push(selected);
    out.constants.insert("c_w".into(), v.c_w);
    out.constants.insert("alpha".into(), cfg.alpha);
    out.note(format!("instances = {}, worst ratios (1, 2, 3) = {worst:?}", all.len()));
    out.check(
        "whitney conditions 1-3",
        failed == 0,
        format!("{failed} of {} instances fail with C_W = {}", all.len(), v.c_w),
    );
    Ok(())
}

fn tendril_model(cfg: &ExperimentConfig, reach: TendrilReach) -> Result<StoppingConfig<f64>> {
    let model = match cfg.verifier.tendril.as_str() {
        "ball" => TendrilModel::Ball,
        _ => TendrilModel::Surface { support: Arc::new(cfg.surface()?), refinement: cfg.verifier.refinement, reach },
    };
    Ok(StoppingConfig { model, ..Default::default() })
}

struct StoppingRun {
    assigned: Vec<(GridCube, f64)>,
    selected: Vec<GridCube>,
    result: StoppingResult<f64>,
}

fn run_stopping(
    cfg: &ExperimentConfig,
    dil: &DilationStructure<f64>,
    cubes: &[(GridCube, f64)],
    model: &StoppingConfig<f64>,
) -> Result<StoppingRun> {
    let w = whitney_decompose(dil, cubes, cfg.alpha, cfg.verifier.c_w)?;
    let assigned: Vec<(GridCube, f64)> =
        cubes.iter().zip(&w.assigned).filter(|(_, a)| a.is_some()).map(|(c, _)| c.clone()).collect();
    let result = stopping_time(dil, &w.selected, &assigned, cfg.alpha, model)?;
    Ok(StoppingRun { assigned, selected: w.selected, result })
}

fn stopping_checks<'a>(cfg: &ExperimentConfig, surface: Option<&'a GraphSurface<f64>>, i: usize) -> StoppingChecks<'a, f64> {
    let mut c = StoppingChecks::new(surface.map(|s| s as &dyn crate::decomposition::MeasureSupport<f64>));
    c.c_i = cfg.verifier.c;
    c.c_iv = cfg.verifier.c_iv;
    c.samples = cfg.verifier.samples;
    c.seed = cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64);
    c
}

fn stopping(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, out: &mut Outcome) -> Result<()> {
    let v = &cfg.verifier;
    let surface = if v.tendril == "surface" { Some(cfg.surface()?) } else { None };
    let model = tendril_model(cfg, v.reach)?;
    let full = (surface.is_some() && v.reach != TendrilReach::Full).then(|| tendril_model(cfg, TendrilReach::Full)).transpose()?;
    let mut table = Table::new(
        "stopping",
        &["instance", "inputs", "selected", "primitives", "volume", "support", "levels", "stopping", "pass", "volume_full_reach"],
    );
    let mut kappa = Table::new("kappa", &["instance", "input", "sigma", "tau", "index", "lambda", "kappa", "class"]);
    let (mut failed, mut worst) = (0usize, [0.0f64; 4]);
    let mut worst_full = 0.0f64;
    let mut runs = Vec::new();
    let all = cube_instances(cfg, dil);
    for (i, cubes) in all.iter().enumerate() {
        let run = run_stopping(cfg, dil, cubes, &model)?;
        let checks = stopping_checks(cfg, surface.as_ref(), i);
        let r = verify_stopping(dil, &run.result, &run.selected, &run.assigned, cfg.alpha, &checks);
        for (k, c) in [&r.volume, &r.support, &r.levels, &r.stopping].iter().enumerate() {
            worst[k] = worst[k].max(c.worst_ratio);
        }
        if !r.all_pass() {
            failed += 1;
        }
        let full_ratio = match &full {
            Some(m) => {
                let fr = stopping_time(dil, &run.selected, &run.assigned, cfg.alpha, m)?;
                let allowed = v.c * (run.assigned.iter().map(|c| c.1).sum::<f64>() / cfg.alpha
                    + run.selected.iter().map(|s| s.volume(dil)).sum::<f64>());
                let ratio = if allowed > 0.0 { fr.exceptional.volume_bound() / allowed } else { 0.0 };
                worst_full = worst_full.max(ratio);
                num(ratio)
            }
            None => String::new(),
        };
        table.push(vec![
            i.to_string(),
            run.assigned.len().to_string(),
            run.selected.len().to_string(),
            run.result.exceptional.len().to_string(),
            num(r.volume.worst_ratio),
            num(r.support.worst_ratio),
            num(r.levels.worst_ratio),
            num(r.stopping.worst_ratio),
            r.all_pass().to_string(),
            full_ratio,
        ]);
        for (k, (q, l)) in run.assigned.iter().enumerate() {
            kappa.push(vec![
                i.to_string(),
                k.to_string(),
                q.sigma.to_string(),
                q.tau.to_string(),
                index_str(q),
                num(*l),
                run.result.kappa[k].to_string(),
                format!("{:?}", run.result.classification[k]),
            ]);
        }
        for line in run.result.trace_jsonl().lines() {
            out.trace.push(format!("{{\"instance\":{i},\"event\":{line}}}"));
        }
        if runs.len() < cfg.suite.mutations {
            runs.push((i, run));
        }
    }
    out.tables.push(table);
    out.tables.push(kappa);

    // Mutation: drop κ by 5 on the input with the largest density; the
    // verifier has to notice.
    let mut mutations = Table::new("mutations", &["instance", "input", "kappa", "mutated", "rejected"]);
    let mut rejected = 0usize;
    for (i, run) in &runs {
        let Some(k) = (0..run.assigned.len()).max_by(|&a, &b| {
            let da = run.assigned[a].1 / run.assigned[a].0.volume(dil);
            let db = run.assigned[b].1 / run.assigned[b].0.volume(dil);
            da.total_cmp(&db).then(b.cmp(&a))
        }) else {
            continue;
        };
        let mut mutated = run.result.clone();
        mutated.kappa[k] -= 5;
        let checks = stopping_checks(cfg, surface.as_ref(), *i);
        let r = verify_stopping(dil, &mutated, &run.selected, &run.assigned, cfg.alpha, &checks);
        if !r.all_pass() {
            rejected += 1;
        }
        mutations.push(vec![
            i.to_string(),
            k.to_string(),
            run.result.kappa[k].to_string(),
            mutated.kappa[k].to_string(),
            (!r.all_pass()).to_string(),
        ]);
    }
    let tried = mutations.rows.len();
    out.tables.push(mutations);

    out.constants.insert("c".into(), v.c);
    out.constants.insert("c_iv".into(), v.c_iv);
    out.constants.insert("c_w".into(), v.c_w);
    out.constants.insert("alpha".into(), cfg.alpha);
    out.constants.insert("refinement".into(), v.refinement as f64);
    out.note(format!("tendril model = {:?}", model.model));
    out.note(format!("instances = {}, worst ratios (i, ii, iii, iv) = {worst:?}", all.len()));
    if full.is_some() {
        out.note(format!("worst volume ratio with full-reach tendrils = {worst_full:.4} (informational)"));
    }
    out.check(
        "stopping checks (i)-(iv)",
        failed == 0,
        format!("{failed} of {} instances fail with C = {}, C_iv = {}", all.len(), v.c, v.c_iv),
    );
    out.check(
        "kappa mutations rejected",
        rejected == tried && tried == cfg.suite.mutations.min(all.len()),
        format!("{rejected} of {tried} mutated stopping times rejected"),
    );
    Ok(())
}

fn surface_classify(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, out: &mut Outcome) -> Result<()> {
    let surface = cfg.surface()?;
    let params = ClassifyParams::new(cfg.eps);
    let mut pieces_t = Table::new(
        "pieces",
        &["s", "rho", "center", "in_i1", "in_i2", "min_abs_curvature", "max_mass_ratio", "worst_tau"],
    );
    let mut rows = Vec::new();
    for s in cfg.s_range[0]..=cfg.s_range[1] {
        let mut pieces = partition_measure(&surface, s, cfg.eps)?;
        classify_pieces(&mut pieces, &surface, dil, &params)?;
        for p in &pieces {
            pieces_t.push(vec![
                s.to_string(),
                p.rho.to_string(),
                p.center.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(" "),
                p.in_i1.to_string(),
                p.in_i2.to_string(),
                opt(p.min_abs_curvature),
                opt(p.max_mass_ratio),
                p.worst_tau.map(|t| t.to_string()).unwrap_or_default(),
            ]);
        }
        rows.push(mercury_row(s, &pieces));
    }
    let report = fit_growth(rows, cfg.eps, surface.param_dim())?;
    let mut m = Table::new("mercury", &["s", "pieces", "i1", "i2", "union"]);
    for r in &report.rows {
        m.push(vec![r.s.to_string(), r.pieces.to_string(), r.i1.to_string(), r.i2.to_string(), r.union.to_string()]);
    }
    out.tables.push(pieces_t);
    out.tables.push(m);
    out.constants.insert("eps".into(), cfg.eps);
    out.constants.insert("eta_min".into(), cfg.verifier.eta_min);
    out.note(format!("surface = {:?}, growth = {:.4}, eta = {:.4}", surface.catalog_id, report.growth, report.eta));
    out.check(
        "excluded-cap growth",
        report.eta > cfg.verifier.eta_min,
        format!("eta = {:.4}, need > {}", report.eta, cfg.verifier.eta_min),
    );
    if surface.catalog_id == crate::surface::CatalogId::CircleArc {
        let flagged: usize = report.rows.iter().map(|r| r.i1).sum();
        out.check("constant curvature has no flat caps", flagged == 0, format!("{flagged} caps in I¹ across s"));
    }
    Ok(())
}

fn kernel_decay(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let surface = cfg.surface()?;
    let k = &cfg.kernel;
    let piece = if k.s == 0 {
        SurfacePiece::whole(&surface)
    } else {
        let pieces = partition_measure(&surface, k.s, cfg.eps)?;
        pieces
            .into_iter()
            .min_by(|a, b| {
                let na: f64 = a.center.iter().map(|c| c * c).sum();
                let nb: f64 = b.center.iter().map(|c| c * c).sum();
                na.total_cmp(&nb)
            })
            .ok_or_else(|| Error::InputInvalid(format!("no caps at s = {}", k.s)))?
    };
    let field = autocorrelation_kernel(&surface, &piece, k.spacing, k.nodes)?;
    let decay = check_kernel_decay(&field, k.r_min, k.r_max, k.radii)?;
    let constant = SampledField::sample(&field.lattice, "constant", |_| 1.0);
    let control = check_kernel_decay(&constant, k.r_min, k.r_max, k.radii)?;
    let mut t = Table::new("decay", &["radius", "kernel_max", "control_max"]);
    for ((r, a), b) in decay.radii.iter().zip(&decay.maxima).zip(&control.maxima) {
        t.push(vec![num(*r), num(*a), num(*b)]);
    }
    out.tables.push(t);
    out.fields.push(("kernel".into(), field));
    out.constants.insert("spacing".into(), k.spacing);
    out.constants.insert("nodes".into(), k.nodes as f64);
    out.note(format!("kernel slope = {:.4}, control slope = {:.4}", decay.slope, control.slope));
    out.check(
        "kernel decay slope",
        (-1.3..=-0.7).contains(&decay.slope),
        format!("slope {:.4} over [{}, {}], need [-1.3, -0.7]", decay.slope, k.r_min, k.r_max),
    );
    out.check(
        "constant control slope",
        (-0.2..=0.2).contains(&control.slope),
        format!("slope {:.4}, need [-0.2, 0.2]", control.slope),
    );
    Ok(())
}

fn maximal_weak_type(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, out: &mut Outcome) -> Result<()> {
    let surface = cfg.surface()?;
    let [k0, k1] = cfg.k_range;
    let mut t = Table::new("weak_type", &["tau", "ratio", "h1", "upper_tail", "lower_exact", "lattice_n"]);
    let mut per_k = Table::new("per_k_max", &["tau", "k", "max"]);
    let mut ratios = Vec::new();
    let mut tails_ok = true;
    for &tau in &cfg.suite.scales {
        let f = instances::scale_family(cfg, dil, tau)?;
        let lat = instances::covariant_lattice(cfg, dil, tau)?;
        let r = weak_type_ratio(&f, Measure::Surface(&surface), dil, (k0 + tau)..=(k1 + tau), &lat, None)?;
        let tail = &r.maximal.tail;
        tails_ok &= tail.negligible;
        t.push(vec![
            tau.to_string(),
            num(r.ratio),
            num(h1_norm(&f)),
            num(tail.upper_ratio),
            tail.lower_exact.to_string(),
            cfg.lattice.n.to_string(),
        ]);
        for (k, m) in &r.maximal.per_k_max {
            per_k.push(vec![tau.to_string(), k.to_string(), num(*m)]);
        }
        ratios.push(r.ratio);
        if tau == cfg.suite.scales[0] {
            out.fields.push((format!("maximal_tau{tau}"), r.maximal.field));
        }
    }
    out.tables.push(t);
    out.tables.push(per_k);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    out.constants.insert("scale_spread".into(), cfg.verifier.scale_spread);
    out.constants.insert("node_budget".into(), maximal::NODE_BUDGET as f64);
    out.note(format!("weak-type ratios {ratios:?}, spread {spread:.4}"));
    out.check(
        "weak-type ratio invariant across scales",
        spread < cfg.verifier.scale_spread,
        format!("max/min = {spread:.4}, need < {}", cfg.verifier.scale_spread),
    );
    out.check("upper k tail negligible", tails_ok, "max |μ_{k_max} ∗ f| below 1% of max Mf at every scale".into());
    Ok(())
}

fn full_pipeline(cfg: &ExperimentConfig, dil: &DilationStructure<f64>, out: &mut Outcome) -> Result<()> {
    let v = &cfg.verifier;
    let surface = cfg.surface()?;
    let f = instances::atom_family(cfg, dil, cfg.seed)?;
    let h1 = h1_norm(&f);
    let cubes = f.cubes();

    let w = whitney_decompose(dil, &cubes, cfg.alpha, v.c_w)?;
    let wr = verify_whitney(dil, &w, &cubes, cfg.alpha, v.c_w);
    out.check("whitney conditions 1-3", wr.all_pass(), format!("{} selected from {} atoms", w.selected.len(), cubes.len()));

    let model = tendril_model(cfg, v.reach)?;
    let run = run_stopping(cfg, dil, &cubes, &model)?;
    let checks = stopping_checks(cfg, Some(&surface), 0);
    let sr = verify_stopping(dil, &run.result, &run.selected, &run.assigned, cfg.alpha, &checks);
    out.check(
        "stopping checks (i)-(iv)",
        sr.all_pass(),
        format!(
            "ratios {:.4} {:.4} {:.4} {:.4}",
            sr.volume.worst_ratio, sr.support.worst_ratio, sr.levels.worst_ratio, sr.stopping.worst_ratio
        ),
    );
    out.trace.extend(run.result.trace_jsonl().lines().map(String::from));

    let e = &run.result.exceptional;
    let lambda_total: f64 = run.assigned.iter().map(|c| c.1).sum();
    let s_total: f64 = run.selected.iter().map(|s| s.volume(dil)).sum();
    let bound = v.c * (lambda_total / cfg.alpha + s_total);
    let mut et = Table::new("exceptional", &["kind", "sigma", "tau", "index", "volume"]);
    for p in &e.primitives {
        let kind = match p {
            Primitive::BallTendril(_) => "ball-tendril",
            Primitive::SurfaceTendril(_) => "surface-tendril",
            Primitive::Quadruple { .. } => "quadruple",
        };
        let b = p.base();
        et.push(vec![kind.into(), b.sigma.to_string(), b.tau.to_string(), index_str(b), num(p.volume())]);
    }
    out.tables.push(et);
    let mut hist: BTreeMap<i32, usize> = BTreeMap::new();
    for &k in &run.result.kappa {
        *hist.entry(k).or_default() += 1;
    }
    let mut kt = Table::new("kappa_histogram", &["kappa", "count"]);
    for (k, c) in hist {
        kt.push(vec![k.to_string(), c.to_string()]);
    }
    out.tables.push(kt);

    let lat = Lattice::spanning(&cfg.lattice.lo, &cfg.lattice.hi, cfg.lattice.n)?;
    let [k0, k1] = cfg.k_range;
    let r = weak_type_ratio(&f, Measure::Surface(&surface), dil, k0..=k1, &lat, Some(e))?;
    let mask = maximal::exclusion_mask(&lat, e);
    let at_alpha = distribution_function(&r.maximal.field, &[cfg.alpha], Some(&mask))?.measures[0];
    let with_e = distribution_function(&r.maximal.field, &[cfg.alpha], None)?.measures[0];
    let mut pk = Table::new("per_k_max", &["k", "max"]);
    for (k, m) in &r.maximal.per_k_max {
        pk.push(vec![k.to_string(), num(*m)]);
    }
    out.tables.push(pk);
    let mut dt = Table::new("distribution", &["threshold", "measure_outside_e"]);
    for (t, m) in r.distribution.thresholds.iter().zip(&r.distribution.measures) {
        dt.push(vec![num(*t), num(*m)]);
    }
    out.tables.push(dt);
    out.fields.push(("maximal".into(), r.maximal.field));

    out.constants.insert("alpha".into(), cfg.alpha);
    out.constants.insert("c".into(), v.c);
    out.constants.insert("c_iv".into(), v.c_iv);
    out.constants.insert("c_w".into(), v.c_w);
    out.constants.insert("weak_bound".into(), v.weak_bound);
    out.note(format!("atoms = {}, ‖f‖_H1 = {h1:.4}", f.len()));
    out.note(format!("|E| ≤ {:.4} against C(α⁻¹Σλ + Σ|S|) = {bound:.4}", e.volume_bound()));
    out.note(format!("lattice fraction in E = {:.4}", mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64));
    out.note(format!("sup_λ λ|{{Mf>λ}}\\E| / ‖f‖ = {:.4}", r.ratio));
    out.note(format!("upper tail ratio = {:.4}", r.maximal.tail.upper_ratio));
    let lhs = cfg.alpha * at_alpha;
    out.note(format!("α|{{Mf>α}}| = {:.4} before removing E, {lhs:.4} after", cfg.alpha * with_e));
    out.check(
        "weak-type bound outside E",
        lhs <= v.weak_bound * h1,
        format!("α|{{Mf>α}}\\E| = {lhs:.4}, bound {} · ‖f‖ = {:.4}", v.weak_bound, v.weak_bound * h1),
    );
    out.trace.push(json!({"event": "weak-type", "ratio": r.ratio, "at_alpha": lhs, "at_alpha_with_e": cfg.alpha * with_e, "h1": h1}).to_string());
    Ok(())
}
