//! Batch runner behind the `alpert-lab` binary: one CSV per experiment kind
//! plus `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    load_config, BasisChecksSpec, ConstantsSpec, CoronaSpec, EnergySpec, Experiment, GoodbadSpec, LabConfig,
    NormEquivalenceSpec, KINDS,
};
use crate::corona::{build_corona, carleson_constant, quasiorthogonality_ratio, shifted_corona_assign};
use crate::error::{LabError, Result};
use crate::goodbad::{bad_decay_slope, bad_probability_mc, trial_rng};
use crate::grid::{one_third_grids, DyadicCube, DyadicGrid};
use crate::measure::DiscreteMeasure;
use crate::operator::{operator_norm, svd_norm, ConstantReport, KernelSpec, TestingMode, TwoWeight, Witness};
use crate::poisson::{muckenhoupt_a2, pivotal_constant, pivotal_lower_bound, PivotalParams, PivotalStrategy};
use crate::sobolev::{equivalence_ratio, full_norm, norm_continuous, norm_difference, standard_ensemble};
use crate::t1::run_t1_experiment;
use crate::wavelet::{basis_diagnostics, AlpertSystem, LeafFunction};
use crate::energy::{energy_gamma_constant, monotonicity_sweep};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    /// overrides the config seed
    pub seed: Option<u64>,
    pub jobs: usize,
    /// overrides the config depth cap
    pub depth_cap: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub index: usize,
    pub kind: String,
    pub seed: u64,
    pub status: String,
    pub message: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub depth_cap: Option<u32>,
    pub config: LabConfig,
    pub experiments: Vec<ExperimentRecord>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.experiments.iter().filter(|e| e.status != "ok").count()
    }
}

pub fn header(kind: &str) -> &'static [&'static str] {
    match kind {
        "basis_checks" => &[
            "experiment", "status", "measure", "n", "depth", "kappa", "shift", "cubes", "gram_err", "moment_err",
            "telescoping_err", "roundtrip_err", "pass", "message",
        ],
        "norm_equivalence" => &[
            "experiment", "status", "measure", "n", "depth", "s", "comparison", "ratio_min", "ratio_max", "counted",
            "ratio_min_refined", "ratio_max_refined", "endpoint_drift", "message",
        ],
        "goodbad" => &[
            "experiment", "status", "n", "eps", "r", "depth_gap", "bad", "trials", "probability", "slope", "r2",
            "message",
        ],
        "constants" => &[
            "experiment", "status", "sigma", "omega", "kernel", "n", "depth", "kappa", "s", "name", "value",
            "converged", "iterations", "witness", "message",
        ],
        "t1" => &[
            "experiment", "status", "sigma", "omega", "kernel", "n", "depth", "kappa", "s", "norm", "t_fwd",
            "t_dual", "sqrt_a2", "testing_ratio", "a2_ratio", "ratio_lower", "ratio_upper", "witness_fwd",
            "witness_dual", "message",
        ],
        "corona" => &[
            "experiment", "status", "sigma", "omega", "n", "depth", "kappa", "gamma", "stops", "generations",
            "carleson", "tau", "max_overlap", "s", "quasiorthogonality", "quasiorthogonality_refined",
            "stopping_control", "message",
        ],
        "energy" => &["experiment", "status", "measure", "kernel", "n", "depth", "kappa", "s", "quantity", "parameter", "value", "message"],
        _ => &[],
    }
}

fn f(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn shift_label(s: [i64; 2]) -> String {
    format!("{};{}", s[0], s[1])
}

/// Compact one-field rendering of a witness.
pub fn witness_label(w: &Witness) -> String {
    let cube = |(d, c): &(u32, [i64; 2])| format!("{d}:{};{}", c[0], c[1]);
    match w {
        Witness::None => String::new(),
        Witness::Cube { depth, coords, shift, degree } => {
            format!("cube {depth}:{};{} shift {} degree {degree}", coords[0], coords[1], shift_label(*shift))
        }
        Witness::CubePair { q, q2, shift } => format!("pair {} {} shift {}", cube(q), cube(q2), shift_label(*shift)),
        Witness::Vectors { right, left } => format!("vectors {}x{}", left.len(), right.len()),
        Witness::Decomposition { top, cubes } => format!("top {} parts {}", cube(top), cubes.len()),
    }
}

/// Seed of experiment `index`, independent of scheduling.
pub fn experiment_seed(master: u64, index: usize) -> u64 {
    trial_rng(master, index as u64).next_u64()
}

type Rows = Vec<Vec<String>>;

fn basis_rows(e: &BasisChecksSpec, seed: u64) -> Result<Rows> {
    let mut rows = Vec::new();
    for m in &e.measures {
        let mu = DiscreteMeasure::new(m, e.n, e.depth)?;
        let grid = DyadicGrid::new(e.n, e.depth, e.shift.unwrap_or([0, 0]))?;
        for &kappa in &e.kappa {
            let sys = AlpertSystem::new(&mu, &grid, kappa)?;
            let mut rng = trial_rng(seed, kappa as u64);
            let probes: Vec<LeafFunction> = (0..e.probes)
                .map(|_| {
                    let len = mu.leaf_count() * crate::poly::poly_dim(e.n, kappa);
                    LeafFunction::from_leaf_polys(e.n, e.depth, kappa, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                })
                .collect();
            let d = basis_diagnostics(&sys, &mu, &probes)?;
            let pass = d.gram_err <= 1e-10 && d.moment_err <= 1e-10 && d.telescoping_err <= 1e-10 && d.roundtrip_err <= 1e-9;
            rows.push(vec![
                m.label(),
                e.n.to_string(),
                e.depth.to_string(),
                kappa.to_string(),
                shift_label(grid.shift()),
                d.cubes.to_string(),
                f(d.gram_err),
                f(d.moment_err),
                f(d.telescoping_err),
                f(d.roundtrip_err),
                pass.to_string(),
            ]);
        }
    }
    Ok(rows)
}

fn third_shift(n: usize, depth: u32) -> [i64; 2] {
    let t = ((1i64 << depth) as f64 / 3.0).round() as i64;
    [t, if n == 2 { t } else { 0 }]
}

/// `(min, max, counted)` per comparison at one depth.
fn equivalence_at(e: &NormEquivalenceSpec, depth: u32, s: f64, seed: u64, continuous: bool) -> Result<Vec<(String, f64, f64, usize)>> {
    let mu = DiscreteMeasure::new(&e.measure, e.n, depth)?;
    let std_grid = DyadicGrid::standard(e.n, depth)?;
    let shift = match e.shift {
        Some(sh) => [sh[0] << (depth - e.depth), sh[1] << (depth - e.depth)],
        None => third_shift(e.n, depth),
    };
    let shifted = DyadicGrid::new(e.n, depth, shift)?;
    let ens: Vec<LeafFunction> = standard_ensemble(e.n, e.ensemble, (e.depth - 1).min(4), seed)
        .iter()
        .map(|m| m.realize(e.n, depth))
        .collect();
    let k1 = AlpertSystem::new(&mu, &std_grid, 1)?;
    let k2 = AlpertSystem::new(&mu, &std_grid, 2)?;
    let sh = AlpertSystem::new(&mu, &shifted, 1)?;
    let mut out = Vec::new();
    let r = equivalence_ratio(("kappa1", |g: &LeafFunction| full_norm(&k1, g, s)), ("kappa2", |g: &LeafFunction| full_norm(&k2, g, s)), &ens, "standard")?;
    out.push(("kappa1_vs_kappa2".to_string(), r.ratio_min, r.ratio_max, r.counted));
    let r = equivalence_ratio(("standard", |g: &LeafFunction| full_norm(&k1, g, s)), ("shifted", |g: &LeafFunction| full_norm(&sh, g, s)), &ens, "standard")?;
    out.push(("standard_vs_shifted".to_string(), r.ratio_min, r.ratio_max, r.counted));
    if continuous {
        let r = equivalence_ratio(
            ("continuous", |g: &LeafFunction| norm_continuous(&mu, g, s)),
            ("difference", |g: &LeafFunction| norm_difference(&k1, g, s)),
            &ens,
            "standard",
        )?;
        out.push(("continuous_vs_difference".to_string(), r.ratio_min, r.ratio_max, r.counted));
    }
    Ok(out)
}

fn norm_equivalence_rows(e: &NormEquivalenceSpec, seed: u64) -> Result<Rows> {
    let mut rows = Vec::new();
    for &s in &e.s {
        let base = equivalence_at(e, e.depth, s, seed, e.continuous && s > 0.0 && s < 1.0)?;
        let fine = equivalence_at(e, e.depth + 1, s, seed, false)?;
        for (name, lo, hi, counted) in base {
            let refined = fine.iter().find(|r| r.0 == name);
            let drift = refined.map(|r| (r.1 / lo).max(lo / r.1).max(r.2 / hi).max(hi / r.2));
            rows.push(vec![
                e.measure.label(),
                e.n.to_string(),
                e.depth.to_string(),
                f(s),
                name,
                f(lo),
                f(hi),
                counted.to_string(),
                opt(refined.map(|r| r.1)),
                opt(refined.map(|r| r.2)),
                opt(drift),
            ]);
        }
    }
    Ok(rows)
}

fn goodbad_rows(e: &GoodbadSpec, seed: u64) -> Result<Rows> {
    let mut rows = Vec::new();
    for &eps in &e.eps {
        let est = bad_probability_mc(e.n, &e.r, eps, e.depth_gap, e.trials, seed)?;
        let (slope, _, r2) = bad_decay_slope(&est);
        for b in est {
            rows.push(vec![
                e.n.to_string(),
                f(eps),
                b.r.to_string(),
                e.depth_gap.to_string(),
                b.bad.to_string(),
                b.trials.to_string(),
                f(b.probability),
                f(slope),
                f(r2),
            ]);
        }
    }
    Ok(rows)
}

fn constants_rows(e: &ConstantsSpec) -> Result<Rows> {
    let sigma = DiscreteMeasure::new(&e.sigma, e.n, e.depth)?;
    let omega = DiscreteMeasure::new(&e.omega, e.n, e.depth)?;
    let kernel = KernelSpec::with_defaults(e.n, e.alpha, e.family, e.depth, e.kappa)?;
    let tw = TwoWeight::new(kernel, sigma.clone(), omega.clone(), e.kappa)?;
    let prefix = vec![e.sigma.label(), e.omega.label(), kernel.label(), e.n.to_string(), e.depth.to_string(), e.kappa.to_string()];
    let mut rows = Vec::new();
    let mut push = |s: Option<f64>, r: &ConstantReport| {
        let mut row = prefix.clone();
        row.extend([opt(s), r.name.clone(), f(r.value), r.converged.to_string(), r.iterations.to_string(), witness_label(&r.witness)]);
        rows.push(row);
    };
    for &s in &e.s {
        let m = tw.assemble(s)?;
        let mut norm = operator_norm(&m);
        norm.name = "operator_norm".into();
        push(Some(s), &norm);
        if m.scaled.nrows() <= 512 && m.scaled.ncols() <= 512 {
            push(Some(s), &ConstantReport::new("operator_norm_svd", svd_norm(&m.scaled), Witness::None));
        }
        for (mode, label) in [(TestingMode::Cube, "cube"), (TestingMode::Triple, "triple"), (TestingMode::Global, "global")] {
            for dual in [false, true] {
                let mut r = tw.testing_constant(s, e.kappa, mode, dual)?;
                r.name = format!("testing_{label}{}", if dual { "_dual" } else { "" });
                push(Some(s), &r);
            }
        }
        push(Some(s), &tw.wbp_constant(s)?);
    }
    let grids = one_third_grids(&DyadicGrid::standard(e.n, e.depth)?)?;
    push(None, &muckenhoupt_a2(&sigma, &omega, e.alpha, &grids)?);
    let strategies = [PivotalStrategy::UniformDepth(e.pivotal_cap), PivotalStrategy::GreedyStopping(1.0)];
    push(None, &pivotal_lower_bound(&sigma, &omega, e.alpha, e.kappa, e.eps, &strategies, &grids)?);
    Ok(rows)
}

fn t1_rows(e: &crate::t1::T1Config) -> Result<Rows> {
    let r = run_t1_experiment(e)?;
    let kernel = e.kernel()?;
    Ok(vec![vec![
        e.sigma.label(),
        e.omega.label(),
        kernel.label(),
        e.n.to_string(),
        e.depth.to_string(),
        e.kappa.to_string(),
        f(e.s),
        f(r.norm),
        f(r.t_fwd),
        f(r.t_dual),
        f(r.sqrt_a2),
        opt(r.testing_ratio),
        opt(r.a2_ratio),
        opt(r.ratio_lower),
        opt(r.ratio_upper),
        witness_label(&r.witness_fwd),
        witness_label(&r.witness_dual),
    ]])
}

/// `σ_max` of the single-cube pivotal quantity on the standard grid.
pub fn single_cube_pivotal(sigma: &DiscreteMeasure, omega: &DiscreteMeasure, alpha: f64, kappa: usize, eps: f64) -> Result<f64> {
    let grid = DyadicGrid::standard(sigma.n(), sigma.depth())?;
    let p = PivotalParams::new(alpha, kappa, eps, PivotalStrategy::UniformDepth(0))?;
    Ok(pivotal_constant(sigma, omega, &p, &[grid])?.value)
}

fn corona_rows(e: &CoronaSpec, seed: u64) -> Result<Rows> {
    let s = e.eps / 4.0;
    let measures = |d: u32| -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        Ok((DiscreteMeasure::new(&e.sigma, e.n, d)?, DiscreteMeasure::new(&e.omega, e.n, d)?))
    };
    let (sigma, omega) = measures(e.depth)?;
    let gamma = match e.gamma {
        Some(g) => g,
        None => 2.5 * single_cube_pivotal(&sigma, &omega, e.alpha, e.kappa, e.eps)?,
    };
    let members = standard_ensemble(e.n, e.ensemble, (e.depth - 1).min(4), seed);
    let quasi = |sigma: &DiscreteMeasure, omega: &DiscreteMeasure| -> Result<(crate::corona::CoronaForest, f64)> {
        let d = sigma.depth();
        let grid = DyadicGrid::standard(e.n, d)?;
        let forest = build_corona(&grid, &DyadicCube::root(), sigma, omega, gamma, e.kappa, e.alpha)?;
        let sys = AlpertSystem::new(sigma, &grid, e.kappa)?;
        let ens: Vec<LeafFunction> = members.iter().map(|m| m.realize(e.n, d)).collect();
        let q = quasiorthogonality_ratio(&forest, &sys, &ens, s)?.value;
        Ok((forest, q))
    };
    let (forest, q) = quasi(&sigma, &omega)?;
    let (sf, of) = measures(e.depth + 1)?;
    let (_, q_refined) = quasi(&sf, &of)?;
    let carleson = carleson_constant(&forest, &sigma, e.eps);
    let shifted = shifted_corona_assign(&forest, e.tau)?;
    let generations = forest.stops.iter().map(|c| c.generation).max().unwrap_or(0);
    Ok(vec![vec![
        e.sigma.label(),
        e.omega.label(),
        e.n.to_string(),
        e.depth.to_string(),
        e.kappa.to_string(),
        f(gamma),
        forest.len().to_string(),
        generations.to_string(),
        f(carleson.value),
        e.tau.to_string(),
        shifted.max_overlap().to_string(),
        f(s),
        f(q),
        f(q_refined),
        f(forest.stopping_control(&sigma, &omega)),
    ]])
}

fn energy_rows(e: &EnergySpec, seed: u64) -> Result<Rows> {
    let coarse = e.coarse.unwrap_or(e.depth - 2);
    let mut rows = Vec::new();
    let prefix = |kernel: &KernelSpec, d: u32| {
        vec![e.measure.label(), kernel.label(), e.n.to_string(), d.to_string(), e.kappa.to_string(), f(e.s)]
    };
    for (d, quantity) in [(e.depth, "monotonicity_max"), (e.depth + 1, "monotonicity_max_refined")] {
        let mu = DiscreteMeasure::new(&e.measure, e.n, d)?;
        let sys = AlpertSystem::new(&mu, &DyadicGrid::standard(e.n, d)?, e.kappa)?;
        // one kernel for both meshes so that only the resolution changes
        let kernel = KernelSpec::with_defaults(e.n, e.alpha, e.family, e.depth, e.kappa)?;
        let sweep = monotonicity_sweep(&sys, &kernel, coarse, e.s, e.delta, e.configs, seed)?;
        let mut row = prefix(&kernel, d);
        row.extend([quantity.to_string(), e.configs.to_string(), f(sweep.max_ratio)]);
        rows.push(row);
        if d == e.depth {
            for &g in &e.gammas {
                let c = energy_gamma_constant(&sys, &kernel, 2..=3.min(d - 2), e.s, g)?;
                let mut row = prefix(&kernel, d);
                row.extend(["energy_gamma".to_string(), f(g), f(c)]);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_one(exp: &Experiment, seed: u64, cap: Option<u32>) -> Result<Rows> {
    if let Some(cap) = cap {
        if exp.depth() > cap {
            return Err(LabError::DepthCap { depth: exp.depth(), cap });
        }
    }
    match exp {
        Experiment::BasisChecks(e) => basis_rows(e, seed),
        Experiment::NormEquivalence(e) => norm_equivalence_rows(e, seed),
        Experiment::Goodbad(e) => goodbad_rows(e, seed),
        Experiment::Constants(e) => constants_rows(e),
        Experiment::T1(e) => t1_rows(e),
        Experiment::Corona(e) => corona_rows(e, seed),
        Experiment::Energy(e) => energy_rows(e, seed),
    }
}

fn write_csv(path: &Path, kind: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Parse(e.to_string()))?;
    w.write_record(header(kind)).map_err(|e| LabError::Parse(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| LabError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every experiment of `config`; failures are recorded, not raised.
pub fn run_config(config: &LabConfig, out: &Path, jobs: usize) -> Result<Manifest> {
    std::fs::create_dir_all(out)?;
    let work = |i: usize| {
        let exp = &config.experiments[i];
        let seed = experiment_seed(config.seed, i);
        (seed, run_one(exp, seed, config.depth_cap))
    };
    let results: Vec<(u64, Result<Rows>)> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| LabError::Parameter(e.to_string()))?;
        pool.install(|| (0..config.experiments.len()).into_par_iter().map(work).collect())
    } else {
        (0..config.experiments.len()).map(work).collect()
    };
    let mut tables: BTreeMap<&str, Rows> = BTreeMap::new();
    let mut records = Vec::new();
    for (i, (seed, res)) in results.into_iter().enumerate() {
        let kind = config.experiments[i].kind();
        let width = header(kind).len();
        let table = tables.entry(kind).or_default();
        let (status, message, rows) = match res {
            Ok(rows) => {
                let count = rows.len();
                for r in rows {
                    let mut full = vec![i.to_string(), "ok".to_string()];
                    full.extend(r);
                    full.push(String::new());
                    table.push(full);
                }
                ("ok".to_string(), String::new(), count)
            }
            Err(e) => {
                let mut full = vec![String::new(); width];
                full[0] = i.to_string();
                full[1] = "failed".into();
                full[width - 1] = e.to_string();
                table.push(full);
                ("failed".to_string(), e.to_string(), 0)
            }
        };
        records.push(ExperimentRecord { index: i, kind: kind.into(), seed, status, message, rows });
    }
    let mut files = Vec::new();
    for kind in KINDS {
        if let Some(rows) = tables.get(kind) {
            let name = format!("{kind}.csv");
            write_csv(&out.join(&name), kind, rows)?;
            files.push(name);
        }
    }
    let manifest = Manifest {
        name: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        depth_cap: config.depth_cap,
        config: config.clone(),
        experiments: records,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Parse(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Loads the config, applies the overrides and runs it.
pub fn run(opts: &RunOptions) -> Result<Manifest> {
    let mut config = load_config(&opts.config)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if opts.depth_cap.is_some() {
        config.depth_cap = opts.depth_cap;
    }
    run_config(&config, &opts.out, opts.jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn empty_run_writes_only_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_config(&parse_config("seed = 9\n").unwrap(), dir.path(), 1).unwrap();
        assert!(m.files.is_empty());
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("manifest.json")]);
    }

    #[test]
    fn depth_cap_gives_a_failure_record() {
        let text = "depth_cap = 4\n[[experiment]]\nkind = \"basis_checks\"\ndepth = 6\nkappa = [1]\nmeasures = [{ kind = \"lebesgue\" }]\n\n[[experiment]]\nkind = \"basis_checks\"\ndepth = 3\nkappa = [1]\nmeasures = [{ kind = \"lebesgue\" }]\n";
        let dir = tempfile::tempdir().unwrap();
        let m = run_config(&parse_config(text).unwrap(), dir.path(), 1).unwrap();
        assert_eq!(m.failures(), 1);
        let csv = std::fs::read_to_string(dir.path().join("basis_checks.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,failed") && lines[1].contains("cap"));
        assert!(lines[2].starts_with("1,ok") && lines[2].contains("true"));
    }

    #[test]
    fn seeds_do_not_depend_on_scheduling() {
        assert_eq!(experiment_seed(5, 3), experiment_seed(5, 3));
        assert_ne!(experiment_seed(5, 3), experiment_seed(5, 4));
    }
}
