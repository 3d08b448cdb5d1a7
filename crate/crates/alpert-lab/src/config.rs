//! Batch configuration: a TOML file with a master seed, an optional depth cap
//! and a list of `[[experiment]]` tables, each tagged by `kind`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::measure::MeasureKind;
use crate::operator::KernelFamily;
use crate::t1::T1Config;

pub const KINDS: [&str; 7] = ["basis_checks", "norm_equivalence", "goodbad", "constants", "t1", "corona", "energy"];

fn one() -> usize {
    1
}

/// Gram, moment, telescoping and round-trip checks for every measure and κ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisChecksSpec {
    #[serde(default = "one")]
    pub n: usize,
    pub depth: u32,
    pub kappa: Vec<usize>,
    pub measures: Vec<MeasureKind>,
    /// grid shift in leaves; standard grid when absent
    pub shift: Option<[i64; 2]>,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_probes() -> usize {
    4
}

/// Ensemble ratio intervals: κ=1 vs κ=2, standard vs shifted grid and,
/// optionally, continuous vs difference norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormEquivalenceSpec {
    #[serde(default = "one")]
    pub n: usize,
    pub depth: u32,
    pub measure: MeasureKind,
    pub s: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    /// shifted grid for the cross-grid comparison; `round(N/3)` per axis when absent
    pub shift: Option<[i64; 2]>,
    #[serde(default)]
    pub continuous: bool,
}

fn default_ensemble() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodbadSpec {
    #[serde(default = "one")]
    pub n: usize,
    pub eps: Vec<f64>,
    pub r: Vec<u32>,
    #[serde(default = "default_gap")]
    pub depth_gap: u32,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_gap() -> u32 {
    16
}

fn default_trials() -> usize {
    10_000
}

/// Operator norm, testing, weak boundedness, A₂ and pivotal constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(default = "one")]
    pub n: usize,
    pub depth: u32,
    #[serde(default = "one")]
    pub kappa: usize,
    pub sigma: MeasureKind,
    pub omega: MeasureKind,
    pub family: KernelFamily,
    pub alpha: f64,
    pub s: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_pivotal_cap")]
    pub pivotal_cap: u32,
}

fn default_eps() -> f64 {
    0.25
}

fn default_pivotal_cap() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoronaSpec {
    #[serde(default = "one")]
    pub n: usize,
    pub depth: u32,
    #[serde(default = "one")]
    pub kappa: usize,
    pub sigma: MeasureKind,
    pub omega: MeasureKind,
    pub alpha: f64,
    /// stopping threshold; 2.5 × the single-cube pivotal sup when absent
    pub gamma: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_tau")]
    pub tau: u32,
    #[serde(default = "default_corona_ensemble")]
    pub ensemble: usize,
}

fn default_tau() -> u32 {
    2
}

fn default_corona_ensemble() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    #[serde(default = "one")]
    pub n: usize,
    pub depth: u32,
    #[serde(default = "one")]
    pub kappa: usize,
    pub measure: MeasureKind,
    pub family: KernelFamily,
    pub alpha: f64,
    pub s: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_configs")]
    pub configs: usize,
    /// depth of the cells carrying remote masses; `depth − 2` when absent
    pub coarse: Option<u32>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_delta() -> f64 {
    0.5
}

fn default_configs() -> usize {
    1000
}

fn default_gammas() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    BasisChecks(BasisChecksSpec),
    NormEquivalence(NormEquivalenceSpec),
    Goodbad(GoodbadSpec),
    Constants(ConstantsSpec),
    T1(T1Config),
    Corona(CoronaSpec),
    Energy(EnergySpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::BasisChecks(_) => "basis_checks",
            Experiment::NormEquivalence(_) => "norm_equivalence",
            Experiment::Goodbad(_) => "goodbad",
            Experiment::Constants(_) => "constants",
            Experiment::T1(_) => "t1",
            Experiment::Corona(_) => "corona",
            Experiment::Energy(_) => "energy",
        }
    }

    /// Mesh depth the experiment allocates; checked against the depth cap.
    pub fn depth(&self) -> u32 {
        match self {
            Experiment::BasisChecks(e) => e.depth,
            Experiment::NormEquivalence(e) => e.depth + 1,
            Experiment::Goodbad(e) => e.depth_gap,
            Experiment::Constants(e) => e.depth,
            Experiment::T1(e) => e.depth,
            Experiment::Corona(e) => e.depth + 1,
            Experiment::Energy(e) => e.depth,
        }
    }

    fn dimension(&self) -> usize {
        match self {
            Experiment::BasisChecks(e) => e.n,
            Experiment::NormEquivalence(e) => e.n,
            Experiment::Goodbad(e) => e.n,
            Experiment::Constants(e) => e.n,
            Experiment::T1(e) => e.n,
            Experiment::Corona(e) => e.n,
            Experiment::Energy(e) => e.n,
        }
    }

    /// First violated constraint as `(field, message)`.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let n = self.dimension();
        if !(1..=2).contains(&n) {
            return Err(("n", format!("must be 1 or 2, got {n}")));
        }
        let positive = |field: &'static str, v: f64| if v > 0.0 { Ok(()) } else { Err((field, format!("must be positive, got {v}"))) };
        let depth = |d: u32, min: u32| if d >= min { Ok(()) } else { Err(("depth", format!("must be at least {min}, got {d}"))) };
        let kappa = |k: usize| if k >= 1 { Ok(()) } else { Err(("kappa", "must be at least 1".to_string())) };
        let alpha = |a: f64| if a >= 0.0 && a < n as f64 { Ok(()) } else { Err(("alpha", format!("must lie in [0, {n}), got {a}"))) };
        let nonempty = |field: &'static str, len: usize| if len > 0 { Ok(()) } else { Err((field, "must not be empty".to_string())) };
        match self {
            Experiment::BasisChecks(e) => {
                depth(e.depth, 1)?;
                nonempty("kappa", e.kappa.len())?;
                e.kappa.iter().try_for_each(|&k| kappa(k))?;
                nonempty("measures", e.measures.len())?;
            }
            Experiment::NormEquivalence(e) => {
                depth(e.depth, 2)?;
                nonempty("s", e.s.len())?;
                if e.ensemble == 0 {
                    return Err(("ensemble", "must be positive".into()));
                }
            }
            Experiment::Goodbad(e) => {
                nonempty("eps", e.eps.len())?;
                nonempty("r", e.r.len())?;
                for &x in &e.eps {
                    if !(x > 0.0 && x < 1.0) {
                        return Err(("eps", format!("must lie in (0, 1), got {x}")));
                    }
                }
                if e.trials < 1000 {
                    return Err(("trials", format!("must be at least 1000, got {}", e.trials)));
                }
            }
            Experiment::Constants(e) => {
                depth(e.depth, 2)?;
                kappa(e.kappa)?;
                alpha(e.alpha)?;
                nonempty("s", e.s.len())?;
            }
            Experiment::T1(e) => {
                depth(e.depth, 2)?;
                kappa(e.kappa)?;
                alpha(e.alpha)?;
            }
            Experiment::Corona(e) => {
                depth(e.depth, 3)?;
                kappa(e.kappa)?;
                alpha(e.alpha)?;
                if let Some(g) = e.gamma {
                    if !(g >= 0.0) {
                        return Err(("gamma", format!("must be nonnegative, got {g}")));
                    }
                }
                positive("eps", e.eps)?;
            }
            Experiment::Energy(e) => {
                depth(e.depth, 6)?;
                kappa(e.kappa)?;
                alpha(e.alpha)?;
                positive("delta", e.delta)?;
                if let Some(c) = e.coarse {
                    if c < 4 || c > e.depth {
                        return Err(("coarse", format!("must lie in 4..={}, got {c}", e.depth)));
                    }
                }
                for &g in &e.gammas {
                    if !(g > 1.0) {
                        return Err(("gammas", format!("entries must exceed 1, got {g}")));
                    }
                }
            }
        }
        if let Experiment::Constants(ConstantsSpec { family: KernelFamily::RieszComponent(k), .. })
        | Experiment::Energy(EnergySpec { family: KernelFamily::RieszComponent(k), .. })
        | Experiment::T1(T1Config { family: KernelFamily::RieszComponent(k), .. }) = self
        {
            if *k >= n {
                return Err(("family", format!("Riesz component {k} out of range for n={n}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabConfig {
    pub seed: u64,
    pub depth_cap: Option<u32>,
    pub experiments: Vec<Experiment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    depth_cap: Option<u32>,
    #[serde(default)]
    experiment: Vec<toml::Table>,
}

/// 1-based line of `key =` inside the `index`-th `[[experiment]]` block, or
/// of the block header when the key is absent.
fn locate(text: &str, index: usize, key: &str) -> usize {
    let mut block = None;
    let mut header = 1;
    for (no, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            if t.starts_with("[[experiment]]") {
                block = Some(block.map_or(0, |b| b + 1));
                if block == Some(index) {
                    header = no + 1;
                }
            } else if block == Some(index) {
                break;
            }
            continue;
        }
        if block == Some(index) {
            let name = t.split('=').next().unwrap_or("").trim().trim_matches('"');
            if !key.is_empty() && name == key {
                return no + 1;
            }
        }
    }
    header
}

fn typed<T: DeserializeOwned>(table: toml::Table) -> std::result::Result<T, (String, String)> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let field = path.split(['.', '[']).next().unwrap_or("").to_string();
        let field = if field == "?" { String::new() } else { field };
        (field, e.into_inner().to_string())
    })
}

fn diag(text: &str, index: usize, field: &str, msg: &str) -> LabError {
    let line = locate(text, index, field);
    let name = if field.is_empty() { String::new() } else { format!(" field `{field}`:") };
    LabError::Parse(format!("line {line}: experiment {index}:{name} {msg}"))
}

pub fn parse_config(text: &str) -> Result<LabConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(1);
        LabError::Parse(format!("line {line}: {}", e.message()))
    })?;
    let mut experiments = Vec::with_capacity(raw.experiment.len());
    for (i, mut table) in raw.experiment.into_iter().enumerate() {
        let kind = match table.remove("kind") {
            Some(toml::Value::String(k)) => k,
            Some(_) => return Err(diag(text, i, "kind", "must be a string")),
            None => return Err(diag(text, i, "kind", "missing experiment kind")),
        };
        let parsed = match kind.as_str() {
            "basis_checks" => typed(table).map(Experiment::BasisChecks),
            "norm_equivalence" => typed(table).map(Experiment::NormEquivalence),
            "goodbad" => typed(table).map(Experiment::Goodbad),
            "constants" => typed(table).map(Experiment::Constants),
            "t1" => typed(table).map(Experiment::T1),
            "corona" => typed(table).map(Experiment::Corona),
            "energy" => typed(table).map(Experiment::Energy),
            other => {
                return Err(diag(text, i, "kind", &format!("unknown kind `{other}`, expected one of {}", KINDS.join(", "))))
            }
        };
        let e = parsed.map_err(|(field, msg)| diag(text, i, &field, &msg))?;
        e.check().map_err(|(field, msg)| diag(text, i, field, &msg))?;
        experiments.push(e);
    }
    Ok(LabConfig { seed: raw.seed, depth_cap: raw.depth_cap, experiments })
}

pub fn load_config(path: &std::path::Path) -> Result<LabConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_list_is_valid() {
        let c = parse_config("seed = 3\n").unwrap();
        assert_eq!(c.seed, 3);
        assert!(c.experiments.is_empty());
    }

    #[test]
    fn unknown_family_names_the_field_and_line() {
        let text = "seed = 1\n\n[[experiment]]\nkind = \"t1\"\ndepth = 4\nalpha = 0.5\ns = 0.0\nfamily = \"hilbert\"\nsigma = { kind = \"lebesgue\" }\nomega = { kind = \"lebesgue\" }\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("`family`"), "{err}");
        assert!(err.contains("line 8"), "{err}");
    }

    #[test]
    fn semantic_errors_are_located() {
        let text = "[[experiment]]\nkind = \"goodbad\"\neps = [0.5]\nr = [2]\n\n[[experiment]]\nkind = \"goodbad\"\neps = [1.5]\nr = [2]\n";
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("line 8") && err.contains("experiment 1") && err.contains("`eps`"), "{err}");
        let err = parse_config("[[experiment]]\nkind = \"spline\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("spline"), "{err}");
        let err = parse_config("seed = \"x\"\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn nested_measures_parse() {
        let text = "[[experiment]]\nkind = \"basis_checks\"\ndepth = 4\nkappa = [1, 2]\nmeasures = [{ kind = \"lebesgue\" }, { kind = \"cascade\", seed = 5 }]\n";
        let c = parse_config(text).unwrap();
        match &c.experiments[0] {
            Experiment::BasisChecks(b) => assert_eq!(b.measures[1], MeasureKind::cascade(5)),
            e => panic!("{e:?}"),
        }
    }
}
