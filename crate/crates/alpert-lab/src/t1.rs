//! End-to-end two-weight experiment: operator norm against the testing and
//! Muckenhoupt constants.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{one_third_grids, DyadicGrid};
use crate::measure::{DiscreteMeasure, MeasureKind};
use crate::operator::{operator_norm, KernelFamily, KernelSpec, TestingMode, TwoWeight, Witness};
use crate::poisson::muckenhoupt_a2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Config {
    #[serde(default = "one")]
    pub n: usize,
    pub depth: u32,
    #[serde(default = "one")]
    pub kappa: usize,
    pub sigma: MeasureKind,
    pub omega: MeasureKind,
    pub family: KernelFamily,
    pub alpha: f64,
    pub s: f64,
    /// truncation radii and smoothness; defaults follow the mesh
    pub delta: Option<f64>,
    pub big_r: Option<f64>,
    pub bump_order: Option<usize>,
    /// also compute the triple testing constant
    #[serde(default)]
    pub triple: bool,
}

fn one() -> usize {
    1
}

impl T1Config {
    pub fn kernel(&self) -> Result<KernelSpec> {
        let d = KernelSpec::with_defaults(self.n, self.alpha, self.family, self.depth, self.kappa)?;
        KernelSpec::new(
            self.n,
            self.alpha,
            self.family,
            self.delta.unwrap_or(d.delta),
            self.big_r.unwrap_or(d.big_r),
            self.bump_order.unwrap_or(d.bump_order),
        )
    }

    pub fn with_depth(&self, depth: u32) -> Self {
        Self { depth, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T1Report {
    pub config: T1Config,
    pub norm: f64,
    pub norm_converged: bool,
    pub t_fwd: f64,
    pub t_dual: f64,
    pub sqrt_a2: f64,
    pub triple: Option<f64>,
    /// `max(𝔗, 𝔗*) / 𝔑`
    pub testing_ratio: Option<f64>,
    /// `√A₂ / 𝔑`
    pub a2_ratio: Option<f64>,
    /// `max(𝔗, 𝔗*, √A₂) / 𝔑`
    pub ratio_lower: Option<f64>,
    /// `𝔑 / (𝔗 + 𝔗* + √A₂)`
    pub ratio_upper: Option<f64>,
    pub witness_fwd: Witness,
    pub witness_dual: Witness,
    pub witness_a2: Witness,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

/// Testing constants are taken with κ = 1 and without an output cutoff.
pub fn run_t1_experiment(cfg: &T1Config) -> Result<T1Report> {
    let sigma = DiscreteMeasure::new(&cfg.sigma, cfg.n, cfg.depth)?;
    let omega = DiscreteMeasure::new(&cfg.omega, cfg.n, cfg.depth)?;
    let tw = TwoWeight::new(cfg.kernel()?, sigma.clone(), omega.clone(), cfg.kappa)?;
    let nrep = operator_norm(&tw.assemble(cfg.s)?);
    let fwd = tw.testing_constant(cfg.s, 1, TestingMode::Global, false)?;
    let dual = tw.testing_constant(cfg.s, 1, TestingMode::Global, true)?;
    let grids = one_third_grids(&DyadicGrid::standard(cfg.n, cfg.depth)?)?;
    let a2 = muckenhoupt_a2(&sigma, &omega, cfg.alpha, &grids)?;
    let triple = if cfg.triple { Some(tw.testing_constant(cfg.s, 1, TestingMode::Triple, false)?.value) } else { None };
    let sqrt_a2 = a2.value.sqrt();
    let n = nrep.value;
    let top = fwd.value.max(dual.value);
    // with a vanishing kernel every ratio is undefined
    let zero = n == 0.0 && top == 0.0;
    Ok(T1Report {
        config: cfg.clone(),
        norm: n,
        norm_converged: nrep.converged,
        t_fwd: fwd.value,
        t_dual: dual.value,
        sqrt_a2,
        triple,
        testing_ratio: ratio(top, n),
        a2_ratio: if zero { None } else { ratio(sqrt_a2, n) },
        ratio_lower: if zero { None } else { ratio(top.max(sqrt_a2), n) },
        ratio_upper: if zero { None } else { ratio(n, fwd.value + dual.value + sqrt_a2) },
        witness_fwd: fwd.witness,
        witness_dual: dual.witness,
        witness_a2: a2.witness,
    })
}

/// Measure pairs × {Riesz α = 0, fractional integral α = 1/2} × `s` values.
pub fn t1_suite(depth: u32, pairs: &[(MeasureKind, MeasureKind)], s_values: &[f64]) -> Vec<T1Config> {
    let mut out = Vec::new();
    for (sigma, omega) in pairs {
        for (family, alpha) in [(KernelFamily::RieszComponent(0), 0.0), (KernelFamily::FractionalIntegral, 0.5)] {
            for &s in s_values {
                out.push(T1Config {
                    n: 1,
                    depth,
                    kappa: 1,
                    sigma: sigma.clone(),
                    omega: omega.clone(),
                    family,
                    alpha,
                    s,
                    delta: None,
                    big_r: None,
                    bump_order: None,
                    triple: false,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> T1Config {
        T1Config {
            n: 1,
            depth: 4,
            kappa: 1,
            sigma: MeasureKind::Lebesgue,
            omega: MeasureKind::Lebesgue,
            family: KernelFamily::FractionalIntegral,
            alpha: 0.5,
            s: 0.0,
            delta: None,
            big_r: None,
            bump_order: None,
            triple: true,
        }
    }

    #[test]
    fn vanishing_kernel_has_no_ratios() {
        let cfg = T1Config { delta: Some(4.0), big_r: Some(8.0), ..base() };
        let r = run_t1_experiment(&cfg).unwrap();
        assert_eq!((r.norm, r.t_fwd, r.t_dual), (0.0, 0.0, 0.0));
        assert_eq!(r.ratio_lower, None);
        assert_eq!(r.ratio_upper, None);
    }

    #[test]
    fn lebesgue_fractional_integral() {
        let r = run_t1_experiment(&base()).unwrap();
        assert!(r.norm_converged);
        assert!(r.testing_ratio.unwrap() <= 1.0 + 1e-6);
        assert!((r.sqrt_a2 - 1.0).abs() < 1e-12);
        assert!(r.ratio_upper.unwrap().is_finite());
        assert!(r.triple.unwrap() >= 0.0);
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            depth = 5
            alpha = 0.0
            s = 0.1
            family = { riesz_component = 0 }
            sigma = { kind = "power", a = [0.5] }
            omega = { kind = "lebesgue" }
        "#;
        let cfg: T1Config = toml::from_str(text).unwrap();
        assert_eq!(cfg.family, KernelFamily::RieszComponent(0));
        assert_eq!(cfg.kappa, 1);
        let bad = text.replace("riesz_component", "riesz_components");
        assert!(toml::from_str::<T1Config>(&bad).is_err());
    }
}
