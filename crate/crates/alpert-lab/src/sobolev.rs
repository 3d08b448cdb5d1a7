//! Dyadic, difference and continuous Sobolev norms, duality, and ensemble
//! comparisons between norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::grid::DyadicCube;
use crate::measure::DiscreteMeasure;
use crate::wavelet::{AlpertSystem, LeafFunction, WaveletCoefficients};

/// Order `s` and degree `κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevParams {
    pub s: f64,
    pub kappa: usize,
}

impl SobolevParams {
    pub fn new(s: f64, kappa: usize) -> Result<Self> {
        if !(s.abs() < 1.0) {
            return Err(LabError::Parameter(format!("|s| must be < 1, got {s}")));
        }
        if kappa == 0 {
            return Err(LabError::Parameter("kappa must be at least 1".into()));
        }
        Ok(Self { s, kappa })
    }

    /// Warnings for orders outside the range where equivalences are expected.
    pub fn warnings(&self, theta_rev: f64) -> Vec<String> {
        let mut w = Vec::new();
        if self.s.abs() > theta_rev / 2.0 {
            w.push(format!("|s| = {} exceeds θ_rev/2 = {}", self.s.abs(), theta_rev / 2.0));
        }
        w
    }
}

/// Parts of the dyadic norm. `homogeneous` sums wavelet energy only;
/// `full` adds the coarse part on the top cubes (weight 1) and the energy below
/// the finest level (weight `ℓ(leaf)^{-2s}`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadicNorm {
    pub homogeneous: f64,
    pub coarse: f64,
    pub residual: f64,
    pub full: f64,
}

pub fn norm_dyadic(c: &WaveletCoefficients, s: f64) -> DyadicNorm {
    let layout = &c.layout;
    let mut h2 = 0.0;
    for (i, v) in c.wavelet.iter().enumerate() {
        h2 += layout.side(i).powf(-2.0 * s) * v * v;
    }
    let c2 = c.coarse_energy();
    let r2 = layout.leaf_side().powf(-2.0 * s) * c.leaf_residual.iter().sum::<f64>();
    DyadicNorm { homogeneous: h2.sqrt(), coarse: c2.sqrt(), residual: r2.sqrt(), full: (h2 + c2 + r2).sqrt() }
}

/// Full dyadic norm of a leaf function.
pub fn full_norm(sys: &AlpertSystem, f: &LeafFunction, s: f64) -> Result<f64> {
    Ok(norm_dyadic(&sys.analyze(f)?, s).full)
}

/// `(Σ_Q ℓ(Q)^{-2s} ∫_Q |f − E_{Q;κ} f|² dμ)^{1/2}` over all cubes down to the leaves.
pub fn norm_difference(sys: &AlpertSystem, f: &LeafFunction, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(LabError::Parameter(format!("difference norm needs s > 0, got {s}")));
    }
    let c = sys.analyze(f)?;
    let q = 2f64.powf(2.0 * s);
    // Σ_{j=0}^{d} 2^{2sj}
    let weight = |d: u32| (q.powi(d as i32 + 1) - 1.0) / (q - 1.0);
    let mut total = 0.0;
    for (i, v) in c.wavelet.iter().enumerate() {
        total += weight(c.layout.functions[i].0.depth) * v * v;
    }
    total += weight(c.layout.max_depth) * c.leaf_residual.iter().sum::<f64>();
    Ok(total.sqrt())
}

/// κ = 1 difference norm from `½ Σ_Q ℓ(Q)^{-2s} |Q|_μ^{-1} ∫∫_{Q×Q} (f(x) − f(y))²`,
/// for piecewise-constant `f` on the standard grid.
pub fn norm_difference_double_integral(mu: &DiscreteMeasure, f: &LeafFunction, s: f64) -> Result<f64> {
    if f.kf != 1 {
        return Err(LabError::Precondition("double-integral form needs a piecewise-constant function".into()));
    }
    let grid = crate::grid::DyadicGrid::standard(mu.n(), mu.depth())?;
    let m = mu.leaf_masses();
    let mut total = 0.0;
    for d in 0..=mu.depth() {
        let side = 0.5f64.powi(d as i32);
        for q in grid.cubes_at_depth(d) {
            let leaves = grid.leaves_in(&q);
            let mut sum = 0.0;
            for &i in &leaves {
                for &j in &leaves {
                    let diff = f.coeffs[i] - f.coeffs[j];
                    sum += m[i] * m[j] * diff * diff;
                }
            }
            let mass = mu.cube_mass(&grid, &q);
            if mass > 0.0 {
                total += 0.5 * side.powf(-2.0 * s) * sum / mass;
            }
        }
    }
    Ok(total.sqrt())
}

/// Continuous norm with leaf-center quadrature and exact cell masses. The ball
/// `B((x+y)/2, |x−y|/2)` is an interval in one dimension and the ℓ^∞ ball in two.
pub fn norm_continuous(mu: &DiscreteMeasure, f: &LeafFunction, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(LabError::Parameter(format!("continuous norm needs 0 < s < 1, got {s}")));
    }
    if f.n != mu.n() || f.depth != mu.depth() {
        return Err(LabError::Mismatch("function mesh differs from the measure".into()));
    }
    let vals = f.center_values();
    let m = mu.leaf_masses();
    let n = mu.n();
    let centers: Vec<[f64; 2]> = (0..vals.len()).map(|i| mu.leaf_center(i)).collect();
    let mut total = 0.0;
    for i in 0..vals.len() {
        if m[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in (i + 1)..vals.len() {
            let diff = vals[i] - vals[j];
            if diff == 0.0 || m[j] == 0.0 {
                continue;
            }
            let (x, y) = (centers[i], centers[j]);
            let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            let r = 0.5 * dist;
            let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
            let ball = if n == 1 {
                mu.real_box_mass([mid[0] - r, 0.0], [mid[0] + r, 0.0])
            } else {
                mu.real_box_mass([mid[0] - r, mid[1] - r], [mid[0] + r, mid[1] + r])
            };
            if ball <= 0.0 {
                continue;
            }
            row += diff * diff * m[j] / (dist.powf(2.0 * s) * ball);
        }
        // ordered pairs count both (i,j) and (j,i)
        total += 2.0 * m[i] * row;
    }
    Ok(total.sqrt())
}

/// `⟨f, g⟩_{L²(μ)}` from coefficients, with the Cauchy–Schwarz bound
/// `‖f‖_{W^s} ‖g‖_{W^{-s}}` (full norms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pairing {
    pub value: f64,
    pub bound: f64,
}

pub fn duality_pairing(f: &WaveletCoefficients, g: &WaveletCoefficients, s: f64) -> Result<Pairing> {
    if f.wavelet.len() != g.wavelet.len() || f.coarse.len() != g.coarse.len() {
        return Err(LabError::Mismatch("coefficients from different systems".into()));
    }
    let mut value: f64 = f.wavelet.iter().zip(&g.wavelet).map(|(a, b)| a * b).sum();
    for (a, b) in f.coarse.iter().zip(&g.coarse) {
        value += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    }
    let bound = norm_dyadic(f, s).full * norm_dyadic(g, -s).full;
    Ok(Pairing { value, bound })
}

/// Ratio interval of two norms over an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub argmin: usize,
    pub argmax: usize,
    pub counted: usize,
    pub norm_a: String,
    pub norm_b: String,
    pub ensemble: String,
}

pub fn equivalence_ratio<A, B>(
    norm_a: (&str, A),
    norm_b: (&str, B),
    ensemble: &[LeafFunction],
    description: &str,
) -> Result<EquivalenceReport>
where
    A: Fn(&LeafFunction) -> Result<f64>,
    B: Fn(&LeafFunction) -> Result<f64>,
{
    if ensemble.is_empty() {
        return Err(LabError::Parameter("empty ensemble".into()));
    }
    let mut rep = EquivalenceReport {
        ratio_min: f64::INFINITY,
        ratio_max: 0.0,
        argmin: 0,
        argmax: 0,
        counted: 0,
        norm_a: norm_a.0.into(),
        norm_b: norm_b.0.into(),
        ensemble: description.into(),
    };
    for (i, f) in ensemble.iter().enumerate() {
        let a = (norm_a.1)(f)?;
        let b = (norm_b.1)(f)?;
        let tiny = 1e-13 * a.max(b);
        if a <= tiny || b <= tiny {
            continue;
        }
        let r = a / b;
        rep.counted += 1;
        if r < rep.ratio_min {
            rep.ratio_min = r;
            rep.argmin = i;
        }
        if r > rep.ratio_max {
            rep.ratio_max = r;
            rep.argmax = i;
        }
    }
    if rep.counted == 0 {
        return Err(LabError::Parameter("every ensemble member has zero norm".into()));
    }
    Ok(rep)
}

/// Resolution-independent test functions, realizable at any depth.
#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleMember {
    /// random values on the cells of a coarse dyadic partition of depth `level`
    Steps { level: u32, values: Vec<f64> },
    /// indicator of `[lo, hi)` with endpoints on a coarse lattice
    Box { lo: [f64; 2], hi: [f64; 2] },
    /// `Σ a_k cos(2π(k·x) + φ_k)`
    Trig { terms: Vec<([f64; 2], f64, f64)> },
}

impl EnsembleMember {
    pub fn realize(&self, n: usize, depth: u32) -> LeafFunction {
        match self {
            EnsembleMember::Steps { level, values } => {
                let lev = (*level).min(depth);
                let big_n = 1usize << depth;
                let w = 1usize << lev;
                let leaves = big_n.pow(n as u32);
                let vals = (0..leaves)
                    .map(|i| {
                        let k0 = (i % big_n) >> (depth - lev);
                        let k1 = if n == 2 { (i / big_n) >> (depth - lev) } else { 0 };
                        values[(k0 + w * k1) % values.len()]
                    })
                    .collect();
                LeafFunction::from_values(n, depth, vals)
            }
            EnsembleMember::Box { lo, hi } => {
                let big_n = 1usize << depth;
                let h = 1.0 / big_n as f64;
                LeafFunction::indicator(n, depth, |i| {
                    let c = [((i % big_n) as f64 + 0.5) * h, ((i / big_n) as f64 + 0.5) * h];
                    (0..n).all(|a| c[a] >= lo[a] && c[a] < hi[a])
                })
            }
            EnsembleMember::Trig { terms } => {
                let terms = terms.clone();
                LeafFunction::sample(n, depth, 2, 6, move |x| {
                    terms
                        .iter()
                        .map(|(k, a, phi)| {
                            a * (2.0 * std::f64::consts::PI * (k[0] * x[0] + k[1] * x[1]) + phi).cos()
                        })
                        .sum()
                })
            }
        }
    }
}

/// Mixed ensemble of `count` members: coarse random steps, lattice boxes and
/// low-frequency trigonometric sums, in rotation.
pub fn standard_ensemble(n: usize, count: usize, coarse_level: u32, seed: u64) -> Vec<EnsembleMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = 1usize << coarse_level;
    let lattice = cells as f64;
    (0..count)
        .map(|i| match i % 3 {
            0 => {
                let level = rng.gen_range(1..=coarse_level);
                let len = (1usize << level).pow(n as u32);
                EnsembleMember::Steps { level, values: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() }
            }
            1 => {
                let mut lo = [0.0; 2];
                let mut hi = [1.0; 2];
                for a in 0..n {
                    let x = rng.gen_range(0..cells);
                    let y = rng.gen_range(x + 1..=cells);
                    lo[a] = x as f64 / lattice;
                    hi[a] = y as f64 / lattice;
                }
                EnsembleMember::Box { lo, hi }
            }
            _ => {
                let k = rng.gen_range(1..=3);
                let terms = (0..k)
                    .map(|_| {
                        let freq = [rng.gen_range(0..=4) as f64, if n == 2 { rng.gen_range(0..=4) as f64 } else { 0.0 }];
                        (freq, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
                    })
                    .collect();
                EnsembleMember::Trig { terms }
            }
        })
        .collect()
}

/// `f = Σ_{k=1}^{2N} (−1)^k 1_{[k−1,k)}` rescaled to `[0,1)`.
pub fn alternating_family(depth: u32, pieces: usize) -> Result<LeafFunction> {
    let big_n = 1usize << depth;
    if pieces == 0 || !big_n.is_multiple_of(pieces) {
        return Err(LabError::Parameter(format!("{pieces} pieces do not tile {big_n} leaves")));
    }
    let per = big_n / pieces;
    let vals = (0..big_n).map(|i| if (i / per + 1).is_multiple_of(2) { 1.0 } else { -1.0 }).collect();
    Ok(LeafFunction::from_values(1, depth, vals))
}

/// `‖|f|‖²_{W^{-s}} / ‖f‖²_{W^{-s}}` with full dyadic norms.
pub fn modulus_asymmetry(sys: &AlpertSystem, f: &LeafFunction, s: f64) -> Result<f64> {
    if f.kf != 1 {
        return Err(LabError::Precondition("modulus is taken leafwise on piecewise-constant functions".into()));
    }
    let abs = LeafFunction::from_values(f.n, f.depth, f.coeffs.iter().map(|v| v.abs()).collect());
    let a = norm_dyadic(&sys.analyze(&abs)?, -s).full;
    let b = norm_dyadic(&sys.analyze(f)?, -s).full;
    Ok((a / b).powi(2))
}

/// Truncated `Σ_{k=0}^{depth(I)} 2^{k|s|} |I|_μ / |π^k I|_μ`.
pub fn sharpness_sum(sys: &AlpertSystem, i: &DyadicCube, s: f64) -> f64 {
    let mi = sys.mass(i);
    (0..=i.depth)
        .map(|k| {
            let anc = i.ancestor(k).expect("k ≤ depth");
            2f64.powf(k as f64 * s.abs()) * mi / sys.mass(&anc)
        })
        .sum()
}

/// Least-squares slope and R² of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DyadicGrid;
    use crate::measure::MeasureKind;

    fn system(n: usize, d: u32, kind: &MeasureKind, kappa: usize) -> (DiscreteMeasure, AlpertSystem) {
        let mu = DiscreteMeasure::new(kind, n, d).unwrap();
        let g = DyadicGrid::standard(n, d).unwrap();
        let sys = AlpertSystem::new(&mu, &g, kappa).unwrap();
        (mu, sys)
    }

    #[test]
    fn wavelet_norms_are_exact() {
        let (_, sys) = system(1, 5, &MeasureKind::cascade(3), 2);
        for idx in 0..sys.num_wavelets() {
            let c = sys.analyze(&sys.wavelet_function(idx).unwrap()).unwrap();
            let side = c.layout.side(idx);
            for s in [-0.25, 0.0, 0.25] {
                let v = norm_dyadic(&c, s);
                assert!((v.homogeneous - side.powf(-s)).abs() < 1e-12 * side.powf(-s));
            }
        }
    }

    #[test]
    fn degenerate_example_is_zero() {
        // μ = 1_{[-1,1)}, f = 1_{[0,1)} rescaled into the box by a half shift
        let mu = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, 6).unwrap();
        let g = DyadicGrid::new(1, 6, [32, 0]).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 1).unwrap();
        let f = LeafFunction::indicator(1, 6, |i| i >= 32);
        let c = sys.analyze(&f).unwrap();
        assert_eq!(norm_dyadic(&c, 0.2).homogeneous, 0.0);
        assert!(c.coarse_energy() > 0.0);
    }

    #[test]
    fn parseval_at_zero() {
        let (mu, sys) = system(2, 4, &MeasureKind::power(2, 0.5), 2);
        let f = standard_ensemble(2, 3, 3, 1)[2].realize(2, 4);
        let v = norm_dyadic(&sys.analyze(&f).unwrap(), 0.0);
        assert!((v.full.powi(2) - f.l2_sq(&mu)).abs() < 1e-10 * f.l2_sq(&mu));
    }

    #[test]
    fn difference_norm_matches_double_integral() {
        let (mu, sys) = system(1, 6, &MeasureKind::cascade(5), 1);
        for (i, m) in standard_ensemble(1, 6, 4, 2).iter().enumerate() {
            if i % 3 == 2 {
                continue;
            }
            let f = m.realize(1, 6);
            let a = norm_difference(&sys, &f, 0.3).unwrap();
            let b = norm_difference_double_integral(&mu, &f, 0.3).unwrap();
            assert!((a - b).abs() < 1e-9 * b.max(1e-300), "{a} {b}");
        }
        assert!(norm_difference(&sys, &LeafFunction::from_values(1, 6, vec![2.0; 64]), 0.3).unwrap() < 1e-12);
        assert!(norm_difference(&sys, &LeafFunction::from_values(1, 6, vec![2.0; 64]), 0.0).is_err());
    }

    #[test]
    fn continuous_norm_refinement() {
        let s = 0.25;
        let val = |d: u32| {
            let mu = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, d).unwrap();
            let f = LeafFunction::indicator(1, d, |i| i < (1 << (d - 1)));
            norm_continuous(&mu, &f, s).unwrap().powi(2)
        };
        let (a, b) = (val(7), val(8));
        assert!(a > 0.0);
        assert!((a - b).abs() / b < 0.05);
        let mu = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, 5).unwrap();
        assert_eq!(norm_continuous(&mu, &LeafFunction::from_values(1, 5, vec![1.0; 32]), s).unwrap(), 0.0);
    }

    #[test]
    fn duality_examples() {
        let (_, sys) = system(1, 5, &MeasureKind::Lebesgue, 2);
        let a = sys.analyze(&sys.wavelet_function(4).unwrap()).unwrap();
        let b = sys.analyze(&sys.wavelet_function(9).unwrap()).unwrap();
        let p = duality_pairing(&a, &a, 0.3).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12 && (p.bound - 1.0).abs() < 1e-12);
        assert!(duality_pairing(&a, &b, 0.3).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn kappa_norms_agree_at_zero() {
        let (_, s1) = system(1, 6, &MeasureKind::cascade(8), 1);
        let (_, s2) = system(1, 6, &MeasureKind::cascade(8), 2);
        let ens: Vec<LeafFunction> = standard_ensemble(1, 30, 4, 3).iter().map(|m| m.realize(1, 6)).collect();
        let r = equivalence_ratio(
            ("k1", |f: &LeafFunction| full_norm(&s1, f, 0.0)),
            ("k2", |f: &LeafFunction| full_norm(&s2, f, 0.0)),
            &ens,
            "mixed",
        )
        .unwrap();
        assert!((r.ratio_min - 1.0).abs() < 1e-10 && (r.ratio_max - 1.0).abs() < 1e-10);
    }

    #[test]
    fn alternating_asymmetry_is_exact_for_haar() {
        let (_, sys) = system(1, 8, &MeasureKind::Lebesgue, 1);
        for pieces in [4usize, 16, 64] {
            let f = alternating_family(8, pieces).unwrap();
            let r = modulus_asymmetry(&sys, &f, 0.2).unwrap();
            let big_n = (pieces / 2) as f64;
            assert!((r - big_n.powf(0.4)).abs() < 1e-10 * r);
        }
    }

    #[test]
    fn sharpness_sum_grows() {
        let mut last = 0.0;
        for d in 3..9 {
            let (_, sys) = system(1, d, &MeasureKind::Lebesgue, 1);
            let v = sharpness_sum(&sys, &DyadicCube::new(d - 1, [0, 0]), 0.5);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn fit_line_recovers_slope() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 2.0 - 0.5 * t).collect();
        let (m, b, r2) = fit_line(&x, &y);
        assert!((m + 0.5).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
