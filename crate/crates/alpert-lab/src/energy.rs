//! Monotonicity and energy estimates for far-away measures, and the Sobolev
//! norm of the modulus of a wavelet vector.

use std::collections::HashMap;

use rayon::prelude::*;
use rand::Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::goodbad::trial_rng;
use crate::grid::{CubeGeom, DyadicCube, DyadicGrid};
use crate::operator::KernelSpec;
use crate::poisson::poisson_kernel;
use crate::poly::{binom, MonomialSet};
use crate::sobolev::norm_dyadic;
use crate::wavelet::{AlpertSystem, LeafFunction, WaveletCoefficients};

/// Terms of the monotonicity estimate `lhs ≲ Φ² + Ψ²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityTerms {
    pub lhs: f64,
    pub phi2: f64,
    pub psi2: f64,
    pub m_j: [f64; 2],
    pub delta: f64,
}

impl MonotonicityTerms {
    /// `lhs / (Φ² + Ψ²)`, `None` when both sides vanish.
    pub fn ratio(&self) -> Option<f64> {
        let den = self.phi2 + self.psi2;
        if den > 0.0 {
            Some(self.lhs / den)
        } else if self.lhs == 0.0 {
            None
        } else {
            Some(f64::INFINITY)
        }
    }
}

fn in_cube(grid: &DyadicGrid, j: &DyadicCube, x: [f64; 2]) -> bool {
    grid.geom(j).contains_point(&x[..grid.n()])
}

/// `Σ_{Q⊂J} ℓ(Q)^{-2s} ‖Δ_Q g‖² + ℓ(J)^{-2s} ‖E_J g‖² + residual`, the
/// dyadic norm squared of `1_J g` with `J` as the top cube.
pub fn restricted_norm_sq(sys: &AlpertSystem, j: &DyadicCube, g: &LeafFunction, s: f64) -> Result<f64> {
    let grid = *sys.grid();
    let inside: Vec<bool> = {
        let mut m = vec![false; g.leaf_count()];
        grid.leaves_in(j).into_iter().for_each(|l| m[l] = true);
        m
    };
    let gj = g.masked(|l| inside[l]);
    let c = sys.analyze(&gj)?;
    let layout = c.layout.clone();
    let mut acc = 0.0;
    for (idx, (q, _)) in layout.functions.iter().enumerate() {
        if q.is_within(j) {
            acc += layout.side(idx).powf(-2.0 * s) * c.wavelet[idx].powi(2);
        }
    }
    if let Some(gram) = sys.gram(j) {
        let e = nalgebra::DVector::from_vec(sys.project_e(j, &gj)?);
        acc += grid.side(j).powf(-2.0 * s) * e.dot(&(&gram * &e));
    }
    acc += layout.leaf_side().powf(-2.0 * s) * c.leaf_residual.iter().sum::<f64>();
    Ok(acc)
}

/// Leaf center of `J` minimizing `‖|x − m|^κ‖_{W^s(1_J ω)}`; ties go to the
/// candidate nearest the center of `J`.
pub fn minimizing_point(sys: &AlpertSystem, j: &DyadicCube, s: f64) -> Result<([f64; 2], f64)> {
    let grid = *sys.grid();
    let (n, d, kappa) = (grid.n(), grid.max_depth(), sys.kappa());
    let c = grid.center(j);
    let mut cands: Vec<[f64; 2]> = grid.leaves_in(j).into_iter().map(|l| crate::grid::leaf_center(n, d, l)).collect();
    let dist = |x: &[f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    cands.sort_by(|a, b| dist(a).total_cmp(&dist(b)));
    let mut best = (c, f64::INFINITY);
    for m in cands {
        let g = LeafFunction::sample(n, d, kappa + 1, kappa + 3, |x| {
            if in_cube(&grid, j, x) {
                ((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2)).sqrt().powi(kappa as i32)
            } else {
                0.0
            }
        });
        let v = restricted_norm_sq(sys, j, &g, s)?;
        if v < best.1 * (1.0 - 1e-12) {
            best = (m, v);
        }
    }
    Ok(best)
}

/// `‖|h_J|‖²_{W^{-s}(ω)} / ℓ(J)^{2s}` with `|h_J|² = (1/dim) Σ_a (h_J^a)²`.
pub fn modulus_wavelet_ratio(sys: &AlpertSystem, j: &DyadicCube, s: f64) -> Result<f64> {
    let grid = *sys.grid();
    let basis = sys.basis(j).ok_or(LabError::DegenerateCube { depth: j.depth, coords: j.coords })?;
    let dim = basis.dim() as f64;
    let kappa = sys.kappa();
    let g = LeafFunction::sample(grid.n(), grid.max_depth(), kappa, kappa + 3, |x| {
        if !in_cube(&grid, j, x) {
            return 0.0;
        }
        ((0..basis.dim()).map(|a| basis.eval(&grid, a, x).powi(2)).sum::<f64>() / dim).sqrt()
    });
    Ok(norm_dyadic(&sys.analyze(&g)?, -s).full.powi(2) / grid.side(j).powf(2.0 * s))
}

/// `∂_x^β K(x, y)` by central differences with step `h`.
pub fn kernel_derivative(k: &KernelSpec, beta: [u32; 2], x: [f64; 2], y: [f64; 2], h: f64) -> f64 {
    let mut acc = 0.0;
    for j0 in 0..=beta[0] {
        for j1 in 0..=beta[1] {
            let w = binom(beta[0], j0) * binom(beta[1], j1) * if (j0 + j1) % 2 == 0 { 1.0 } else { -1.0 };
            let p = [
                x[0] + (0.5 * beta[0] as f64 - j0 as f64) * h,
                x[1] + (0.5 * beta[1] as f64 - j1 as f64) * h,
            ];
            acc += w * k.eval(p, y);
        }
    }
    acc / h.powi((beta[0] + beta[1]) as i32)
}

/// `T μ` for leaf masses `masses`, sampled on the leaves of `J` (zero elsewhere).
pub fn remote_field(k: &KernelSpec, grid: &DyadicGrid, j: &DyadicCube, masses: &[f64], kf: usize) -> LeafFunction {
    let (n, d) = (grid.n(), grid.max_depth());
    let src: Vec<([f64; 2], f64)> = masses
        .iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(i, m)| (crate::grid::leaf_center(n, d, i), *m))
        .collect();
    LeafFunction::sample(n, d, kf, kf + 2, |x| {
        if !in_cube(grid, j, x) {
            return 0.0;
        }
        src.iter().map(|(y, m)| k.eval(x, *y) * m).sum()
    })
}

fn check_outside(grid: &DyadicGrid, region: &CubeGeom, masses: &[f64]) -> Result<()> {
    let n = grid.n();
    for (i, m) in masses.iter().enumerate() {
        if *m != 0.0 && region.contains_point(&crate::grid::leaf_center(n, grid.max_depth(), i)[..n]) {
            return Err(LabError::Precondition(format!("mass at leaf {i} lies inside the excluded region")));
        }
    }
    Ok(())
}

/// Quantities of `J` shared by every remote configuration.
#[derive(Clone, Debug)]
struct CubeData {
    m_j: [f64; 2],
    mnorm: f64,
    modulus: f64,
    /// `(β, ‖Δ_J x^β‖²)` for `|β| = κ`
    monomials: Vec<([u32; 2], f64)>,
}

fn delta_sq(sys: &AlpertSystem, j: &DyadicCube, f: &LeafFunction, s: f64) -> Result<f64> {
    let (off, dim) = sys.block(j).ok_or(LabError::DegenerateCube { depth: j.depth, coords: j.coords })?;
    let c = sys.analyze(f)?;
    Ok(sys.grid().side(j).powf(-2.0 * s) * c.wavelet[off..off + dim].iter().map(|v| v * v).sum::<f64>())
}

fn cube_data(sys: &AlpertSystem, j: &DyadicCube, s: f64) -> Result<CubeData> {
    let grid = sys.grid();
    let (n, d, kappa) = (grid.n(), grid.max_depth(), sys.kappa());
    let (m_j, mnorm) = minimizing_point(sys, j, s)?;
    let mut monomials = Vec::new();
    for beta in MonomialSet::of_degree(n, kappa as u32) {
        let xb = LeafFunction::sample(n, d, kappa + 1, kappa + 1, |x| x[0].powi(beta[0] as i32) * x[1].powi(beta[1] as i32));
        monomials.push((beta, delta_sq(sys, j, &xb, s)?));
    }
    Ok(CubeData { m_j, mnorm, modulus: modulus_wavelet_ratio(sys, j, s)?, monomials })
}

/// `‖Δ_J T μ‖²_{W^s(ω)}` and the two majorants `Φ²`, `Ψ²`.
pub fn monotonicity_terms(
    sys: &AlpertSystem,
    kernel: &KernelSpec,
    j: &DyadicCube,
    outer: &CubeGeom,
    remote: &[f64],
    s: f64,
    delta: f64,
) -> Result<MonotonicityTerms> {
    check_terms(sys, kernel, j, outer, remote)?;
    terms_with(sys, kernel, j, remote, s, delta, &cube_data(sys, j, s)?)
}

fn check_terms(sys: &AlpertSystem, kernel: &KernelSpec, j: &DyadicCube, outer: &CubeGeom, remote: &[f64]) -> Result<()> {
    let grid = sys.grid();
    if !grid.geom(j).dilate(2.0).is_subset_of(outer) {
        return Err(LabError::Precondition("need 2J ⊂ I".into()));
    }
    if kernel.bump_order < sys.kappa() + 1 {
        return Err(LabError::Precondition("truncation order must be at least κ + 1".into()));
    }
    sys.block(j).ok_or(LabError::DegenerateCube { depth: j.depth, coords: j.coords })?;
    check_outside(grid, outer, remote)
}

fn terms_with(
    sys: &AlpertSystem,
    kernel: &KernelSpec,
    j: &DyadicCube,
    remote: &[f64],
    s: f64,
    delta: f64,
    cd: &CubeData,
) -> Result<MonotonicityTerms> {
    let grid = *sys.grid();
    let gj = grid.geom(j);
    let (n, d, kappa) = (grid.n(), grid.max_depth(), sys.kappa());
    let lj = grid.side(j);
    let lhs = delta_sq(sys, j, &remote_field(kernel, &grid, j, remote, kappa + 2), s)?;

    let h = grid.leaf_side() / 4.0;
    let mut phi2 = 0.0;
    for &(beta, norm) in &cd.monomials {
        let deriv: f64 = remote
            .iter()
            .enumerate()
            .filter(|(_, m)| **m != 0.0)
            .map(|(i, m)| m * kernel_derivative(kernel, beta, cd.m_j, crate::grid::leaf_center(n, d, i), h))
            .sum();
        phi2 += deriv * deriv * norm;
    }

    let p: f64 = remote
        .iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(i, m)| m.abs() * poisson_kernel(&gj, crate::grid::leaf_center(n, d, i), kappa as f64 + delta, kernel.alpha, n))
        .sum();
    let psi2 = if p == 0.0 { 0.0 } else { (p / lj.powi(kappa as i32)).powi(2) * cd.mnorm * cd.modulus };
    Ok(MonotonicityTerms { lhs, phi2, psi2, m_j: cd.m_j, delta })
}

/// `|⟨T ν, Ψ_J⟩_ω| / [P_κ(J,ν) ℓ(J)^{-s} √|J|_ω ‖Ψ_J‖_{W^{-s}(ω)} · modulus ratio]`,
/// `None` for `ν = 0`. `psi` must be a wavelet combination inside `J`.
#[allow(clippy::too_many_arguments)]
pub fn energy_pivotal_ratio(
    sys: &AlpertSystem,
    kernel: &KernelSpec,
    j: &DyadicCube,
    nu: &[f64],
    psi: &WaveletCoefficients,
    s: f64,
    gamma: f64,
) -> Result<Option<f64>> {
    pivotal_ratio_with(sys, kernel, j, nu, psi, s, gamma, None)
}

#[allow(clippy::too_many_arguments)]
fn pivotal_ratio_with(
    sys: &AlpertSystem,
    kernel: &KernelSpec,
    j: &DyadicCube,
    nu: &[f64],
    psi: &WaveletCoefficients,
    s: f64,
    gamma: f64,
    modulus: Option<f64>,
) -> Result<Option<f64>> {
    let grid = *sys.grid();
    let (n, d, kappa) = (grid.n(), grid.max_depth(), sys.kappa());
    if !(gamma > 1.0) {
        return Err(LabError::Parameter(format!("gamma must exceed 1, got {gamma}")));
    }
    if nu.iter().any(|v| *v < 0.0) {
        return Err(LabError::Precondition("ν must be positive".into()));
    }
    let gj = grid.geom(j);
    check_outside(&grid, &gj.dilate(gamma), nu)?;
    if psi.coarse.iter().flatten().any(|v| *v != 0.0) || psi.leaf_residual.iter().any(|v| *v != 0.0) {
        return Err(LabError::Precondition("Ψ_J must have vanishing moments".into()));
    }
    for (idx, (q, _)) in psi.layout.functions.iter().enumerate() {
        if psi.wavelet[idx] != 0.0 && !q.is_within(j) {
            return Err(LabError::Precondition("Ψ_J must be supported in J".into()));
        }
    }
    let p: f64 = nu
        .iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(i, m)| m * poisson_kernel(&gj, crate::grid::leaf_center(n, d, i), kappa as f64, kernel.alpha, n))
        .sum();
    if p == 0.0 {
        return Ok(None);
    }
    let field = sys.analyze(&remote_field(kernel, &grid, j, nu, kappa + 2))?;
    let modulus = match modulus {
        Some(m) => m,
        None => modulus_wavelet_ratio(sys, j, s)?,
    };
    let pairing: f64 = field.wavelet.iter().zip(&psi.wavelet).map(|(a, b)| a * b).sum();
    let den = p * grid.side(j).powf(-s) * sys.mass(j).sqrt() * norm_dyadic(psi, -s).full * modulus;
    Ok(Some(pairing.abs() / den))
}

/// Largest monotonicity ratio over random remote configurations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicitySweep {
    pub max_ratio: f64,
    pub configs: usize,
    pub witness: usize,
}

/// Configuration `t`: a cube `J` of depth `2..=coarse−2`, `I = 4J`, and 1 to 4
/// signed masses on depth-`coarse` cells outside `I`, spread uniformly over
/// the fine leaves of each cell.
#[allow(clippy::too_many_arguments)]
pub fn monotonicity_sweep(
    sys: &AlpertSystem,
    kernel: &KernelSpec,
    coarse: u32,
    s: f64,
    delta: f64,
    configs: usize,
    seed: u64,
) -> Result<MonotonicitySweep> {
    let grid = *sys.grid();
    let (n, d) = (grid.n(), grid.max_depth());
    if coarse < 4 || coarse > d {
        return Err(LabError::Parameter(format!("coarse level {coarse} must lie in 4..={d}")));
    }
    let per = 1i64 << coarse;
    let mut drawn: Vec<(usize, DyadicCube, CubeGeom, Vec<f64>)> = Vec::with_capacity(configs);
    let mut t = 0u64;
    while drawn.len() < configs {
        let mut rng = trial_rng(seed, t);
        t += 1;
        let dj = rng.gen_range(2..=coarse - 2);
        let pj = 1i64 << dj;
        let j = DyadicCube::new(dj, [rng.gen_range(0..pj), if n == 2 { rng.gen_range(0..pj) } else { 0 }]);
        let outer = grid.geom(&j).dilate(4.0);
        // coarse cells whose closure avoids the interior of I
        let cells: Vec<i64> = (0..per.pow(n as u32))
            .filter(|&c| {
                let lo = [(c % per) as f64 / per as f64, (c / per) as f64 / per as f64];
                !overlaps(&CubeGeom { n, lo, side: 1.0 / per as f64 }, &outer)
            })
            .collect();
        if cells.is_empty() {
            continue;
        }
        let mut masses = vec![0.0; grid.leaf_count()];
        let k = rng.gen_range(1..=4usize);
        let fine = 1i64 << (d - coarse);
        for _ in 0..k {
            let c = cells[rng.gen_range(0..cells.len())];
            let w: f64 = rng.gen_range(-1.0..1.0);
            let (c0, c1) = (c % per, c / per);
            let big = 1i64 << d;
            for a in 0..fine {
                for b in 0..if n == 2 { fine } else { 1 } {
                    let leaf = (c0 * fine + a) + if n == 2 { (c1 * fine + b) * big } else { 0 };
                    masses[leaf as usize] += w / (fine.pow(n as u32)) as f64;
                }
            }
        }
        drawn.push(((t - 1) as usize, j, outer, masses));
    }

    let mut cubes: Vec<DyadicCube> = drawn.iter().map(|c| c.1).collect();
    cubes.sort_by_key(|c| (c.depth, c.coords));
    cubes.dedup();
    let data: HashMap<DyadicCube, CubeData> =
        cubes.par_iter().map(|j| Ok((*j, cube_data(sys, j, s)?))).collect::<Result<_>>()?;

    let ratios: Vec<Option<f64>> = drawn
        .par_iter()
        .map(|(_, j, outer, masses)| {
            check_terms(sys, kernel, j, outer, masses)?;
            Ok(terms_with(sys, kernel, j, masses, s, delta, &data[j])?.ratio())
        })
        .collect::<Result<_>>()?;
    let mut rep = MonotonicitySweep { max_ratio: 0.0, configs: drawn.len(), witness: 0 };
    for ((t, ..), r) in drawn.iter().zip(ratios) {
        if let Some(r) = r {
            if r > rep.max_ratio {
                rep.max_ratio = r;
                rep.witness = *t;
            }
        }
    }
    Ok(rep)
}

fn overlaps(a: &CubeGeom, b: &CubeGeom) -> bool {
    (0..a.n).all(|k| a.lo[k] < b.hi(k) && b.lo[k] < a.hi(k))
}

/// `C_γ`: the largest energy ratio over cubes `J` at depths `2..=max_depth`,
/// `Ψ_J = h_J^a` and unit point masses at every leaf outside `γJ`. For
/// positive `ν` the ratio is maximized by point masses.
pub fn energy_gamma_constant(sys: &AlpertSystem, kernel: &KernelSpec, depths: std::ops::RangeInclusive<u32>, s: f64, gamma: f64) -> Result<f64> {
    let grid = *sys.grid();
    let layout = sys.layout().clone();
    let mut best: f64 = 0.0;
    for dj in depths {
        for j in grid.interior_cubes_at_depth(dj) {
            let Some((off, dim)) = sys.block(&j) else { continue };
            let modulus = modulus_wavelet_ratio(sys, &j, s)?;
            let region = grid.geom(&j).dilate(gamma);
            let leaves: Vec<usize> = (0..grid.leaf_count())
                .filter(|&leaf| !region.contains_point(&crate::grid::leaf_center(grid.n(), grid.max_depth(), leaf)[..grid.n()]))
                .collect();
            let m = leaves
                .par_iter()
                .map(|&leaf| {
                    let mut nu = vec![0.0; grid.leaf_count()];
                    nu[leaf] = 1.0;
                    let mut m: f64 = 0.0;
                    for a in 0..dim {
                        let mut psi = sys.unit(off + a);
                        psi.layout = layout.clone();
                        if let Some(r) = pivotal_ratio_with(sys, kernel, &j, &nu, &psi, s, gamma, Some(modulus))? {
                            m = m.max(r);
                        }
                    }
                    Ok(m)
                })
                .collect::<Result<Vec<f64>>>()?;
            best = m.into_iter().fold(best, f64::max);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{DiscreteMeasure, MeasureKind};
    use crate::operator::KernelFamily;

    fn setup(kind: MeasureKind, d: u32, kappa: usize) -> (AlpertSystem, KernelSpec) {
        let mu = DiscreteMeasure::new(&kind, 1, d).unwrap();
        let g = DyadicGrid::standard(1, d).unwrap();
        let k = KernelSpec::with_defaults(1, 0.5, KernelFamily::FractionalIntegral, d, kappa).unwrap();
        (AlpertSystem::new(&mu, &g, kappa).unwrap(), k)
    }

    #[test]
    fn finite_differences_match_the_analytic_derivative() {
        let k = KernelSpec::new(1, 0.5, KernelFamily::FractionalIntegral, 1.0 / 64.0, 4.0, 4).unwrap();
        let (x, y) = ([0.3, 0.0], [0.8, 0.0]);
        // |x−y|^{-1/2} with x < y: d/dx = ½ (y−x)^{-3/2}, d²/dx² = ¾ (y−x)^{-5/2}
        let t: f64 = 0.5;
        let h = 1.0 / 1024.0;
        assert!((kernel_derivative(&k, [1, 0], x, y, h) - 0.5 * t.powf(-1.5)).abs() < 1e-5);
        assert!((kernel_derivative(&k, [2, 0], x, y, h) - 0.75 * t.powf(-2.5)).abs() < 1e-4);
        assert!((kernel_derivative(&k, [0, 0], x, y, h) - t.powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn modulus_ratio_is_one_at_s_zero() {
        for kappa in 1..=2 {
            let (sys, _) = setup(MeasureKind::power(1, 0.5), 6, kappa);
            for j in [DyadicCube::new(1, [1, 0]), DyadicCube::new(3, [2, 0])] {
                let r = modulus_wavelet_ratio(&sys, &j, 0.0).unwrap();
                assert!((r - 1.0).abs() < 1e-9, "κ={kappa}: {r}");
            }
        }
    }

    #[test]
    fn zero_remote_mass_gives_zero_terms() {
        let (sys, k) = setup(MeasureKind::Lebesgue, 6, 2);
        let j = DyadicCube::new(3, [3, 0]);
        let outer = sys.grid().geom(&j).dilate(4.0);
        let t = monotonicity_terms(&sys, &k, &j, &outer, &vec![0.0; 64], 0.1, 0.5).unwrap();
        assert_eq!((t.lhs, t.phi2, t.psi2), (0.0, 0.0, 0.0));
        assert!(sys.grid().geom(&j).contains_point(&t.m_j[..1]));
    }

    #[test]
    fn remote_mass_is_dominated() {
        let (sys, k) = setup(MeasureKind::Lebesgue, 7, 1);
        let j = DyadicCube::new(4, [3, 0]);
        let outer = sys.grid().geom(&j).dilate(4.0);
        let mut m = vec![0.0; 128];
        m[120] = 1.0;
        let t = monotonicity_terms(&sys, &k, &j, &outer, &m, 0.0, 0.5).unwrap();
        let r = t.ratio().unwrap();
        assert!(r > 0.0 && r < 10.0, "{r}");
        let mut inside = vec![0.0; 128];
        inside[25] = 1.0;
        assert!(monotonicity_terms(&sys, &k, &j, &outer, &inside, 0.0, 0.5).is_err());
    }

    #[test]
    fn energy_ratio_zero_and_far() {
        let (sys, k) = setup(MeasureKind::Lebesgue, 6, 1);
        let j = DyadicCube::new(3, [1, 0]);
        let (off, _) = sys.block(&j).unwrap();
        let psi = sys.unit(off);
        assert_eq!(energy_pivotal_ratio(&sys, &k, &j, &vec![0.0; 64], &psi, 0.0, 2.0).unwrap(), None);
        let mut nu = vec![0.0; 64];
        nu[60] = 1.0;
        let r = energy_pivotal_ratio(&sys, &k, &j, &nu, &psi, 0.0, 2.0).unwrap().unwrap();
        assert!(r > 0.0 && r.is_finite());
        let c2 = energy_gamma_constant(&sys, &k, 2..=3, 0.0, 2.0).unwrap();
        let c8 = energy_gamma_constant(&sys, &k, 2..=3, 0.0, 8.0).unwrap();
        assert!(c8 <= c2);
    }
}
