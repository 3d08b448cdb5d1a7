//! Fractional Poisson integrals, the Muckenhoupt constant, pivotal lower
//! bounds and the Poisson decay inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corona::stopping_children;
use crate::error::{LabError, Result};
use crate::grid::{CubeGeom, DyadicCube, DyadicGrid};
use crate::measure::DiscreteMeasure;
use crate::operator::{ConstantReport, Witness};

/// `Σ_cells ℓ(J)^m (ℓ(J) + |y − c_J|)^{-(m+n−α)} μ(cell)` over the given leaves.
/// The order `m` may be fractional.
pub fn poisson_sum(j: &CubeGeom, mu: &DiscreteMeasure, m: f64, alpha: f64, leaves: impl IntoIterator<Item = usize>) -> f64 {
    let masses = mu.leaf_masses();
    let mut acc = 0.0;
    for i in leaves {
        let w = masses[i];
        if w != 0.0 {
            acc += w * poisson_kernel(j, mu.leaf_center(i), m, alpha, mu.n());
        }
    }
    acc
}

/// `ℓ(J)^m (ℓ(J) + |y − c_J|)^{-(m+n−α)}`.
pub fn poisson_kernel(j: &CubeGeom, y: [f64; 2], m: f64, alpha: f64, n: usize) -> f64 {
    let l = j.side;
    let c = j.center();
    let d = ((y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2)).sqrt();
    l.powf(m) * (l + d).powf(-(m + n as f64 - alpha))
}

/// `P_m^α(J, μ)` over the whole mesh.
pub fn poisson_integral(j: &CubeGeom, mu: &DiscreteMeasure, m: f64, alpha: f64) -> f64 {
    poisson_sum(j, mu, m, alpha, 0..mu.leaf_count())
}

/// `sup_Q |Q|_ω |Q|_σ / |Q|^{2(1−α/n)}` over interior cubes of the given grids.
pub fn muckenhoupt_a2(sigma: &DiscreteMeasure, omega: &DiscreteMeasure, alpha: f64, grids: &[DyadicGrid]) -> Result<ConstantReport> {
    check_pair(sigma, omega)?;
    let n = sigma.n() as f64;
    let mut best = ConstantReport::new("a2", 0.0, Witness::None);
    for g in grids {
        for d in 0..=g.max_depth() {
            for q in g.interior_cubes_at_depth(d) {
                let l = g.side(&q);
                let v = omega.cube_mass(g, &q) * sigma.cube_mass(g, &q) / l.powf(2.0 * (n - alpha));
                if v > best.value {
                    best.value = v;
                    best.witness = Witness::Cube { depth: q.depth, coords: q.coords, shift: g.shift(), degree: 0 };
                }
            }
        }
    }
    Ok(best)
}

fn check_pair(sigma: &DiscreteMeasure, omega: &DiscreteMeasure) -> Result<()> {
    if sigma.n() != omega.n() || sigma.depth() != omega.depth() {
        return Err(LabError::Mismatch("σ and ω live on different meshes".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotalStrategy {
    /// Partitions of `Q` into its descendants `t` levels down, `t = 0..=cap`.
    UniformDepth(u32),
    /// Maximal subcubes where `P_κ(I, 1_Q σ)² |I|_ω ≥ γ |I|_σ`.
    GreedyStopping(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotalParams {
    pub alpha: f64,
    pub kappa: usize,
    pub eps: f64,
    pub strategy: PivotalStrategy,
}

impl PivotalParams {
    pub fn new(alpha: f64, kappa: usize, eps: f64, strategy: PivotalStrategy) -> Result<Self> {
        if eps < 0.0 || kappa < 1 {
            return Err(LabError::Parameter(format!("need eps ≥ 0 and kappa ≥ 1, got {eps}, {kappa}")));
        }
        Ok(Self { alpha, kappa, eps, strategy })
    }
}

/// `|Q|_σ^{-1} Σ_r P_κ^α(Q_r, 1_Q σ)² (ℓ(Q)/ℓ(Q_r))^ε |Q_r|_ω`.
pub fn pivotal_sum(
    g: &DyadicGrid,
    q: &DyadicCube,
    parts: &[DyadicCube],
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    p: &PivotalParams,
) -> f64 {
    let mass = sigma.cube_mass(g, q);
    if mass <= 0.0 {
        return 0.0;
    }
    let inside = g.leaves_in(q);
    let lq = g.side(q);
    let sum: f64 = parts
        .iter()
        .map(|r| {
            let wr = omega.cube_mass(g, r);
            if wr == 0.0 {
                return 0.0;
            }
            let geom = g.geom(r);
            let pk = poisson_sum(&geom, sigma, p.kappa as f64, p.alpha, inside.iter().copied());
            pk * pk * (lq / geom.side).powf(p.eps) * wr
        })
        .sum();
    sum / mass
}

fn descendants(q: &DyadicCube, n: usize, t: u32) -> Vec<DyadicCube> {
    let mut level = vec![*q];
    for _ in 0..t {
        level = level.iter().flat_map(|c| c.children(n)).collect();
    }
    level
}

/// Lower bound for the pivotal constant from one decomposition family.
pub fn pivotal_constant(
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    p: &PivotalParams,
    grids: &[DyadicGrid],
) -> Result<ConstantReport> {
    check_pair(sigma, omega)?;
    let mut best = ConstantReport::new("pivotal_lower_bound", 0.0, Witness::None);
    for g in grids {
        let cubes: Vec<DyadicCube> = (0..=g.max_depth()).flat_map(|d| g.interior_cubes_at_depth(d)).collect();
        let found: Vec<(f64, DyadicCube, Vec<DyadicCube>)> = cubes
            .par_iter()
            .map(|q| {
                let mut local = (0.0, *q, Vec::new());
                let candidates: Vec<Vec<DyadicCube>> = match p.strategy {
                    PivotalStrategy::UniformDepth(cap) => {
                        let top = cap.min(g.max_depth() - q.depth);
                        (0..=top).map(|t| descendants(q, g.n(), t)).collect()
                    }
                    PivotalStrategy::GreedyStopping(gamma) => {
                        vec![stopping_children(g, q, sigma, omega, gamma, p.kappa, p.alpha)]
                    }
                };
                for parts in candidates {
                    let v = pivotal_sum(g, q, &parts, sigma, omega, p);
                    if v > local.0 {
                        local = (v, *q, parts);
                    }
                }
                local
            })
            .collect();
        for (v, q, parts) in found {
            if v > best.value {
                best.value = v;
                best.witness = Witness::Decomposition {
                    top: (q.depth, q.coords),
                    cubes: parts.iter().map(|c| (c.depth, c.coords)).collect(),
                };
                best.note = format!("lower bound; grid shift {:?}", g.shift());
            }
        }
    }
    Ok(best)
}

/// Max of [`pivotal_constant`] over several strategies.
pub fn pivotal_lower_bound(
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    alpha: f64,
    kappa: usize,
    eps: f64,
    strategies: &[PivotalStrategy],
    grids: &[DyadicGrid],
) -> Result<ConstantReport> {
    let mut best = ConstantReport::new("pivotal_lower_bound", 0.0, Witness::None);
    for s in strategies {
        let r = pivotal_constant(sigma, omega, &PivotalParams::new(alpha, kappa, eps, *s)?, grids)?;
        if r.value > best.value {
            best = r;
        }
    }
    Ok(best)
}

/// `P_m^α(J, σ1_{K∖I}) / [(ℓ(J)/ℓ(I))^{m−ε(n+m−α)} P_m^α(I, σ1_{K∖I})]`;
/// `None` when the annulus carries no mass.
pub fn poisson_decay_ratio(
    j: &CubeGeom,
    i: &CubeGeom,
    k: &CubeGeom,
    sigma: &DiscreteMeasure,
    m: u32,
    alpha: f64,
    eps: f64,
) -> Result<Option<f64>> {
    if !(j.is_subset_of(i) && i.is_subset_of(k)) {
        return Err(LabError::Precondition("need J ⊂ I ⊂ K".into()));
    }
    let n = sigma.n();
    let same = (0..n).all(|a| j.lo[a] == i.lo[a]) && j.side == i.side;
    if !same {
        let gap = (0..n).map(|a| (j.lo[a] - i.lo[a]).min(i.hi(a) - j.hi(a))).fold(f64::INFINITY, f64::min);
        let need = 2.0 * (n as f64).sqrt() * j.side.powf(eps) * i.side.powf(1.0 - eps);
        if gap <= need {
            return Err(LabError::Precondition(format!("dist(J, ∂I) = {gap} ≤ {need}")));
        }
    }
    let annulus: Vec<usize> = (0..sigma.leaf_count())
        .filter(|&c| {
            let y = sigma.leaf_center(c);
            k.contains_point(&y[..n]) && !i.contains_point(&y[..n])
        })
        .collect();
    let den_p = poisson_sum(i, sigma, m as f64, alpha, annulus.iter().copied());
    if den_p == 0.0 {
        return Ok(None);
    }
    let num = poisson_sum(j, sigma, m as f64, alpha, annulus.iter().copied());
    let expo = m as f64 - eps * (n as f64 + m as f64 - alpha);
    Ok(Some(num / ((j.side / i.side).powf(expo) * den_p)))
}

/// Largest decay ratio over randomly drawn admissible dyadic triples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub max_ratio: f64,
    pub samples: usize,
    pub applicable: usize,
    pub witness: Option<((u32, [i64; 2]), (u32, [i64; 2]), (u32, [i64; 2]))>,
}

/// Draws `I` at depth 1..=3, `K` one or two levels above `I`, and `J` a
/// descendant of `I` deep and central enough to satisfy the distance
/// condition; `J` is uniform over the admissible positions of its depth.
pub fn sample_decay_triples(sigma: &DiscreteMeasure, m: u32, alpha: f64, eps: f64, count: usize, seed: u64) -> Result<DecayReport> {
    let n = sigma.n();
    let grid = DyadicGrid::standard(n, sigma.depth())?;
    let d_max = grid.max_depth();
    // admissible (depth of I, depth of J, first admissible offset inside I)
    let mut pairs = Vec::new();
    for di in 1..=3u32.min(d_max) {
        for dj in di + 1..=d_max {
            let (li, lj) = (0.5f64.powi(di as i32), 0.5f64.powi(dj as i32));
            let need = 2.0 * (n as f64).sqrt() * lj.powf(eps) * li.powf(1.0 - eps);
            let tmin = (need / lj).floor() as i64 + 1;
            let span = 1i64 << (dj - di);
            if tmin <= span - 1 - tmin {
                pairs.push((di, dj, tmin));
            }
        }
    }
    if pairs.is_empty() {
        return Err(LabError::Precondition(format!("no admissible triples at depth {d_max} for eps = {eps}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = DecayReport { max_ratio: 0.0, samples: 0, applicable: 0, witness: None };
    while rep.samples < count {
        let (di, dj, tmin) = pairs[rng.gen_range(0..pairs.len())];
        let per = 1i64 << di;
        let icube = DyadicCube::new(di, [rng.gen_range(0..per), if n == 2 { rng.gen_range(0..per) } else { 0 }]);
        let up = rng.gen_range(1..=di.min(2));
        let kcube = icube.ancestor(up).expect("up ≤ depth");
        let span = 1i64 << (dj - di);
        let mut pick = || rng.gen_range(tmin..=span - 1 - tmin);
        let c0 = icube.coords[0] * span + pick();
        let c1 = if n == 2 { icube.coords[1] * span + pick() } else { 0 };
        let jcube = DyadicCube::new(dj, [c0, c1]);
        let (j, i, k) = (grid.geom(&jcube), grid.geom(&icube), grid.geom(&kcube));
        rep.samples += 1;
        if let Some(r) = poisson_decay_ratio(&j, &i, &k, sigma, m, alpha, eps)? {
            rep.applicable += 1;
            if r > rep.max_ratio {
                rep.max_ratio = r;
                rep.witness = Some(((dj, jcube.coords), (di, icube.coords), (kcube.depth, kcube.coords)));
            }
        }
    }
    Ok(rep)
}
