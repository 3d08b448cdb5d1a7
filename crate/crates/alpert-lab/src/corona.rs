//! Pivotal stopping-time coronas, their Carleson and quasiorthogonality
//! checks, and τ-shifted coronas.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;

use crate::error::{LabError, Result};
use crate::grid::{DyadicCube, DyadicGrid};
use crate::measure::DiscreteMeasure;
use crate::operator::{ConstantReport, Witness};
use crate::poisson::poisson_sum;
use crate::sobolev::full_norm;
use crate::wavelet::{AlpertSystem, LeafFunction};

fn stops_at(
    g: &DyadicGrid,
    i: &DyadicCube,
    inside_f: &[usize],
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    gamma: f64,
    kappa: usize,
    alpha: f64,
) -> bool {
    pivotal_stat(g, i, inside_f, sigma, omega, kappa, alpha) >= gamma * sigma.cube_mass(g, i)
}

/// `P_κ^α(I, 1_F σ)² |I|_ω`.
fn pivotal_stat(
    g: &DyadicGrid,
    i: &DyadicCube,
    inside_f: &[usize],
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    kappa: usize,
    alpha: f64,
) -> f64 {
    let w = omega.cube_mass(g, i);
    if w == 0.0 {
        return 0.0;
    }
    let p = poisson_sum(&g.geom(i), sigma, kappa as f64, alpha, inside_f.iter().copied());
    p * p * w
}

/// Maximal `I ⊊ F` of depth `< D` with `P_κ^α(I, 1_F σ)² |I|_ω ≥ γ |I|_σ`.
pub fn stopping_children(
    g: &DyadicGrid,
    f: &DyadicCube,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    gamma: f64,
    kappa: usize,
    alpha: f64,
) -> Vec<DyadicCube> {
    let inside = g.leaves_in(f);
    let bottom = g.max_depth().saturating_sub(1);
    let mut out = Vec::new();
    let mut queue: VecDeque<DyadicCube> = if f.depth < bottom { f.children(g.n()).into() } else { VecDeque::new() };
    while let Some(i) = queue.pop_front() {
        if stops_at(g, &i, &inside, sigma, omega, gamma, kappa, alpha) {
            out.push(i);
        } else if i.depth < bottom {
            queue.extend(i.children(g.n()));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingCube {
    pub cube: DyadicCube,
    pub generation: usize,
    pub parent: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CoronaForest {
    pub grid: DyadicGrid,
    pub gamma: f64,
    pub kappa: usize,
    pub alpha: f64,
    /// Index 0 is the root.
    pub stops: Vec<StoppingCube>,
    pub children: Vec<Vec<usize>>,
    index: HashMap<DyadicCube, usize>,
}

pub fn build_corona(
    grid: &DyadicGrid,
    root: &DyadicCube,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    gamma: f64,
    kappa: usize,
    alpha: f64,
) -> Result<CoronaForest> {
    if !(gamma >= 0.0) {
        return Err(LabError::Parameter(format!("gamma must be nonnegative, got {gamma}")));
    }
    if !grid.is_interior(root) {
        return Err(LabError::DegenerateCube { depth: root.depth, coords: root.coords });
    }
    let mut stops = vec![StoppingCube { cube: *root, generation: 0, parent: None }];
    let mut children = vec![Vec::new()];
    let mut k = 0;
    while k < stops.len() {
        let f = stops[k].cube;
        let gen = stops[k].generation;
        for c in stopping_children(grid, &f, sigma, omega, gamma, kappa, alpha) {
            children[k].push(stops.len());
            stops.push(StoppingCube { cube: c, generation: gen + 1, parent: Some(k) });
            children.push(Vec::new());
        }
        k += 1;
    }
    let index = stops.iter().enumerate().map(|(i, s)| (s.cube, i)).collect();
    Ok(CoronaForest { grid: *grid, gamma, kappa, alpha, stops, children, index })
}

impl CoronaForest {
    pub fn root(&self) -> DyadicCube {
        self.stops[0].cube
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn index_of(&self, q: &DyadicCube) -> Option<usize> {
        self.index.get(q).copied()
    }

    /// Stopping cubes containing `q`, outermost first.
    pub fn chain(&self, q: &DyadicCube) -> Vec<usize> {
        let root = self.root();
        if !q.is_within(&root) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut c = Some(*q);
        while let Some(x) = c {
            if let Some(&i) = self.index.get(&x) {
                out.push(i);
            }
            if x == root {
                break;
            }
            c = x.parent();
        }
        out.reverse();
        out
    }

    /// Index of the corona `C_F` containing `q`.
    pub fn corona_of(&self, q: &DyadicCube) -> Option<usize> {
        self.chain(q).last().copied()
    }

    /// All dyadic cubes below the root down to the leaves.
    pub fn tree(&self) -> Vec<DyadicCube> {
        let mut out = vec![self.root()];
        let mut k = 0;
        while k < out.len() {
            if out[k].depth < self.grid.max_depth() {
                let ch = out[k].children(self.grid.n());
                out.extend(ch);
            }
            k += 1;
        }
        out
    }

    /// Members of `C_F`.
    pub fn corona(&self, f: usize) -> Vec<DyadicCube> {
        self.tree().into_iter().filter(|q| self.corona_of(q) == Some(f)).collect()
    }

    /// `max_{F, I ∈ C_F, I ≠ F, d(I) < D} P_κ(I, 1_F σ)² |I|_ω / (γ |I|_σ)`.
    pub fn stopping_control(&self, sigma: &DiscreteMeasure, omega: &DiscreteMeasure) -> f64 {
        let bottom = self.grid.max_depth().saturating_sub(1);
        let mut worst: f64 = 0.0;
        for (fi, f) in self.stops.iter().enumerate() {
            let inside = self.grid.leaves_in(&f.cube);
            for i in self.corona(fi) {
                if i == f.cube || i.depth > bottom {
                    continue;
                }
                let stat = pivotal_stat(&self.grid, &i, &inside, sigma, omega, self.kappa, self.alpha);
                let den = self.gamma * sigma.cube_mass(&self.grid, &i);
                worst = worst.max(if den > 0.0 { stat / den } else if stat > 0.0 { f64::INFINITY } else { 0.0 });
            }
        }
        worst
    }

    /// One line per stopping cube: `depth c0 c1 generation parent` (root parent is -1).
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.stops {
            let parent = s.parent.map(|p| p as i64).unwrap_or(-1);
            writeln!(w, "{} {} {} {} {}", s.cube.depth, s.cube.coords[0], s.cube.coords[1], s.generation, parent)?;
        }
        Ok(())
    }
}

/// `sup_{F'} |F'|_σ^{-1} Σ_{F ⊂ F'} (ℓ(F')/ℓ(F))^ε |F|_σ` over the stopping family.
pub fn carleson_constant(forest: &CoronaForest, sigma: &DiscreteMeasure, eps: f64) -> ConstantReport {
    let g = &forest.grid;
    let mut best = ConstantReport::new("carleson", 0.0, Witness::None);
    for (k, top) in forest.stops.iter().enumerate() {
        let mt = sigma.cube_mass(g, &top.cube);
        if mt <= 0.0 {
            continue;
        }
        let lt = g.side(&top.cube);
        let mut sum = 0.0;
        let mut stack = vec![k];
        while let Some(i) = stack.pop() {
            let c = &forest.stops[i].cube;
            sum += (lt / g.side(c)).powf(eps) * sigma.cube_mass(g, c);
            stack.extend(&forest.children[i]);
        }
        let v = sum / mt;
        if v > best.value {
            best.value = v;
            best.witness = Witness::Cube { depth: top.cube.depth, coords: top.cube.coords, shift: g.shift(), degree: 0 };
        }
    }
    best
}

/// `max_f Σ_F ℓ(F)^{-2s} ‖E_{F;κ} f‖²_{L²(μ)} / ‖f‖²_{W^s(μ)}` over the ensemble.
pub fn quasiorthogonality_ratio(forest: &CoronaForest, sys: &AlpertSystem, ensemble: &[LeafFunction], s: f64) -> Result<ConstantReport> {
    if sys.grid() != &forest.grid {
        return Err(LabError::Mismatch("system and forest use different grids".into()));
    }
    let mut best = ConstantReport::new("quasiorthogonality", 0.0, Witness::None);
    for (k, f) in ensemble.iter().enumerate() {
        let den = full_norm(sys, f, s)?.powi(2);
        if den == 0.0 {
            continue;
        }
        let mut num = 0.0;
        for st in &forest.stops {
            let Some(gram) = sys.gram(&st.cube) else { continue };
            let c = nalgebra::DVector::from_vec(sys.project_e(&st.cube, f)?);
            num += forest.grid.side(&st.cube).powf(-2.0 * s) * c.dot(&(&gram * &c));
        }
        let v = num / den;
        if v > best.value {
            best.value = v;
            best.note = format!("ensemble member {k}");
        }
    }
    Ok(best)
}

/// Membership of each cube in the shifted coronas `C_F^{τ-shift}`.
#[derive(Clone, Debug)]
pub struct ShiftedCorona {
    pub tau: u32,
    pub assignment: BTreeMap<DyadicCube, Vec<usize>>,
}

impl ShiftedCorona {
    pub fn max_overlap(&self) -> usize {
        self.assignment.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn members(&self, f: usize) -> Vec<DyadicCube> {
        self.assignment.iter().filter(|(_, v)| v.contains(&f)).map(|(q, _)| *q).collect()
    }
}

/// `J ∈ C_F^{τ-shift}` iff `J ∈ C_F` with `ℓ(J) ≤ 2^{-τ}ℓ(F)`, or `J` lies
/// in the top `τ` levels of a stopping child of `F`.
pub fn shifted_corona_assign(forest: &CoronaForest, tau: u32) -> Result<ShiftedCorona> {
    if tau < 1 {
        return Err(LabError::Parameter("tau must be at least 1".into()));
    }
    let mut assignment = BTreeMap::new();
    for j in forest.tree() {
        let chain = forest.chain(&j);
        let mut owners = Vec::new();
        let own = *chain.last().expect("root contains every cube");
        if j.depth - forest.stops[own].cube.depth >= tau {
            owners.push(own);
        }
        for &f in &chain {
            if let Some(p) = forest.stops[f].parent {
                if j.depth - forest.stops[f].cube.depth < tau {
                    owners.push(p);
                }
            }
        }
        owners.sort_unstable();
        assignment.insert(j, owners);
    }
    Ok(ShiftedCorona { tau, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasureKind;
    use crate::poisson::{pivotal_constant, PivotalParams, PivotalStrategy};

    fn setup(kind: MeasureKind, d: u32) -> (DyadicGrid, DiscreteMeasure) {
        (DyadicGrid::standard(1, d).unwrap(), DiscreteMeasure::new(&kind, 1, d).unwrap())
    }

    #[test]
    fn extreme_thresholds() {
        let (g, mu) = setup(MeasureKind::Lebesgue, 5);
        let big = build_corona(&g, &DyadicCube::root(), &mu, &mu, 1e300, 2, 0.0).unwrap();
        assert_eq!(big.len(), 1);
        assert!((carleson_constant(&big, &mu, 0.0).value - 1.0).abs() < 1e-15);
        let zero = build_corona(&g, &DyadicCube::root(), &mu, &mu, 0.0, 2, 0.0).unwrap();
        // every cube of depth < D is a stop
        assert_eq!(zero.len(), (1 << 5) - 1);
        for q in zero.tree() {
            // the bottom coronas absorb the leaves
            if q.depth < 4 {
                assert_eq!(zero.corona(zero.corona_of(&q).unwrap()), vec![q]);
            }
        }
    }

    #[test]
    fn forest_matches_brute_force_scan() {
        let (g, mu) = setup(MeasureKind::power(1, 1.0), 6);
        let p = PivotalParams::new(0.0, 2, 0.0, PivotalStrategy::UniformDepth(0)).unwrap();
        let sup = pivotal_constant(&mu, &mu, &p, &[g]).unwrap().value;
        for gamma in [2.0 * sup, 0.1 * sup, 0.02 * sup] {
            let forest = build_corona(&g, &DyadicCube::root(), &mu, &mu, gamma, 2, 0.0).unwrap();
            for (k, s) in forest.stops.iter().enumerate().skip(1) {
                let f = forest.stops[s.parent.unwrap()].cube;
                let inside = g.leaves_in(&f);
                assert!(stops_at(&g, &s.cube, &inside, &mu, &mu, gamma, 2, 0.0));
                // no strict ancestor inside F trips
                let mut a = s.cube.parent().unwrap();
                while a != f {
                    assert!(!stops_at(&g, &a, &inside, &mu, &mu, gamma, 2, 0.0), "stop {k}");
                    a = a.parent().unwrap();
                }
            }
            // one generation is pairwise disjoint
            for ch in &forest.children {
                for (x, &a) in ch.iter().enumerate() {
                    for &b in &ch[x + 1..] {
                        let (ca, cb) = (forest.stops[a].cube, forest.stops[b].cube);
                        assert!(!ca.is_within(&cb) && !cb.is_within(&ca));
                    }
                }
            }
            assert!(forest.stopping_control(&mu, &mu) < 1.0);
            // coronas partition the tree
            let total: usize = (0..forest.len()).map(|f| forest.corona(f).len()).sum();
            assert_eq!(total, forest.tree().len());
        }
    }

    #[test]
    fn carleson_monotone_in_eps() {
        let (g, mu) = setup(MeasureKind::cascade(3), 6);
        let forest = build_corona(&g, &DyadicCube::root(), &mu, &mu, 0.5, 1, 0.0).unwrap();
        assert!(forest.len() > 1);
        let a = carleson_constant(&forest, &mu, 0.0).value;
        let b = carleson_constant(&forest, &mu, 0.3).value;
        assert!(b >= a && a >= 1.0);
    }

    #[test]
    fn root_only_projection_contracts() {
        let (g, mu) = setup(MeasureKind::power(1, -0.5), 5);
        let forest = build_corona(&g, &DyadicCube::root(), &mu, &mu, 1e300, 2, 0.0).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        let ens: Vec<LeafFunction> = (0..8).map(|k| LeafFunction::indicator(1, 5, move |i| (i * 7 + k) % 5 < 2)).collect();
        let r = quasiorthogonality_ratio(&forest, &sys, &ens, 0.0).unwrap();
        assert!(r.value <= 1.0 + 1e-12);
    }

    fn shifted_by_sets(forest: &CoronaForest, tau: u32, f: usize) -> Vec<DyadicCube> {
        let top = |k: usize, j: &DyadicCube| {
            let c = forest.stops[k].cube;
            j.is_within(&c) && j.depth >= c.depth && j.depth - c.depth < tau
        };
        let mut out: Vec<DyadicCube> = forest
            .tree()
            .into_iter()
            .filter(|j| {
                (forest.corona_of(j) == Some(f) && !top(f, j)) || forest.children[f].iter().any(|&c| top(c, j))
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn shifted_coronas() {
        let (g, mu) = setup(MeasureKind::Lebesgue, 5);
        let single = build_corona(&g, &DyadicCube::root(), &mu, &mu, 1e300, 1, 0.0).unwrap();
        let sc = shifted_corona_assign(&single, 1).unwrap();
        let mut expect = single.tree();
        expect.retain(|q| q.depth > 0);
        expect.sort();
        assert_eq!(sc.members(0), expect);
        let (g, mu) = setup(MeasureKind::cascade(9), 7);
        let forest = build_corona(&g, &DyadicCube::root(), &mu, &mu, 0.3, 1, 0.0).unwrap();
        assert!(forest.len() > 3);
        for tau in 1..=4 {
            let sc = shifted_corona_assign(&forest, tau).unwrap();
            assert!(sc.max_overlap() <= tau as usize);
            for f in 0..forest.len() {
                assert_eq!(sc.members(f), shifted_by_sets(&forest, tau, f));
            }
        }
        let mut buf = Vec::new();
        forest.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), forest.len());
    }
}
