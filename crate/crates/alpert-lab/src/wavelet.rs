//! Weighted Alpert wavelets: per-cube orthonormal, moment-vanishing piecewise
//! polynomials, plus analysis and synthesis over a whole grid.
//!
//! Every polynomial on a cube `Q` is stored in the variable of its [`Frame`],
//! `v_i = (x_i - c_i)/w_i` with `c`, `w` the center and widths of `Q ∩ [0,1)^n`.
//! Interior cubes get `v = (x - c_Q)/ℓ(Q)`; cubes cut by the boundary of a
//! shifted grid keep O(1) coefficients even when only a sliver remains.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::grid::{leaf_center, DyadicCube, DyadicGrid};
use crate::measure::DiscreteMeasure;
use crate::poly::{affine_matrix, affine_matrix_axes, box_moment, child_offset, eval, gauss_legendre, MonomialSet};

/// Relative norm below which a projected raw element counts as dependent.
const RANK_TOL: f64 = 1e-9;

/// Affine coordinates `v_i = (x_i - center_i)/scale_i` on the part of a cube
/// inside the domain. Unused axes have center 0 and scale 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub center: [f64; 2],
    pub scale: [f64; 2],
}

impl Frame {
    /// Frame of `q ∩ [0,1)^n`, or `None` when the intersection is empty.
    pub fn of(grid: &DyadicGrid, q: &DyadicCube) -> Option<Self> {
        let r = grid.clipped_range(q)?;
        let h = grid.leaf_side();
        let mut f = Frame { center: [0.0; 2], scale: [1.0; 2] };
        for (axis, &(lo, hi)) in r.iter().enumerate().take(grid.n()) {
            f.center[axis] = 0.5 * (lo + hi) as f64 * h;
            f.scale[axis] = (hi - lo) as f64 * h;
        }
        Some(f)
    }

    fn leaf(n: usize, depth: u32, idx: usize) -> Self {
        let h = 0.5f64.powi(depth as i32);
        Frame { center: leaf_center(n, depth, idx), scale: [h, if n == 2 { h } else { 1.0 }] }
    }

    pub fn coords(&self, x: [f64; 2]) -> [f64; 2] {
        [(x[0] - self.center[0]) / self.scale[0], (x[1] - self.center[1]) / self.scale[1]]
    }

    /// Matrix taking coefficients in this frame to coefficients in `inner`.
    pub fn transfer(&self, inner: &Frame, set: &MonomialSet) -> DMatrix<f64> {
        let a = [0, 1].map(|i| (inner.center[i] - self.center[i]) / self.scale[i]);
        let b = [0, 1].map(|i| inner.scale[i] / self.scale[i]);
        affine_matrix_axes(set, a, b)
    }
}

/// Function given by one polynomial of degree `< kf` per leaf, in leaf-normalized
/// coordinates, plus optional per-leaf Lebesgue energy of a component orthogonal
/// to those polynomials (used for sampled non-polynomial functions).
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFunction {
    pub n: usize,
    pub depth: u32,
    pub kf: usize,
    pub coeffs: Vec<f64>,
    pub residual: Option<Vec<f64>>,
}

impl LeafFunction {
    pub fn zeros(n: usize, depth: u32, kf: usize) -> Self {
        let p = MonomialSet::new(n, kf).len();
        let leaves = (1usize << depth).pow(n as u32);
        Self { n, depth, kf, coeffs: vec![0.0; p * leaves], residual: None }
    }

    /// Piecewise-constant function from leaf values.
    pub fn from_values(n: usize, depth: u32, values: Vec<f64>) -> Self {
        Self { n, depth, kf: 1, coeffs: values, residual: None }
    }

    pub fn from_leaf_polys(n: usize, depth: u32, kf: usize, coeffs: Vec<f64>) -> Self {
        Self { n, depth, kf, coeffs, residual: None }
    }

    /// Indicator of the standard leaves selected by `pred`.
    pub fn indicator(n: usize, depth: u32, pred: impl Fn(usize) -> bool) -> Self {
        let leaves = (1usize << depth).pow(n as u32);
        Self::from_values(n, depth, (0..leaves).map(|i| if pred(i) { 1.0 } else { 0.0 }).collect())
    }

    /// Indicator of a cube of `grid`.
    pub fn cube_indicator(grid: &DyadicGrid, q: &DyadicCube) -> Self {
        let mut f = Self::zeros(grid.n(), grid.max_depth(), 1);
        for i in grid.leaves_in(q) {
            f.coeffs[i] = 1.0;
        }
        f
    }

    /// Per-leaf Lebesgue projection of `g` onto degree `< kf`, with the leftover
    /// energy kept as a residual. Gauss–Legendre with `q` nodes per axis.
    pub fn sample(n: usize, depth: u32, kf: usize, q: usize, g: impl Fn([f64; 2]) -> f64) -> Self {
        let set = MonomialSet::new(n, kf);
        let p = set.len();
        let (nodes, weights) = gauss_legendre(q);
        let boxg = box_gram(&set, &set);
        let chol = Cholesky::new(boxg.clone()).expect("box gram is positive definite");
        let leaves = (1usize << depth).pow(n as u32);
        let h = 0.5f64.powi(depth as i32);
        let mut coeffs = vec![0.0; p * leaves];
        let mut residual = vec![0.0; leaves];
        let pts: Vec<([f64; 2], f64)> = if n == 1 {
            nodes.iter().zip(&weights).map(|(&u, &w)| ([u, 0.0], w)).collect()
        } else {
            let mut v = Vec::new();
            for (&u1, &w1) in nodes.iter().zip(&weights) {
                for (&u0, &w0) in nodes.iter().zip(&weights) {
                    v.push(([u0, u1], w0 * w1));
                }
            }
            v
        };
        for leaf in 0..leaves {
            let c = leaf_center(n, depth, leaf);
            let mut b = DVector::zeros(p);
            let mut sq = 0.0;
            for (u, w) in &pts {
                let x = [c[0] + h * u[0], c[1] + h * u[1]];
                let val = g(x);
                sq += w * val * val;
                for (k, e) in set.exps.iter().enumerate() {
                    b[k] += w * val * u[0].powi(e[0] as i32) * u[1].powi(e[1] as i32);
                }
            }
            let a = chol.solve(&b);
            let energy = a.dot(&(&boxg * &a));
            // Lebesgue measure of the leaf scales both terms
            residual[leaf] = (sq - energy).max(0.0) * h.powi(n as i32);
            coeffs[leaf * p..(leaf + 1) * p].copy_from_slice(a.as_slice());
        }
        Self { n, depth, kf, coeffs, residual: Some(residual) }
    }

    pub fn leaf_count(&self) -> usize {
        (1usize << self.depth).pow(self.n as u32)
    }

    pub fn poly_len(&self) -> usize {
        self.coeffs.len() / self.leaf_count()
    }

    pub fn leaf_poly(&self, leaf: usize) -> &[f64] {
        let p = self.poly_len();
        &self.coeffs[leaf * p..(leaf + 1) * p]
    }

    /// Leaf index containing `x`, clamped into the box.
    pub fn locate(&self, x: [f64; 2]) -> usize {
        let big_n = 1usize << self.depth;
        let idx = |t: f64| ((t * big_n as f64).floor().max(0.0) as usize).min(big_n - 1);
        let mut i = idx(x[0]);
        if self.n == 2 {
            i += big_n * idx(x[1]);
        }
        i
    }

    /// Value of the polynomial part at `x`.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let leaf = self.locate(x);
        let c = leaf_center(self.n, self.depth, leaf);
        let h = 0.5f64.powi(self.depth as i32);
        let u = [(x[0] - c[0]) / h, if self.n == 2 { (x[1] - c[1]) / h } else { 0.0 }];
        eval(&MonomialSet::new(self.n, self.kf), self.leaf_poly(leaf), u)
    }

    /// Value at the center of each leaf.
    pub fn center_values(&self) -> Vec<f64> {
        (0..self.leaf_count()).map(|i| self.leaf_poly(i)[0]).collect()
    }

    /// `∫_leaf f² dμ` per leaf, exact for the polynomial part.
    pub fn leaf_energy(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        self.leaf_energy_raw(mu.leaf_masses(), mu.density())
    }

    pub fn l2_sq(&self, mu: &DiscreteMeasure) -> f64 {
        self.leaf_energy(mu).iter().sum()
    }

    /// `self + t·other` for functions with the same leaf layout.
    pub fn axpy(&self, t: f64, other: &LeafFunction) -> Result<LeafFunction> {
        if self.n != other.n || self.depth != other.depth {
            return Err(LabError::Mismatch("leaf functions on different meshes".into()));
        }
        if other.residual.is_some() || self.residual.is_some() {
            return Err(LabError::Precondition("sums of sampled residual functions are not tracked".into()));
        }
        let kf = self.kf.max(other.kf);
        let a = self.with_degree(kf);
        let b = other.with_degree(kf);
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + t * y).collect();
        Ok(LeafFunction { n: self.n, depth: self.depth, kf, coeffs, residual: None })
    }

    pub fn scaled(&self, t: f64) -> LeafFunction {
        let mut f = self.clone();
        f.coeffs.iter_mut().for_each(|c| *c *= t);
        if let Some(r) = &mut f.residual {
            r.iter_mut().for_each(|c| *c *= t * t);
        }
        f
    }

    /// Same function with per-leaf polynomial length for degree `< kf` (kf ≥ self.kf).
    pub fn with_degree(&self, kf: usize) -> LeafFunction {
        if kf == self.kf {
            return self.clone();
        }
        let src = MonomialSet::new(self.n, self.kf);
        let dst = MonomialSet::new(self.n, kf);
        let mut out = LeafFunction::zeros(self.n, self.depth, kf);
        out.residual = self.residual.clone();
        for leaf in 0..self.leaf_count() {
            for (k, e) in src.exps.iter().enumerate() {
                if let Some(j) = dst.index_of(*e) {
                    out.coeffs[leaf * dst.len() + j] = self.coeffs[leaf * src.len() + k];
                }
            }
        }
        out
    }

    /// Multiply by the indicator of the leaves selected by `keep`.
    pub fn masked(&self, keep: impl Fn(usize) -> bool) -> LeafFunction {
        let mut f = self.clone();
        let p = self.poly_len();
        for leaf in 0..self.leaf_count() {
            if !keep(leaf) {
                f.coeffs[leaf * p..(leaf + 1) * p].iter_mut().for_each(|c| *c = 0.0);
                if let Some(r) = &mut f.residual {
                    r[leaf] = 0.0;
                }
            }
        }
        f
    }
}

/// `∫_{[-1/2,1/2]^n} u^{γ+β} du` for `γ ∈ rows`, `β ∈ cols`.
pub fn box_gram(rows: &MonomialSet, cols: &MonomialSet) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let (a, b) = (rows.exps[i], cols.exps[j]);
        box_moment(rows.n, [a[0] + b[0], a[1] + b[1]])
    })
}

/// Alpert basis of one cube: column `a` holds, per present child, the monomial
/// coefficients of `h_{Q;κ}^a` in that child's frame.
#[derive(Clone, Debug)]
pub struct AlpertBasis {
    pub cube: DyadicCube,
    pub kappa: usize,
    pub frame: Frame,
    pub children: Vec<DyadicCube>,
    pub frames: Vec<Frame>,
    pub coeffs: DMatrix<f64>,
}

impl AlpertBasis {
    pub fn dim(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Child block of function `a`.
    pub fn block(&self, a: usize, child: usize) -> Vec<f64> {
        let p = self.coeffs.nrows() / self.children.len().max(1);
        (0..p).map(|k| self.coeffs[(child * p + k, a)]).collect()
    }

    /// Value of function `a` at `x` (zero outside `Q`).
    pub fn eval(&self, grid: &DyadicGrid, a: usize, x: [f64; 2]) -> f64 {
        let set = MonomialSet::new(grid.n(), self.kappa);
        for (ci, c) in self.children.iter().enumerate() {
            if grid.geom(c).contains_point(&x) {
                return eval(&set, &self.block(a, ci), self.frames[ci].coords(x));
            }
        }
        0.0
    }

    /// Gram matrix `⟨h^a, h^b⟩_{L²(μ)}`, exact.
    pub fn gram(&self, mu: &DiscreteMeasure, grid: &DyadicGrid) -> DMatrix<f64> {
        let set = MonomialSet::new(grid.n(), self.kappa);
        let blocks: Vec<DMatrix<f64>> =
            self.children.iter().zip(&self.frames).map(|(c, f)| child_gram(mu, grid, c, f, &set)).collect();
        let p = set.len();
        let mut g = DMatrix::zeros(self.dim(), self.dim());
        for (ci, gc) in blocks.iter().enumerate() {
            let h = self.coeffs.rows(ci * p, p);
            g += h.transpose() * gc * h;
        }
        g
    }

    /// `∫ h^a v^β dμ`, `v` the frame variable of `Q`, for every `a` (rows) and `β` (columns).
    pub fn moments(&self, mu: &DiscreteMeasure, grid: &DyadicGrid) -> DMatrix<f64> {
        let set = MonomialSet::new(grid.n(), self.kappa);
        let p = set.len();
        let mut out = DMatrix::zeros(self.dim(), p);
        for (ci, c) in self.children.iter().enumerate() {
            let t = self.frame.transfer(&self.frames[ci], &set);
            let gc = child_gram(mu, grid, c, &self.frames[ci], &set);
            let h = self.coeffs.rows(ci * p, p);
            out += h.transpose() * gc * t;
        }
        out
    }
}

fn child_gram(mu: &DiscreteMeasure, grid: &DyadicGrid, c: &DyadicCube, f: &Frame, set: &MonomialSet) -> DMatrix<f64> {
    DMatrix::from_fn(set.len(), set.len(), |i, j| {
        let (a, b) = (set.exps[i], set.exps[j]);
        mu.monomial_moment(grid, c, [a[0] + b[0], a[1] + b[1]], f.center, f.scale)
    })
}

/// Orthonormal basis of the κ-moment-free piecewise polynomials on the
/// children of `q`, from direct moment evaluation on the measure.
pub fn build_alpert_basis(mu: &DiscreteMeasure, grid: &DyadicGrid, q: &DyadicCube, kappa: usize) -> Result<AlpertBasis> {
    check_pair(mu, grid)?;
    if kappa == 0 {
        return Err(LabError::Parameter("kappa must be at least 1".into()));
    }
    if q.depth >= grid.max_depth() {
        return Err(LabError::Precondition(format!("cube at depth {} has no children", q.depth)));
    }
    let set = MonomialSet::new(grid.n(), kappa);
    let degenerate = || LabError::DegenerateCube { depth: q.depth, coords: q.coords };
    let frame = Frame::of(grid, q).ok_or_else(degenerate)?;
    let (mut children, mut frames, mut grams, mut ts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in q.children(grid.n()) {
        if mu.cube_mass(grid, &c) > 0.0 {
            let f = Frame::of(grid, &c).expect("cube has mass");
            grams.push(child_gram(mu, grid, &c, &f, &set));
            ts.push(frame.transfer(&f, &set));
            children.push(c);
            frames.push(f);
        }
    }
    if children.is_empty() {
        return Err(degenerate());
    }
    let coeffs = orthonormal_complement(&grams, &ts)?;
    Ok(AlpertBasis { cube: *q, kappa, frame, children, frames, coeffs })
}

/// Columns `U` with `Uᵀ G U = I` spanning the nonsingular part of `G`: an
/// equilibrated Cholesky factor, or an SVD when `G` is singular.
fn child_orthonormal(g: &DMatrix<f64>) -> DMatrix<f64> {
    let p = g.nrows();
    let d = DVector::from_iterator(p, g.diagonal().iter().map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }));
    let ge = DMatrix::from_fn(p, p, |i, j| g[(i, j)] * d[i] * d[j]);
    if d.iter().all(|v| *v > 0.0) {
        if let Some(ch) = Cholesky::new(ge.clone()) {
            let lt = ch.l().transpose();
            if let Some(inv) = lt.solve_upper_triangular(&DMatrix::identity(p, p)) {
                return DMatrix::from_diagonal(&d) * inv;
            }
        }
    }
    let svd = ge.svd(true, false);
    let u = svd.u.expect("svd computed with vectors");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-13 * smax).collect();
    let mut out = DMatrix::zeros(p, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &(DMatrix::from_diagonal(&d) * u.column(i) / svd.singular_values[i].sqrt()));
    }
    out
}

/// Core construction. Each child space is first made orthonormal; the complement of the parent polynomials
/// is then taken with Euclidean Gram–Schmidt in those coordinates.
fn orthonormal_complement(grams: &[DMatrix<f64>], ts: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let p = ts[0].nrows();
    let k = grams.len();
    // child orthonormal bases (monomial coordinates) and parent monomials in them
    let mut us = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    for (g, t) in grams.iter().zip(ts) {
        let u = child_orthonormal(g);
        ys.push(u.transpose() * g * t);
        us.push(u);
    }
    let r: usize = us.iter().map(|u| u.ncols()).sum();
    let mut y = DMatrix::zeros(r, p);
    let mut row = 0;
    for yc in &ys {
        y.view_mut((row, 0), (yc.nrows(), p)).copy_from(yc);
        row += yc.nrows();
    }
    // orthonormal basis of the parent polynomials, then of its complement
    let svd = y.svd(true, false);
    let u = svd.u.expect("svd computed with vectors");
    let smax = svd.singular_values.max();
    let mut kept: Vec<DVector<f64>> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-12 * smax).map(|i| u.column(i).into_owned()).collect();
    let range = kept.len();
    for j in 0..r {
        let mut v = DVector::zeros(r);
        v[j] = 1.0;
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv <= RANK_TOL {
            continue;
        }
        kept.push(v / nv);
    }
    let mut h = DMatrix::zeros(p * k, kept.len() - range);
    for (a, z) in kept[range..].iter().enumerate() {
        let mut row = 0;
        for (c, uc) in us.iter().enumerate() {
            let zc = z.rows(row, uc.ncols());
            h.view_mut((c * p, a), (p, 1)).copy_from(&(uc * zc));
            row += uc.ncols();
        }
    }
    for mut v in h.column_iter_mut() {
        let scale = v.amax();
        if let Some(last) = v.iter().rev().find(|c| c.abs() > 1e-12 * scale) {
            if *last < 0.0 {
                v.neg_mut();
            }
        }
    }
    Ok(h)
}

/// Solve `G x = m` for a symmetric positive semidefinite Gram matrix, after
/// diagonal equilibration. Singular directions below `1e-12·σ_max` are dropped.
fn gram_solve(g: &DMatrix<f64>, m: &DVector<f64>) -> DVector<f64> {
    let d = DVector::from_iterator(g.nrows(), g.diagonal().iter().map(|v| if *v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }));
    let ge = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * d[i] * d[j]);
    let me = m.component_mul(&d);
    let y = match Cholesky::new(ge.clone()) {
        Some(ch) => ch.solve(&me),
        None => {
            let svd = ge.svd(true, true);
            let smax = svd.singular_values.max();
            svd.solve(&me, 1e-12 * smax).expect("svd computed with vectors")
        }
    };
    y.component_mul(&d)
}

fn check_pair(mu: &DiscreteMeasure, grid: &DyadicGrid) -> Result<()> {
    if mu.n() != grid.n() || mu.depth() != grid.max_depth() {
        return Err(LabError::Mismatch(format!(
            "measure (n={}, D={}) vs grid (n={}, D={})",
            mu.n(),
            mu.depth(),
            grid.n(),
            grid.max_depth()
        )));
    }
    Ok(())
}

/// `E_{Q;κ} f` in the frame of `Q`, by direct leaf summation.
pub fn project_e(mu: &DiscreteMeasure, grid: &DyadicGrid, q: &DyadicCube, kappa: usize, f: &LeafFunction) -> Result<Vec<f64>> {
    check_pair(mu, grid)?;
    let n = grid.n();
    let set = MonomialSet::new(n, kappa);
    let fset = MonomialSet::new(n, f.kf);
    let frame = Frame::of(grid, q).ok_or(LabError::DegenerateCube { depth: q.depth, coords: q.coords })?;
    let gram = child_gram(mu, grid, q, &frame, &set);
    let lg = box_gram(&set, &fset);
    let mut mom = DVector::zeros(set.len());
    for leaf in grid.leaves_in(q) {
        let t = frame.transfer(&Frame::leaf(n, grid.max_depth(), leaf), &set);
        let a = DVector::from_column_slice(f.leaf_poly(leaf));
        mom += t.transpose() * (&lg * a) * mu.leaf_masses()[leaf];
    }
    let ch = Cholesky::new(gram).ok_or(LabError::DegenerateCube { depth: q.depth, coords: q.coords })?;
    Ok(ch.solve(&mom).as_slice().to_vec())
}

/// Evaluate a polynomial stored in the frame of `Q` at `x`.
pub fn eval_on_cube(grid: &DyadicGrid, q: &DyadicCube, kappa: usize, coeffs: &[f64], x: [f64; 2]) -> f64 {
    let Some(f) = Frame::of(grid, q) else { return 0.0 };
    eval(&MonomialSet::new(grid.n(), kappa), coeffs, f.coords(x))
}

#[derive(Clone, Debug)]
struct Node {
    cube: DyadicCube,
    mass: f64,
    /// `(child index, node index)` of children with positive mass
    children: Vec<(usize, usize)>,
    leaf: Option<usize>,
    frame: Frame,
    /// parent-to-node transfer when the parent is cut by the boundary
    transfer: Option<DMatrix<f64>>,
    /// moments `∫ v^β dμ`, `|β| < 2κ - 1`
    moments: DVector<f64>,
    basis: DMatrix<f64>,
    offset: usize,
}

/// Index data shared by coefficient vectors of one system.
#[derive(Clone, Debug)]
pub struct Layout {
    pub n: usize,
    pub max_depth: u32,
    pub kappa: usize,
    pub shift: [i64; 2],
    /// cube and in-cube index of each wavelet
    pub functions: Vec<(DyadicCube, usize)>,
    pub tops: Vec<DyadicCube>,
}

impl Layout {
    pub fn side(&self, idx: usize) -> f64 {
        0.5f64.powi(self.functions[idx].0.depth as i32)
    }

    pub fn leaf_side(&self) -> f64 {
        0.5f64.powi(self.max_depth as i32)
    }
}

/// Wavelet coefficients `⟨f, h^a_{Q;κ}⟩` for all cubes of depth `< D`, the
/// coarse coordinates of `E_{T;κ} f` on each top cube `T` in an orthonormal
/// polynomial basis, and the per-leaf energy left below the finest level.
#[derive(Clone, Debug)]
pub struct WaveletCoefficients {
    pub layout: Arc<Layout>,
    pub wavelet: Vec<f64>,
    pub coarse: Vec<Vec<f64>>,
    pub leaf_residual: Vec<f64>,
}

impl WaveletCoefficients {
    pub fn energy(&self) -> f64 {
        let w: f64 = self.wavelet.iter().map(|c| c * c).sum();
        let c: f64 = self.coarse.iter().flatten().map(|c| c * c).sum();
        w + c + self.leaf_residual.iter().sum::<f64>()
    }

    pub fn coarse_energy(&self) -> f64 {
        self.coarse.iter().flatten().map(|c| c * c).sum()
    }

    /// `|f̂(Q)|²` summed per cube, keyed by cube.
    pub fn cube_energies(&self) -> Vec<(DyadicCube, f64)> {
        let mut out: Vec<(DyadicCube, f64)> = Vec::new();
        for (i, (q, _)) in self.layout.functions.iter().enumerate() {
            match out.last_mut() {
                Some((last, e)) if last == q => *e += self.wavelet[i] * self.wavelet[i],
                _ => out.push((*q, self.wavelet[i] * self.wavelet[i])),
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
struct LevelIndex {
    kmin: [i64; 2],
    width: i64,
    slots: Vec<Option<usize>>,
}

impl LevelIndex {
    fn get(&self, q: &DyadicCube) -> Option<usize> {
        let i0 = q.coords[0] - self.kmin[0];
        let i1 = q.coords[1] - self.kmin[1];
        if i0 < 0 || i1 < 0 || i0 >= self.width {
            return None;
        }
        self.slots.get((i0 + self.width * i1) as usize).copied().flatten()
    }
}

/// All Alpert bases of one grid and measure, with cached moments.
#[derive(Clone, Debug)]
pub struct AlpertSystem {
    grid: DyadicGrid,
    kappa: usize,
    set: MonomialSet,
    set2: MonomialSet,
    nodes: Vec<Node>,
    levels: Vec<LevelIndex>,
    tops: Vec<usize>,
    leaf_nodes: Vec<Option<usize>>,
    /// `T_C` for degree `< κ` between uncut cubes, per child index
    child_t: Vec<DMatrix<f64>>,
    layout: Arc<Layout>,
    leaf_masses: Vec<f64>,
    density: Vec<f64>,
}

impl AlpertSystem {
    pub fn new(mu: &DiscreteMeasure, grid: &DyadicGrid, kappa: usize) -> Result<Self> {
        check_pair(mu, grid)?;
        if kappa == 0 {
            return Err(LabError::Parameter("kappa must be at least 1".into()));
        }
        let n = grid.n();
        let big_d = grid.max_depth();
        let set = MonomialSet::new(n, kappa);
        let set2 = MonomialSet::new(n, 2 * kappa - 1);
        let p = set.len();
        let child_t: Vec<DMatrix<f64>> =
            (0..1usize << n).map(|c| affine_matrix(&set, child_offset(n, c), 0.5)).collect();
        let child_t2: Vec<DMatrix<f64>> =
            (0..1usize << n).map(|c| affine_matrix(&set2, child_offset(n, c), 0.5)).collect();

        let mut nodes: Vec<Node> = Vec::new();
        let mut levels = Vec::new();
        let mut leaf_nodes = vec![None; grid.leaf_count()];
        for d in 0..=big_d {
            let r = grid.coord_range(d);
            let width = r[0].1 - r[0].0 + 1;
            let height = r[1].1 - r[1].0 + 1;
            let mut slots = vec![None; (width * height) as usize];
            for q in grid.cubes_at_depth(d) {
                let mass = mu.cube_mass(grid, &q);
                if mass <= 0.0 {
                    continue;
                }
                let leaf = if d == big_d { grid.leaf_index(&q) } else { None };
                let id = nodes.len();
                slots[((q.coords[0] - r[0].0) + width * (q.coords[1] - r[1].0)) as usize] = Some(id);
                if let Some(l) = leaf {
                    leaf_nodes[l] = Some(id);
                }
                nodes.push(Node {
                    cube: q,
                    mass,
                    children: Vec::new(),
                    leaf,
                    frame: Frame::of(grid, &q).expect("cube has mass"),
                    transfer: None,
                    moments: DVector::zeros(set2.len()),
                    basis: DMatrix::zeros(0, 0),
                    offset: 0,
                });
            }
            levels.push(LevelIndex { kmin: [r[0].0, r[1].0], width, slots });
        }
        for id in 0..nodes.len() {
            let q = nodes[id].cube;
            if q.depth == big_d {
                continue;
            }
            let next = &levels[q.depth as usize + 1];
            nodes[id].children =
                (0..1usize << n).filter_map(|c| next.get(&child_cube(&q, c, n)).map(|nid| (c, nid))).collect();
            if !grid.is_interior(&q) {
                for k in 0..nodes[id].children.len() {
                    let nid = nodes[id].children[k].1;
                    nodes[nid].transfer = Some(nodes[id].frame.transfer(&nodes[nid].frame, &set));
                }
            }
        }
        // moments bottom-up
        let leaf_mom = DVector::from_fn(set2.len(), |i, _| box_moment(n, set2.exps[i]));
        for id in (0..nodes.len()).rev() {
            let m = if let Some(l) = nodes[id].leaf {
                &leaf_mom * mu.leaf_masses()[l]
            } else {
                let mut acc = DVector::zeros(set2.len());
                for &(c, nid) in &nodes[id].children {
                    let t2 = match nodes[nid].transfer {
                        Some(_) => nodes[id].frame.transfer(&nodes[nid].frame, &set2),
                        None => child_t2[c].clone(),
                    };
                    acc += t2.transpose() * &nodes[nid].moments;
                }
                acc
            };
            nodes[id].moments = m;
        }
        let gram_of = |moments: &DVector<f64>| -> DMatrix<f64> {
            DMatrix::from_fn(p, p, |i, j| {
                let (a, b) = (set.exps[i], set.exps[j]);
                moments[set2.index_of([a[0] + b[0], a[1] + b[1]]).expect("degree < 2κ-1")]
            })
        };
        let bases: Vec<Result<DMatrix<f64>>> = (0..nodes.len())
            .into_par_iter()
            .map(|id| {
                let node = &nodes[id];
                if node.leaf.is_some() || node.cube.depth == big_d {
                    return Ok(DMatrix::zeros(0, 0));
                }
                let grams: Vec<DMatrix<f64>> =
                    node.children.iter().map(|&(_, nid)| gram_of(&nodes[nid].moments)).collect();
                let ts: Vec<DMatrix<f64>> = node
                    .children
                    .iter()
                    .map(|&(c, nid)| nodes[nid].transfer.clone().unwrap_or_else(|| child_t[c].clone()))
                    .collect();
                orthonormal_complement(&grams, &ts)
            })
            .collect();
        let mut functions = Vec::new();
        for (id, b) in bases.into_iter().enumerate() {
            let b = b?;
            nodes[id].offset = functions.len();
            for a in 0..b.ncols() {
                functions.push((nodes[id].cube, a));
            }
            nodes[id].basis = b;
        }
        let tops: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].cube.depth == 0).collect();
        let layout = Arc::new(Layout {
            n,
            max_depth: big_d,
            kappa,
            shift: grid.shift(),
            functions,
            tops: tops.iter().map(|&i| nodes[i].cube).collect(),
        });
        Ok(Self {
            grid: *grid,
            kappa,
            set,
            set2,
            nodes,
            levels,
            tops,
            leaf_nodes,
            child_t,
            layout,
            leaf_masses: mu.leaf_masses().to_vec(),
            density: mu.density().to_vec(),
        })
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn num_wavelets(&self) -> usize {
        self.layout.functions.len()
    }

    pub fn poly_dim(&self) -> usize {
        self.set.len()
    }

    fn node_of(&self, q: &DyadicCube) -> Option<usize> {
        self.levels.get(q.depth as usize)?.get(q)
    }

    /// Cubes of depth `< D` carrying a basis, in coefficient order.
    pub fn cubes(&self) -> Vec<DyadicCube> {
        self.nodes.iter().filter(|n| n.basis.ncols() > 0).map(|n| n.cube).collect()
    }

    pub fn mass(&self, q: &DyadicCube) -> f64 {
        self.node_of(q).map(|i| self.nodes[i].mass).unwrap_or(0.0)
    }

    /// Cached basis of `q`, if `q` carries one.
    pub fn basis(&self, q: &DyadicCube) -> Option<AlpertBasis> {
        let node = &self.nodes[self.node_of(q)?];
        if node.basis.ncols() == 0 {
            return None;
        }
        Some(AlpertBasis {
            cube: *q,
            kappa: self.kappa,
            frame: node.frame,
            children: node.children.iter().map(|&(_, nid)| self.nodes[nid].cube).collect(),
            frames: node.children.iter().map(|&(_, nid)| self.nodes[nid].frame).collect(),
            coeffs: node.basis.clone(),
        })
    }

    /// Coordinate frame of `q`'s polynomials.
    pub fn frame(&self, q: &DyadicCube) -> Option<Frame> {
        Some(self.nodes[self.node_of(q)?].frame)
    }

    /// Transfer from the parent's frame into node `nid`, child `ci` of its parent.
    fn transfer(&self, ci: usize, nid: usize) -> &DMatrix<f64> {
        self.nodes[nid].transfer.as_ref().unwrap_or(&self.child_t[ci])
    }

    /// Offset and dimension of `q`'s coefficient block.
    pub fn block(&self, q: &DyadicCube) -> Option<(usize, usize)> {
        let node = &self.nodes[self.node_of(q)?];
        Some((node.offset, node.basis.ncols()))
    }

    /// `G_Q = ∫_Q v^{γ+β} dμ`.
    pub fn gram(&self, q: &DyadicCube) -> Option<DMatrix<f64>> {
        let node = &self.nodes[self.node_of(q)?];
        Some(self.gram_from(&node.moments))
    }

    fn gram_from(&self, moments: &DVector<f64>) -> DMatrix<f64> {
        let p = self.set.len();
        DMatrix::from_fn(p, p, |i, j| {
            let (a, b) = (self.set.exps[i], self.set.exps[j]);
            moments[self.set2.index_of([a[0] + b[0], a[1] + b[1]]).expect("degree < 2κ-1")]
        })
    }

    fn check_function(&self, f: &LeafFunction) -> Result<()> {
        if f.n != self.grid.n() || f.depth != self.grid.max_depth() {
            return Err(LabError::Mismatch("function mesh differs from the grid".into()));
        }
        Ok(())
    }

    /// `∫_Q f v^γ dμ` for every node, `|γ| < κ`.
    fn node_moments(&self, f: &LeafFunction) -> Vec<DVector<f64>> {
        let fset = MonomialSet::new(self.grid.n(), f.kf);
        let lg = box_gram(&self.set, &fset);
        let p = self.set.len();
        let mut out = vec![DVector::zeros(p); self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            out[id] = if let Some(l) = node.leaf {
                &lg * DVector::from_column_slice(f.leaf_poly(l)) * self.leaf_masses[l]
            } else {
                let mut acc = DVector::zeros(p);
                for &(c, nid) in &node.children {
                    acc += self.transfer(c, nid).transpose() * &out[nid];
                }
                acc
            };
        }
        out
    }

    pub fn analyze(&self, f: &LeafFunction) -> Result<WaveletCoefficients> {
        self.check_function(f)?;
        let moms = self.node_moments(f);
        let p = self.set.len();
        let mut wavelet = vec![0.0; self.num_wavelets()];
        for node in &self.nodes {
            let dim = node.basis.ncols();
            if dim == 0 {
                continue;
            }
            let mut stacked = DVector::zeros(p * node.children.len());
            for (k, &(_, nid)) in node.children.iter().enumerate() {
                stacked.rows_mut(k * p, p).copy_from(&moms[nid]);
            }
            let c = node.basis.transpose() * &stacked;
            // values within the rounding bound of the dot products are zero
            let abs_m = stacked.abs();
            let bound = node.basis.abs().transpose() * abs_m;
            let m = stacked.len() as f64;
            for a in 0..dim {
                wavelet[node.offset + a] = if c[a].abs() <= 4.0 * m * f64::EPSILON * bound[a] { 0.0 } else { c[a] };
            }
        }
        let mut coarse = Vec::new();
        for &t in &self.tops {
            let g = self.gram_from(&self.nodes[t].moments);
            let ch = Cholesky::new(g).ok_or(LabError::DegenerateCube {
                depth: 0,
                coords: self.nodes[t].cube.coords,
            })?;
            let y = ch.l().solve_lower_triangular(&moms[t]).expect("cholesky factor is invertible");
            coarse.push(y.as_slice().to_vec());
        }
        let energies = f.leaf_energy_raw(&self.leaf_masses, &self.density);
        let leaf_box = box_gram(&self.set, &self.set);
        let leaf_ch = Cholesky::<f64, Dyn>::new(leaf_box).expect("box gram is positive definite");
        let mut leaf_residual = vec![0.0; f.leaf_count()];
        for (l, slot) in self.leaf_nodes.iter().enumerate() {
            if slot.is_none() || self.leaf_masses[l] == 0.0 {
                continue;
            }
            let m = &moms[slot.expect("checked")];
            let proj = m.dot(&leaf_ch.solve(m)) / self.leaf_masses[l];
            let r = energies[l] - proj;
            leaf_residual[l] = if r <= 16.0 * f64::EPSILON * energies[l] { 0.0 } else { r };
        }
        Ok(WaveletCoefficients { layout: self.layout.clone(), wavelet, coarse, leaf_residual })
    }

    /// Piecewise polynomial (degree `< κ` per leaf) with the given coefficients;
    /// leaf residual energy has no polynomial representative and is dropped.
    pub fn synthesize(&self, c: &WaveletCoefficients) -> Result<LeafFunction> {
        if !Arc::ptr_eq(&c.layout, &self.layout) && c.wavelet.len() != self.num_wavelets() {
            return Err(LabError::Mismatch("coefficients from another system".into()));
        }
        let p = self.set.len();
        let mut out = LeafFunction::zeros(self.grid.n(), self.grid.max_depth(), self.kappa);
        let mut polys: Vec<DVector<f64>> = vec![DVector::zeros(p); self.nodes.len()];
        for (k, &t) in self.tops.iter().enumerate() {
            let g = self.gram_from(&self.nodes[t].moments);
            let ch = Cholesky::new(g).ok_or(LabError::DegenerateCube { depth: 0, coords: self.nodes[t].cube.coords })?;
            let y = DVector::from_column_slice(&c.coarse[k]);
            polys[t] = ch.l().transpose().solve_upper_triangular(&y).expect("cholesky factor is invertible");
        }
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            if let Some(l) = node.leaf {
                out.coeffs[l * p..(l + 1) * p].copy_from_slice(polys[id].as_slice());
                continue;
            }
            let dim = node.basis.ncols();
            let w = if dim > 0 {
                &node.basis * DVector::from_column_slice(&c.wavelet[node.offset..node.offset + dim])
            } else {
                DVector::zeros(p * node.children.len())
            };
            for (k, &(ci, nid)) in node.children.iter().enumerate() {
                polys[nid] = self.transfer(ci, nid) * &polys[id] + w.rows(k * p, p);
            }
        }
        Ok(out)
    }

    /// Coefficients with a single 1 at wavelet `idx`.
    pub fn unit(&self, idx: usize) -> WaveletCoefficients {
        let mut wavelet = vec![0.0; self.num_wavelets()];
        wavelet[idx] = 1.0;
        WaveletCoefficients {
            layout: self.layout.clone(),
            wavelet,
            coarse: vec![vec![0.0; self.set.len()]; self.tops.len()],
            leaf_residual: vec![0.0; self.grid.leaf_count()],
        }
    }

    /// Wavelet `idx` as a leaf function.
    pub fn wavelet_function(&self, idx: usize) -> Result<LeafFunction> {
        self.synthesize(&self.unit(idx))
    }

    /// Orthonormal polynomial `k` on top cube number `t` as a leaf function.
    pub fn coarse_function(&self, t: usize, k: usize) -> Result<LeafFunction> {
        let mut c = self.unit(0);
        c.wavelet.iter_mut().for_each(|x| *x = 0.0);
        c.coarse[t][k] = 1.0;
        self.synthesize(&c)
    }

    /// `E_{Q;κ} f` in the frame of `Q`, from cached moments.
    pub fn project_e(&self, q: &DyadicCube, f: &LeafFunction) -> Result<Vec<f64>> {
        self.check_function(f)?;
        let id = self.node_of(q).ok_or(LabError::DegenerateCube { depth: q.depth, coords: q.coords })?;
        let moms = self.node_moments(f);
        let g = self.gram_from(&self.nodes[id].moments);
        Ok(gram_solve(&g, &moms[id]).as_slice().to_vec())
    }

    /// Max coefficient defect of `Σ_{Q⊊I⊂P} Δ_I f = E_Q f − 1_Q E_P f` on `Q`,
    /// relative to the largest of the three terms.
    pub fn telescoping_defect(&self, f: &LeafFunction, q: &DyadicCube, p_cube: &DyadicCube) -> Result<f64> {
        self.check_function(f)?;
        if !(q.is_within(p_cube) && q.depth > p_cube.depth) {
            return Err(LabError::Precondition("telescoping needs Q strictly inside P".into()));
        }
        let moms = self.node_moments(f);
        let p = self.set.len();
        let e_of = |id: usize| gram_solve(&self.gram_from(&self.nodes[id].moments), &moms[id]);
        let pid = self.node_of(p_cube).ok_or(LabError::ZeroMass)?;
        let qid = self.node_of(q).ok_or(LabError::ZeroMass)?;
        let mut ep = e_of(pid);
        let mut acc = DVector::zeros(p);
        let mut id = pid;
        for depth in p_cube.depth..q.depth {
            let target = q.ancestor(q.depth - depth - 1).expect("depth in range");
            let node = &self.nodes[id];
            let k = node
                .children
                .iter()
                .position(|&(_, nid)| self.nodes[nid].cube == target)
                .ok_or(LabError::ZeroMass)?;
            let (ci, nid) = node.children[k];
            let mut stacked = DVector::zeros(p * node.children.len());
            for (j, &(_, cid)) in node.children.iter().enumerate() {
                stacked.rows_mut(j * p, p).copy_from(&moms[cid]);
            }
            let coeffs = node.basis.transpose() * stacked;
            let w = &node.basis * coeffs;
            acc = self.transfer(ci, nid) * acc + w.rows(k * p, p);
            ep = self.transfer(ci, nid) * ep;
            id = nid;
        }
        let eq = e_of(qid);
        let expect = &eq - &ep;
        let scale = eq.amax().max(ep.amax()).max(acc.amax()).max(f64::MIN_POSITIVE);
        Ok((acc - expect).amax() / scale)
    }
}

fn child_cube(q: &DyadicCube, c: usize, n: usize) -> DyadicCube {
    let mut ch = q.child(c);
    if n == 1 {
        ch.coords[1] = 0;
    }
    ch
}

impl LeafFunction {
    fn leaf_energy_raw(&self, leaf_masses: &[f64], density: &[f64]) -> Vec<f64> {
        let set = MonomialSet::new(self.n, self.kf);
        let boxg = box_gram(&set, &set);
        (0..self.leaf_count())
            .map(|i| {
                let a = DVector::from_column_slice(self.leaf_poly(i));
                let mut e = a.dot(&(&boxg * &a)) * leaf_masses[i];
                if let Some(r) = &self.residual {
                    e += r[i] * density[i];
                }
                e
            })
            .collect()
    }
}

/// Worst defects of one system: Gram against identity, vanishing moments,
/// telescoping and relative round-trip error over the probes.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisDiagnostics {
    pub cubes: usize,
    pub gram_err: f64,
    pub moment_err: f64,
    pub telescoping_err: f64,
    pub roundtrip_err: f64,
}

/// Gram and moments are recomputed from raw child quadrature, independently
/// of the cached moments. Telescoping is checked on up to 16 leaf cubes per
/// probe against their top cube.
pub fn basis_diagnostics(sys: &AlpertSystem, mu: &DiscreteMeasure, probes: &[LeafFunction]) -> Result<BasisDiagnostics> {
    let grid = sys.grid();
    let cubes = sys.cubes();
    let errs: Vec<(f64, f64)> = cubes
        .par_iter()
        .filter_map(|q| sys.basis(q))
        .map(|b| {
            let g = b.gram(mu, grid);
            let id = DMatrix::identity(g.nrows(), g.ncols());
            ((g - id).amax(), b.moments(mu, grid).amax())
        })
        .collect();
    let mut out = BasisDiagnostics {
        cubes: errs.len(),
        gram_err: errs.iter().map(|e| e.0).fold(0.0, f64::max),
        moment_err: errs.iter().map(|e| e.1).fold(0.0, f64::max),
        telescoping_err: 0.0,
        roundtrip_err: 0.0,
    };
    let leaves: Vec<DyadicCube> = grid.cubes_at_depth(grid.max_depth()).into_iter().filter(|q| sys.mass(q) > 0.0).collect();
    let stride = (leaves.len() / 16).max(1);
    for f in probes {
        if f.kf > sys.kappa() {
            return Err(LabError::Precondition(format!("probe degree {} exceeds kappa {}", f.kf, sys.kappa())));
        }
        let back = sys.synthesize(&sys.analyze(f)?)?;
        let f = &f.with_degree(sys.kappa());
        let scale = f.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let err = f.coeffs.iter().zip(&back.coeffs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        out.roundtrip_err = out.roundtrip_err.max(err / scale);
        for q in leaves.iter().step_by(stride) {
            let top = q.ancestor(q.depth).expect("depth is in range");
            if q.depth > 0 && sys.mass(&top) > 0.0 {
                out.telescoping_err = out.telescoping_err.max(sys.telescoping_defect(f, q, &top)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, d: u32, kind: &MeasureKind) -> (DiscreteMeasure, DyadicGrid) {
        (DiscreteMeasure::new(kind, n, d).unwrap(), DyadicGrid::standard(n, d).unwrap())
    }

    fn random_fn(n: usize, d: u32, kf: usize, seed: u64) -> LeafFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = LeafFunction::zeros(n, d, kf);
        f.coeffs.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
        f
    }

    #[test]
    fn haar_is_positive_on_right_child() {
        let (mu, g) = setup(1, 3, &MeasureKind::Lebesgue);
        let b = build_alpert_basis(&mu, &g, &DyadicCube::root(), 1).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.eval(&g, 0, [0.75, 0.0]) - 1.0).abs() < 1e-14);
        assert!((b.eval(&g, 0, [0.25, 0.0]) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn kappa_two_lebesgue_basis() {
        let (mu, g) = setup(1, 3, &MeasureKind::Lebesgue);
        let b = build_alpert_basis(&mu, &g, &DyadicCube::root(), 2).unwrap();
        assert_eq!(b.dim(), 2);
        let gram = b.gram(&mu, &g);
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(b.moments(&mu, &g).amax() < 1e-12);
    }

    #[test]
    fn dimension_counts() {
        for kind in [MeasureKind::Lebesgue, MeasureKind::cascade(4)] {
            for n in 1..=2 {
                for kappa in 1..=3 {
                    let (mu, g) = setup(n, 3, &kind);
                    let b = build_alpert_basis(&mu, &g, &DyadicCube::new(1, [1, 0]), kappa).unwrap();
                    let p = MonomialSet::new(n, kappa).len();
                    assert_eq!(b.dim(), ((1 << n) - 1) * p);
                }
            }
        }
    }

    #[test]
    fn cached_basis_matches_direct_construction() {
        let (mu, g) = setup(2, 4, &MeasureKind::power(2, 1.0));
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        let q = DyadicCube::new(2, [1, 3]);
        let direct = build_alpert_basis(&mu, &g, &q, 2).unwrap();
        let cached = sys.basis(&q).unwrap();
        assert!((direct.coeffs - cached.coeffs).amax() < 1e-10);
    }

    #[test]
    fn wavelet_analysis_is_a_unit_vector() {
        let (mu, g) = setup(1, 5, &MeasureKind::cascade(2));
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        for idx in [0, 7, 20, sys.num_wavelets() - 1] {
            let f = sys.wavelet_function(idx).unwrap();
            let c = sys.analyze(&f).unwrap();
            for (j, v) in c.wavelet.iter().enumerate() {
                let want = if j == idx { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-10, "idx {idx} j {j} v {v}");
            }
            assert!(c.coarse_energy() < 1e-20);
        }
    }

    #[test]
    fn constants_are_coarse() {
        let (mu, g) = setup(1, 4, &MeasureKind::Lebesgue);
        let sys = AlpertSystem::new(&mu, &g, 1).unwrap();
        let f = LeafFunction::from_values(1, 4, vec![1.0; 16]);
        let c = sys.analyze(&f).unwrap();
        assert!(c.wavelet.iter().all(|x| x.abs() < 1e-14));
        assert!((c.coarse[0][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn round_trip_and_parseval() {
        for n in 1..=2 {
            let d = if n == 1 { 6 } else { 4 };
            let (mu, g) = setup(n, d, &MeasureKind::cascade(9));
            let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
            let f = random_fn(n, d, 2, 1);
            let c = sys.analyze(&f).unwrap();
            let back = sys.synthesize(&c).unwrap();
            let err = f.coeffs.iter().zip(&back.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
            assert!((c.energy() - f.l2_sq(&mu)).abs() < 1e-9 * f.l2_sq(&mu));
        }
    }

    #[test]
    fn projection_examples() {
        let (mu, g) = setup(1, 6, &MeasureKind::Lebesgue);
        let x = LeafFunction::sample(1, 6, 3, 4, |x| x[0]);
        let e = project_e(&mu, &g, &DyadicCube::root(), 1, &x).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-14);
        let x2 = LeafFunction::sample(1, 6, 3, 4, |x| x[0] * x[0]);
        let e2 = project_e(&mu, &g, &DyadicCube::root(), 2, &x2).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let v = eval_on_cube(&g, &DyadicCube::root(), 2, &e2, [t, 0.0]);
            assert!((v - (t - 1.0 / 6.0)).abs() < 1e-12);
        }
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        let cached = sys.project_e(&DyadicCube::root(), &x2).unwrap();
        assert!((cached[0] - e2[0]).abs() < 1e-12 && (cached[1] - e2[1]).abs() < 1e-12);
    }

    #[test]
    fn telescoping_identity() {
        let (mu, g) = setup(2, 4, &MeasureKind::cascade(1));
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        let f = random_fn(2, 4, 3, 5);
        let d = sys.telescoping_defect(&f, &DyadicCube::new(3, [5, 2]), &DyadicCube::root()).unwrap();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn sliver_cubes_stay_exact() {
        // top cube keeps 2 of its 64 leaves
        let mu = DiscreteMeasure::new(&MeasureKind::cascade(91), 1, 6).unwrap();
        let g = DyadicGrid::new(1, 6, [62, 0]).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 3).unwrap();
        let f = random_fn(1, 6, 3, 4);
        let back = sys.synthesize(&sys.analyze(&f).unwrap()).unwrap();
        let err = f.coeffs.iter().zip(&back.coeffs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "{err}");
        assert_eq!(sys.frame(&DyadicCube::root()).unwrap().scale[0], 2.0 / 64.0);
        // a cut cube with two children, three leaves wide
        let g = DyadicGrid::new(1, 6, [61, 0]).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 3).unwrap();
        let q = DyadicCube::new(4, [0, 0]);
        let b = sys.basis(&q).unwrap();
        assert_eq!(b.frame.scale[0], 3.0 / 64.0);
        let gram = b.gram(&mu, &g);
        assert!((gram - DMatrix::identity(b.dim(), b.dim())).amax() < 1e-12);
        assert!(b.moments(&mu, &g).amax() < 1e-12);
        let direct = build_alpert_basis(&mu, &g, &q, 3).unwrap();
        assert!((direct.coeffs - b.coeffs).amax() < 1e-9);
    }

    #[test]
    fn shifted_grid_round_trip() {
        let mu = DiscreteMeasure::new(&MeasureKind::power(1, 1.0), 1, 5).unwrap();
        let g = DyadicGrid::new(1, 5, [11, 0]).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        assert_eq!(sys.layout().tops.len(), 2);
        let f = random_fn(1, 5, 2, 3);
        let c = sys.analyze(&f).unwrap();
        let back = sys.synthesize(&c).unwrap();
        let err = f.coeffs.iter().zip(&back.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn sampled_residual_accounts_for_energy() {
        let (mu, g) = setup(1, 4, &MeasureKind::Lebesgue);
        let sys = AlpertSystem::new(&mu, &g, 1).unwrap();
        let f = LeafFunction::sample(1, 4, 2, 8, |x| (7.0 * x[0]).sin());
        let c = sys.analyze(&f).unwrap();
        let exact = 0.5 - (14.0f64).sin() / 28.0;
        assert!((c.energy() - exact).abs() < 1e-12);
        assert!(c.leaf_residual.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn diagnostics_on_shifted_cascade() {
        let mu = DiscreteMeasure::new(&MeasureKind::cascade(4), 1, 6).unwrap();
        let g = DyadicGrid::new(1, 6, [21, 0]).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 3).unwrap();
        let probes = [random_fn(1, 6, 3, 2), random_fn(1, 6, 1, 8)];
        let d = basis_diagnostics(&sys, &mu, &probes).unwrap();
        assert!(d.cubes > 0);
        assert!(d.gram_err < 1e-10 && d.moment_err < 1e-10, "{d:?}");
        assert!(d.telescoping_err < 1e-10 && d.roundtrip_err < 1e-9, "{d:?}");
    }
}
