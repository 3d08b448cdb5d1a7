//! Dyadic cube geometry on the unit box `[0,1)^n`, `n ∈ {1,2}`.
//!
//! All positions are measured in leaf units `2^{-D}` where `D` is the grid's
//! maximal depth. A grid with shift `t` (in leaf units) has cubes
//! `t + 2^{D-d}·([k, k+1))` at depth `d`; for a nonzero shift the depth-0
//! cubes protrude from the box and are clipped for measure queries.

use crate::error::{LabError, Result};

/// Dyadic cube addressed by depth and integer coordinates relative to the
/// origin of its grid. Unused axes carry coordinate 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub depth: u32,
    pub coords: [i64; 2],
}

impl DyadicCube {
    pub fn new(depth: u32, coords: [i64; 2]) -> Self {
        Self { depth, coords }
    }

    pub fn root() -> Self {
        Self::new(0, [0, 0])
    }

    /// Child with bit `k` of `index` selecting the upper half along axis `k`.
    pub fn child(&self, index: usize) -> Self {
        let mut coords = self.coords;
        for (axis, c) in coords.iter_mut().enumerate() {
            *c = 2 * *c + ((index >> axis) & 1) as i64;
        }
        Self::new(self.depth + 1, coords)
    }

    pub fn children(&self, n: usize) -> Vec<DyadicCube> {
        let mut out: Vec<DyadicCube> = (0..1usize << n).map(|i| self.child(i)).collect();
        if n == 1 {
            for c in &mut out {
                c.coords[1] = 0;
            }
        }
        out
    }

    /// Index of `self` among the children of its parent.
    pub fn child_index(&self) -> usize {
        (self.coords[0].rem_euclid(2) as usize) | ((self.coords[1].rem_euclid(2) as usize) << 1)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.depth == 0 {
            return None;
        }
        Some(Self::new(
            self.depth - 1,
            [self.coords[0].div_euclid(2), self.coords[1].div_euclid(2)],
        ))
    }

    /// The `m`-th ancestor, `π^{(m)} Q`.
    pub fn ancestor(&self, m: u32) -> Option<Self> {
        if m > self.depth {
            return None;
        }
        let f = 1i64 << m;
        Some(Self::new(
            self.depth - m,
            [self.coords[0].div_euclid(f), self.coords[1].div_euclid(f)],
        ))
    }

    /// Dyadic containment within one grid (`self ⊂ other`, not necessarily strict).
    pub fn is_within(&self, other: &DyadicCube) -> bool {
        self.depth >= other.depth && self.ancestor(self.depth - other.depth) == Some(*other)
    }
}

/// Axis-parallel cube in ambient coordinates. Dyadic positions are exact in f64.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubeGeom {
    pub n: usize,
    pub lo: [f64; 2],
    pub side: f64,
}

/// Relative position of two cubes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Equal,
    /// first cube strictly inside the second
    Inside,
    /// first cube strictly contains the second
    Contains,
    /// interiors disjoint, closures meet
    Touch,
    /// closures disjoint
    Separated,
    /// interiors meet without nesting (only possible across different grids)
    Overlap,
}

impl CubeGeom {
    pub fn hi(&self, axis: usize) -> f64 {
        self.lo[axis] + self.side
    }

    pub fn center(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (axis, ci) in c.iter_mut().enumerate().take(self.n) {
            *ci = self.lo[axis] + 0.5 * self.side;
        }
        c
    }

    /// Concentric dilate `λQ`.
    pub fn dilate(&self, lambda: f64) -> CubeGeom {
        let c = self.center();
        let side = lambda * self.side;
        let mut lo = [0.0; 2];
        for axis in 0..self.n {
            lo[axis] = c[axis] - 0.5 * side;
        }
        CubeGeom { n: self.n, lo, side }
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.n).all(|a| x[a] >= self.lo[a] && x[a] < self.hi(a))
    }

    /// `self ⊂ other` (closed-open boxes).
    pub fn is_subset_of(&self, other: &CubeGeom) -> bool {
        (0..self.n).all(|a| self.lo[a] >= other.lo[a] && self.hi(a) <= other.hi(a))
    }

    /// ℓ^∞ distance between the closures.
    pub fn dist(&self, other: &CubeGeom) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..self.n {
            let gap = (other.lo[a] - self.hi(a)).max(self.lo[a] - other.hi(a)).max(0.0);
            d = d.max(gap);
        }
        d
    }

    pub fn relation(&self, other: &CubeGeom) -> Relation {
        if self == other {
            return Relation::Equal;
        }
        if self.is_subset_of(other) {
            return Relation::Inside;
        }
        if other.is_subset_of(self) {
            return Relation::Contains;
        }
        let mut touching = false;
        for a in 0..self.n {
            let overlap = self.hi(a).min(other.hi(a)) - self.lo[a].max(other.lo[a]);
            if overlap < 0.0 {
                return Relation::Separated;
            }
            if overlap == 0.0 {
                touching = true;
            }
        }
        if touching {
            Relation::Touch
        } else {
            Relation::Overlap
        }
    }

    /// ℓ^∞ distance from `self` to the skeleton `e(other)`, the union of the
    /// boundaries of the children of `other`. Requires `self ⊂ other`.
    pub fn dist_to_child_skeleton(&self, other: &CubeGeom) -> f64 {
        let mut d = f64::INFINITY;
        for a in 0..self.n {
            let lo = self.lo[a];
            let hi = self.hi(a);
            for b in [other.lo[a], other.lo[a] + 0.5 * other.side, other.hi(a)] {
                let gap = if b < lo {
                    lo - b
                } else if b > hi {
                    b - hi
                } else {
                    0.0
                };
                d = d.min(gap);
            }
        }
        d
    }
}

/// Parameters `(r, ε)` of goodness and deep embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodnessParams {
    pub r: u32,
    pub eps: f64,
}

impl GoodnessParams {
    pub fn new(r: u32, eps: f64) -> Result<Self> {
        if r < 1 {
            return Err(LabError::Parameter(format!("goodness r must be >= 1, got {r}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(LabError::Parameter(format!("goodness eps must lie in (0,1), got {eps}")));
        }
        Ok(Self { r, eps })
    }
}

/// Deep embedding `J ⋐_{r,ε} I`.
pub fn is_deeply_embedded(j: &CubeGeom, i: &CubeGeom, p: GoodnessParams) -> bool {
    if !j.is_subset_of(i) {
        return false;
    }
    if j.side > i.side * 0.5f64.powi(p.r as i32) {
        return false;
    }
    j.dist_to_child_skeleton(i) >= 2.0 * j.side.powf(p.eps) * i.side.powf(1.0 - p.eps)
}

/// Dyadic grid on `[0,1)^n` with leaf side `2^{-D}` and origin shift `t`
/// given in leaf units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicGrid {
    n: usize,
    max_depth: u32,
    shift: [i64; 2],
}

impl DyadicGrid {
    pub fn new(n: usize, max_depth: u32, shift: [i64; 2]) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(LabError::Dimension(n));
        }
        if max_depth == 0 {
            return Err(LabError::Depth(max_depth));
        }
        if max_depth > 24 {
            return Err(LabError::Parameter(format!("depth {max_depth} exceeds 24")));
        }
        let limit = 1i64 << max_depth;
        let mut shift = shift;
        for (axis, s) in shift.iter_mut().enumerate() {
            if axis >= n {
                *s = 0;
                continue;
            }
            if *s < 0 || *s >= limit {
                return Err(LabError::Shift { value: *s, limit });
            }
        }
        Ok(Self { n, max_depth, shift })
    }

    pub fn standard(n: usize, max_depth: u32) -> Result<Self> {
        Self::new(n, max_depth, [0, 0])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn shift(&self) -> [i64; 2] {
        self.shift
    }

    pub fn is_standard(&self) -> bool {
        self.shift == [0, 0]
    }

    /// Leaves per axis, `N = 2^D`.
    pub fn leaves_per_axis(&self) -> i64 {
        1i64 << self.max_depth
    }

    pub fn leaf_count(&self) -> usize {
        (self.leaves_per_axis() as usize).pow(self.n as u32)
    }

    pub fn leaf_side(&self) -> f64 {
        0.5f64.powi(self.max_depth as i32)
    }

    /// ℓ(Q) = 2^{-depth}.
    pub fn side(&self, q: &DyadicCube) -> f64 {
        0.5f64.powi(q.depth as i32)
    }

    pub fn side_leaves(&self, depth: u32) -> i64 {
        1i64 << (self.max_depth - depth)
    }

    /// Unclipped leaf-unit range `[lo, hi)` of `q` along `axis`.
    pub fn leaf_range(&self, q: &DyadicCube, axis: usize) -> (i64, i64) {
        if axis >= self.n {
            return (0, 1);
        }
        let l = self.side_leaves(q.depth);
        let lo = self.shift[axis] + q.coords[axis] * l;
        (lo, lo + l)
    }

    /// Leaf-unit box of `q ∩ [0,1)^n`, or `None` if empty.
    pub fn clipped_range(&self, q: &DyadicCube) -> Option<[(i64, i64); 2]> {
        let big_n = self.leaves_per_axis();
        let mut out = [(0, 1); 2];
        for (axis, slot) in out.iter_mut().enumerate().take(self.n) {
            let (lo, hi) = self.leaf_range(q, axis);
            let (a, b) = (lo.max(0), hi.min(big_n));
            if a >= b {
                return None;
            }
            *slot = (a, b);
        }
        Some(out)
    }

    /// True when `q` lies inside the box without clipping.
    pub fn is_interior(&self, q: &DyadicCube) -> bool {
        let big_n = self.leaves_per_axis();
        (0..self.n).all(|axis| {
            let (lo, hi) = self.leaf_range(q, axis);
            lo >= 0 && hi <= big_n
        })
    }

    pub fn intersects_domain(&self, q: &DyadicCube) -> bool {
        self.clipped_range(q).is_some()
    }

    /// Ambient (unclipped) geometry of `q`.
    pub fn geom(&self, q: &DyadicCube) -> CubeGeom {
        let h = self.leaf_side();
        let mut lo = [0.0; 2];
        for (axis, l) in lo.iter_mut().enumerate().take(self.n) {
            *l = self.leaf_range(q, axis).0 as f64 * h;
        }
        CubeGeom { n: self.n, lo, side: self.side(q) }
    }

    pub fn center(&self, q: &DyadicCube) -> [f64; 2] {
        self.geom(q).center()
    }

    /// Coordinate range `[kmin, kmax]` per axis of depth-`d` cubes meeting the box.
    pub fn coord_range(&self, depth: u32) -> [(i64, i64); 2] {
        let big_n = self.leaves_per_axis();
        let l = self.side_leaves(depth);
        let mut out = [(0, 0); 2];
        for (axis, slot) in out.iter_mut().enumerate().take(self.n) {
            let t = self.shift[axis];
            *slot = ((-t).div_euclid(l), (big_n - 1 - t).div_euclid(l));
        }
        out
    }

    /// All depth-`d` cubes meeting the box, axis 0 fastest.
    pub fn cubes_at_depth(&self, depth: u32) -> Vec<DyadicCube> {
        let r = self.coord_range(depth);
        let mut out = Vec::new();
        for k1 in r[1].0..=r[1].1 {
            for k0 in r[0].0..=r[0].1 {
                out.push(DyadicCube::new(depth, [k0, k1]));
            }
        }
        out
    }

    /// Depth-`d` cubes contained in the box.
    pub fn interior_cubes_at_depth(&self, depth: u32) -> Vec<DyadicCube> {
        self.cubes_at_depth(depth).into_iter().filter(|q| self.is_interior(q)).collect()
    }

    pub fn top_cubes(&self) -> Vec<DyadicCube> {
        self.cubes_at_depth(0)
    }

    pub fn relation(&self, a: &DyadicCube, b: &DyadicCube) -> Relation {
        self.geom(a).relation(&self.geom(b))
    }

    pub fn is_deeply_embedded(&self, j: &DyadicCube, i: &DyadicCube, p: GoodnessParams) -> bool {
        is_deeply_embedded(&self.geom(j), &self.geom(i), p)
    }

    /// `(r,ε)`-goodness of `j`: bad iff some ancestor `I` with depth in
    /// `[depth_cap, depth(J) - r]` has `dist(e(I), J) ≤ ½ ℓ(J)^ε ℓ(I)^{1-ε}`.
    pub fn is_good(&self, j: &DyadicCube, p: GoodnessParams, depth_cap: u32) -> bool {
        if j.depth < p.r {
            return true;
        }
        let gj = self.geom(j);
        let mut m = p.r;
        while m <= j.depth && j.depth - m >= depth_cap {
            let i = j.ancestor(m).expect("ancestor within depth");
            let gi = self.geom(&i);
            let bound = 0.5 * gj.side.powf(p.eps) * gi.side.powf(1.0 - p.eps);
            if gj.dist_to_child_skeleton(&gi) <= bound {
                return false;
            }
            m += 1;
        }
        true
    }

    /// Standard leaf index (axis 0 fastest) of a depth-`D` cube, if inside the box.
    pub fn leaf_index(&self, q: &DyadicCube) -> Option<usize> {
        debug_assert_eq!(q.depth, self.max_depth);
        let big_n = self.leaves_per_axis();
        let mut idx = 0usize;
        let mut stride = 1usize;
        for axis in 0..self.n {
            let i = self.shift[axis] + q.coords[axis];
            if i < 0 || i >= big_n {
                return None;
            }
            idx += i as usize * stride;
            stride *= big_n as usize;
        }
        Some(idx)
    }

    /// Standard leaf indices inside `q ∩ [0,1)^n`.
    pub fn leaves_in(&self, q: &DyadicCube) -> Vec<usize> {
        match self.clipped_range(q) {
            None => Vec::new(),
            Some(r) => leaves_in_box(self.n, self.leaves_per_axis(), r),
        }
    }
}

/// The standard grid and the `3^n − 1` grids shifted by `round(N/3)·j`, `j ∈ {0,1,2}^n`.
pub fn one_third_grids(grid: &DyadicGrid) -> Result<Vec<DyadicGrid>> {
    let big_n = grid.leaves_per_axis();
    let third = ((big_n as f64) / 3.0).round() as i64;
    let mut out = Vec::new();
    let range1 = if grid.n() == 2 { 0..3 } else { 0..1 };
    for j1 in range1 {
        for j0 in 0..3 {
            out.push(DyadicGrid::new(grid.n(), grid.max_depth(), [(j0 * third) % big_n, (j1 * third) % big_n])?);
        }
    }
    Ok(out)
}

/// Standard leaf indices (axis 0 fastest) in a leaf-unit box.
pub fn leaves_in_box(n: usize, big_n: i64, r: [(i64, i64); 2]) -> Vec<usize> {
    let mut out = Vec::new();
    let (r1lo, r1hi) = if n == 2 { r[1] } else { (0, 1) };
    for i1 in r1lo..r1hi {
        for i0 in r[0].0..r[0].1 {
            out.push((i0 + big_n * i1) as usize);
        }
    }
    out
}

/// Center of standard leaf `idx`.
pub fn leaf_center(n: usize, depth: u32, idx: usize) -> [f64; 2] {
    let big_n = 1usize << depth;
    let h = 0.5f64.powi(depth as i32);
    let mut c = [0.0; 2];
    c[0] = ((idx % big_n) as f64 + 0.5) * h;
    if n == 2 {
        c[1] = ((idx / big_n) as f64 + 0.5) * h;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(d: u32) -> DyadicGrid {
        DyadicGrid::standard(1, d).unwrap()
    }

    #[test]
    fn make_grid_examples() {
        let g = g1(4);
        assert!(g.is_standard());
        assert_eq!(g.top_cubes(), vec![DyadicCube::root()]);
        let s = DyadicGrid::new(1, 4, [5, 0]).unwrap();
        assert_eq!(s.geom(&DyadicCube::new(0, [0, 0])).lo[0], 5.0 / 16.0);
        let g2 = DyadicGrid::new(2, 3, [1, 2]).unwrap();
        assert_eq!(g2.leaf_side(), 0.125);
        assert!(DyadicGrid::new(3, 3, [0, 0]).is_err());
        assert!(DyadicGrid::new(1, 0, [0, 0]).is_err());
        assert!(DyadicGrid::new(1, 3, [8, 0]).is_err());
    }

    #[test]
    fn shifted_grid_has_two_clipped_tops() {
        let s = DyadicGrid::new(1, 4, [5, 0]).unwrap();
        let tops = s.top_cubes();
        assert_eq!(tops.len(), 2);
        assert!(tops.iter().all(|q| !s.is_interior(q)));
        assert_eq!(s.clipped_range(&tops[0]).unwrap()[0], (0, 5));
        assert_eq!(s.clipped_range(&tops[1]).unwrap()[0], (5, 16));
        let leaves: usize = s.cubes_at_depth(4).len();
        assert_eq!(leaves, 16);
    }

    #[test]
    fn relation_examples() {
        let g = g1(4);
        let a = DyadicCube::new(1, [0, 0]);
        let b = DyadicCube::new(1, [1, 0]);
        assert_eq!(g.relation(&a, &b), Relation::Touch);
        let q = DyadicCube::new(2, [0, 0]);
        assert_eq!(g.relation(&q, &a), Relation::Inside);
        assert_eq!(g.relation(&a, &q), Relation::Contains);
        let e = DyadicCube::new(3, [0, 0]);
        let f = DyadicCube::new(3, [4, 0]);
        assert_eq!(g.relation(&e, &f), Relation::Separated);
        assert_eq!(g.geom(&e).dist(&g.geom(&f)), 3.0 / 8.0);
    }

    #[test]
    fn deep_embedding_examples() {
        let g = g1(6);
        let p = GoodnessParams::new(3, 0.5).unwrap();
        let j = DyadicCube::new(3, [2, 0]);
        assert!(!g.is_deeply_embedded(&j, &DyadicCube::root(), p));
        assert!(!g.is_deeply_embedded(&DyadicCube::root(), &DyadicCube::root(), p));
        // J=[7/16,15/32) is not a dyadic interval, evaluate geometrically.
        let jg = CubeGeom { n: 1, lo: [7.0 / 16.0, 0.0], side: 1.0 / 32.0 };
        let ig = CubeGeom { n: 1, lo: [0.0, 0.0], side: 1.0 };
        let p5 = GoodnessParams::new(5, 0.1).unwrap();
        let dist = jg.dist_to_child_skeleton(&ig);
        assert!((dist - 1.0 / 32.0).abs() < 1e-15);
        let bound = 2.0 * (1.0f64 / 32.0).powf(0.1);
        assert_eq!(is_deeply_embedded(&jg, &ig, p5), dist >= bound);
        assert!(!is_deeply_embedded(&jg, &ig, p5));
    }

    #[test]
    fn goodness_examples() {
        let g = g1(10);
        let p = GoodnessParams::new(2, 0.5).unwrap();
        let j = DyadicCube::new(6, [31, 0]);
        assert!(!g.is_good(&j, p, 0));
        // shallow cubes have no ancestor r levels up
        assert!(g.is_good(&DyadicCube::new(1, [0, 0]), p, 0));
    }

    #[test]
    fn center_band_cube_is_good() {
        let g = g1(12);
        // A cube near 1/3 stays away from every dyadic skeleton point.
        let j = DyadicCube::new(12, [1365, 0]);
        assert!(g.is_good(&j, GoodnessParams::new(4, 0.9).unwrap(), 0));
    }

    #[test]
    fn children_and_ancestors() {
        let q = DyadicCube::new(2, [1, 3]);
        for c in q.children(2) {
            assert_eq!(c.parent(), Some(q));
            assert!(c.is_within(&q));
        }
        assert_eq!(q.child(3).child_index(), 3);
        assert_eq!(q.ancestor(2), Some(DyadicCube::root()));
        let neg = DyadicCube::new(1, [-1, 0]);
        assert_eq!(neg.parent(), Some(DyadicCube::new(0, [-1, 0])));
    }
}
