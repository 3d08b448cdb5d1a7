//! Piecewise-constant measures on the leaf mesh of `[0,1)^n`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{leaf_center, DyadicCube, DyadicGrid};
use crate::poly::interval_moment;
use crate::sobolev::fit_line;

/// Measure families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureKind {
    Lebesgue,
    /// density `Π_i x_i^{a_i}`
    Power { a: Vec<f64> },
    /// random multiplicative cascade, each split factor uniform in `[lo, hi]`
    Cascade {
        seed: u64,
        #[serde(default = "default_cascade_lo")]
        lo: f64,
        #[serde(default = "default_cascade_hi")]
        hi: f64,
    },
    /// one density value per leaf, axis 0 fastest
    Table { values: Vec<f64> },
}

fn default_cascade_lo() -> f64 {
    1.0 / 3.0
}

fn default_cascade_hi() -> f64 {
    2.0 / 3.0
}

impl MeasureKind {
    pub fn label(&self) -> String {
        match self {
            MeasureKind::Lebesgue => "lebesgue".into(),
            MeasureKind::Power { a } => {
                let parts: Vec<String> = a.iter().map(|x| format!("{x}")).collect();
                format!("power({})", parts.join(";"))
            }
            MeasureKind::Cascade { seed, lo, hi } => format!("cascade({seed};{lo:.4};{hi:.4})"),
            MeasureKind::Table { values } => format!("table({})", values.len()),
        }
    }

    pub fn power(n: usize, a: f64) -> Self {
        MeasureKind::Power { a: vec![a; n] }
    }

    pub fn cascade(seed: u64) -> Self {
        MeasureKind::Cascade { seed, lo: default_cascade_lo(), hi: default_cascade_hi() }
    }
}

/// Exact sums of leaf masses over dyadic rectangles of every shape, so that
/// any leaf-aligned box is a short sum of nonnegative terms.
#[derive(Clone, Debug)]
struct Pyramid {
    n: usize,
    depth: u32,
    tables: Vec<Vec<f64>>,
}

impl Pyramid {
    fn build(n: usize, depth: u32, leaf_mass: &[f64]) -> Self {
        let d = depth as usize;
        if n == 1 {
            let mut tables = vec![Vec::new(); d + 1];
            tables[d] = leaf_mass.to_vec();
            for lev in (0..d).rev() {
                let fine = &tables[lev + 1];
                let coarse: Vec<f64> = (0..1usize << lev).map(|k| fine[2 * k] + fine[2 * k + 1]).collect();
                tables[lev] = coarse;
            }
            return Self { n, depth, tables };
        }
        let side = d + 1;
        let mut tables = vec![Vec::new(); side * side];
        tables[d * side + d] = leaf_mass.to_vec();
        // coarsen along axis 0 at full axis-1 resolution
        for d0 in (0..d).rev() {
            let fine = &tables[(d0 + 1) * side + d];
            let w_f = 1usize << (d0 + 1);
            let w_c = 1usize << d0;
            let h = 1usize << d;
            let mut coarse = vec![0.0; w_c * h];
            for j in 0..h {
                for k in 0..w_c {
                    coarse[k + w_c * j] = fine[2 * k + w_f * j] + fine[2 * k + 1 + w_f * j];
                }
            }
            tables[d0 * side + d] = coarse;
        }
        for d0 in 0..=d {
            let w = 1usize << d0;
            for d1 in (0..d).rev() {
                let fine = &tables[d0 * side + d1 + 1];
                let h_c = 1usize << d1;
                let mut coarse = vec![0.0; w * h_c];
                for j in 0..h_c {
                    for k in 0..w {
                        coarse[k + w * j] = fine[k + w * (2 * j)] + fine[k + w * (2 * j + 1)];
                    }
                }
                tables[d0 * side + d1] = coarse;
            }
        }
        Self { n, depth, tables }
    }

    /// Canonical dyadic decomposition of the leaf interval `[a, b)`.
    fn decompose(&self, mut a: i64, b: i64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let d = self.depth as i64;
        while a < b {
            let mut j = 0i64;
            while j < d && a % (1 << (j + 1)) == 0 && a + (1 << (j + 1)) <= b {
                j += 1;
            }
            out.push(((d - j) as usize, (a >> j) as usize));
            a += 1 << j;
        }
        out
    }

    fn box_sum(&self, r: [(i64, i64); 2]) -> f64 {
        let dec0 = self.decompose(r[0].0, r[0].1);
        if self.n == 1 {
            return dec0.iter().map(|&(lev, k)| self.tables[lev][k]).sum();
        }
        let dec1 = self.decompose(r[1].0, r[1].1);
        let side = self.depth as usize + 1;
        let mut s = 0.0;
        for &(l1, k1) in &dec1 {
            for &(l0, k0) in &dec0 {
                s += self.tables[l0 * side + l1][k0 + (k1 << l0)];
            }
        }
        s
    }
}

/// Absolutely continuous measure with constant density on each leaf cell.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    n: usize,
    depth: u32,
    kind: Option<MeasureKind>,
    density: Vec<f64>,
    leaf_mass: Vec<f64>,
    pyramid: Pyramid,
    prefix: Vec<f64>,
}

/// Doubling statistics over interior dyadic cubes.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublingReport {
    pub c_doub: f64,
    pub theta_doub: f64,
    pub theta_rev: f64,
    pub witness_doub: DyadicCube,
    pub witness_rev: DyadicCube,
}

/// Build a measure on the leaves of `grid` (shift is ignored: measures live on the standard mesh).
pub fn make_measure(kind: &MeasureKind, grid: &DyadicGrid) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(kind, grid.n(), grid.max_depth())
}

impl DiscreteMeasure {
    pub fn new(kind: &MeasureKind, n: usize, depth: u32) -> Result<Self> {
        DyadicGrid::standard(n, depth)?;
        let big_n = 1usize << depth;
        let count = big_n.pow(n as u32);
        let vol = 0.5f64.powi((depth as usize * n) as i32);
        let density = match kind {
            MeasureKind::Lebesgue => vec![1.0; count],
            MeasureKind::Power { a } => {
                if a.len() != n {
                    return Err(LabError::Parameter(format!("power needs {n} exponents, got {}", a.len())));
                }
                for &ai in a {
                    if !(ai > -1.0) {
                        return Err(LabError::NonIntegrable(ai));
                    }
                }
                let h = 0.5f64.powi(depth as i32);
                let axis: Vec<Vec<f64>> = a
                    .iter()
                    .map(|&ai| {
                        (0..big_n)
                            .map(|i| {
                                let lo = i as f64 * h;
                                let hi = lo + h;
                                (hi.powf(ai + 1.0) - lo.powf(ai + 1.0)) / (ai + 1.0) / h
                            })
                            .collect()
                    })
                    .collect();
                (0..count)
                    .map(|idx| {
                        let mut d = axis[0][idx % big_n];
                        if n == 2 {
                            d *= axis[1][idx / big_n];
                        }
                        d
                    })
                    .collect()
            }
            MeasureKind::Cascade { seed, lo, hi } => {
                if !(*lo > 0.0 && *hi < 1.0 && lo <= hi) {
                    return Err(LabError::CascadeRange { lo: *lo, hi: *hi });
                }
                cascade_masses(n, depth, *seed, *lo, *hi).into_iter().map(|m| m / vol).collect()
            }
            MeasureKind::Table { values } => {
                if values.len() != count {
                    return Err(LabError::TableLength { got: values.len(), expected: count });
                }
                for (index, &value) in values.iter().enumerate() {
                    if value < 0.0 || !value.is_finite() {
                        return Err(LabError::NegativeDensity { index, value });
                    }
                }
                values.clone()
            }
        };
        let mut m = Self::from_density(n, depth, density)?;
        m.kind = Some(kind.clone());
        Ok(m)
    }

    pub fn from_density(n: usize, depth: u32, density: Vec<f64>) -> Result<Self> {
        let big_n = 1usize << depth;
        if density.len() != big_n.pow(n as u32) {
            return Err(LabError::TableLength { got: density.len(), expected: big_n.pow(n as u32) });
        }
        let vol = 0.5f64.powi((depth as usize * n) as i32);
        let leaf_mass: Vec<f64> = density.iter().map(|d| d * vol).collect();
        if leaf_mass.iter().sum::<f64>() <= 0.0 {
            return Err(LabError::ZeroMass);
        }
        let pyramid = Pyramid::build(n, depth, &leaf_mass);
        let prefix = if n == 1 {
            let mut p = vec![0.0; big_n + 1];
            for i in 0..big_n {
                p[i + 1] = p[i] + leaf_mass[i];
            }
            p
        } else {
            let w = big_n + 1;
            let mut p = vec![0.0; w * w];
            for j in 0..big_n {
                for i in 0..big_n {
                    p[(i + 1) + w * (j + 1)] =
                        leaf_mass[i + big_n * j] + p[i + w * (j + 1)] + p[(i + 1) + w * j] - p[i + w * j];
                }
            }
            p
        };
        Ok(Self { n, depth, kind: None, density, leaf_mass, pyramid, prefix })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn kind(&self) -> Option<&MeasureKind> {
        self.kind.as_ref()
    }

    pub fn label(&self) -> String {
        self.kind.as_ref().map(|k| k.label()).unwrap_or_else(|| "custom".into())
    }

    pub fn leaves_per_axis(&self) -> usize {
        1usize << self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.density.len()
    }

    pub fn leaf_side(&self) -> f64 {
        0.5f64.powi(self.depth as i32)
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn leaf_masses(&self) -> &[f64] {
        &self.leaf_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.pyramid.box_sum([(0, self.leaves_per_axis() as i64), (0, self.leaves_per_axis() as i64)])
    }

    pub fn leaf_center(&self, idx: usize) -> [f64; 2] {
        leaf_center(self.n, self.depth, idx)
    }

    /// Mass of a leaf-unit box, clipped to the domain.
    pub fn box_mass(&self, r: [(i64, i64); 2]) -> f64 {
        let big_n = self.leaves_per_axis() as i64;
        let mut c = [(0i64, 1i64); 2];
        for axis in 0..self.n {
            let (a, b) = (r[axis].0.max(0), r[axis].1.min(big_n));
            if a >= b {
                return 0.0;
            }
            c[axis] = (a, b);
        }
        if self.n == 1 {
            c[1] = (0, 1);
        }
        self.pyramid.box_sum(c)
    }

    /// `|Q|_μ` for a cube of `grid`, clipped to the box.
    pub fn cube_mass(&self, grid: &DyadicGrid, q: &DyadicCube) -> f64 {
        match grid.clipped_range(q) {
            None => 0.0,
            Some(r) => self.box_mass(r),
        }
    }

    /// `μ([0,x_0) × [0,x_1))` with fractional leaf coverage.
    fn cumulative(&self, x: [f64; 2]) -> f64 {
        let big_n = self.leaves_per_axis();
        let locate = |t: f64| -> (usize, f64) {
            let u = (t.clamp(0.0, 1.0)) * big_n as f64;
            if u >= big_n as f64 {
                (big_n - 1, 1.0)
            } else {
                let i = u.floor() as usize;
                (i, u - i as f64)
            }
        };
        let (i, fx) = locate(x[0]);
        if self.n == 1 {
            return self.prefix[i] + fx * self.leaf_mass[i];
        }
        let (j, fy) = locate(x[1]);
        let w = big_n + 1;
        let p = |a: usize, b: usize| self.prefix[a + w * b];
        p(i, j) + fx * (p(i + 1, j) - p(i, j)) + fy * (p(i, j + 1) - p(i, j)) + fx * fy * self.leaf_mass[i + big_n * j]
    }

    /// Mass of an arbitrary axis-parallel box `[lo, hi)` in ambient coordinates.
    pub fn real_box_mass(&self, lo: [f64; 2], hi: [f64; 2]) -> f64 {
        if self.n == 1 {
            return (self.cumulative(hi) - self.cumulative(lo)).max(0.0);
        }
        let v = self.cumulative(hi) - self.cumulative([lo[0], hi[1]]) - self.cumulative([hi[0], lo[1]])
            + self.cumulative(lo);
        v.max(0.0)
    }

    /// `∫_Q Π_i ((x_i - center_i)/scale_i)^{β_i} dμ`, exact.
    pub fn monomial_moment(&self, grid: &DyadicGrid, q: &DyadicCube, beta: [u32; 2], center: [f64; 2], scale: [f64; 2]) -> f64 {
        let Some(r) = grid.clipped_range(q) else { return 0.0 };
        let h = self.leaf_side();
        let big_n = self.leaves_per_axis() as i64;
        let mut s = 0.0;
        let (r1lo, r1hi) = if self.n == 2 { r[1] } else { (0, 1) };
        for i1 in r1lo..r1hi {
            let f1 = if self.n == 2 {
                interval_moment(i1 as f64 * h, (i1 + 1) as f64 * h, center[1], scale[1], beta[1])
            } else {
                1.0
            };
            for i0 in r[0].0..r[0].1 {
                let f0 = interval_moment(i0 as f64 * h, (i0 + 1) as f64 * h, center[0], scale[0], beta[0]);
                s += self.density[(i0 + big_n * i1) as usize] * f0 * f1;
            }
        }
        s
    }

    /// Doubling constant and exponents from doubles and triples of interior
    /// dyadic cubes at depths in `depths` (depths ≥ D are skipped).
    pub fn doubling_exponents(&self, depths: std::ops::RangeInclusive<u32>) -> Result<DoublingReport> {
        let grid = DyadicGrid::standard(self.n, self.depth)?;
        let big_n = self.leaves_per_axis() as i64;
        let mut rep = DoublingReport {
            c_doub: 1.0,
            theta_doub: f64::NEG_INFINITY,
            theta_rev: f64::INFINITY,
            witness_doub: DyadicCube::root(),
            witness_rev: DyadicCube::root(),
        };
        let mut seen = false;
        for d in depths {
            if d >= self.depth {
                continue;
            }
            let l = grid.side_leaves(d);
            for q in grid.cubes_at_depth(d) {
                let mut ok = true;
                let mut r1 = [(0, 1); 2];
                let mut r2 = [(0, 1); 2];
                let mut r3 = [(0, 1); 2];
                for axis in 0..self.n {
                    let lo = q.coords[axis] * l;
                    r1[axis] = (lo, lo + l);
                    r2[axis] = (lo - l / 2, lo + l + l / 2);
                    r3[axis] = (lo - l, lo + 2 * l);
                    if lo - l < 0 || lo + 2 * l > big_n {
                        ok = false;
                    }
                }
                if !ok {
                    continue;
                }
                let m1 = self.box_mass(r1);
                if m1 <= 0.0 {
                    return Err(LabError::DegenerateCube { depth: q.depth, coords: q.coords });
                }
                let ratio2 = self.box_mass(r2) / m1;
                let ratio3 = self.box_mass(r3) / m1;
                seen = true;
                if ratio2 > rep.c_doub {
                    rep.c_doub = ratio2;
                }
                let td = ratio2.log2();
                if td > rep.theta_doub {
                    rep.theta_doub = td;
                    rep.witness_doub = q;
                }
                let tr = ratio3.ln() / 3f64.ln();
                if tr < rep.theta_rev {
                    rep.theta_rev = tr;
                    rep.witness_rev = q;
                }
            }
        }
        if !seen {
            return Err(LabError::Parameter("no interior cube in the requested depth range".into()));
        }
        Ok(rep)
    }

    /// Measure refined to depth `depth + 1` with the same leaf masses split evenly.
    pub fn refine_uniform(&self) -> Result<Self> {
        let big_n = self.leaves_per_axis();
        let fine_n = 2 * big_n;
        let count = fine_n.pow(self.n as u32);
        let mut d = vec![0.0; count];
        for (idx, v) in d.iter_mut().enumerate() {
            let i0 = (idx % fine_n) / 2;
            let i1 = if self.n == 2 { (idx / fine_n) / 2 } else { 0 };
            *v = self.density[i0 + big_n * i1];
        }
        Self::from_density(self.n, self.depth + 1, d)
    }

    /// The same family at depth `depth + 1`, or a uniform split for tables.
    pub fn refine(&self) -> Result<Self> {
        match &self.kind {
            Some(MeasureKind::Table { .. }) | None => self.refine_uniform(),
            Some(k) => Self::new(k, self.n, self.depth + 1),
        }
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.density {
            writeln!(w, "{v:.17e}")?;
        }
        Ok(())
    }

    pub fn read_table<R: BufRead>(r: R, n: usize, depth: u32) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|e| LabError::Parse(format!("line {}: {e}", lineno + 1)))?;
            values.push(v);
        }
        Self::new(&MeasureKind::Table { values }, n, depth)
    }

    pub fn read_table_file(path: &Path, n: usize, depth: u32) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_table(std::io::BufReader::new(f), n, depth)
    }
}

fn cascade_masses(n: usize, depth: u32, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masses = vec![1.0];
    for d in 0..depth {
        let w = 1usize << d;
        let fw = 2 * w;
        let mut next = vec![0.0; fw.pow(n as u32)];
        for (idx, &m) in masses.iter().enumerate() {
            let k0 = idx % w;
            let k1 = idx / w;
            let f0: f64 = rng.gen_range(lo..=hi);
            if n == 1 {
                next[2 * k0] = m * f0;
                next[2 * k0 + 1] = m * (1.0 - f0);
            } else {
                let fa: f64 = rng.gen_range(lo..=hi);
                let fb: f64 = rng.gen_range(lo..=hi);
                let left = m * f0;
                let right = m * (1.0 - f0);
                next[2 * k0 + fw * (2 * k1)] = left * fa;
                next[2 * k0 + fw * (2 * k1 + 1)] = left * (1.0 - fa);
                next[2 * k0 + 1 + fw * (2 * k1)] = right * fb;
                next[2 * k0 + 1 + fw * (2 * k1 + 1)] = right * (1.0 - fb);
            }
        }
        masses = next;
    }
    masses
}

/// Polynomial in ambient coordinates, `Σ c_β x^β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<([u32; 2], f64)>,
}

impl Polynomial {
    pub fn new(n: usize, terms: Vec<([u32; 2], f64)>) -> Self {
        Self { n, terms }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32))
            .sum()
    }

    pub fn grad_norm(&self, x: [f64; 2]) -> f64 {
        let mut g = [0.0; 2];
        for (e, c) in &self.terms {
            if e[0] > 0 {
                g[0] += c * e[0] as f64 * x[0].powi(e[0] as i32 - 1) * x[1].powi(e[1] as i32);
            }
            if e[1] > 0 {
                g[1] += c * e[1] as f64 * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32 - 1);
            }
        }
        (g[0] * g[0] + g[1] * g[1]).sqrt()
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|(e, c)| (*e, c * f)).collect() }
    }
}

/// Halo mass with the normalization applied.
#[derive(Clone, Debug, PartialEq)]
pub struct HaloReport {
    pub mass: f64,
    /// `false` when `P` had to be rescaled to unit sup norm on `Q`
    pub was_normalized: bool,
}

/// Mass of the leaves of `Q` lying in the `δ`-halo of `{P = 0}`.
pub fn halo_mass(mu: &DiscreteMeasure, q: &DyadicCube, p: &Polynomial, delta: f64) -> Result<HaloReport> {
    let grid = DyadicGrid::standard(mu.n(), mu.depth())?;
    let h = mu.leaf_side();
    if delta < h * (1.0 - 1e-12) {
        return Err(LabError::Precondition(format!("halo width {delta} below leaf side {h}")));
    }
    let leaves = grid.leaves_in(q);
    let big_n = mu.leaves_per_axis();
    let corners = |idx: usize| -> Vec<[f64; 2]> {
        let i0 = (idx % big_n) as f64 * h;
        if mu.n() == 1 {
            vec![[i0, 0.0], [i0 + h, 0.0]]
        } else {
            let i1 = (idx / big_n) as f64 * h;
            vec![[i0, i1], [i0 + h, i1], [i0, i1 + h], [i0 + h, i1 + h]]
        }
    };
    let mut sup: f64 = 0.0;
    let mut gsup: f64 = 0.0;
    for &idx in &leaves {
        let c = mu.leaf_center(idx);
        sup = sup.max(p.eval(c).abs());
        gsup = gsup.max(p.grad_norm(c));
        for x in corners(idx) {
            sup = sup.max(p.eval(x).abs());
            gsup = gsup.max(p.grad_norm(x));
        }
    }
    if sup == 0.0 {
        return Err(LabError::Precondition("polynomial vanishes on the cube".into()));
    }
    let was_normalized = (sup - 1.0).abs() < 1e-9;
    let scale = 1.0 / sup;
    let mut mass = 0.0;
    for &idx in &leaves {
        let vals: Vec<f64> = corners(idx).into_iter().map(|x| p.eval(x) * scale).collect();
        let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sign_change = mn <= 0.0 && mx >= 0.0;
        let near = (p.eval(mu.leaf_center(idx)) * scale).abs() < delta * gsup * scale;
        if sign_change || near {
            mass += mu.leaf_masses()[idx];
        }
    }
    Ok(HaloReport { mass, was_normalized })
}

/// Fitted `θ` in `|Q∩Z_δ|_μ ≈ C δ^θ |Q|_μ` over `δ = 2^{-k}`, `k = 1..=kmax`,
/// with the leaf side as the smallest admissible width.
#[derive(Clone, Debug, PartialEq)]
pub struct HaloDecay {
    pub theta: f64,
    pub r2: f64,
    pub deltas: Vec<f64>,
    pub fractions: Vec<f64>,
}

pub fn halo_decay(mu: &DiscreteMeasure, q: &DyadicCube, p: &Polynomial) -> Result<HaloDecay> {
    let grid = DyadicGrid::standard(mu.n(), mu.depth())?;
    let total = mu.cube_mass(&grid, q);
    if total <= 0.0 {
        return Err(LabError::DegenerateCube { depth: q.depth, coords: q.coords });
    }
    let kmax = mu.depth().saturating_sub(q.depth + 1);
    if kmax < 2 {
        return Err(LabError::Precondition("need at least two halo widths below the cube side".into()));
    }
    let side = grid.side(q);
    let mut out = HaloDecay { theta: 0.0, r2: 0.0, deltas: Vec::new(), fractions: Vec::new() };
    for k in 1..=kmax {
        let delta = side * 0.5f64.powi(k as i32);
        out.deltas.push(delta);
        out.fractions.push(halo_mass(mu, q, p, delta)?.mass / total);
    }
    let (x, y): (Vec<f64>, Vec<f64>) =
        out.deltas.iter().zip(&out.fractions).filter(|(_, f)| **f > 0.0).map(|(d, f)| (d.log2(), f.log2())).unzip();
    let (slope, _, r2) = fit_line(&x, &y);
    out.theta = slope;
    out.r2 = r2;
    Ok(out)
}

/// Lebesgue, power `a = 1`, power `a = −1/2` and a seeded cascade.
pub fn doubling_suite(n: usize) -> Vec<MeasureKind> {
    vec![MeasureKind::Lebesgue, MeasureKind::power(n, 1.0), MeasureKind::power(n, -0.5), MeasureKind::cascade(7)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leb(n: usize, d: u32) -> DiscreteMeasure {
        DiscreteMeasure::new(&MeasureKind::Lebesgue, n, d).unwrap()
    }

    #[test]
    fn lebesgue_leaf_masses() {
        let m = leb(1, 4);
        assert!(m.leaf_masses().iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-16));
        let g = DyadicGrid::standard(2, 3).unwrap();
        let m2 = leb(2, 3);
        assert!((m2.cube_mass(&g, &DyadicCube::new(1, [0, 0])) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_masses() {
        let m = DiscreteMeasure::new(&MeasureKind::power(1, 1.0), 1, 5).unwrap();
        let g = DyadicGrid::standard(1, 5).unwrap();
        assert!((m.cube_mass(&g, &DyadicCube::new(1, [0, 0])) - 0.125).abs() < 1e-15);
        assert!((m.cube_mass(&g, &DyadicCube::new(1, [1, 0])) - 0.375).abs() < 1e-15);
        assert!(DiscreteMeasure::new(&MeasureKind::power(1, -1.0), 1, 5).is_err());
        let half = DiscreteMeasure::new(&MeasureKind::power(1, -0.5), 1, 6).unwrap();
        assert!((half.total_mass() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cascade_is_normalized_and_deterministic() {
        for n in 1..=2 {
            let a = DiscreteMeasure::new(&MeasureKind::cascade(7), n, 5).unwrap();
            let b = DiscreteMeasure::new(&MeasureKind::cascade(7), n, 5).unwrap();
            assert_eq!(a.density(), b.density());
            assert!((a.total_mass() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn cascade_refinement_is_consistent() {
        let a = DiscreteMeasure::new(&MeasureKind::cascade(3), 1, 5).unwrap();
        let b = a.refine().unwrap();
        for i in 0..32 {
            let s = b.leaf_masses()[2 * i] + b.leaf_masses()[2 * i + 1];
            assert!((s - a.leaf_masses()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn monomial_moment_examples() {
        let g = DyadicGrid::standard(1, 4).unwrap();
        let m = leb(1, 4);
        let r = DyadicCube::root();
        assert!(m.monomial_moment(&g, &r, [1, 0], [0.5, 0.0], [1.0; 2]).abs() < 1e-16);
        assert!((m.monomial_moment(&g, &r, [2, 0], [0.5, 0.0], [1.0; 2]) - 1.0 / 12.0).abs() < 1e-15);
        let p = DiscreteMeasure::new(&MeasureKind::power(1, 1.0), 1, 4).unwrap();
        // piecewise-constant density: exact per-leaf integral of x against the leaf mean of x
        let exact: f64 = (0..16)
            .map(|i| {
                let a = i as f64 / 16.0;
                let b = a + 1.0 / 16.0;
                ((b * b - a * a) / 2.0) * ((b * b - a * a) / 2.0) * 16.0
            })
            .sum();
        assert!((p.monomial_moment(&g, &r, [1, 0], [0.0, 0.0], [1.0; 2]) - exact).abs() < 1e-15);
        assert!((exact - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn doubling_lebesgue() {
        let r = leb(1, 8).doubling_exponents(2..=7).unwrap();
        assert!((r.c_doub - 2.0).abs() < 1e-12);
        assert!((r.theta_doub - 1.0).abs() < 1e-12);
        assert!((r.theta_rev - 1.0).abs() < 1e-12);
        let r2 = leb(2, 5).doubling_exponents(2..=4).unwrap();
        assert!((r2.theta_doub - 2.0).abs() < 1e-12);
        assert!((r2.theta_rev - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cascade_doubling_bound() {
        let m = DiscreteMeasure::new(&MeasureKind::cascade(11), 1, 10).unwrap();
        let r = m.doubling_exponents(2..=9).unwrap();
        // exhaustive oracle over the same cubes
        let mut best: f64 = 0.0;
        let big_n = 1024i64;
        for d in 2..=9u32 {
            let l = 1i64 << (10 - d);
            for k in 0..(1i64 << d) {
                let lo = k * l;
                if lo - l < 0 || lo + 2 * l > big_n {
                    continue;
                }
                let s = |a: i64, b: i64| (a..b).map(|i| m.leaf_masses()[i as usize]).sum::<f64>();
                best = best.max(s(lo - l / 2, lo + l + l / 2) / s(lo, lo + l));
            }
        }
        assert!((best - r.c_doub).abs() < 1e-12 * best);
        // dyadic doubling: a parent carries at most 3 times its child
        let g = DyadicGrid::standard(1, 10).unwrap();
        for d in 1..=10 {
            for q in g.cubes_at_depth(d) {
                let ratio = m.cube_mass(&g, &q.parent().unwrap()) / m.cube_mass(&g, &q);
                assert!(ratio <= 3.0 + 1e-12);
            }
        }
    }

    #[test]
    fn real_box_mass_fractional() {
        let m = leb(2, 4);
        let v = m.real_box_mass([0.1, 0.2], [0.35, 0.9]);
        assert!((v - 0.25 * 0.7).abs() < 1e-14);
        let p = DiscreteMeasure::new(&MeasureKind::power(1, 1.0), 1, 6).unwrap();
        assert!((p.real_box_mass([0.0, 0.0], [1.0, 0.0]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn halo_examples() {
        let m = leb(1, 4);
        let p = Polynomial::new(1, vec![([1, 0], 2.0), ([0, 0], -1.0)]);
        let r = halo_mass(&m, &DyadicCube::root(), &p, 0.125).unwrap();
        assert!((r.mass - 0.25).abs() < 1e-15);
        assert!(r.was_normalized);
        let full = halo_mass(&m, &DyadicCube::root(), &p, 1.0).unwrap();
        assert!((full.mass - 1.0).abs() < 1e-15);
        let scaled = halo_mass(&m, &DyadicCube::root(), &p.scaled(3.0), 0.125).unwrap();
        assert!(!scaled.was_normalized);
        assert!((scaled.mass - 0.25).abs() < 1e-15);
        assert!(halo_mass(&m, &DyadicCube::root(), &p, 0.01).is_err());
    }

    #[test]
    fn table_roundtrip() {
        let m = DiscreteMeasure::new(&MeasureKind::cascade(5), 2, 3).unwrap();
        let mut buf = Vec::new();
        m.write_table(&mut buf).unwrap();
        let back = DiscreteMeasure::read_table(std::io::Cursor::new(buf), 2, 3).unwrap();
        for (a, b) in m.density().iter().zip(back.density()) {
            assert_eq!(a, b);
        }
        let bad = MeasureKind::Table { values: vec![1.0, -1.0] };
        assert!(DiscreteMeasure::new(&bad, 1, 1).is_err());
    }

    #[test]
    fn halo_exponent_is_positive_on_the_suite() {
        let lin = Polynomial::new(1, vec![([1, 0], 2.0), ([0, 0], -1.0)]);
        for kind in doubling_suite(1) {
            let mu = DiscreteMeasure::new(&kind, 1, 10).unwrap();
            let h = halo_decay(&mu, &DyadicCube::root(), &lin).unwrap();
            assert!(h.theta > 0.0 && h.r2 >= 0.9, "{kind:?}: {h:?}");
            assert!(h.fractions.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
