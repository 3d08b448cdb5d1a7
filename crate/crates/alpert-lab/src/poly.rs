//! Multi-index bookkeeping for polynomials of total degree `< κ` in one or two
//! variables, affine changes of variable, and exact box integrals.

use nalgebra::{DMatrix, SymmetricEigen};

/// Monomials `x^β`, `|β| < κ`, in graded lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialSet {
    pub n: usize,
    pub kappa: usize,
    pub exps: Vec<[u32; 2]>,
}

impl MonomialSet {
    pub fn new(n: usize, kappa: usize) -> Self {
        let mut exps = Vec::new();
        for deg in 0..kappa as u32 {
            if n == 1 {
                exps.push([deg, 0]);
            } else {
                for b in 0..=deg {
                    exps.push([deg - b, b]);
                }
            }
        }
        Self { n, kappa, exps }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn index_of(&self, e: [u32; 2]) -> Option<usize> {
        let deg = (e[0] + e[1]) as usize;
        if deg >= self.kappa || (self.n == 1 && e[1] != 0) {
            return None;
        }
        if self.n == 1 {
            return Some(deg);
        }
        // degrees below contribute 1 + 2 + ... + deg entries
        Some(deg * (deg + 1) / 2 + e[1] as usize)
    }

    /// Exponents of total degree exactly `deg`.
    pub fn of_degree(n: usize, deg: u32) -> Vec<[u32; 2]> {
        if n == 1 {
            vec![[deg, 0]]
        } else {
            (0..=deg).map(|b| [deg - b, b]).collect()
        }
    }
}

/// Binomial coefficient as f64.
pub fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r *= (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Dimension `binom(n+κ-1, n)` of polynomials of degree `< κ` in `n` variables.
pub fn poly_dim(n: usize, kappa: usize) -> usize {
    binom((n + kappa - 1) as u32, n as u32).round() as usize
}

/// `∫_{-1/2}^{1/2} u^m du`.
pub fn centered_moment(m: u32) -> f64 {
    if m % 2 == 1 {
        0.0
    } else {
        0.5f64.powi(m as i32) / (m + 1) as f64
    }
}

/// `∫_{[-1/2,1/2]^n} u^e du`.
pub fn box_moment(n: usize, e: [u32; 2]) -> f64 {
    let mut r = centered_moment(e[0]);
    if n == 2 {
        r *= centered_moment(e[1]);
    }
    r
}

/// `∫_a^b ((x-c)/s)^m dx`.
pub fn interval_moment(a: f64, b: f64, c: f64, s: f64, m: u32) -> f64 {
    let p = (m + 1) as i32;
    s * (((b - c) / s).powi(p) - ((a - c) / s).powi(p)) / p as f64
}

/// Matrix `T` with `T[γ][β]` the coefficient of `u^γ` in `Π_i (a_i + b u_i)^{β_i}`.
/// It maps coefficient vectors in the `v = a + b u` frame to the `u` frame.
pub fn affine_matrix(set: &MonomialSet, a: [f64; 2], b: f64) -> DMatrix<f64> {
    affine_matrix_axes(set, a, [b, b])
}

/// [`affine_matrix`] with a separate scale per axis, `v_i = a_i + b_i u_i`.
pub fn affine_matrix_axes(set: &MonomialSet, a: [f64; 2], b: [f64; 2]) -> DMatrix<f64> {
    let p = set.len();
    let mut t = DMatrix::zeros(p, p);
    for (col, beta) in set.exps.iter().enumerate() {
        // expand each factor binomially
        let f0: Vec<f64> = (0..=beta[0]).map(|g| binom(beta[0], g) * a[0].powi((beta[0] - g) as i32) * b[0].powi(g as i32)).collect();
        let f1: Vec<f64> = (0..=beta[1]).map(|g| binom(beta[1], g) * a[1].powi((beta[1] - g) as i32) * b[1].powi(g as i32)).collect();
        for (g0, c0) in f0.iter().enumerate() {
            for (g1, c1) in f1.iter().enumerate() {
                let row = set.index_of([g0 as u32, g1 as u32]).expect("degree is preserved");
                t[(row, col)] += c0 * c1;
            }
        }
    }
    t
}

/// Offset of child `index` center relative to its parent, in parent-normalized units.
pub fn child_offset(n: usize, index: usize) -> [f64; 2] {
    let mut a = [0.0; 2];
    for (axis, ai) in a.iter_mut().enumerate().take(n) {
        *ai = if (index >> axis) & 1 == 1 { 0.25 } else { -0.25 };
    }
    a
}

/// Evaluate `Σ_β c_β u^β`.
pub fn eval(set: &MonomialSet, coeffs: &[f64], u: [f64; 2]) -> f64 {
    set.exps
        .iter()
        .zip(coeffs)
        .map(|(e, c)| c * u[0].powi(e[0] as i32) * u[1].powi(e[1] as i32))
        .sum()
}

/// Gradient of `Σ_β c_β u^β`.
pub fn grad(set: &MonomialSet, coeffs: &[f64], u: [f64; 2]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (e, c) in set.exps.iter().zip(coeffs) {
        if e[0] > 0 {
            g[0] += c * e[0] as f64 * u[0].powi(e[0] as i32 - 1) * u[1].powi(e[1] as i32);
        }
        if e[1] > 0 {
            g[1] += c * e[1] as f64 * u[0].powi(e[0] as i32) * u[1].powi(e[1] as i32 - 1);
        }
    }
    g
}

/// Gauss–Legendre nodes and weights on `[-1/2, 1/2]` (Golub–Welsch).
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    if q == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jac = DMatrix::zeros(q, q);
    for k in 1..q {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let nodes = pairs.iter().map(|p| p.0).collect();
    let weights = pairs.iter().map(|p| p.1).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_match_binomial() {
        for n in 1..=2 {
            for k in 1..=4 {
                assert_eq!(MonomialSet::new(n, k).len(), poly_dim(n, k));
            }
        }
        assert_eq!(poly_dim(2, 3), 6);
    }

    #[test]
    fn index_roundtrip() {
        let s = MonomialSet::new(2, 4);
        for (i, e) in s.exps.iter().enumerate() {
            assert_eq!(s.index_of(*e), Some(i));
        }
        assert_eq!(s.index_of([4, 0]), None);
    }

    #[test]
    fn affine_matrix_evaluates_consistently() {
        let s = MonomialSet::new(2, 3);
        let t = affine_matrix(&s, [0.25, -0.25], 0.5);
        let c: Vec<f64> = (0..s.len()).map(|i| 0.3 * i as f64 - 0.7).collect();
        let cu = &t * nalgebra::DVector::from_vec(c.clone());
        for u in [[0.1, -0.3], [0.45, 0.2]] {
            let v = [0.25 + 0.5 * u[0], -0.25 + 0.5 * u[1]];
            let lhs = eval(&s, &c, v);
            let rhs = eval(&s, cu.as_slice(), u);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(4);
        for m in 0..8 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(m)).sum();
            assert!((q - centered_moment(m as u32)).abs() < 1e-14, "m={m}");
        }
    }

    #[test]
    fn interval_moment_matches_closed_form() {
        assert!((interval_moment(0.0, 1.0, 0.5, 1.0, 2) - 1.0 / 12.0).abs() < 1e-15);
        assert!((interval_moment(0.0, 1.0, 0.0, 1.0, 1) - 0.5).abs() < 1e-15);
    }
}
