//! Monte-Carlo estimates for bad cubes under random grid shifts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{DyadicCube, DyadicGrid, GoodnessParams};
use crate::measure::DiscreteMeasure;
use crate::sobolev::{fit_line, norm_dyadic};
use crate::wavelet::{AlpertSystem, LeafFunction, WaveletCoefficients};

/// Generator for trial `t`: the master seed picks the key, the trial the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn random_shift(rng: &mut ChaCha8Rng, n: usize, big_n: i64) -> [i64; 2] {
    let s0 = rng.gen_range(0..big_n);
    let s1 = if n == 2 { rng.gen_range(0..big_n) } else { 0 };
    [s0, s1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadEstimate {
    pub r: u32,
    pub eps: f64,
    pub bad: usize,
    pub trials: usize,
    pub probability: f64,
}

/// Fraction of shifts that make a fixed leaf-sized cube `(r,ε)`-bad, for each `r`.
///
/// The mesh has depth `depth_gap`, so the cube sees ancestors up to
/// `depth_gap` levels above it. Shifts are uniform on the leaf lattice and
/// shared across `r`.
pub fn bad_probability_mc(n: usize, rs: &[u32], eps: f64, depth_gap: u32, trials: usize, seed: u64) -> Result<Vec<BadEstimate>> {
    if trials < 1000 {
        return Err(LabError::Parameter(format!("need at least 1000 trials, got {trials}")));
    }
    let params: Vec<GoodnessParams> = rs.iter().map(|&r| GoodnessParams::new(r, eps)).collect::<Result<_>>()?;
    let probe = DyadicGrid::standard(n, depth_gap)?;
    let big_n = probe.leaves_per_axis();
    let anchor = big_n / 2;
    let flags: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let shift = random_shift(&mut rng, n, big_n);
            let g = DyadicGrid::new(n, depth_gap, shift).expect("shift drawn in range");
            let j = DyadicCube::new(depth_gap, [anchor - shift[0], if n == 2 { anchor - shift[1] } else { 0 }]);
            params.iter().map(|p| !g.is_good(&j, *p, 0)).collect()
        })
        .collect();
    Ok(rs
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let bad = flags.iter().filter(|f| f[k]).count();
            BadEstimate { r, eps, bad, trials, probability: bad as f64 / trials as f64 }
        })
        .collect())
}

/// `(slope, intercept, r²)` of `log₂ P(bad)` against `r`, over estimates with `P > 0`.
pub fn bad_decay_slope(est: &[BadEstimate]) -> (f64, f64, f64) {
    let (x, y): (Vec<f64>, Vec<f64>) =
        est.iter().filter(|e| e.probability > 0.0).map(|e| (e.r as f64, e.probability.log2())).unzip();
    fit_line(&x, &y)
}

/// Wavelet coefficients of bad cubes only; coarse and residual parts are dropped.
pub fn bad_part(c: &WaveletCoefficients, grid: &DyadicGrid, p: GoodnessParams) -> WaveletCoefficients {
    let mut out = c.clone();
    out.coarse.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x = 0.0));
    out.leaf_residual.iter_mut().for_each(|x| *x = 0.0);
    for (idx, &(q, _)) in c.layout.functions.iter().enumerate() {
        if grid.is_good(&q, p, 0) {
            out.wavelet[idx] = 0.0;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadProjection {
    pub r: u32,
    pub s: f64,
    pub mean_ratio: f64,
    pub trials: usize,
}

/// Mean of `‖P_bad f‖_{W^s} / ‖f‖_{W^s}` over random shifts, for each `r` and `s`.
#[allow(clippy::too_many_arguments)]
pub fn bad_projection_norm_ratio(
    mu: &DiscreteMeasure,
    f: &LeafFunction,
    kappa: usize,
    s_values: &[f64],
    rs: &[u32],
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<BadProjection>> {
    let n = mu.n();
    let big_n = 1i64 << mu.depth();
    let params: Vec<GoodnessParams> = rs.iter().map(|&r| GoodnessParams::new(r, eps)).collect::<Result<_>>()?;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut rng = trial_rng(seed, t as u64);
            let g = DyadicGrid::new(n, mu.depth(), random_shift(&mut rng, n, big_n))?;
            let sys = AlpertSystem::new(mu, &g, kappa)?;
            let c = sys.analyze(f)?;
            let mut row = Vec::with_capacity(params.len() * s_values.len());
            for p in &params {
                let bad = bad_part(&c, &g, *p);
                for &s in s_values {
                    let den = norm_dyadic(&c, s).full;
                    row.push(if den > 0.0 { norm_dyadic(&bad, s).full / den } else { 0.0 });
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (k, &r) in rs.iter().enumerate() {
        for (m, &s) in s_values.iter().enumerate() {
            let idx = k * s_values.len() + m;
            let mean = per_trial.iter().map(|row| row[idx]).sum::<f64>() / trials.max(1) as f64;
            out.push(BadProjection { r, s, mean_ratio: mean, trials });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasureKind;

    #[test]
    fn probabilities_are_probabilities_and_reproducible() {
        let a = bad_probability_mc(1, &[2, 4, 6, 8, 12], 0.5, 10, 2000, 7).unwrap();
        let b = bad_probability_mc(1, &[2, 4, 6, 8, 12], 0.5, 10, 2000, 7).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert!((0.0..=1.0).contains(&e.probability));
        }
        // r beyond the depth gap leaves no admissible ancestor
        assert_eq!(a[4].bad, 0);
        // common shifts make the tally monotone in r
        for w in a.windows(2) {
            assert!(w[1].bad <= w[0].bad);
        }
        assert!(bad_probability_mc(1, &[2], 0.5, 10, 10, 7).is_err());
    }

    #[test]
    fn good_plus_bad_is_everything() {
        let mu = DiscreteMeasure::new(&MeasureKind::power(1, 0.5), 1, 7).unwrap();
        let g = DyadicGrid::new(1, 7, [37, 0]).unwrap();
        let sys = AlpertSystem::new(&mu, &g, 2).unwrap();
        let f = LeafFunction::indicator(1, 7, |i| (20..90).contains(&i));
        let c = sys.analyze(&f).unwrap();
        let p = GoodnessParams::new(2, 0.5).unwrap();
        let bad = bad_part(&c, &g, p);
        let mut good = c.clone();
        for (x, b) in good.wavelet.iter_mut().zip(&bad.wavelet) {
            *x -= b;
        }
        let sum = sys.synthesize(&good).unwrap().axpy(1.0, &sys.synthesize(&bad).unwrap()).unwrap();
        let orig = sys.synthesize(&c).unwrap();
        for (x, y) in sum.coeffs.iter().zip(&orig.coeffs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nothing_is_bad_when_r_exceeds_depth() {
        let mu = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, 6).unwrap();
        let f = LeafFunction::indicator(1, 6, |i| i < 20);
        let r = bad_projection_norm_ratio(&mu, &f, 1, &[0.0], &[7], 0.5, 20, 1).unwrap();
        assert_eq!(r[0].mean_ratio, 0.0);
    }
}
