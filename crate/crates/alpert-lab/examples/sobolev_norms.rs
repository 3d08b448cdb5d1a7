//! Dyadic Sobolev norms: single wavelets, cube indicators, the degenerate
//! two-cube example and the modulus asymmetry of alternating signs.

use alpert_lab::grid::DyadicGrid;
use alpert_lab::measure::{doubling_suite, DiscreteMeasure, MeasureKind};
use alpert_lab::sobolev::{alternating_family, fit_line, full_norm, modulus_asymmetry, norm_dyadic};
use alpert_lab::wavelet::{AlpertSystem, LeafFunction};

fn main() -> alpert_lab::Result<()> {
    let d = 7;
    let grid = DyadicGrid::standard(1, d)?;
    for kind in doubling_suite(1) {
        let mu = DiscreteMeasure::new(&kind, 1, d)?;
        let sys = AlpertSystem::new(&mu, &grid, 2)?;
        let idx = sys.num_wavelets() / 3;
        let (q, _) = sys.layout().functions[idx];
        let h = sys.wavelet_function(idx)?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for depth in 1..d {
            for c in grid.cubes_at_depth(depth) {
                let f = LeafFunction::cube_indicator(&grid, &c);
                let r = full_norm(&sys, &f, 0.25)? / (grid.side(&c).powf(-0.25) * sys.mass(&c).sqrt());
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        println!(
            "{:<28} |h_Q|_(W^0.25) * l(Q)^0.25 = {:.12}  indicator ratio in [{lo:.3}, {hi:.3}]",
            kind.label(),
            full_norm(&sys, &h, 0.25)? * grid.side(&q).powf(0.25)
        );
    }

    // the measure is 1 on [−1,1) and f = 1 on [0,1), both rescaled into the unit box
    let mu = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, 6)?;
    let sys = AlpertSystem::new(&mu, &DyadicGrid::new(1, 6, [32, 0])?, 1)?;
    let f = LeafFunction::indicator(1, 6, |i| i >= 32);
    println!("degenerate example: homogeneous norm {}", norm_dyadic(&sys.analyze(&f)?, 0.2).homogeneous);

    let mu = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, 10)?;
    let sys = AlpertSystem::new(&mu, &DyadicGrid::standard(1, 10)?, 1)?;
    for s in [0.1, 0.2] {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for k in 1..=8 {
            let pieces = 2usize << k;
            let r = modulus_asymmetry(&sys, &alternating_family(10, pieces)?, s)?;
            x.push(((pieces / 2) as f64).ln());
            y.push(r.ln());
        }
        let (slope, _, _) = fit_line(&x, &y);
        println!("s={s}: slope of log asymmetry vs log N = {slope:.4} (2s = {})", 2.0 * s);
    }
    Ok(())
}
