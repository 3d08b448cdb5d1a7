//! Weighted Alpert bases on a cascade measure: dimensions, Gram and moment
//! checks, telescoping and a round trip.

use alpert_lab::grid::{DyadicCube, DyadicGrid};
use alpert_lab::measure::{DiscreteMeasure, MeasureKind};
use alpert_lab::wavelet::{basis_diagnostics, build_alpert_basis, AlpertSystem, LeafFunction};

fn main() -> alpert_lab::Result<()> {
    // Haar on Lebesgue: negative on the left child, positive on the right
    let leb = DiscreteMeasure::new(&MeasureKind::Lebesgue, 1, 4)?;
    let g = DyadicGrid::standard(1, 4)?;
    let h = build_alpert_basis(&leb, &g, &DyadicCube::root(), 1)?;
    println!("haar on [0,1): left {:+.3}, right {:+.3}", h.eval(&g, 0, [0.25, 0.0]), h.eval(&g, 0, [0.75, 0.0]));

    for n in 1..=2 {
        let depth = if n == 1 { 7 } else { 4 };
        let mu = DiscreteMeasure::new(&MeasureKind::cascade(11), n, depth)?;
        for shift in [[0, 0], [5, if n == 2 { 3 } else { 0 }]] {
            let grid = DyadicGrid::new(n, depth, shift)?;
            for kappa in 1..=3 {
                let sys = AlpertSystem::new(&mu, &grid, kappa)?;
                let probe = LeafFunction::sample(n, depth, kappa, 4, |x| (5.0 * x[0]).cos() + x[1] * x[1]);
                let d = basis_diagnostics(&sys, &mu, &[probe])?;
                println!(
                    "n={n} shift={shift:?} kappa={kappa}: {} wavelets on {} cubes, gram {:.1e}, moments {:.1e}, telescoping {:.1e}, round trip {:.1e}",
                    sys.num_wavelets(),
                    d.cubes,
                    d.gram_err,
                    d.moment_err,
                    d.telescoping_err,
                    d.roundtrip_err
                );
            }
        }
    }
    Ok(())
}
