//! Stopping-time coronas: Carleson packing, shifted overlap and
//! quasiorthogonality across thresholds.

use alpert_lab::cli::single_cube_pivotal;
use alpert_lab::corona::{build_corona, carleson_constant, quasiorthogonality_ratio, shifted_corona_assign};
use alpert_lab::grid::{DyadicCube, DyadicGrid};
use alpert_lab::measure::{DiscreteMeasure, MeasureKind};
use alpert_lab::sobolev::standard_ensemble;
use alpert_lab::wavelet::{AlpertSystem, LeafFunction};

fn main() -> alpert_lab::Result<()> {
    let (depth, kappa, alpha, eps) = (8, 1, 0.5, 0.25);
    let sigma = DiscreteMeasure::new(&MeasureKind::power(1, -0.5), 1, depth)?;
    let omega = DiscreteMeasure::new(&MeasureKind::power(1, 1.0), 1, depth)?;
    let grid = DyadicGrid::standard(1, depth)?;
    let sys = AlpertSystem::new(&sigma, &grid, kappa)?;
    let ens: Vec<LeafFunction> = standard_ensemble(1, 40, 4, 3).iter().map(|m| m.realize(1, depth)).collect();
    let sup = single_cube_pivotal(&sigma, &omega, alpha, kappa, eps)?;
    println!("single-cube pivotal sup {sup:.4}");
    for factor in [0.05, 0.2, 0.5, 1.0, 2.5] {
        let gamma = factor * sup;
        let forest = build_corona(&grid, &DyadicCube::root(), &sigma, &omega, gamma, kappa, alpha)?;
        let c = carleson_constant(&forest, &sigma, eps);
        let shifted = shifted_corona_assign(&forest, 2)?;
        let q = quasiorthogonality_ratio(&forest, &sys, &ens, eps / 4.0)?;
        println!(
            "gamma={gamma:.4}: {} stopping cubes, Carleson {:.3}, shifted overlap {} (tau 2), quasiorthogonality {:.3}",
            forest.len(),
            c.value,
            shifted.max_overlap(),
            q.value
        );
    }
    let forest = build_corona(&grid, &DyadicCube::root(), &sigma, &omega, 0.2 * sup, kappa, alpha)?;
    let mut buf = Vec::new();
    forest.write(&mut buf)?;
    println!("first lines of the forest file:\n{}", String::from_utf8_lossy(&buf).lines().take(5).collect::<Vec<_>>().join("\n"));
    Ok(())
}
