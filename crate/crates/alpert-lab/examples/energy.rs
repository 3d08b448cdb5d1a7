//! Monotonicity ratios for remote masses, the energy constant `C_γ` and the
//! modulus ratio of wavelet vectors.

use alpert_lab::energy::{energy_gamma_constant, modulus_wavelet_ratio, monotonicity_sweep};
use alpert_lab::grid::{DyadicCube, DyadicGrid};
use alpert_lab::measure::{DiscreteMeasure, MeasureKind};
use alpert_lab::operator::{KernelFamily, KernelSpec};
use alpert_lab::wavelet::AlpertSystem;

fn main() -> alpert_lab::Result<()> {
    let kind = MeasureKind::power(1, 0.5);
    let kernel = KernelSpec::with_defaults(1, 0.5, KernelFamily::FractionalIntegral, 8, 1)?;
    for depth in [8, 9] {
        let mu = DiscreteMeasure::new(&kind, 1, depth)?;
        let sys = AlpertSystem::new(&mu, &DyadicGrid::standard(1, depth)?, 1)?;
        let sweep = monotonicity_sweep(&sys, &kernel, 6, 0.1, 0.5, 1000, 17)?;
        println!("D={depth}: max lhs/(Phi^2+Psi^2) over {} configurations = {:.4}", sweep.configs, sweep.max_ratio);
        if depth == 8 {
            for gamma in [2.0, 4.0, 8.0] {
                println!("  C_gamma({gamma}) = {:.4}", energy_gamma_constant(&sys, &kernel, 2..=3, 0.1, gamma)?);
            }
            for s in [0.0, 0.1, 0.2] {
                let r = modulus_wavelet_ratio(&sys, &DyadicCube::new(3, [2, 0]), s)?;
                println!("  modulus ratio at s={s}: {r:.4}");
            }
        }
    }
    Ok(())
}
