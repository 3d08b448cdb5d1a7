//! Ratio intervals between dyadic norms over a fixed ensemble, and their
//! drift under one refinement.

use alpert_lab::grid::DyadicGrid;
use alpert_lab::measure::{DiscreteMeasure, MeasureKind};
use alpert_lab::sobolev::{equivalence_ratio, full_norm, norm_continuous, norm_difference, standard_ensemble};
use alpert_lab::wavelet::{AlpertSystem, LeafFunction};

fn main() -> alpert_lab::Result<()> {
    let kind = MeasureKind::power(1, 0.5);
    let members = standard_ensemble(1, 200, 4, 99);
    for depth in [7, 8] {
        let mu = DiscreteMeasure::new(&kind, 1, depth)?;
        let big_n = 1i64 << depth;
        let std_grid = DyadicGrid::standard(1, depth)?;
        let shifted = DyadicGrid::new(1, depth, [(big_n as f64 / 3.0).round() as i64, 0])?;
        let k1 = AlpertSystem::new(&mu, &std_grid, 1)?;
        let k2 = AlpertSystem::new(&mu, &std_grid, 2)?;
        let sh = AlpertSystem::new(&mu, &shifted, 1)?;
        let ens: Vec<LeafFunction> = members.iter().map(|m| m.realize(1, depth)).collect();
        for s in [-0.1, 0.1] {
            let a = equivalence_ratio(("k1", |f: &LeafFunction| full_norm(&k1, f, s)), ("k2", |f: &LeafFunction| full_norm(&k2, f, s)), &ens, "mixed")?;
            let b = equivalence_ratio(("std", |f: &LeafFunction| full_norm(&k1, f, s)), ("shift", |f: &LeafFunction| full_norm(&sh, f, s)), &ens, "mixed")?;
            println!(
                "D={depth} s={s:+}: kappa1/kappa2 in [{:.3}, {:.3}], standard/shifted in [{:.3}, {:.3}]",
                a.ratio_min, a.ratio_max, b.ratio_min, b.ratio_max
            );
        }
        let c = equivalence_ratio(
            ("continuous", |f: &LeafFunction| norm_continuous(&mu, f, 0.1)),
            ("difference", |f: &LeafFunction| norm_difference(&k1, f, 0.1)),
            &ens,
            "mixed",
        )?;
        println!("D={depth} s=0.1: continuous/difference in [{:.3}, {:.3}]", c.ratio_min, c.ratio_max);
    }
    Ok(())
}
