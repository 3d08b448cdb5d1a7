//! Bad-cube probabilities under random shifts and the norm of the bad projection.

use alpert_lab::goodbad::{bad_decay_slope, bad_probability_mc, bad_projection_norm_ratio};
use alpert_lab::measure::{DiscreteMeasure, MeasureKind};
use alpert_lab::wavelet::LeafFunction;

fn main() -> alpert_lab::Result<()> {
    let rs: Vec<u32> = (2..=8).collect();
    for eps in [0.25, 0.5] {
        let est = bad_probability_mc(1, &rs, eps, 16, 10_000, 2024)?;
        for e in &est {
            println!("eps={eps} r={} P(bad)={:.4}", e.r, e.probability);
        }
        let (slope, _, r2) = bad_decay_slope(&est);
        println!("eps={eps}: log2 slope {slope:.3} (r2 {r2:.3}), target <= {:.3}", -eps * 0.7);
    }

    let mu = DiscreteMeasure::new(&MeasureKind::power(1, 0.5), 1, 8)?;
    let f = LeafFunction::sample(1, 8, 2, 4, |x| (6.0 * x[0]).sin());
    for row in bad_projection_norm_ratio(&mu, &f, 2, &[-0.2, 0.0, 0.2], &[2, 3, 4, 5, 6], 0.5, 100, 7)? {
        println!("r={} s={:+.1} mean |P_bad f|/|f| = {:.4}", row.r, row.s, row.mean_ratio);
    }
    Ok(())
}
