//! Two-sided T1 comparison over a small suite and one refinement.

use alpert_lab::measure::MeasureKind;
use alpert_lab::t1::{run_t1_experiment, t1_suite};

fn main() -> alpert_lab::Result<()> {
    let pairs = [(MeasureKind::Lebesgue, MeasureKind::Lebesgue), (MeasureKind::power(1, 0.5), MeasureKind::power(1, -0.5))];
    println!("{:<10} {:<11} {:<26} {:>4} {:>2} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "sigma", "omega", "kernel", "s", "D", "N", "T", "T*", "sqrtA2", "T/N", "N/sum");
    for cfg in t1_suite(5, &pairs, &[0.0, 0.1]) {
        for depth in [5, 6] {
            let c = cfg.with_depth(depth);
            let r = run_t1_experiment(&c)?;
            println!(
                "{:<10} {:<11} {:<26} {:>4} {:>2} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                c.sigma.label(),
                c.omega.label(),
                c.kernel()?.label(),
                c.s,
                depth,
                r.norm,
                r.t_fwd,
                r.t_dual,
                r.sqrt_a2,
                r.testing_ratio.unwrap_or(f64::NAN),
                r.ratio_upper.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
