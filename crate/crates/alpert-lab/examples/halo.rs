//! Mass of thin neighbourhoods of polynomial zero sets and the fitted decay exponent.

use alpert_lab::grid::DyadicCube;
use alpert_lab::measure::{doubling_suite, halo_decay, DiscreteMeasure, Polynomial};

fn main() -> alpert_lab::Result<()> {
    for n in 1..=2 {
        let depth = if n == 1 { 12 } else { 7 };
        let linear = Polynomial::new(n, vec![([1, 0], 2.0), ([0, 0], -1.0)]);
        let quadratic = if n == 1 {
            Polynomial::new(1, vec![([2, 0], 4.0), ([1, 0], -4.0), ([0, 0], 0.75)])
        } else {
            Polynomial::new(2, vec![([2, 0], 1.0), ([0, 2], 1.0), ([0, 0], -0.5)])
        };
        for kind in doubling_suite(n) {
            let mu = DiscreteMeasure::new(&kind, n, depth)?;
            for (name, p) in [("linear", &linear), ("quadratic", &quadratic)] {
                let h = halo_decay(&mu, &DyadicCube::root(), p)?;
                println!("n={n} {:<28} {name:<9} theta={:.3} r2={:.3}", kind.label(), h.theta, h.r2);
            }
        }
    }
    Ok(())
}
