//! Fractional A₂, pivotal lower bounds and the Poisson decay ratio on the
//! doubling suite.

use alpert_lab::grid::{one_third_grids, DyadicGrid};
use alpert_lab::measure::{doubling_suite, DiscreteMeasure};
use alpert_lab::poisson::{muckenhoupt_a2, pivotal_lower_bound, sample_decay_triples, PivotalStrategy};

fn main() -> alpert_lab::Result<()> {
    let (depth, alpha, eps) = (7, 0.5, 0.25);
    let grids = one_third_grids(&DyadicGrid::standard(1, depth)?)?;
    let suite = doubling_suite(1);
    for sk in &suite {
        for ok in &suite {
            let sigma = DiscreteMeasure::new(sk, 1, depth)?;
            let omega = DiscreteMeasure::new(ok, 1, depth)?;
            let theta = sigma.doubling_exponents(0..=depth - 2)?.theta_doub;
            let kappa = ((theta + alpha - 1.0).ceil().max(0.0) as usize) + 1;
            let a2 = muckenhoupt_a2(&sigma, &omega, alpha, &grids)?;
            let piv = pivotal_lower_bound(
                &sigma,
                &omega,
                alpha,
                kappa,
                eps,
                &[PivotalStrategy::UniformDepth(4), PivotalStrategy::GreedyStopping(1.0)],
                &grids,
            )?;
            println!("{:<28} {:<28} kappa={kappa} A2={:.4} pivotal={:.4} ratio={:.3}", sk.label(), ok.label(), a2.value, piv.value, piv.value / a2.value);
        }
        let sigma = DiscreteMeasure::new(sk, 1, 12)?;
        let decay = sample_decay_triples(&sigma, 2, alpha, eps, 1000, 5)?;
        println!("  decay ratio over {} triples: max {:.3}", decay.applicable, decay.max_ratio);
    }
    Ok(())
}
