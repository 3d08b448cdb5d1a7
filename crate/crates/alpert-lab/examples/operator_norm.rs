//! Truncated kernels as matrices in wavelet coordinates: power iteration
//! against SVD, testing constants and the splitting of the bilinear form.

use alpert_lab::measure::{DiscreteMeasure, MeasureKind};
use alpert_lab::operator::{operator_norm, svd_norm, KernelFamily, KernelSpec, TestingMode, TwoWeight};

fn main() -> alpert_lab::Result<()> {
    let depth = 6;
    let sigma = DiscreteMeasure::new(&MeasureKind::power(1, 0.5), 1, depth)?;
    let omega = DiscreteMeasure::new(&MeasureKind::cascade(3), 1, depth)?;
    for (family, alpha) in [(KernelFamily::RieszComponent(0), 0.0), (KernelFamily::FractionalIntegral, 0.5)] {
        let kernel = KernelSpec::with_defaults(1, alpha, family, depth, 2)?;
        let tw = TwoWeight::new(kernel, sigma.clone(), omega.clone(), 2)?;
        for s in [0.0, 0.1] {
            let m = tw.assemble(s)?;
            let p = operator_norm(&m);
            let exact = svd_norm(&m.scaled);
            println!(
                "{} s={s}: {}x{} matrix, power {:.10} ({} iterations), svd {:.10}",
                kernel.label(),
                m.scaled.nrows(),
                m.scaled.ncols(),
                p.value,
                p.iterations,
                exact
            );
            for (mode, name) in [(TestingMode::Cube, "cube"), (TestingMode::Triple, "triple"), (TestingMode::Global, "global")] {
                let t = tw.testing_constant(s, 2, mode, false)?;
                let td = tw.testing_constant(s, 2, mode, true)?;
                println!("  testing {name:<6} {:.4} dual {:.4}", t.value, td.value);
            }
            println!("  weak boundedness {:.4}", tw.wbp_constant(s)?.value);
            let f: Vec<f64> = (0..m.w.ncols()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
            let g: Vec<f64> = (0..m.w.nrows()).map(|i| ((i * 5 % 13) as f64 - 6.0) / 6.0).collect();
            let sp = tw.form_split(&m, &f, &g, 3, 0.25)?;
            println!(
                "  form split: below {:.4} above {:.4} comparable {:.4} disjoint {:.4} other {:.4} (sum {:.4} = total {:.4})",
                sp.below, sp.above, sp.comparable, sp.disjoint, sp.unassigned, sp.sum(), sp.total
            );
        }
    }
    Ok(())
}
