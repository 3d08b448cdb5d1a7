//! Runs the shipped smoke configuration through the batch runner.

use std::path::Path;

use alpert_lab::cli::run_config;
use alpert_lab::config::load_config;

fn main() -> alpert_lab::Result<()> {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/smoke.cfg"))?;
    let out = std::env::temp_dir().join("alpert-lab-smoke");
    let m = run_config(&cfg, &out, 2)?;
    for e in &m.experiments {
        println!("{:>2} {:<17} {:<6} rows={} {}", e.index, e.kind, e.status, e.rows, e.message);
    }
    println!("wrote {} to {}", m.files.join(", "), out.display());
    Ok(())
}
