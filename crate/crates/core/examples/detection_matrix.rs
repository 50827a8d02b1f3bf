//! Runs every scenario through an inline pipeline and prints the detection
//! table for the shipped pack and its uid-scoped variant.
//!
//! cargo run --example detection_matrix [seed]

use patrol::matrix::{render_matrix, run_matrix};
use patrol::pipeline::PipelineOptions;
use patrol::policy::pack;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let opts = PipelineOptions::default();
    for (name, set) in [
        ("default-pack", pack::default_pack()),
        ("uid-scoped", pack::adjusted_pack()),
    ] {
        let m = run_matrix(name, &set, seed, &opts)?;
        println!("{}", render_matrix(&m));
        for (kind, summary) in &m.runs {
            if !summary.false_positive_rules.is_empty() {
                println!("  {kind}: false positives by rule {:?}", summary.false_positive_rules);
            }
        }
    }
    Ok(())
}
