//! Loads an engine config, validates it and prints the normalized form.
//!
//! cargo run --example engine_config [patrol.yaml]

use patrol::config::EngineConfig;

const SAMPLE: &str = "\
mode: observe
ring_capacity: 4096
learning_window: 500
fail_policy: open
profile_granularity: process
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::parse(SAMPLE)?,
    };
    print!("{}", cfg.render());
    let opts = cfg.pipeline_options();
    println!("# watchdog {:?}, analyzer {:?}", opts.watchdog, opts.analyzer);

    match EngineConfig::parse("ring_capacity: 100\n") {
        Ok(_) => println!("unexpectedly valid"),
        Err(e) => println!("# rejected: {e}"),
    }
    Ok(())
}
