//! Write the bundled scenarios as files the command line can use: a script
//! for the offline backends, corpora and a benchmark, one directory each.
//!
//!     cargo run --example write_demo -- demo

use dualpath::demo::{founders, metropolis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    for scenario in [metropolis(), founders(10)] {
        let files = scenario.write(&dir.join(&scenario.dataset))?;
        println!("{}: {}", scenario.dataset, files.corpus_dir.display());
    }
    Ok(())
}
