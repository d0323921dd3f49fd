//! Run the scripted founders benchmark in every mode and print the
//! mode-by-language table. Reports and traces go to the given directory.
//!
//!     cargo run --example benchmark_sweep -- out/

use dualpath::demo::founders;
use dualpath::eval::{format_table, run_benchmark};
use dualpath::{LanguageTag, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| scratch.path().to_path_buf());
    let scenario = founders(10);
    let de = LanguageTag::new("de")?;

    let mut reports = Vec::new();
    for mode in Mode::ALL {
        let (pipeline, scripted) = scenario.pipeline();
        let run = run_benchmark(&scenario.benchmark, &de, &pipeline.with_mode(mode), "founders", &out.join(mode.as_str()), 4)?;
        println!("{}  ({} chat calls)", run.report.row(), scripted.chat.call_count());
        reports.push(run.report);
    }
    println!();
    print!("{}", format_table(&reports));
    Ok(())
}
