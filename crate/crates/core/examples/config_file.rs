//! Writes a preset as JSON, edits it the way a user would, and reads it back
//! through the same validation the CLI applies.

use mimofp::harness::{Experiment, ExperimentConfig, ExperimentKind};

fn main() -> mimofp::Result<()> {
    let cfg = ExperimentConfig::preset("desk", ExperimentKind::ApgSweep)?;
    let text = cfg.to_json();
    println!("{text}");

    let edited = text.replace("\"l_rx\": 3", "\"l_rx\": 4");
    let back = ExperimentConfig::from_json(&edited)?;
    if let Experiment::ApgSweep(s) = &back.experiment {
        println!("edited config: blind receiver with {} antennas", s.l_rx);
    }

    let typo = text.replace("\"noise_var\"", "\"noise_variance\"");
    match ExperimentConfig::from_json(&typo) {
        Err(e) => println!("typo rejected: {e}"),
        Ok(_) => println!("typo accepted?"),
    }
    Ok(())
}
