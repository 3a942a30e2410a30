//! Runs the smoke-scale versions of the three sweeps and the blind demo
//! through the harness, printing the CSVs the CLI would write.

use mimofp::harness::{
    blind_csv, results_csv, run_apg_sweep, run_awgn_sweep, run_blind_demo, run_mds_sweep, ExperimentConfig,
    ExperimentKind,
};

fn main() -> mimofp::Result<()> {
    let mut log = |m: &str| eprintln!("{m}");
    let awgn = ExperimentConfig::preset("smoke", ExperimentKind::AwgnSweep)?;
    print!("{}", results_csv(&run_awgn_sweep(&awgn, &mut log)?.rows));
    let apg = ExperimentConfig::preset("smoke", ExperimentKind::ApgSweep)?;
    print!("{}", results_csv(&run_apg_sweep(&apg, &mut log)?.rows));
    let mds = ExperimentConfig::preset("smoke", ExperimentKind::MdsSweep)?;
    print!("{}", results_csv(&run_mds_sweep(&mds, &mut log)?.rows));
    let blind = ExperimentConfig::preset("smoke", ExperimentKind::BlindDemo)?;
    print!("{}", blind_csv(&run_blind_demo(&blind)?));
    Ok(())
}
