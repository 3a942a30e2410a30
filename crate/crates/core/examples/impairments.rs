//! Runs the L-LTF through each device's impairment chain and reports how far
//! every device moves the waveform, stage by stage for the first device.

use mimofp::impairments::{apply_device, cfo, dc_offset, default_profiles, iq_imbalance, saleh_pa};
use mimofp::rng::substream;
use mimofp::waveform::lltf;

fn rms_diff(a: &[mimofp::numerics::C64], b: &[mimofp::numerics::C64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64).sqrt()
}

fn main() -> mimofp::Result<()> {
    let x = lltf();
    let p = &default_profiles()[0];
    println!("{} stage by stage (RMS change from the clean preamble):", p.device_id);
    let stages = [
        ("iq imbalance", iq_imbalance(&x, p.iq_gain_imb, p.iq_phase_imb)),
        ("dc offset", dc_offset(&x, p.dc_i, p.dc_q)),
        ("saleh pa", saleh_pa(&x, p.amam, p.ampm)),
        ("cfo", cfo(&x, p.cfo_hz)),
    ];
    for (name, y) in &stages {
        println!("  {name:<13} {:.4}", rms_diff(&x.samples, &y.samples));
    }

    println!("\nfull chain, per device:");
    for p in default_profiles() {
        let y = apply_device(&p, &x, &mut substream(1, &[0]))?;
        println!(
            "  {:<5} rms change {:.4}, power {:.4}",
            p.device_id,
            rms_diff(&x.samples, &y.samples),
            y.mean_power()
        );
    }
    Ok(())
}
