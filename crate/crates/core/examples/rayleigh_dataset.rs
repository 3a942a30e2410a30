//! Rayleigh frames for the two receivers: blindly recovered pilot symbols
//! from a three-antenna G3 link and raw single-antenna symbols.

use mimofp::channel::RayleighSpec;
use mimofp::impairments::default_profiles;
use mimofp::waveform::{gen_rayleigh_dataset, pilot, ImpairmentStage, LinkMode, Payload, RayleighConfig};

fn main() -> mimofp::Result<()> {
    let profiles = &default_profiles()[..3];
    let pilot = pilot();
    for (mode, l_rx) in [(LinkMode::MimoBlind, 3), (LinkMode::Siso, 1)] {
        for apg in [-20.0, 20.0] {
            let cfg = RayleighConfig {
                code: "tarokh_g3".into(),
                l_rx,
                channel: RayleighSpec::new(apg, 0.0, 1.0)?,
                noise_var: 1e-4,
                blocks_per_frame: 40,
                mode,
                payload: Payload::Pilot,
                channel_seed: None,
                impairment_stage: ImpairmentStage::PreCoding,
            };
            let ds = gen_rayleigh_dataset(profiles, &cfg, 10, 5)?;
            let z = ds.frames[0].to_complex();
            let power = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / z.len() as f64;
            let corr = z.iter().zip(&pilot).map(|(a, b)| a * b.conj()).sum::<mimofp::numerics::C64>() / z.len() as f64;
            println!(
                "{mode:?} at APG {apg:>5} dB: frame power {power:.4}, pilot correlation {:.3}∠{:.2} rad, {} regenerated",
                corr.norm(),
                corr.arg(),
                ds.manifest.regenerated_frames
            );
        }
    }
    Ok(())
}
