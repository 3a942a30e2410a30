//! AWGN, SIMO averaging and flat Rayleigh fading with Doppler evolution.

use mimofp::channel::{awgn, draw_rayleigh, evolve, simo_average, RayleighSpec};
use mimofp::impairments::Signal;
use mimofp::numerics::C64;
use mimofp::rng::substream;

fn main() -> mimofp::Result<()> {
    let n = 100_000;
    let x = Signal::new(vec![C64::new(1.0, 0.0); n], 20e6)?;
    for l in [1, 2, 4, 6, 10] {
        let copies =
            (0..l).map(|a| awgn(&x, 0.0, &mut substream(3, &[a as u64]))).collect::<mimofp::Result<Vec<_>>>()?;
        let avg = simo_average(&copies)?;
        let noise: f64 = avg.samples.iter().map(|z| (z - 1.0).norm_sqr()).sum::<f64>() / n as f64;
        println!("L = {l:>2}: residual noise {noise:.4}, SNR gain {:.2} dB", -10.0 * noise.log10());
    }

    println!("\nchannel correlation after one frame slot (1 s) at MDS:");
    for mds in [0.0, 1.0 / 2000.0, 0.01, 0.1, 1.0] {
        let spec = RayleighSpec::new(-20.0, mds, 1.0)?;
        let mut rng = substream(9, &[]);
        let ch = draw_rayleigh(3, 3, spec, &mut rng)?;
        let next = evolve(&ch, &mut rng);
        let change = (&next.h - &ch.h).frobenius_norm() / ch.h.frobenius_norm();
        println!("  {mds:>7} Hz: J0 correlation {:.5}, relative change {change:.4}", spec.correlation());
    }
    Ok(())
}
