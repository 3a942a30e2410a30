//! Blind subspace channel estimation for the G3 code: exact recovery up to a
//! complex scalar without noise, the three-antenna minimum, and the error
//! trend as SNR grows.

use mimofp::harness::{blind_trial, median};
use mimofp::stbc::tarokh_g3;

fn main() -> mimofp::Result<()> {
    let code = tarokh_g3();
    for l in [2, 3, 4] {
        let t = blind_trial(&code, l, 64, None, 11)?;
        println!("noiseless, L = {l}: ambiguity dimension {}, alignment error {:.2e}", t.ambiguity_dim, t.error);
    }
    println!();
    for snr in [0.0, 10.0, 20.0, 30.0] {
        let errs = (0..30)
            .map(|s| blind_trial(&code, 3, 64, Some(snr), s).map(|t| t.error))
            .collect::<mimofp::Result<Vec<_>>>()?;
        println!("SNR {snr:>4} dB, L = 3: median alignment error {:.4}", median(&errs));
    }
    Ok(())
}
