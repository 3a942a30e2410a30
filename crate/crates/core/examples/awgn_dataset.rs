//! Generates a small L-LTF dataset over AWGN, inspects the split and
//! round-trips it through the on-disk format.

use mimofp::impairments::default_profiles;
use mimofp::waveform::{gen_awgn_dataset, load, save};

fn main() -> mimofp::Result<()> {
    let ds = gen_awgn_dataset(&default_profiles(), 20.0, 6, 50, 42)?;
    let s = ds.split();
    println!("{} frames: {} train, {} val, {} test", ds.len(), s.train.len(), s.val.len(), s.test.len());
    let f = &ds.frames[0];
    println!("frame 0: label {}, first I/Q sample ({:.3}, {:.3})", f.label(), f.row(0)[0], f.row(1)[0]);

    let dir = std::env::temp_dir().join("mimofp-example");
    std::fs::create_dir_all(&dir).map_err(|e| mimofp::Error::Io { context: "temp dir".into(), source: e })?;
    let prefix = dir.join("awgn20");
    save(&ds, &prefix)?;
    let back = load(&prefix)?;
    println!("reloaded from {}: identical = {}", prefix.display(), back == ds);
    Ok(())
}
