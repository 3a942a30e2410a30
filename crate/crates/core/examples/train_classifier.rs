//! Trains the CNN on a small AWGN dataset, checkpoints it, and measures how
//! accuracy degrades on a noisier test channel.

use mimofp::classifier::{evaluate, load_checkpoint, rdtg, save_checkpoint, TrainConfig};
use mimofp::harness::fit;
use mimofp::impairments::default_profiles;
use mimofp::waveform::{gen_awgn_dataset, Frame};

fn main() -> mimofp::Result<()> {
    let profiles = default_profiles();
    let train_set = gen_awgn_dataset(&profiles, 20.0, 6, 60, 1)?;
    let test_set = gen_awgn_dataset(&profiles, 5.0, 6, 20, 2)?;
    let cfg = TrainConfig { epochs: 8, batch_size: 32, ..TrainConfig::default() };
    let (model, history) = fit(&train_set, &cfg, 3)?;
    for h in &history {
        println!("epoch {:>2}: loss {:.3}, train {:.1}%, val {:.1}%", h.epoch, h.train_loss, h.train_acc, h.val_acc);
    }

    let path = std::env::temp_dir().join("mimofp-example.ckpt");
    save_checkpoint(&model, &path)?;
    let model = load_checkpoint(&path)?;
    let same = evaluate(&model, &train_set.subset(&train_set.split().test))?;
    let all: Vec<&Frame> = test_set.frames.iter().collect();
    let diff = evaluate(&model, &all)?;
    println!("20 dB held-out {same:.1}%, 5 dB {diff:.1}%, RDTG {:.1}%", rdtg(same, diff)?);
    Ok(())
}
