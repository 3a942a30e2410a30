//! `mimofp` command line: a thin shell over `mimofp::harness`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mimofp::classifier::{evaluate, load_checkpoint, save_checkpoint};
use mimofp::harness::{self, fmt_sig, ExperimentConfig, ExperimentKind};
use mimofp::waveform::{self, Frame};
use mimofp::{Error, Result};

#[derive(Parser)]
#[command(name = "mimofp", version, about = "Channel-agnostic RF fingerprinting experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's out_dir, else `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `smoke`, `desk` or `paper`, optionally prefixed by a kind (`apg-desk`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate every dataset a sweep uses.
    Gen(Common),
    /// Train a classifier on a saved dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset prefix written by `gen`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on a saved dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// AWGN SNR sweep, SISO against SIMO averaging.
    SweepAwgn(Common),
    /// Rayleigh APG sweep, SISO against blind MIMO.
    SweepApg(Common),
    /// Rayleigh Doppler sweep, SISO against blind MIMO.
    SweepMds(Common),
    /// Monte-Carlo blind estimation error against SNR.
    BlindDemo(Common),
    /// Code identifiability table.
    Identifiability(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

fn load_config(c: &Common, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name, kind)?,
        (None, None) => ExperimentConfig::preset("desk", kind)?,
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: Option<&ExperimentConfig>) -> PathBuf {
    c.out.clone().or_else(|| cfg.and_then(|k| k.out_dir.clone())).unwrap_or_else(|| PathBuf::from("results"))
}

fn progress(msg: &str) {
    eprintln!("{msg}");
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { context: format!("creating {}", path.display()), source: e })
}

fn experiment(c: &Common, kind: ExperimentKind) -> Result<()> {
    let cfg = load_config(c, kind)?;
    if cfg.kind() != kind {
        return Err(Error::Config(format!("expected a {} config, got {}", kind.name(), cfg.kind().name())));
    }
    for path in harness::run(&cfg, &out_dir(c, Some(&cfg)), &mut progress)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn gen(c: &Common) -> Result<()> {
    let cfg = load_config(c, ExperimentKind::AwgnSweep)?;
    cfg.validate()?;
    let out = out_dir(c, Some(&cfg));
    mkdir(&out)?;
    let profiles = cfg.profiles();
    for p in harness::plan(&cfg)? {
        let prefix = out.join(p.name());
        progress(&format!("generating {}", p.name()));
        waveform::save(&p.generate(&profiles)?, &prefix)?;
        println!("{}", prefix.display());
    }
    Ok(())
}

fn train(c: &Common, data: &Path) -> Result<()> {
    let cfg = load_config(c, ExperimentKind::AwgnSweep)?;
    cfg.validate()?;
    let tc = cfg
        .train_config()
        .ok_or_else(|| Error::Config(format!("a {} config has no training settings", cfg.kind().name())))?;
    let ds = waveform::load(data)?;
    let (model, history) = harness::fit(&ds, tc, c.seed.unwrap_or(tc.seed))?;
    let out = out_dir(c, Some(&cfg));
    mkdir(&out)?;
    save_checkpoint(&model, &out.join("model.ckpt"))?;
    let mut csv = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for h in &history {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            h.epoch,
            fmt_sig(h.train_loss),
            fmt_sig(h.train_acc),
            fmt_sig(h.val_loss),
            fmt_sig(h.val_acc)
        );
    }
    write(&out.join("history.csv"), &csv)?;
    let acc = evaluate(&model, &ds.subset(&ds.split().test))?;
    println!("held-out accuracy {acc:.2}%");
    Ok(())
}

fn eval(c: &Common, model: &Path, data: &Path, split: SplitArg) -> Result<()> {
    let m = load_checkpoint(model)?;
    let ds = waveform::load(data)?;
    let frames: Vec<&Frame> = match split {
        SplitArg::Train => ds.subset(&ds.split().train),
        SplitArg::Val => ds.subset(&ds.split().val),
        SplitArg::Test => ds.subset(&ds.split().test),
        SplitArg::All => ds.frames.iter().collect(),
    };
    let acc = evaluate(&m, &frames)?;
    let out = out_dir(c, None);
    mkdir(&out)?;
    let csv = format!(
        "model,data,split,frames,accuracy\n{},{},{:?},{},{}\n",
        model.display(),
        data.display(),
        split,
        frames.len(),
        fmt_sig(acc)
    )
    .to_lowercase();
    write(&out.join("eval.csv"), &csv)?;
    println!("accuracy {acc:.2}% over {} frames", frames.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Gen(c) => gen(c),
        Cmd::Train { common, data } => train(common, data),
        Cmd::Eval { common, model, data, split } => eval(common, model, data, *split),
        Cmd::SweepAwgn(c) => experiment(c, ExperimentKind::AwgnSweep),
        Cmd::SweepApg(c) => experiment(c, ExperimentKind::ApgSweep),
        Cmd::SweepMds(c) => experiment(c, ExperimentKind::MdsSweep),
        Cmd::BlindDemo(c) => experiment(c, ExperimentKind::BlindDemo),
        Cmd::Identifiability(c) => experiment(c, ExperimentKind::IdentifiabilityReport),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
