//! Config-driven experiments.
//!
//! An [`ExperimentConfig`] names one experiment kind plus everything it
//! needs. The sweeps train one classifier per (system, training channel)
//! and test it across a channel grid; the blind demo and identifiability
//! report exercise the estimator and the code analysis directly. Every
//! output is a pure function of (config, seed): wall-clock timings go to a
//! separate file so result CSVs stay bit-reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blind::{alignment_error, estimate_with_tol, AMB_TOL_NOISELESS, AMB_TOL_NOISY};
use crate::channel::{draw_rayleigh, transmit_block, RayleighSpec};
use crate::classifier::{evaluate, init, rdtg, train, CnnModel, EpochStats, TrainConfig};
use crate::error::{Error, Result};
use crate::impairments::{default_profiles, DeviceProfile};
use crate::numerics::{numerical_rank, CMatrix, RANK_TOL};
use crate::rng::{complex_gaussian, substream, tag};
use crate::stbc::{
    code_by_name, identifiability, min_rx_antennas, real_stack, search_rmin, stacked_code, StbcCode, WitnessField,
    WitnessMode,
};
use crate::waveform::{
    gen_awgn_dataset, gen_rayleigh_dataset, qpsk_block, Dataset, Frame, ImpairmentStage, LinkMode, Payload,
    RayleighConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every dataset, model and search seed derives from it.
    pub seed: u64,
    /// Device set; the bundled ten-device table when absent.
    #[serde(default)]
    pub profiles: Option<Vec<DeviceProfile>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    AwgnSweep(AwgnSweep),
    /// Grid values are APG in dB; `fixed` is the MDS in Hz.
    ApgSweep(RayleighSweep),
    /// Grid values are MDS in Hz; `fixed` is the APG in dB.
    MdsSweep(RayleighSweep),
    BlindDemo(BlindDemo),
    IdentifiabilityReport(IdentifiabilityConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    AwgnSweep,
    ApgSweep,
    MdsSweep,
    BlindDemo,
    IdentifiabilityReport,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::AwgnSweep => "awgn_sweep",
            Self::ApgSweep => "apg_sweep",
            Self::MdsSweep => "mds_sweep",
            Self::BlindDemo => "blind_demo",
            Self::IdentifiabilityReport => "identifiability_report",
        }
    }

    /// Short name used in preset identifiers such as `apg-desk`.
    pub fn short(self) -> &'static str {
        match self {
            Self::AwgnSweep => "awgn",
            Self::ApgSweep => "apg",
            Self::MdsSweep => "mds",
            Self::BlindDemo => "blind",
            Self::IdentifiabilityReport => "identifiability",
        }
    }

    pub const ALL: [ExperimentKind; 5] =
        [Self::AwgnSweep, Self::ApgSweep, Self::MdsSweep, Self::BlindDemo, Self::IdentifiabilityReport];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwgnSweep {
    /// Receive antenna counts; 1 is the SISO baseline.
    pub l_rx: Vec<usize>,
    pub train_snr_db: Vec<f64>,
    pub test_snr_db: Vec<f64>,
    pub frames_per_device: usize,
    /// Size of each separately generated test set.
    pub test_frames_per_device: usize,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayleighSweep {
    pub code: String,
    /// Receive antennas of the blind MIMO system; SISO always uses one.
    pub l_rx: usize,
    pub noise_var: f64,
    pub blocks_per_frame: usize,
    /// Seconds between frame slots.
    pub block_interval: f64,
    #[serde(default)]
    pub payload: Payload,
    #[serde(default)]
    pub impairment_stage: ImpairmentStage,
    pub train_grid: Vec<f64>,
    pub test_grid: Vec<f64>,
    pub fixed: f64,
    pub frames_per_device: usize,
    pub test_frames_per_device: usize,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindDemo {
    pub code: String,
    pub l_rx: Vec<usize>,
    /// Blocks per estimate.
    pub blocks: usize,
    /// Receive SNR grid; `null` is noiseless.
    pub snr_db: Vec<Option<f64>>,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifiabilityConfig {
    pub codes: Vec<String>,
    pub trials: usize,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn nonempty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(cfg_err(format!("{what} must not be empty")));
    }
    Ok(())
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(cfg_err(format!("{what} must be finite")));
    }
    Ok(())
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    /// Parses and validates; syntax errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => cfg_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn kind(&self) -> ExperimentKind {
        match self.experiment {
            Experiment::AwgnSweep(_) => ExperimentKind::AwgnSweep,
            Experiment::ApgSweep(_) => ExperimentKind::ApgSweep,
            Experiment::MdsSweep(_) => ExperimentKind::MdsSweep,
            Experiment::BlindDemo(_) => ExperimentKind::BlindDemo,
            Experiment::IdentifiabilityReport(_) => ExperimentKind::IdentifiabilityReport,
        }
    }

    pub fn profiles(&self) -> Vec<DeviceProfile> {
        self.profiles.clone().unwrap_or_else(default_profiles)
    }

    /// The training settings of a sweep, if this is one.
    pub fn train_config(&self) -> Option<&TrainConfig> {
        match &self.experiment {
            Experiment::AwgnSweep(s) => Some(&s.train),
            Experiment::ApgSweep(s) | Experiment::MdsSweep(s) => Some(&s.train),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(p) = &self.profiles {
            nonempty(p, "profiles")?;
            p.iter().try_for_each(DeviceProfile::validate).map_err(as_config)?;
        }
        match &self.experiment {
            Experiment::AwgnSweep(s) => {
                nonempty(&s.l_rx, "l_rx")?;
                nonempty(&s.train_snr_db, "train_snr_db")?;
                nonempty(&s.test_snr_db, "test_snr_db")?;
                finite(&s.train_snr_db, "train_snr_db")?;
                finite(&s.test_snr_db, "test_snr_db")?;
                if s.l_rx.contains(&0) {
                    return Err(cfg_err("l_rx entries must be at least 1"));
                }
                sizes(s.frames_per_device, s.test_frames_per_device)?;
                s.train.validate().map_err(as_config)
            }
            Experiment::ApgSweep(s) | Experiment::MdsSweep(s) => {
                nonempty(&s.train_grid, "train_grid")?;
                nonempty(&s.test_grid, "test_grid")?;
                finite(&s.train_grid, "train_grid")?;
                finite(&s.test_grid, "test_grid")?;
                finite(&[s.fixed, s.noise_var, s.block_interval], "fixed, noise_var and block_interval")?;
                if s.noise_var < 0.0 {
                    return Err(cfg_err("noise_var must be non-negative"));
                }
                sizes(s.frames_per_device, s.test_frames_per_device)?;
                s.train.validate().map_err(as_config)?;
                // building every channel spec checks MDS and interval ranges
                for v in s.train_grid.iter().chain(&s.test_grid) {
                    self.rayleigh_spec(s, *v)?;
                }
                let code = code_by_name(&s.code).map_err(as_config)?;
                if s.blocks_per_frame * code.n() != crate::waveform::FRAME_LEN {
                    return Err(cfg_err(format!(
                        "blocks_per_frame {} x {} symbols does not fill a {}-symbol frame",
                        s.blocks_per_frame,
                        code.n(),
                        crate::waveform::FRAME_LEN
                    )));
                }
                Ok(())
            }
            Experiment::BlindDemo(b) => {
                code_by_name(&b.code).map_err(as_config)?;
                nonempty(&b.l_rx, "l_rx")?;
                nonempty(&b.snr_db, "snr_db")?;
                finite(&b.snr_db.iter().flatten().copied().collect::<Vec<_>>(), "snr_db")?;
                if b.l_rx.contains(&0) || b.blocks == 0 || b.trials == 0 {
                    return Err(cfg_err("l_rx entries, blocks and trials must be at least 1"));
                }
                Ok(())
            }
            Experiment::IdentifiabilityReport(r) => {
                for name in &r.codes {
                    code_by_name(name).map_err(as_config)?;
                }
                if r.trials == 0 {
                    return Err(cfg_err("trials must be at least 1"));
                }
                Ok(())
            }
        }
    }

    fn rayleigh_spec(&self, s: &RayleighSweep, value: f64) -> Result<RayleighSpec> {
        let (apg, mds) = match self.kind() {
            ExperimentKind::MdsSweep => (s.fixed, value),
            _ => (value, s.fixed),
        };
        RayleighSpec::new(apg, mds, s.block_interval).map_err(as_config)
    }

    /// A named preset. `name` is a scale (`smoke`, `desk`, `paper`) or
    /// `<kind>-<scale>` such as `apg-desk`; a bare scale uses `kind`.
    pub fn preset(name: &str, kind: ExperimentKind) -> Result<Self> {
        let (kind, scale) = match name.split_once('-') {
            Some((k, s)) => {
                let kind = ExperimentKind::ALL
                    .into_iter()
                    .find(|c| c.short() == k)
                    .ok_or_else(|| cfg_err(format!("unknown preset '{name}'")))?;
                (kind, s)
            }
            None => (kind, name),
        };
        let scale = Scale::parse(scale).ok_or_else(|| cfg_err(format!("unknown preset '{name}'")))?;
        let experiment = match kind {
            ExperimentKind::AwgnSweep => Experiment::AwgnSweep(awgn_preset(scale)),
            ExperimentKind::ApgSweep => Experiment::ApgSweep(rayleigh_preset(scale, true)),
            ExperimentKind::MdsSweep => Experiment::MdsSweep(rayleigh_preset(scale, false)),
            ExperimentKind::BlindDemo => Experiment::BlindDemo(blind_preset(scale)),
            ExperimentKind::IdentifiabilityReport => Experiment::IdentifiabilityReport(IdentifiabilityConfig {
                codes: vec!["alamouti".into(), "tarokh_g3".into()],
                trials: if scale == Scale::Smoke { 200 } else { 10_000 },
            }),
        };
        Ok(Self { schema_version: SCHEMA_VERSION, seed: 0, profiles: None, out_dir: None, experiment })
    }
}

fn sizes(train: usize, test: usize) -> Result<()> {
    if train < 10 || test < 10 {
        return Err(cfg_err("frames_per_device and test_frames_per_device must be at least 10"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scale {
    Smoke,
    Desk,
    Paper,
}

impl Scale {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "smoke" => Some(Self::Smoke),
            "desk" => Some(Self::Desk),
            "paper" => Some(Self::Paper),
            _ => None,
        }
    }

    /// (frames per device, test frames per device, epochs)
    fn sizes(self) -> (usize, usize, usize) {
        match self {
            Self::Smoke => (20, 10, 2),
            Self::Desk => (500, 50, 30),
            Self::Paper => (5000, 500, 30),
        }
    }
}

fn preset_train(scale: Scale) -> TrainConfig {
    TrainConfig { batch_size: 32, epochs: scale.sizes().2, ..TrainConfig::default() }
}

fn awgn_preset(scale: Scale) -> AwgnSweep {
    let (fpd, test_fpd, _) = scale.sizes();
    let (l_rx, test) = match scale {
        Scale::Smoke => (vec![1, 2], vec![20.0, 10.0]),
        _ => (vec![1, 2, 6], vec![20.0, 15.0, 10.0, 5.0, 0.0, -10.0]),
    };
    AwgnSweep {
        l_rx,
        train_snr_db: vec![20.0],
        test_snr_db: test,
        frames_per_device: fpd,
        test_frames_per_device: test_fpd,
        train: preset_train(scale),
    }
}

fn rayleigh_preset(scale: Scale, apg: bool) -> RayleighSweep {
    let (fpd, test_fpd, _) = scale.sizes();
    let (grid, fixed) = match (apg, scale) {
        (true, Scale::Smoke) => (vec![-20.0, 20.0], 0.0),
        (true, _) => (vec![-20.0, -10.0, 0.0, 10.0, 20.0], 0.0),
        (false, Scale::Smoke) => (vec![1.0 / 2000.0, 1.0], -20.0),
        (false, _) => (vec![1.0 / 2000.0, 1.0 / 1000.0, 1.0 / 100.0, 1.0 / 10.0, 1.0], -20.0),
    };
    RayleighSweep {
        code: "tarokh_g3".into(),
        l_rx: 3,
        noise_var: 1e-4,
        blocks_per_frame: 40,
        block_interval: 1.0,
        payload: Payload::Pilot,
        impairment_stage: ImpairmentStage::PreCoding,
        train_grid: grid.clone(),
        test_grid: grid,
        fixed,
        frames_per_device: fpd,
        test_frames_per_device: test_fpd,
        train: preset_train(scale),
    }
}

fn blind_preset(scale: Scale) -> BlindDemo {
    BlindDemo {
        code: "tarokh_g3".into(),
        l_rx: vec![2, 3],
        blocks: 64,
        snr_db: vec![None, Some(0.0), Some(10.0), Some(20.0), Some(30.0)],
        trials: if scale == Scale::Smoke { 5 } else { 50 },
    }
}

/// Formats with 6 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        trim(format!("{:.*}", (5 - exp).max(0) as usize, x))
    } else {
        format!("{}e{exp}", trim(mant.to_string()))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// One trained-model-on-test-channel measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    /// Name of the swept channel parameter.
    pub param: String,
    pub train_value: f64,
    pub test_value: f64,
    /// Channel parameters held constant, as `name=value`.
    pub fixed: String,
    /// `siso`, `simo_<L>` or `mimo_blind`.
    pub system: String,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Present iff the test channel differs from the training channel.
    pub rdtg: Option<f64>,
    /// Test accuracy over the SISO row with the same channels.
    pub gain: Option<f64>,
    pub seed: u64,
}

pub const RESULT_HEADER: &str = "experiment,param,train,test,fixed,system,train_acc,test_acc,rdtg,gain,seed";

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.param,
            fmt_sig(self.train_value),
            fmt_sig(self.test_value),
            self.fixed,
            self.system,
            fmt_sig(self.train_acc),
            fmt_sig(self.test_acc),
            opt(self.rdtg),
            opt(self.gain),
            self.seed
        )
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Rows plus the non-reproducible wall-clock cost of each training cell.
#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<(String, f64)>,
    pub histories: Vec<(String, Vec<EpochStats>)>,
}

pub fn timings_csv(timings: &[(String, f64)]) -> String {
    let mut out = String::from("cell,wall_seconds\n");
    for (cell, secs) in timings {
        let _ = writeln!(out, "{cell},{secs:.3}");
    }
    out
}

/// Receiver under test in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum System {
    /// AWGN link with `L` averaged receive antennas; 1 is SISO.
    Simo(usize),
    RayleighSiso,
    MimoBlind,
}

impl System {
    pub fn name(self) -> String {
        match self {
            System::Simo(1) | System::RayleighSiso => "siso".into(),
            System::Simo(l) => format!("simo_{l}"),
            System::MimoBlind => "mimo_blind".into(),
        }
    }

    fn key(self) -> u64 {
        match self {
            System::Simo(l) => l as u64,
            System::RayleighSiso => 1_000,
            System::MimoBlind => 1_001,
        }
    }

    fn is_siso(self) -> bool {
        matches!(self, System::Simo(1) | System::RayleighSiso)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

/// One dataset a sweep needs, with its derived seed.
#[derive(Clone, Debug)]
pub struct DatasetPlan {
    pub system: System,
    pub role: Role,
    pub value: f64,
    pub seed: u64,
    pub frames_per_device: usize,
    source: PlanSource,
}

#[derive(Clone, Debug)]
enum PlanSource {
    Awgn { snr_db: f64, l_rx: usize },
    Rayleigh(RayleighConfig),
}

impl DatasetPlan {
    /// File-name stem, e.g. `simo_6_train_20`.
    pub fn name(&self) -> String {
        let role = match self.role {
            Role::Train => "train",
            Role::Test => "test",
        };
        format!("{}_{role}_{}", self.system.name(), fmt_sig(self.value))
    }

    pub fn generate(&self, profiles: &[DeviceProfile]) -> Result<Dataset> {
        match &self.source {
            PlanSource::Awgn { snr_db, l_rx } => {
                gen_awgn_dataset(profiles, *snr_db, *l_rx, self.frames_per_device, self.seed)
            }
            PlanSource::Rayleigh(cfg) => gen_rayleigh_dataset(profiles, cfg, self.frames_per_device, self.seed),
        }
    }
}

const KEY_TRAIN_SET: u64 = 1;
const KEY_TEST_SET: u64 = 2;
const KEY_MODEL: u64 = 3;
const KEY_BENCH: u64 = 4;
const KEY_BLIND: u64 = 5;
const KEY_SEARCH: u64 = 6;

fn derive(seed: u64, keys: &[u64]) -> u64 {
    let mut path = vec![tag::EXPERIMENT];
    path.extend_from_slice(keys);
    substream(seed, &path).gen()
}

struct SweepShape<'a> {
    param: &'static str,
    fixed: String,
    systems: Vec<System>,
    train_grid: &'a [f64],
    test_grid: &'a [f64],
    train: &'a TrainConfig,
}

fn shape(cfg: &ExperimentConfig) -> Result<SweepShape<'_>> {
    match &cfg.experiment {
        Experiment::AwgnSweep(s) => Ok(SweepShape {
            param: "snr_db",
            fixed: String::new(),
            systems: s.l_rx.iter().map(|&l| System::Simo(l)).collect(),
            train_grid: &s.train_snr_db,
            test_grid: &s.test_snr_db,
            train: &s.train,
        }),
        Experiment::ApgSweep(s) => Ok(SweepShape {
            param: "apg_db",
            fixed: format!("mds_hz={}", fmt_sig(s.fixed)),
            systems: vec![System::RayleighSiso, System::MimoBlind],
            train_grid: &s.train_grid,
            test_grid: &s.test_grid,
            train: &s.train,
        }),
        Experiment::MdsSweep(s) => Ok(SweepShape {
            param: "mds_hz",
            fixed: format!("apg_db={}", fmt_sig(s.fixed)),
            systems: vec![System::RayleighSiso, System::MimoBlind],
            train_grid: &s.train_grid,
            test_grid: &s.test_grid,
            train: &s.train,
        }),
        _ => Err(cfg_err(format!("{} is not a sweep", cfg.kind().name()))),
    }
}

fn plan_one(cfg: &ExperimentConfig, system: System, role: Role, value: f64) -> Result<DatasetPlan> {
    let key = match role {
        Role::Train => KEY_TRAIN_SET,
        Role::Test => KEY_TEST_SET,
    };
    let seed = derive(cfg.seed, &[key, system.key(), value.to_bits()]);
    let (source, fpd, test_fpd) = match (&cfg.experiment, system) {
        (Experiment::AwgnSweep(s), System::Simo(l)) => {
            (PlanSource::Awgn { snr_db: value, l_rx: l }, s.frames_per_device, s.test_frames_per_device)
        }
        (Experiment::ApgSweep(s) | Experiment::MdsSweep(s), _) => {
            let (mode, l_rx) = match system {
                System::MimoBlind => (LinkMode::MimoBlind, s.l_rx),
                _ => (LinkMode::Siso, 1),
            };
            let rc = RayleighConfig {
                code: s.code.clone(),
                l_rx,
                channel: cfg.rayleigh_spec(s, value)?,
                noise_var: s.noise_var,
                blocks_per_frame: s.blocks_per_frame,
                mode,
                payload: s.payload,
                // one realization per channel condition: training and
                // held-out frames share it, other conditions get their own
                channel_seed: Some(derive(cfg.seed, &[KEY_BENCH, value.to_bits()])),
                impairment_stage: s.impairment_stage,
            };
            (PlanSource::Rayleigh(rc), s.frames_per_device, s.test_frames_per_device)
        }
        _ => return Err(cfg_err("system does not belong to this experiment")),
    };
    let frames_per_device = if role == Role::Train { fpd } else { test_fpd };
    Ok(DatasetPlan { system, role, value, seed, frames_per_device, source })
}

/// Every dataset a sweep generates, training sets first. Test sets are only
/// planned for grid values that differ from some training value; same-channel
/// accuracy is measured on the training set's held-out split.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<DatasetPlan>> {
    let sh = shape(cfg)?;
    let mut out = Vec::new();
    for &sys in &sh.systems {
        for &v in sh.train_grid {
            out.push(plan_one(cfg, sys, Role::Train, v)?);
        }
    }
    for &sys in &sh.systems {
        for &v in sh.test_grid {
            if sh.train_grid.iter().any(|&t| t != v) {
                out.push(plan_one(cfg, sys, Role::Test, v)?);
            }
        }
    }
    Ok(out)
}

fn model_seed(cfg: &ExperimentConfig, tc: &TrainConfig, sys: System, value: f64) -> u64 {
    derive(cfg.seed, &[KEY_MODEL, tc.seed, sys.key(), value.to_bits()])
}

/// Trains a fresh model on a dataset's train split, selecting on its
/// validation split.
pub fn fit(ds: &Dataset, tc: &TrainConfig, seed: u64) -> Result<(CnnModel, Vec<EpochStats>)> {
    let tc = TrainConfig { seed, ..tc.clone() };
    train(init(seed), &ds.subset(&ds.split().train), &ds.subset(&ds.split().val), &tc)
}

fn run_sweep(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<SweepOutput> {
    cfg.validate()?;
    let sh = shape(cfg)?;
    let profiles = cfg.profiles();
    let experiment = cfg.kind().name().to_string();
    let mut tests: BTreeMap<(System, u64), Dataset> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut histories = Vec::new();
    for &sys in &sh.systems {
        for &tv in sh.train_grid {
            let cell = format!("{}_{}", sys.name(), fmt_sig(tv));
            progress(&format!("{experiment}: training {cell}"));
            let t0 = Instant::now();
            let ds = plan_one(cfg, sys, Role::Train, tv)?.generate(&profiles)?;
            let (model, history) = fit(&ds, sh.train, model_seed(cfg, sh.train, sys, tv))?;
            let train_acc = evaluate(&model, &ds.subset(&ds.split().train))?;
            let same = evaluate(&model, &ds.subset(&ds.split().test))?;
            for &sv in sh.test_grid {
                let (test_acc, gap) = if sv == tv {
                    (same, None)
                } else {
                    if let std::collections::btree_map::Entry::Vacant(e) = tests.entry((sys, sv.to_bits())) {
                        let d = plan_one(cfg, sys, Role::Test, sv)?.generate(&profiles)?;
                        e.insert(d);
                    }
                    let d = &tests[&(sys, sv.to_bits())];
                    let all: Vec<&Frame> = d.frames.iter().collect();
                    let acc = evaluate(&model, &all)?;
                    (acc, Some(rdtg(same, acc)?))
                };
                rows.push(ResultRow {
                    experiment: experiment.clone(),
                    param: sh.param.into(),
                    train_value: tv,
                    test_value: sv,
                    fixed: sh.fixed.clone(),
                    system: sys.name(),
                    train_acc,
                    test_acc,
                    rdtg: gap,
                    gain: None,
                    seed: cfg.seed,
                });
            }
            let secs = t0.elapsed().as_secs_f64();
            progress(&format!("{experiment}: {cell} done in {secs:.1}s, same-channel accuracy {same:.1}%"));
            timings.push((cell.clone(), secs));
            histories.push((cell, history));
        }
    }
    fill_gain(&mut rows, &sh.systems);
    Ok(SweepOutput { rows, timings, histories })
}

fn fill_gain(rows: &mut [ResultRow], systems: &[System]) {
    let Some(siso) = systems.iter().find(|s| s.is_siso()).map(|s| s.name()) else {
        return;
    };
    let base: BTreeMap<(u64, u64), f64> = rows
        .iter()
        .filter(|r| r.system == siso)
        .map(|r| ((r.train_value.to_bits(), r.test_value.to_bits()), r.test_acc))
        .collect();
    for r in rows.iter_mut().filter(|r| r.system != siso) {
        r.gain = base.get(&(r.train_value.to_bits(), r.test_value.to_bits())).map(|b| r.test_acc - b);
    }
}

/// Trains per (L, training SNR) and tests across the SNR grid.
pub fn run_awgn_sweep(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<SweepOutput> {
    expect_kind(cfg, ExperimentKind::AwgnSweep)?;
    run_sweep(cfg, progress)
}

/// SISO and blind MIMO across an APG grid at fixed MDS.
pub fn run_apg_sweep(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<SweepOutput> {
    expect_kind(cfg, ExperimentKind::ApgSweep)?;
    run_sweep(cfg, progress)
}

/// SISO and blind MIMO across an MDS grid at fixed APG.
pub fn run_mds_sweep(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<SweepOutput> {
    expect_kind(cfg, ExperimentKind::MdsSweep)?;
    run_sweep(cfg, progress)
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.kind() != kind {
        return Err(cfg_err(format!("expected a {} config, got {}", kind.name(), cfg.kind().name())));
    }
    Ok(())
}

/// Outcome of one blind estimation run against a known channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BlindTrial {
    /// `min_α ‖α ĥ - h‖ / ‖h‖`.
    pub error: f64,
    pub ambiguity_dim: usize,
}

/// Random `H` (unit APG), `blocks` QPSK blocks, optional AWGN at `snr_db`
/// relative to the measured received power, then blind estimation.
pub fn blind_trial(code: &StbcCode, l_rx: usize, blocks: usize, snr_db: Option<f64>, seed: u64) -> Result<BlindTrial> {
    let spec = RayleighSpec::new(0.0, 0.0, 1.0)?;
    let ch = draw_rayleigh(l_rx, code.m(), spec, &mut substream(seed, &[tag::CHANNEL]))?;
    let n = code.n();
    let symbols = qpsk_block(n * blocks, &mut substream(seed, &[tag::SYMBOLS]));
    let x = CMatrix::from_fn(2 * n, blocks, |i, b| {
        let s = real_stack(&symbols[b * n..(b + 1) * n]);
        crate::numerics::C64::new(s[i], 0.0)
    });
    let clean = transmit_block(&ch, code, &x, 0.0, &mut substream(seed, &[tag::NOISE]))?;
    let (r, tol) = match snr_db {
        None => (clean, AMB_TOL_NOISELESS),
        Some(snr) => {
            let p = clean.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.as_slice().len() as f64;
            let var = p * 10f64.powf(-snr / 10.0);
            let mut rng = substream(seed, &[tag::NOISE]);
            (clean.map(|z| z + complex_gaussian(&mut rng, var)), AMB_TOL_NOISY)
        }
    };
    let est = estimate_with_tol(&r, code, l_rx, tol)?;
    Ok(BlindTrial { error: alignment_error(&est.h_hat, ch.h.as_slice())?, ambiguity_dim: est.ambiguity_dim })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlindRow {
    pub code: String,
    pub l_rx: usize,
    pub snr_db: Option<f64>,
    pub trials: usize,
    pub median_error: f64,
    pub p90_error: f64,
    /// Smallest and largest null-space dimension seen over the trials.
    pub min_ambiguity_dim: usize,
    pub max_ambiguity_dim: usize,
}

pub const BLIND_HEADER: &str = "code,l_rx,snr_db,trials,median_error,p90_error,min_ambiguity_dim,max_ambiguity_dim";

impl BlindRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.code,
            self.l_rx,
            self.snr_db.map_or("inf".into(), fmt_sig),
            self.trials,
            fmt_sig(self.median_error),
            fmt_sig(self.p90_error),
            self.min_ambiguity_dim,
            self.max_ambiguity_dim
        )
    }
}

pub fn blind_csv(rows: &[BlindRow]) -> String {
    let mut out = String::from(BLIND_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Median of a non-empty sample (mean of the middle pair when even).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Monte-Carlo alignment error per (L, SNR). Trial `t` uses the same
/// channel and symbols at every SNR, so rows differ only by noise.
pub fn run_blind_demo(cfg: &ExperimentConfig) -> Result<Vec<BlindRow>> {
    cfg.validate()?;
    let Experiment::BlindDemo(b) = &cfg.experiment else {
        return Err(cfg_err(format!("expected a blind_demo config, got {}", cfg.kind().name())));
    };
    let code = code_by_name(&b.code)?;
    let mut rows = Vec::new();
    for &l in &b.l_rx {
        for &snr in &b.snr_db {
            let trials = (0..b.trials)
                .map(|t| blind_trial(&code, l, b.blocks, snr, derive(cfg.seed, &[KEY_BLIND, l as u64, t as u64])))
                .collect::<Result<Vec<_>>>()?;
            let errs: Vec<f64> = trials.iter().map(|t| t.error).collect();
            let dims = trials.iter().map(|t| t.ambiguity_dim);
            rows.push(BlindRow {
                code: b.code.clone(),
                l_rx: l,
                snr_db: snr,
                trials: b.trials,
                median_error: median(&errs),
                p90_error: percentile(&errs, 0.9),
                min_ambiguity_dim: dims.clone().min().unwrap_or(0),
                max_ambiguity_dim: dims.max().unwrap_or(0),
            });
        }
    }
    Ok(rows)
}

/// Best witness rank found, or a flagged failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessCell {
    Found { rank: usize, field: WitnessField },
    Failed,
}

impl WitnessCell {
    fn rank(&self) -> Option<usize> {
        match self {
            WitnessCell::Found { rank, .. } => Some(*rank),
            WitnessCell::Failed => None,
        }
    }

    fn cells(&self) -> (String, String) {
        match self {
            WitnessCell::Found { rank, field } => (rank.to_string(), field_name(*field).into()),
            WitnessCell::Failed => ("search_failed".into(), String::new()),
        }
    }
}

fn field_name(f: WitnessField) -> &'static str {
    match f {
        WitnessField::Real => "real",
        WitnessField::Complex => "complex",
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentifiabilityRow {
    pub code: String,
    pub dims: (usize, usize, usize),
    pub rho: usize,
    pub r_min: WitnessCell,
    pub r_prime_min: WitnessCell,
    pub rank_c: usize,
    /// `M - r_min + 1`; absent when the search failed.
    pub min_l: Option<usize>,
}

pub const IDENTIFIABILITY_HEADER: &str = "code,m,n,k,rho,r_min,r_min_field,r_prime_min,r_prime_field,rank_c,min_l";

impl IdentifiabilityRow {
    pub fn csv_line(&self) -> String {
        let (r, rf) = self.r_min.cells();
        let (rp, rpf) = self.r_prime_min.cells();
        let (m, n, k) = self.dims;
        format!(
            "{},{m},{n},{k},{},{r},{rf},{rp},{rpf},{},{}",
            self.code,
            self.rho,
            self.rank_c,
            self.min_l.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

pub fn identifiability_csv(rows: &[IdentifiabilityRow]) -> String {
    let mut out = String::from(IDENTIFIABILITY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// ρ, witness ranks, rank of the stacked code and the receive-antenna
/// minimum for each code. The witness field of each search is reported
/// with its rank: the minimum depends on it (see [`WitnessField`]).
pub fn run_identifiability_report(codes: &[StbcCode], trials: usize, seed: u64) -> Result<Vec<IdentifiabilityRow>> {
    codes
        .iter()
        .enumerate()
        .map(|(i, code)| {
            let rep = identifiability(code)?;
            let search = |mode, key| match search_rmin(code, mode, trials, derive(seed, &[KEY_SEARCH, i as u64, key])) {
                Ok(s) => Ok(WitnessCell::Found { rank: s.best_rank, field: s.field }),
                Err(Error::SearchFailure { .. }) => Ok(WitnessCell::Failed),
                Err(e) => Err(e),
            };
            let r_min = search(WitnessMode::Gamma, 0)?;
            let r_prime_min = search(WitnessMode::GammaPhi, 1)?;
            let min_l = r_min.rank().map(|r| min_rx_antennas(code, r)).transpose()?;
            Ok(IdentifiabilityRow {
                code: code.name().to_string(),
                dims: code.dims(),
                rho: rep.rho,
                r_min,
                r_prime_min,
                rank_c: numerical_rank(&stacked_code(code), RANK_TOL)?,
                min_l,
            })
        })
        .collect()
}

/// Runs `cfg` and writes its CSV outputs into `out`, returning their paths.
pub fn run(cfg: &ExperimentConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    };
    let kind = cfg.kind();
    match &cfg.experiment {
        Experiment::AwgnSweep(_) | Experiment::ApgSweep(_) | Experiment::MdsSweep(_) => {
            let res = run_sweep(cfg, progress)?;
            Ok(vec![
                write(&format!("{}.csv", kind.name()), results_csv(&res.rows))?,
                write(&format!("{}_timings.csv", kind.name()), timings_csv(&res.timings))?,
            ])
        }
        Experiment::BlindDemo(_) => Ok(vec![write("blind_demo.csv", blind_csv(&run_blind_demo(cfg)?))?]),
        Experiment::IdentifiabilityReport(r) => {
            let codes = r.codes.iter().map(|c| code_by_name(c)).collect::<Result<Vec<_>>>()?;
            progress("identifiability: searching witnesses");
            let rows = run_identifiability_report(&codes, r.trials, cfg.seed)?;
            Ok(vec![write("identifiability.csv", identifiability_csv(&rows))?])
        }
    }
}
