//! Reference waveforms, frame tensors and labelled datasets.
//!
//! A [`Frame`] is 160 complex samples split into an in-phase row and a
//! quadrature row. Datasets are generated either from the L-LTF preamble
//! over AWGN (optionally averaged over several receive antennas) or from
//! QPSK traffic over a flat Rayleigh channel, where the MIMO receiver
//! recovers the symbols blindly before they are framed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blind::{equalize, estimate_with_tol, symbols_from_blocks, AMB_TOL_NOISY};
use crate::channel::{awgn, draw_rayleigh, evolve, propagate, simo_average, stack_epochs, MimoChannel, RayleighSpec};
use crate::error::{Error, Result};
use crate::impairments::{DeviceProfile, ImpairmentChain, Signal};
use crate::numerics::{CMatrix, C64};
use crate::rng::{substream, tag};
use crate::stbc::{code_by_name, encode, identifiability, min_rx_antennas, search_rmin, StbcCode, WitnessMode};

/// Complex samples per frame.
pub const FRAME_LEN: usize = 160;
/// Sample rate of every generated stream, Hz.
pub const SAMPLE_RATE: f64 = 20e6;
/// Leading byte of a frame blob.
pub const FORMAT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"MFPF";
/// Cap on regenerations of a single unrecoverable Rayleigh frame.
const MAX_RETRIES: u64 = 64;

/// L-LTF subcarriers -26..=26 (DC is zero).
const LLTF_SUBCARRIERS: [i8; 53] = [
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 0, 1, -1, -1, 1, 1, -1, 1,
    -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1,
];

/// The legacy long training field at 20 MHz: a 32-sample cyclic prefix and
/// two copies of the 64-point symbol, scaled to unit mean power.
pub fn lltf() -> Signal {
    let scale = 1.0 / (LLTF_SUBCARRIERS.iter().filter(|&&v| v != 0).count() as f64).sqrt();
    let symbol: Vec<C64> = (0..64)
        .map(|t| {
            LLTF_SUBCARRIERS
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let k = i as f64 - 26.0;
                    C64::from_polar(v as f64, 2.0 * std::f64::consts::PI * k * t as f64 / 64.0)
                })
                .sum::<C64>()
                * scale
        })
        .collect();
    let mut samples = symbol[32..].to_vec();
    samples.extend_from_slice(&symbol);
    samples.extend_from_slice(&symbol);
    Signal { samples, sample_rate: SAMPLE_RATE }
}

/// `n` i.i.d. symbols drawn uniformly from `(±1 ± j)/√2`.
pub fn qpsk_block<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re = if rng.gen::<bool>() { a } else { -a };
            let im = if rng.gen::<bool>() { a } else { -a };
            C64::new(re, im)
        })
        .collect()
}

/// A labelled 2 x 160 real tensor, stored row-major as f32.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    data: Vec<f32>,
    label: usize,
}

impl Frame {
    pub fn from_tensor(data: Vec<f32>, label: usize) -> Result<Self> {
        if data.len() != 2 * FRAME_LEN {
            return Err(Error::arg(format!("frame tensor has {} values, expected 320", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("frame tensor contains non-finite values"));
        }
        Ok(Frame { data, label })
    }

    pub fn tensor(&self) -> &[f32] {
        &self.data
    }

    /// Row 0 is in-phase, row 1 quadrature.
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * FRAME_LEN..(r + 1) * FRAME_LEN]
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn to_complex(&self) -> Vec<C64> {
        let (i, q) = (self.row(0), self.row(1));
        i.iter().zip(q).map(|(&a, &b)| C64::new(a as f64, b as f64)).collect()
    }
}

/// Splits 160 complex samples into the I and Q rows.
pub fn to_frame(x: &[C64], label: usize) -> Result<Frame> {
    if x.len() != FRAME_LEN {
        return Err(Error::arg(format!("frame needs {FRAME_LEN} samples, got {}", x.len())));
    }
    let mut data: Vec<f32> = x.iter().map(|z| z.re as f32).collect();
    data.extend(x.iter().map(|z| z.im as f32));
    Frame::from_tensor(data, label)
}

/// Index sets of the train/validation/test partition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// STBC transmission, blind channel estimation and equalization.
    MimoBlind,
    /// One antenna per side, raw received symbols.
    Siso,
}

/// Rayleigh dataset parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayleighConfig {
    pub code: String,
    pub l_rx: usize,
    pub channel: RayleighSpec,
    /// Receiver noise variance per antenna; the transmit power is 1.
    pub noise_var: f64,
    pub blocks_per_frame: usize,
    pub mode: LinkMode,
    #[serde(default)]
    pub payload: Payload,
    /// Seed of the channel trajectory; the dataset seed when absent.
    /// Datasets sharing it see the same fading, scaled by their APG.
    #[serde(default)]
    pub channel_seed: Option<u64>,
    #[serde(default)]
    pub impairment_stage: ImpairmentStage,
}

/// Where the transmitter impairments act in the blind MIMO link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpairmentStage {
    /// Each antenna's encoded stream runs its own chain.
    #[default]
    PerAntenna,
    /// One chain on the symbol stream before encoding.
    PreCoding,
}

/// Which QPSK symbols a Rayleigh frame carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// The same known sequence in every frame, like a preamble.
    #[default]
    Pilot,
    /// Fresh random symbols per frame.
    Random,
}

/// Fixed seed of the pilot sequence; independent of any dataset seed.
pub const PILOT_SEED: u64 = 0x5049_4c4f_5400;

/// The known 160-symbol QPSK pilot carried by `Payload::Pilot` frames.
pub fn pilot() -> Vec<C64> {
    qpsk_block(FRAME_LEN, &mut substream(PILOT_SEED, &[tag::SYMBOLS]))
}

fn payload_symbols(cfg: &RayleighConfig, count: usize, seed: u64, key: [u64; 3]) -> Vec<C64> {
    match cfg.payload {
        Payload::Pilot => pilot()[..count].to_vec(),
        Payload::Random => qpsk_block(count, &mut substream(seed, &[tag::SYMBOLS, key[0], key[1], key[2]])),
    }
}

/// What produced a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// L-LTF over AWGN; `snr_db` of `None` means noiseless.
    Awgn {
        snr_db: Option<f64>,
        l_rx: usize,
    },
    Rayleigh(RayleighConfig),
}

/// Everything needed to regenerate a dataset, plus its labels and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u8,
    pub seed: u64,
    pub frames_per_device: usize,
    pub profiles: Vec<DeviceProfile>,
    pub chain: ImpairmentChain,
    pub source: Source,
    /// Frames regenerated because the receiver could not recover them.
    pub regenerated_frames: usize,
    pub labels: Vec<usize>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn split(&self) -> &Split {
        &self.manifest.split
    }

    pub fn subset(&self, idx: &[usize]) -> Vec<&Frame> {
        idx.iter().map(|&i| &self.frames[i]).collect()
    }
}

fn check_profiles(profiles: &[DeviceProfile], frames_per_device: usize) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::arg("no device profiles"));
    }
    if frames_per_device < 10 {
        return Err(Error::arg(format!("{frames_per_device} frames per device; at least 10 are needed for a split")));
    }
    profiles.iter().try_for_each(DeviceProfile::validate)
}

fn assemble(
    frames: Vec<Frame>,
    profiles: &[DeviceProfile],
    frames_per_device: usize,
    seed: u64,
    source: Source,
    regenerated_frames: usize,
) -> Result<Dataset> {
    let labels = frames.iter().map(Frame::label).collect();
    let ds = Dataset {
        frames,
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            seed,
            frames_per_device,
            profiles: profiles.to_vec(),
            chain: ImpairmentChain::default(),
            source,
            regenerated_frames,
            labels,
            split: Split::default(),
        },
    };
    split(ds, seed)
}

/// L-LTF frames through each device, replicated to `l_rx` antennas with
/// independent AWGN and averaged. `l_rx = 1` is the SISO receiver.
pub fn gen_awgn_dataset(
    profiles: &[DeviceProfile],
    snr_db: f64,
    l_rx: usize,
    frames_per_device: usize,
    seed: u64,
) -> Result<Dataset> {
    check_profiles(profiles, frames_per_device)?;
    if l_rx == 0 {
        return Err(Error::arg("at least one receive antenna is needed"));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::arg(format!("invalid SNR {snr_db}")));
    }
    let chain = ImpairmentChain::default();
    let reference = lltf();
    let mut frames = Vec::with_capacity(profiles.len() * frames_per_device);
    for (d, p) in profiles.iter().enumerate() {
        for f in 0..frames_per_device {
            let key = [d as u64, f as u64];
            let tx = chain.apply(p, &reference, &mut substream(seed, &[tag::IMPAIRMENT, key[0], key[1]]))?;
            let copies = (0..l_rx)
                .map(|a| awgn(&tx, snr_db, &mut substream(seed, &[tag::NOISE, key[0], key[1], a as u64])))
                .collect::<Result<Vec<_>>>()?;
            frames.push(to_frame(&simo_average(&copies)?.samples, d)?);
        }
    }
    let snr = snr_db.is_finite().then_some(snr_db);
    assemble(frames, profiles, frames_per_device, seed, Source::Awgn { snr_db: snr, l_rx }, 0)
}

/// QPSK traffic through a flat Rayleigh channel.
///
/// The channel is static within a frame and evolves from frame slot to frame
/// slot according to the Doppler setting; all devices share the trajectory.
/// In `MimoBlind` mode the impaired transmission (see [`ImpairmentStage`]) is
/// estimated blindly from the frame's blocks, equalized, and freed of the
/// scalar ambiguity (see [`resolve_ambiguity`]; a pilot payload also fixes
/// the sign). In `Siso` mode the impaired symbols see one scalar gain plus
/// noise and are framed as received.
pub fn gen_rayleigh_dataset(
    profiles: &[DeviceProfile],
    cfg: &RayleighConfig,
    frames_per_device: usize,
    seed: u64,
) -> Result<Dataset> {
    check_profiles(profiles, frames_per_device)?;
    cfg.channel.validate()?;
    if !(cfg.noise_var >= 0.0 && cfg.noise_var.is_finite()) {
        return Err(Error::arg("noise variance must be finite and non-negative"));
    }
    let code = code_by_name(&cfg.code)?;
    if cfg.blocks_per_frame * code.n() != FRAME_LEN {
        return Err(Error::arg(format!(
            "{} blocks of {} symbols do not fill a {FRAME_LEN}-symbol frame",
            cfg.blocks_per_frame,
            code.n()
        )));
    }
    if cfg.mode == LinkMode::MimoBlind {
        check_blind_link(&code, cfg.l_rx)?;
    }
    let chain = ImpairmentChain::default();
    let (l, m) = match cfg.mode {
        LinkMode::MimoBlind => (cfg.l_rx, code.m()),
        LinkMode::Siso => (1, 1),
    };
    let fading = trajectory(l, m, cfg.channel, frames_per_device, cfg.channel_seed.unwrap_or(seed))?;
    let mut frames = Vec::with_capacity(profiles.len() * frames_per_device);
    let mut regenerated = 0;
    for (d, p) in profiles.iter().enumerate() {
        for (f, ch) in fading.iter().enumerate() {
            let mut attempt = 0;
            let symbols = loop {
                let key = [d as u64, f as u64, attempt];
                let out = match cfg.mode {
                    LinkMode::MimoBlind => mimo_frame(&code, cfg, ch, &chain, p, seed, key),
                    LinkMode::Siso => siso_frame(cfg, ch, &chain, p, seed, key).map(Some),
                }?;
                if let Some(s) = out {
                    break s;
                }
                attempt += 1;
                regenerated += 1;
                if attempt > MAX_RETRIES {
                    return Err(Error::pre(format!(
                        "device {d} frame {f}: receiver failed {MAX_RETRIES} regenerations"
                    )));
                }
            };
            frames.push(to_frame(&symbols, d)?);
        }
    }
    assemble(frames, profiles, frames_per_device, seed, Source::Rayleigh(cfg.clone()), regenerated)
}

/// Channel state per frame slot, one `block_interval` apart. Every device's
/// frame `f` sees the same state, so devices differ by hardware and not by
/// when they transmitted.
fn trajectory(l: usize, m: usize, spec: RayleighSpec, slots: usize, seed: u64) -> Result<Vec<MimoChannel>> {
    let mut rng = substream(seed, &[tag::CHANNEL]);
    let mut ch = draw_rayleigh(l, m, spec, &mut rng)?;
    let mut out = Vec::with_capacity(slots);
    for i in 0..slots {
        if i > 0 {
            ch = evolve(&ch, &mut rng);
        }
        out.push(ch.clone());
    }
    Ok(out)
}

fn check_blind_link(code: &StbcCode, l_rx: usize) -> Result<()> {
    let rep = identifiability(code)?;
    if rep.rho != 1 {
        return Err(Error::pre(format!(
            "code '{}' has ρ = {}; blind estimation is ambiguous beyond a scalar",
            code.name(),
            rep.rho
        )));
    }
    let r_min = search_rmin(code, WitnessMode::Gamma, 200, 0)?.best_rank;
    let need = min_rx_antennas(code, r_min)?;
    if l_rx < need || code.k() * l_rx <= 2 * code.n() {
        return Err(Error::pre(format!(
            "code '{}' needs at least {need} receive antennas for blind estimation, got {l_rx}",
            code.name()
        )));
    }
    Ok(())
}

/// One frame of blindly recovered symbols, or `None` if the receiver failed.
fn mimo_frame(
    code: &StbcCode,
    cfg: &RayleighConfig,
    ch: &MimoChannel,
    chain: &ImpairmentChain,
    p: &DeviceProfile,
    seed: u64,
    key: [u64; 3],
) -> Result<Option<Vec<C64>>> {
    let (m, n, k) = code.dims();
    let blocks = cfg.blocks_per_frame;
    let symbols = payload_symbols(cfg, blocks * n, seed, key);
    let pre_coding = cfg.impairment_stage == ImpairmentStage::PreCoding;
    let coded = if pre_coding {
        let mut irng = substream(seed, &[tag::IMPAIRMENT, key[0], key[1], key[2], 0]);
        chain.apply(p, &Signal { samples: symbols.clone(), sample_rate: SAMPLE_RATE }, &mut irng)?.samples
    } else {
        symbols.clone()
    };
    let mut streams = vec![Vec::with_capacity(blocks * k); m];
    for b in 0..blocks {
        let enc = encode(code, &coded[b * n..(b + 1) * n])?;
        for (a, s) in streams.iter_mut().enumerate() {
            s.extend((0..k).map(|t| enc[(a, t)]));
        }
    }
    let power = 1.0 / (m as f64).sqrt();
    let mut tx = CMatrix::zeros(m, blocks * k);
    for (a, s) in streams.into_iter().enumerate() {
        let y = if pre_coding {
            s
        } else {
            let mut irng = substream(seed, &[tag::IMPAIRMENT, key[0], key[1], key[2], a as u64]);
            chain.apply(p, &Signal { samples: s, sample_rate: SAMPLE_RATE }, &mut irng)?.samples
        };
        for (t, z) in y.into_iter().enumerate() {
            tx[(a, t)] = z * power;
        }
    }

    let mut nrng = substream(seed, &[tag::NOISE, key[0], key[1], key[2]]);
    let sigma = cfg.noise_var.sqrt();
    let mut rx = CMatrix::zeros(cfg.l_rx, blocks * k);
    for b in 0..blocks {
        let part = propagate(ch, &tx.submatrix(0, b * k, m, k), sigma, &mut nrng)?;
        for i in 0..cfg.l_rx {
            for t in 0..k {
                rx[(i, b * k + t)] = part[(i, t)];
            }
        }
    }
    let r = stack_epochs(&rx, k)?;
    let Ok(est) = estimate_with_tol(&r, code, cfg.l_rx, AMB_TOL_NOISY) else {
        return Ok(None);
    };
    let Ok(x_hat) = equalize(&r, &est.h_hat, code, cfg.l_rx) else {
        return Ok(None);
    };
    let Some(x) = resolve_ambiguity(&x_hat) else {
        return Ok(None);
    };
    let mut out = symbols_from_blocks(&x, n)?;
    if cfg.payload == Payload::Pilot {
        // the known pilot fixes the sign the blind estimate leaves open
        let corr: f64 = out.iter().zip(&symbols).map(|(a, b)| (a * b.conj()).re).sum();
        if corr < 0.0 {
            out.iter_mut().for_each(|z| *z = -*z);
        }
    }
    Ok(Some(out))
}

/// Removes the blind scalar from the equalized real-stacked symbols.
///
/// The transmitted `x` is real, so `x / α` has a common phase `-arg α`
/// (mod π). That phase is estimated from `Σ x̂²`, undone, and the imaginary
/// residue discarded; the result is scaled to unit mean symbol power. Only
/// the sign of `α` stays unresolved. `None` if nothing remains.
pub fn resolve_ambiguity(x_hat: &CMatrix) -> Option<CMatrix> {
    let s2: C64 = x_hat.as_slice().iter().map(|z| z * z).sum();
    let rot = C64::from_polar(1.0, -s2.arg() / 2.0);
    let real = x_hat.map(|z| C64::new((z * rot).re, 0.0));
    // each complex symbol owns two real entries
    let p = 2.0 * real.frobenius_norm().powi(2) / real.as_slice().len() as f64;
    if !(p > 0.0 && p.is_finite()) {
        return None;
    }
    Some(real.scale(C64::new(1.0 / p.sqrt(), 0.0)))
}

fn siso_frame(
    cfg: &RayleighConfig,
    ch: &MimoChannel,
    chain: &ImpairmentChain,
    p: &DeviceProfile,
    seed: u64,
    key: [u64; 3],
) -> Result<Vec<C64>> {
    let symbols = payload_symbols(cfg, FRAME_LEN, seed, key);
    let mut irng = substream(seed, &[tag::IMPAIRMENT, key[0], key[1], key[2], 0]);
    let y = chain.apply(p, &Signal { samples: symbols, sample_rate: SAMPLE_RATE }, &mut irng)?;
    let mut nrng = substream(seed, &[tag::NOISE, key[0], key[1], key[2]]);
    let sigma = cfg.noise_var.sqrt();
    let tx = CMatrix::from_vec_unchecked(1, FRAME_LEN, y.samples);
    Ok(propagate(ch, &tx, sigma, &mut nrng)?.into_vec())
}

/// Stratified 80/10/10 partition, deterministic for `seed`.
pub fn split(mut ds: Dataset, seed: u64) -> Result<Dataset> {
    if ds.len() < 10 {
        return Err(Error::arg(format!("{} frames cannot be split 80/10/10", ds.len())));
    }
    let classes = ds.frames.iter().map(Frame::label).max().map_or(0, |m| m + 1);
    let mut out = Split::default();
    for label in 0..classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.frames[i].label == label).collect();
        idx.shuffle(&mut substream(seed, &[tag::SPLIT, label as u64]));
        let c = idx.len();
        let n_train = (0.8 * c as f64).round() as usize;
        let n_val = ((0.1 * c as f64).round() as usize).min(c - n_train);
        out.train.extend_from_slice(&idx[..n_train]);
        out.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        out.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    for part in [&mut out.train, &mut out.val, &mut out.test] {
        part.sort_unstable();
    }
    ds.manifest.split = out;
    Ok(ds)
}

fn paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let name = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    (prefix.with_file_name(format!("{name}.manifest.json")), prefix.with_file_name(format!("{name}.frames.bin")))
}

/// Writes `<prefix>.manifest.json` and `<prefix>.frames.bin`.
pub fn save(ds: &Dataset, prefix: &Path) -> Result<()> {
    let (manifest_path, blob_path) = paths(prefix);
    let json = serde_json::to_string_pretty(&ds.manifest)
        .map_err(|e| Error::Format { path: manifest_path.clone(), msg: e.to_string() })?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;

    let mut blob = Vec::with_capacity(9 + ds.len() * 2 * FRAME_LEN * 4);
    blob.push(FORMAT_VERSION);
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    for f in &ds.frames {
        for v in &f.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file =
        fs::File::create(&blob_path).map_err(|e| Error::io(format!("creating {}", blob_path.display()), e))?;
    file.write_all(&blob).map_err(|e| Error::io(format!("writing {}", blob_path.display()), e))
}

/// Reads a dataset written by [`save`].
pub fn load(prefix: &Path) -> Result<Dataset> {
    let (manifest_path, blob_path) = paths(prefix);
    let text =
        fs::read_to_string(&manifest_path).map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format { path: manifest_path.clone(), msg: e.to_string() })?;
    let blob = fs::read(&blob_path).map_err(|e| Error::io(format!("reading {}", blob_path.display()), e))?;
    let bad = |msg: String| Error::Format { path: blob_path.clone(), msg };
    if blob.len() < 9 {
        return Err(bad("truncated header".into()));
    }
    if blob[0] != FORMAT_VERSION || manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {} (manifest {}), expected {FORMAT_VERSION}",
            blob[0], manifest.format_version
        )));
    }
    if &blob[1..5] != MAGIC {
        return Err(bad("bad magic bytes".into()));
    }
    let count = u32::from_le_bytes(blob[5..9].try_into().expect("4 bytes")) as usize;
    let frame_bytes = 2 * FRAME_LEN * 4;
    if blob.len() != 9 + count * frame_bytes {
        return Err(bad(format!("{} bytes for {count} frames", blob.len())));
    }
    if manifest.labels.len() != count {
        return Err(bad(format!("{count} frames but {} labels", manifest.labels.len())));
    }
    let frames = blob[9..]
        .chunks_exact(frame_bytes)
        .zip(&manifest.labels)
        .map(|(chunk, &label)| {
            let data = chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
            Frame::from_tensor(data, label).map_err(|e| bad(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let split = &manifest.split;
    if split.train.iter().chain(&split.val).chain(&split.test).any(|&i| i >= count) {
        return Err(bad("split index out of range".into()));
    }
    Ok(Dataset { frames, manifest })
}
