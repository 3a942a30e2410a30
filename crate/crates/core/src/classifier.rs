//! Device classifier: a two-convolution, two-dense CNN over 2 x 160 frames,
//! trained with explicit backpropagation and Adam.
//!
//! Geometry (valid convolutions, 1 x 2 max pooling along time):
//!
//! ```text
//! 2x160 -conv1 1x7x50-> 2x154x50 -pool-> 2x77x50
//!       -conv2 2x7x50-> 1x71x50  -pool-> 1x35x50 -> 1750
//!       -fc 256 relu-> -fc 80 relu-> -fc 10-> softmax
//! ```
//!
//! All parameters live in one flat `f64` vector; [`Layout`] gives the
//! offsets. Activations are row-major `[position][channel]`, so the conv
//! layers reduce to matrix products over im2col patches.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, tag};
use crate::waveform::{Frame, FRAME_LEN};

pub const ROWS: usize = 2;
pub const WIDTH: usize = FRAME_LEN;
pub const K1: usize = 7;
pub const C1: usize = 50;
pub const T1: usize = WIDTH - K1 + 1;
pub const T1P: usize = T1 / 2;
pub const K2: usize = 7;
pub const C2: usize = 50;
pub const T2: usize = T1P - K2 + 1;
pub const T2P: usize = T2 / 2;
pub const FLAT: usize = T2P * C2;
pub const H1: usize = 256;
pub const H2: usize = 80;
pub const CLASSES: usize = 10;
/// im2col patch length of conv2.
const P2: usize = ROWS * K2 * C1;

/// Offsets of each weight and bias block in the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
    pub w4: usize,
    pub b4: usize,
    pub w5: usize,
    pub b5: usize,
    pub total: usize,
}

pub const LAYOUT: Layout = {
    let w1 = 0;
    let b1 = w1 + K1 * C1;
    let w2 = b1 + C1;
    let b2 = w2 + P2 * C2;
    let w3 = b2 + C2;
    let b3 = w3 + FLAT * H1;
    let w4 = b3 + H1;
    let b4 = w4 + H1 * H2;
    let w5 = b4 + H2;
    let b5 = w5 + H2 * CLASSES;
    Layout { w1, b1, w2, b2, w3, b3, w4, b4, w5, b5, total: b5 + CLASSES }
};

/// `(name, offset, len, fan_in)` for every weight block, biases excluded.
pub const WEIGHT_BLOCKS: [(&str, usize, usize, usize); 5] = [
    ("conv1", LAYOUT.w1, K1 * C1, K1),
    ("conv2", LAYOUT.w2, P2 * C2, P2),
    ("fc1", LAYOUT.w3, FLAT * H1, FLAT),
    ("fc2", LAYOUT.w4, H1 * H2, H1),
    ("out", LAYOUT.w5, H2 * CLASSES, H2),
];

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub params: Vec<f64>,
}

/// He-uniform weights, zero biases.
pub fn init(seed: u64) -> CnnModel {
    let mut rng = substream(seed, &[tag::INIT]);
    let mut params = vec![0.0; LAYOUT.total];
    for (_, off, len, fan_in) in WEIGHT_BLOCKS {
        let limit = (6.0 / fan_in as f64).sqrt();
        for p in &mut params[off..off + len] {
            *p = rng.gen_range(-limit..limit);
        }
    }
    CnnModel { params }
}

/// `C = op(A) op(B) + beta * C` on row-major buffers, where `op(A)`
/// is m x k and `op(B)` is k x n.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], at: bool, b: &[f64], bt: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides address exactly the m*k, k*n and m*n row-major
    // (or transposed) buffers whose lengths are checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn add_bias(z: &mut [f64], bias: &[f64]) {
    for row in z.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

/// 1 x 2 stride-2 max pooling over `groups` sequences of `len` positions
/// with `ch` channels. Returns pooled values and the winning offset (0/1).
fn pool(a: &[f64], groups: usize, len: usize, ch: usize) -> (Vec<f64>, Vec<u8>) {
    let out_len = len / 2;
    let mut out = vec![0.0; groups * out_len * ch];
    let mut arg = vec![0u8; out.len()];
    for g in 0..groups {
        for t in 0..out_len {
            let lo = (g * len + 2 * t) * ch;
            let o = (g * out_len + t) * ch;
            for c in 0..ch {
                let (x0, x1) = (a[lo + c], a[lo + ch + c]);
                if x1 > x0 {
                    out[o + c] = x1;
                    arg[o + c] = 1;
                } else {
                    out[o + c] = x0;
                }
            }
        }
    }
    (out, arg)
}

fn unpool(d: &[f64], arg: &[u8], groups: usize, len: usize, ch: usize) -> Vec<f64> {
    let out_len = len / 2;
    let mut g_in = vec![0.0; groups * len * ch];
    for g in 0..groups {
        for t in 0..out_len {
            let o = (g * out_len + t) * ch;
            for c in 0..ch {
                let src = (g * len + 2 * t + arg[o + c] as usize) * ch + c;
                g_in[src] = d[o + c];
            }
        }
    }
    g_in
}

/// Forward activations kept for backpropagation.
struct Trace {
    batch: usize,
    x1: Vec<f64>,
    z1: Vec<f64>,
    arg1: Vec<u8>,
    x2: Vec<f64>,
    z2: Vec<f64>,
    arg2: Vec<u8>,
    p2: Vec<f64>,
    z3: Vec<f64>,
    a3: Vec<f64>,
    z4: Vec<f64>,
    a4: Vec<f64>,
    probs: Vec<f64>,
}

fn check_input(x: &[f64]) -> Result<usize> {
    let n = ROWS * WIDTH;
    if x.is_empty() || !x.len().is_multiple_of(n) {
        return Err(Error::arg(format!("input of {} values is not a batch of 2x160 tensors", x.len())));
    }
    Ok(x.len() / n)
}

impl CnnModel {
    fn block(&self, off: usize, len: usize) -> &[f64] {
        &self.params[off..off + len]
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        let batch = check_input(x)?;
        let l = LAYOUT;
        let seqs = batch * ROWS;

        let mut x1 = vec![0.0; seqs * T1 * K1];
        for s in 0..seqs {
            let src = &x[s * WIDTH..(s + 1) * WIDTH];
            for t in 0..T1 {
                x1[(s * T1 + t) * K1..(s * T1 + t + 1) * K1].copy_from_slice(&src[t..t + K1]);
            }
        }
        let mut z1 = vec![0.0; seqs * T1 * C1];
        gemm(seqs * T1, K1, C1, &x1, false, self.block(l.w1, K1 * C1), false, 0.0, &mut z1);
        add_bias(&mut z1, self.block(l.b1, C1));
        let (p1, arg1) = pool(&relu(&z1), seqs, T1, C1);

        let span = K2 * C1;
        let mut x2 = vec![0.0; batch * T2 * P2];
        for b in 0..batch {
            for t in 0..T2 {
                let dst = (b * T2 + t) * P2;
                for r in 0..ROWS {
                    let src = ((b * ROWS + r) * T1P + t) * C1;
                    x2[dst + r * span..dst + (r + 1) * span].copy_from_slice(&p1[src..src + span]);
                }
            }
        }
        let mut z2 = vec![0.0; batch * T2 * C2];
        gemm(batch * T2, P2, C2, &x2, false, self.block(l.w2, P2 * C2), false, 0.0, &mut z2);
        add_bias(&mut z2, self.block(l.b2, C2));
        let (p2, arg2) = pool(&relu(&z2), batch, T2, C2);

        let mut z3 = vec![0.0; batch * H1];
        gemm(batch, FLAT, H1, &p2, false, self.block(l.w3, FLAT * H1), false, 0.0, &mut z3);
        add_bias(&mut z3, self.block(l.b3, H1));
        let a3 = relu(&z3);
        let mut z4 = vec![0.0; batch * H2];
        gemm(batch, H1, H2, &a3, false, self.block(l.w4, H1 * H2), false, 0.0, &mut z4);
        add_bias(&mut z4, self.block(l.b4, H2));
        let a4 = relu(&z4);
        let mut probs = vec![0.0; batch * CLASSES];
        gemm(batch, H2, CLASSES, &a4, false, self.block(l.w5, H2 * CLASSES), false, 0.0, &mut probs);
        add_bias(&mut probs, self.block(l.b5, CLASSES));
        for row in probs.chunks_exact_mut(CLASSES) {
            softmax_in_place(row);
        }
        Ok(Trace { batch, x1, z1, arg1, x2, z2, arg2, p2, z3, a3, z4, a4, probs })
    }

    /// Class probabilities, `batch x 10` row-major, for a batch of 2 x 160
    /// tensors laid out back to back.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.probs)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grads(&self, x: &[f64], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let t = self.trace(x)?;
        let (loss, grads) = self.backward(&t, labels)?;
        Ok((loss, grads))
    }

    fn backward(&self, t: &Trace, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let batch = t.batch;
        check_labels(labels, batch)?;
        let l = LAYOUT;
        let mut g = vec![0.0; l.total];
        let inv_b = 1.0 / batch as f64;

        let mut loss = 0.0;
        let mut d5 = t.probs.clone();
        for (b, &y) in labels.iter().enumerate() {
            loss -= t.probs[b * CLASSES + y].max(f64::MIN_POSITIVE).ln();
            d5[b * CLASSES + y] -= 1.0;
        }
        loss *= inv_b;
        d5.iter_mut().for_each(|v| *v *= inv_b);

        let d4 = dense_back(&mut g, l.w5, l.b5, &t.a4, &d5, batch, H2, CLASSES, self.block(l.w5, H2 * CLASSES));
        let d4 = mask(d4, &t.z4);
        let d3 = dense_back(&mut g, l.w4, l.b4, &t.a3, &d4, batch, H1, H2, self.block(l.w4, H1 * H2));
        let d3 = mask(d3, &t.z3);
        let dp2 = dense_back(&mut g, l.w3, l.b3, &t.p2, &d3, batch, FLAT, H1, self.block(l.w3, FLAT * H1));

        let dz2 = mask(unpool(&dp2, &t.arg2, batch, T2, C2), &t.z2);
        let dx2 = dense_back(&mut g, l.w2, l.b2, &t.x2, &dz2, batch * T2, P2, C2, self.block(l.w2, P2 * C2));
        let seqs = batch * ROWS;
        let span = K2 * C1;
        let mut dp1 = vec![0.0; seqs * T1P * C1];
        for b in 0..batch {
            for tt in 0..T2 {
                let src = (b * T2 + tt) * P2;
                for r in 0..ROWS {
                    let dst = ((b * ROWS + r) * T1P + tt) * C1;
                    for (o, v) in dp1[dst..dst + span].iter_mut().zip(&dx2[src + r * span..src + (r + 1) * span]) {
                        *o += v;
                    }
                }
            }
        }
        let dz1 = mask(unpool(&dp1, &t.arg1, seqs, T1, C1), &t.z1);
        gemm(K1, seqs * T1, C1, &t.x1, true, &dz1, false, 0.0, &mut g[l.w1..l.w1 + K1 * C1]);
        bias_grad(&mut g[l.b1..l.b1 + C1], &dz1);
        Ok((loss, g))
    }
}

/// Weight and bias gradients of `z = x w + b` into `g`; returns `dz wᵀ`.
#[allow(clippy::too_many_arguments)]
fn dense_back(
    g: &mut [f64],
    w_off: usize,
    b_off: usize,
    x: &[f64],
    dz: &[f64],
    rows: usize,
    fan_in: usize,
    fan_out: usize,
    w: &[f64],
) -> Vec<f64> {
    gemm(fan_in, rows, fan_out, x, true, dz, false, 0.0, &mut g[w_off..w_off + fan_in * fan_out]);
    bias_grad(&mut g[b_off..b_off + fan_out], dz);
    let mut dx = vec![0.0; rows * fan_in];
    gemm(rows, fan_out, fan_in, dz, false, w, true, 0.0, &mut dx);
    dx
}

fn bias_grad(gb: &mut [f64], dz: &[f64]) {
    for row in dz.chunks_exact(gb.len()) {
        for (o, v) in gb.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn mask(mut d: Vec<f64>, z: &[f64]) -> Vec<f64> {
    for (v, &zz) in d.iter_mut().zip(z) {
        if zz <= 0.0 {
            *v = 0.0;
        }
    }
    d
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

fn check_labels(labels: &[usize], batch: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::arg(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= CLASSES) {
        return Err(Error::arg(format!("label {y} outside 0..{CLASSES}")));
    }
    Ok(())
}

/// Frames as one contiguous `f64` batch.
pub fn batch_input(frames: &[&Frame]) -> Vec<f64> {
    frames.iter().flat_map(|f| f.tensor().iter().map(|&v| v as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, batch_size: 64, epochs: 30, seed: 0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::arg("batch size and epoch count must be at least 1"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::arg("Adam betas must lie in [0, 1) and epsilon be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss and accuracy over the epoch's minibatches, before each update.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Adam state for the flat parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], g: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            params[i] -= cfg.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.epsilon);
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

/// Mean loss and accuracy percent over `frames`, evaluated in chunks.
pub fn loss_and_accuracy(m: &CnnModel, frames: &[&Frame]) -> Result<(f64, f64)> {
    if frames.is_empty() {
        return Err(Error::arg("nothing to evaluate"));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in frames.chunks(256) {
        let probs = m.forward(&batch_input(chunk))?;
        for (f, row) in chunk.iter().zip(probs.chunks_exact(CLASSES)) {
            check_labels(&[f.label()], 1)?;
            loss -= row[f.label()].max(f64::MIN_POSITIVE).ln();
            correct += (argmax(row) == f.label()) as usize;
        }
    }
    let n = frames.len() as f64;
    Ok((loss / n, 100.0 * correct as f64 / n))
}

/// Percentage of frames whose most probable class is their label.
pub fn evaluate(m: &CnnModel, frames: &[&Frame]) -> Result<f64> {
    Ok(loss_and_accuracy(m, frames)?.1)
}

/// Trains on `train`, returning the snapshot with the best validation
/// accuracy (earliest on ties) and per-epoch statistics.
pub fn train(
    model: CnnModel,
    train: &[&Frame],
    val: &[&Frame],
    cfg: &TrainConfig,
) -> Result<(CnnModel, Vec<EpochStats>)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::pre("training needs non-empty train and validation sets"));
    }
    let mut model = model;
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, CnnModel)> = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut substream(cfg.seed, &[tag::SHUFFLE, epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let frames: Vec<&Frame> = idx.iter().map(|&i| train[i]).collect();
            let labels: Vec<usize> = frames.iter().map(|f| f.label()).collect();
            let t = model.trace(&batch_input(&frames))?;
            correct += t.probs.chunks_exact(CLASSES).zip(&labels).filter(|(row, &y)| argmax(row) == y).count();
            let (loss, g) = model.backward(&t, &labels)?;
            loss_sum += loss * idx.len() as f64;
            adam.update(&mut model.params, &g, cfg);
        }
        let (val_loss, val_acc) = loss_and_accuracy(&model, val)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: 100.0 * correct as f64 / train.len() as f64,
            val_loss,
            val_acc,
        });
        if best.as_ref().is_none_or(|(acc, _)| val_acc > *acc) {
            best = Some((val_acc, model.clone()));
        }
    }
    let (_, snapshot) = best.expect("at least one epoch");
    Ok((snapshot, history))
}

/// Relative different-channel testing gap, `100 (same - diff) / same`.
pub fn rdtg(acc_same: f64, acc_diff: f64) -> Result<f64> {
    if !(acc_same > 0.0) || !acc_diff.is_finite() {
        return Err(Error::arg(format!("RDTG undefined for accuracies ({acc_same}, {acc_diff})")));
    }
    Ok(100.0 * (acc_same - acc_diff) / acc_same)
}

const CKPT_MAGIC: &[u8; 4] = b"MFPC";
const CKPT_VERSION: u8 = 1;

fn architecture() -> [u32; 12] {
    [ROWS, WIDTH, K1, C1, K2, C2, T2P, FLAT, H1, H2, CLASSES, LAYOUT.total].map(|v| v as u32)
}

/// Writes magic, version, the architecture descriptor and all parameters
/// as little-endian `f64`.
pub fn save_checkpoint(m: &CnnModel, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(5 + 48 + 8 * m.params.len());
    out.extend_from_slice(CKPT_MAGIC);
    out.push(CKPT_VERSION);
    for v in architecture() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in &m.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<CnnModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |msg: &str| Error::Format { path: path.to_path_buf(), msg: msg.into() };
    let head = 5 + 4 * architecture().len();
    if bytes.len() < head || &bytes[..4] != CKPT_MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    if bytes[4] != CKPT_VERSION {
        return Err(bad("unsupported checkpoint version"));
    }
    let arch: Vec<u32> =
        bytes[5..head].chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
    if arch != architecture() {
        return Err(bad("architecture descriptor does not match this model"));
    }
    if bytes.len() != head + 8 * LAYOUT.total {
        return Err(bad("parameter block has the wrong length"));
    }
    let params =
        bytes[head..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect::<Vec<_>>();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Ok(CnnModel { params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, seeded};

    fn random_batch(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n * ROWS * WIDTH).map(|_| gaussian(&mut rng)).collect()
    }

    #[test]
    fn geometry() {
        assert_eq!((T1, T1P, T2, T2P, FLAT), (154, 77, 71, 35, 1750));
        assert_eq!(LAYOUT.total, 350 + 50 + 35_000 + 50 + 448_000 + 256 + 20_480 + 80 + 800 + 10);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init(1);
        assert_eq!(a, init(1));
        assert_ne!(a, init(2));
        for (_, off, len, fan_in) in WEIGHT_BLOCKS {
            let lim = (6.0 / fan_in as f64).sqrt();
            assert!(a.params[off..off + len].iter().all(|w| w.abs() <= lim));
        }
        let biases = [(LAYOUT.b1, C1), (LAYOUT.b2, C2), (LAYOUT.b3, H1), (LAYOUT.b4, H2), (LAYOUT.b5, CLASSES)];
        for (off, len) in biases {
            assert!(a.params[off..off + len].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn forward_probabilities() {
        let m = init(3);
        let p = m.forward(&random_batch(4, 1)).unwrap();
        for row in p.chunks_exact(CLASSES) {
            assert!(row.iter().all(|&v| v > 0.0 && v.is_finite()));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let zero = m.forward(&vec![0.0; ROWS * WIDTH]).unwrap();
        assert!(zero.iter().all(|&v| (0.05..=0.15).contains(&v)), "{zero:?}");
        assert!(m.forward(&[0.0; 319]).is_err());
    }

    #[test]
    fn batching_and_permutation_consistency() {
        let m = init(4);
        let x = random_batch(3, 2);
        let all = m.forward(&x).unwrap();
        for b in 0..3 {
            let one = m.forward(&x[b * 320..(b + 1) * 320]).unwrap();
            for c in 0..CLASSES {
                assert!((one[c] - all[b * CLASSES + c]).abs() < 1e-12);
            }
        }
        let mut swapped = x[320..640].to_vec();
        swapped.extend_from_slice(&x[..320]);
        let p = m.forward(&swapped).unwrap();
        assert_eq!(p[..CLASSES], all[CLASSES..2 * CLASSES]);
    }

    #[test]
    fn loss_limits() {
        // zeroed output layer gives exactly uniform predictions
        let mut m = init(5);
        m.params[LAYOUT.w5..LAYOUT.total].iter_mut().for_each(|w| *w = 0.0);
        let (loss, _) = m.loss_and_grads(&random_batch(2, 3), &[1, 7]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        // a huge bias on the true class drives the loss to zero
        m.params[LAYOUT.b5 + 4] = 60.0;
        let (loss, _) = m.loss_and_grads(&random_batch(2, 3), &[4, 4]).unwrap();
        assert!(loss < 1e-20);
        assert!(m.loss_and_grads(&random_batch(1, 3), &[10]).is_err());
    }

    #[test]
    fn rdtg_values() {
        assert!((rdtg(44.0, 18.0).unwrap() - 59.0909).abs() < 1e-3);
        assert_eq!(rdtg(50.0, 50.0).unwrap(), 0.0);
        assert_eq!(rdtg(37.0, 0.0).unwrap(), 100.0);
        assert!(rdtg(0.0, 10.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init(6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
        let mut bytes = fs::read(&path).unwrap();
        bytes[9] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
