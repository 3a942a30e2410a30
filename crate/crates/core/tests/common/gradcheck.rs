//! Central finite differences of the CNN loss, computed by an independent
//! loop-based reimplementation of the network.
//!
//! Subtracting two full loss values would bury small gradients under
//! rounding (the loss is O(1), the step 1e-5). Instead the oracle propagates
//! the perturbation itself: starting at the one unit a parameter touches, it
//! carries the exact change of every downstream activation (ReLU and max
//! pooling are re-evaluated whenever a change could flip them) and finishes
//! with `ΔL = log1p(Σ_c p_c expm1(δ_c)) - δ_y` on the logits. The result is
//! `L(θ ± h) - L(θ)` evaluated without cancellation.
//!
//! A difference quotient only estimates a derivative when no ReLU or pooling
//! decision flips inside `[θ - h, θ + h]`. The oracle notices such flips and
//! retries that parameter with a tenfold smaller step (down to `MIN_STEP`).

use std::cell::Cell;

use mimofp::classifier::*;

pub const STEP: f64 = 1e-5;
pub const MIN_STEP: f64 = 1e-8;

thread_local! {
    static FLIPPED: Cell<bool> = const { Cell::new(false) };
}

struct Sample {
    x: Vec<f64>,
    label: usize,
    z1: Vec<f64>,
    p1: Vec<f64>,
    z2: Vec<f64>,
    p2: Vec<f64>,
    z3: Vec<f64>,
    z4: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// `relu(z + d) - relu(z)` without cancellation when no kink is crossed.
fn drelu(z: f64, d: f64) -> f64 {
    match (z > 0.0, z + d > 0.0) {
        (true, true) => d,
        (false, false) => 0.0,
        _ => {
            FLIPPED.with(|f| f.set(true));
            relu(z + d) - relu(z)
        }
    }
}

/// Change of `max(relu(a), relu(b))` when the pre-activations move by `da`, `db`.
fn dpool(a: f64, da: f64, b: f64, db: f64) -> f64 {
    let (ra, rb) = (relu(a), relu(b));
    let (na, nb) = (ra + drelu(a, da), rb + drelu(b, db));
    if ra >= rb && na >= nb {
        // the pooled value comes from a before and after
        drelu(a, da)
    } else if rb > ra && nb > na {
        drelu(b, db)
    } else {
        FLIPPED.with(|f| f.set(true));
        na.max(nb) - ra.max(rb)
    }
}

fn prepare(w: &[f64], x: &[f64], label: usize) -> Sample {
    let l = LAYOUT;
    let mut z1 = vec![0.0; ROWS * T1 * C1];
    for r in 0..ROWS {
        for t in 0..T1 {
            for c in 0..C1 {
                let mut s = w[l.b1 + c];
                for k in 0..K1 {
                    s += x[r * WIDTH + t + k] * w[l.w1 + k * C1 + c];
                }
                z1[(r * T1 + t) * C1 + c] = s;
            }
        }
    }
    let mut p1 = vec![0.0; ROWS * T1P * C1];
    for r in 0..ROWS {
        for t in 0..T1P {
            for c in 0..C1 {
                p1[(r * T1P + t) * C1 + c] =
                    relu(z1[(r * T1 + 2 * t) * C1 + c]).max(relu(z1[(r * T1 + 2 * t + 1) * C1 + c]));
            }
        }
    }
    let mut z2 = vec![0.0; T2 * C2];
    for t in 0..T2 {
        for c in 0..C2 {
            let mut s = w[l.b2 + c];
            for r in 0..ROWS {
                for k in 0..K2 {
                    for ci in 0..C1 {
                        s += p1[(r * T1P + t + k) * C1 + ci] * w[l.w2 + ((r * K2 + k) * C1 + ci) * C2 + c];
                    }
                }
            }
            z2[t * C2 + c] = s;
        }
    }
    let mut p2 = vec![0.0; FLAT];
    for t in 0..T2P {
        for c in 0..C2 {
            p2[t * C2 + c] = relu(z2[2 * t * C2 + c]).max(relu(z2[(2 * t + 1) * C2 + c]));
        }
    }
    let z3: Vec<f64> = (0..H1).map(|j| (0..FLAT).fold(w[l.b3 + j], |s, i| s + p2[i] * w[l.w3 + i * H1 + j])).collect();
    let z4: Vec<f64> =
        (0..H2).map(|j| (0..H1).fold(w[l.b4 + j], |s, i| s + relu(z3[i]) * w[l.w4 + i * H2 + j])).collect();
    let logits: Vec<f64> =
        (0..CLASSES).map(|c| (0..H2).fold(w[l.b5 + c], |s, i| s + relu(z4[i]) * w[l.w5 + i * CLASSES + c])).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    let probs: Vec<f64> = logits.iter().map(|v| (v - max).exp() / sum).collect();
    let loss = max + sum.ln() - logits[label];
    Sample { x: x.to_vec(), label, z1, p1, z2, p2, z3, z4, probs, loss }
}

fn loss_change(s: &Sample, dlogits: &[f64]) -> f64 {
    let inner: f64 = s.probs.iter().zip(dlogits).map(|(p, d)| p * d.exp_m1()).sum();
    inner.ln_1p() - dlogits[s.label]
}

/// Changes of the logits caused by changes `dz4` of the fc2 pre-activations.
fn from_z4(w: &[f64], s: &Sample, dz4: &[(usize, f64)]) -> Vec<f64> {
    let l = LAYOUT;
    let mut dl = vec![0.0; CLASSES];
    for &(i, d) in dz4 {
        let da = drelu(s.z4[i], d);
        if da != 0.0 {
            for (c, v) in dl.iter_mut().enumerate() {
                *v += da * w[l.w5 + i * CLASSES + c];
            }
        }
    }
    dl
}

fn from_z3(w: &[f64], s: &Sample, dz3: &[(usize, f64)]) -> Vec<f64> {
    let l = LAYOUT;
    let mut dz4 = vec![0.0; H2];
    for &(i, d) in dz3 {
        let da = drelu(s.z3[i], d);
        if da != 0.0 {
            for (j, v) in dz4.iter_mut().enumerate() {
                *v += da * w[l.w4 + i * H2 + j];
            }
        }
    }
    let dz4: Vec<(usize, f64)> = dz4.into_iter().enumerate().collect();
    from_z4(w, s, &dz4)
}

fn from_p2(w: &[f64], s: &Sample, dp2: &[(usize, f64)]) -> Vec<f64> {
    let l = LAYOUT;
    let mut dz3 = vec![0.0; H1];
    for &(i, d) in dp2 {
        if d != 0.0 {
            for (j, v) in dz3.iter_mut().enumerate() {
                *v += d * w[l.w3 + i * H1 + j];
            }
        }
    }
    let dz3: Vec<(usize, f64)> = dz3.into_iter().enumerate().collect();
    from_z3(w, s, &dz3)
}

/// `dz2` holds changes of conv2 pre-activations indexed `t * C2 + c`.
fn from_z2(w: &[f64], s: &Sample, dz2: &[f64]) -> Vec<f64> {
    let mut dp2 = Vec::new();
    for t in 0..T2P {
        for c in 0..C2 {
            let (a, b) = (2 * t * C2 + c, (2 * t + 1) * C2 + c);
            if dz2[a] != 0.0 || dz2[b] != 0.0 {
                dp2.push((t * C2 + c, dpool(s.z2[a], dz2[a], s.z2[b], dz2[b])));
            }
        }
    }
    from_p2(w, s, &dp2)
}

/// Logit changes when parameter `idx` moves by `eps`; the other parameters
/// are those `s` was prepared with.
fn dlogits(w: &[f64], s: &Sample, idx: usize, eps: f64) -> Vec<f64> {
    let l = LAYOUT;
    if idx >= l.b5 {
        let mut d = vec![0.0; CLASSES];
        d[idx - l.b5] = eps;
        return d;
    }
    if idx >= l.w5 {
        let (i, c) = ((idx - l.w5) / CLASSES, (idx - l.w5) % CLASSES);
        let mut d = vec![0.0; CLASSES];
        d[c] = eps * relu(s.z4[i]);
        return d;
    }
    if idx >= l.b4 {
        return from_z4(w, s, &[(idx - l.b4, eps)]);
    }
    if idx >= l.w4 {
        let (i, j) = ((idx - l.w4) / H2, (idx - l.w4) % H2);
        return from_z4(w, s, &[(j, eps * relu(s.z3[i]))]);
    }
    if idx >= l.b3 {
        return from_z3(w, s, &[(idx - l.b3, eps)]);
    }
    if idx >= l.w3 {
        let (i, j) = ((idx - l.w3) / H1, (idx - l.w3) % H1);
        return from_z3(w, s, &[(j, eps * s.p2[i])]);
    }
    let mut dz2 = vec![0.0; T2 * C2];
    if idx >= l.b2 {
        let c = idx - l.b2;
        for t in 0..T2 {
            dz2[t * C2 + c] = eps;
        }
        return from_z2(w, s, &dz2);
    }
    if idx >= l.w2 {
        let (patch, c) = ((idx - l.w2) / C2, (idx - l.w2) % C2);
        let (r, k, ci) = (patch / (K2 * C1), (patch / C1) % K2, patch % C1);
        for t in 0..T2 {
            dz2[t * C2 + c] = eps * s.p1[(r * T1P + t + k) * C1 + ci];
        }
        return from_z2(w, s, &dz2);
    }
    // conv1: one channel of z1 changes everywhere
    let c = if idx >= l.b1 { idx - l.b1 } else { (idx - l.w1) % C1 };
    let tap = (idx < l.b1).then(|| (idx - l.w1) / C1);
    let mut dp1 = vec![0.0; ROWS * T1P];
    for r in 0..ROWS {
        for t in 0..T1P {
            let d = |tt: usize| match tap {
                Some(k) => eps * s.x[r * WIDTH + tt + k],
                None => eps,
            };
            let (a, b) = ((r * T1 + 2 * t) * C1 + c, (r * T1 + 2 * t + 1) * C1 + c);
            dp1[r * T1P + t] = dpool(s.z1[a], d(2 * t), s.z1[b], d(2 * t + 1));
        }
    }
    for t in 0..T2 {
        for c2 in 0..C2 {
            let mut v = 0.0;
            for r in 0..ROWS {
                for k in 0..K2 {
                    v += dp1[r * T1P + t + k] * w[l.w2 + ((r * K2 + k) * C1 + c) * C2 + c2];
                }
            }
            dz2[t * C2 + c2] = v;
        }
    }
    from_z2(w, s, &dz2)
}

pub struct Report {
    /// Largest relative error over all parameters.
    pub max_rel: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Mean loss of the batch according to the oracle.
    pub loss: f64,
    /// Parameters whose step had to shrink below `STEP` to avoid a kink.
    pub refined: usize,
}

/// `|a - b| / max(|a|, |b|)`, taken as 0 when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares `grads` with central differences for every parameter of `model`.
#[allow(clippy::needless_range_loop)]
pub fn check(model: &CnnModel, x: &[f64], labels: &[usize], grads: &[f64]) -> Report {
    let w = &model.params;
    let samples: Vec<Sample> =
        labels.iter().enumerate().map(|(b, &y)| prepare(w, &x[b * ROWS * WIDTH..(b + 1) * ROWS * WIDTH], y)).collect();
    let n = samples.len() as f64;
    let mut report = Report {
        max_rel: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        loss: samples.iter().map(|s| s.loss).sum::<f64>() / n,
        refined: 0,
    };
    for idx in 0..w.len() {
        let mut step = STEP;
        let numeric = loop {
            FLIPPED.with(|f| f.set(false));
            let mut diff = 0.0;
            for s in &samples {
                let up = loss_change(s, &dlogits(w, s, idx, step));
                let down = loss_change(s, &dlogits(w, s, idx, -step));
                diff += up - down;
            }
            let flipped = FLIPPED.with(Cell::get);
            if !flipped || step <= MIN_STEP {
                break diff / n / (2.0 * step);
            }
            step /= 10.0;
        };
        report.refined += (step < STEP) as usize;
        let e = rel_err(grads[idx], numeric);
        if e > report.max_rel {
            report = Report { max_rel: e, worst_index: idx, analytic: grads[idx], numeric, ..report };
        }
    }
    report
}
