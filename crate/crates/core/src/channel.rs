//! AWGN and flat Rayleigh MIMO channels, STBC block transmission and the
//! SIMO averaging combiner.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impairments::Signal;
use crate::numerics::{kron, CMatrix, C64};
use crate::rng::complex_gaussian;
use crate::stbc::{stacked_code, StbcCode};

/// Adds circular Gaussian noise at `snr_db` relative to the measured mean
/// power of `x`. `+inf` disables the channel.
pub fn awgn<R: Rng + ?Sized>(x: &Signal, snr_db: f64, rng: &mut R) -> Result<Signal> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::arg("SNR is NaN"));
    }
    let p = x.mean_power();
    if p == 0.0 {
        return Err(Error::pre("SNR is undefined for a zero-power signal"));
    }
    Ok(add_noise(x, p * 10f64.powf(-snr_db / 10.0), rng))
}

/// Adds circular Gaussian noise of per-sample variance `variance`.
pub fn add_noise<R: Rng + ?Sized>(x: &Signal, variance: f64, rng: &mut R) -> Signal {
    Signal {
        samples: x.samples.iter().map(|&z| z + complex_gaussian(rng, variance)).collect(),
        sample_rate: x.sample_rate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayleighSpec {
    /// Average path gain `E|h|^2` in dB.
    pub apg_db: f64,
    /// Maximum Doppler shift in Hz.
    pub mds_hz: f64,
    /// Time between successive channel states, seconds.
    pub block_interval: f64,
}

impl RayleighSpec {
    pub fn new(apg_db: f64, mds_hz: f64, block_interval: f64) -> Result<Self> {
        let s = Self { apg_db, mds_hz, block_interval };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.apg_db.is_finite() {
            return Err(Error::arg("APG must be finite"));
        }
        if !(self.mds_hz >= 0.0 && self.mds_hz.is_finite()) {
            return Err(Error::arg(format!("maximum Doppler shift {} must be >= 0", self.mds_hz)));
        }
        if !(self.block_interval > 0.0) {
            return Err(Error::arg("block interval must be positive"));
        }
        Ok(())
    }

    pub fn path_gain(&self) -> f64 {
        10f64.powf(self.apg_db / 10.0)
    }

    /// Gauss-Markov correlation between successive states, `J0(2 pi f_d T)`
    /// clamped to `[0, 1]`.
    pub fn correlation(&self) -> f64 {
        bessel_j0(2.0 * PI * self.mds_hz * self.block_interval).clamp(0.0, 1.0)
    }
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        // sum_k (-1)^k (x^2/4)^k / (k!)^2
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= -q / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // Hankel asymptotic expansion, two terms in each of P and Q.
        let y = 8.0 * x;
        let p = 1.0 - 9.0 / (2.0 * y * y) + 3675.0 / (8.0 * y.powi(4));
        let q = -1.0 / y + 75.0 / (2.0 * y.powi(3));
        let chi = x - PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Flat MIMO channel state, `L x M`.
#[derive(Clone, Debug, PartialEq)]
pub struct MimoChannel {
    pub h: CMatrix,
    pub spec: RayleighSpec,
}

impl MimoChannel {
    pub fn rx(&self) -> usize {
        self.h.rows()
    }

    pub fn tx(&self) -> usize {
        self.h.cols()
    }
}

/// i.i.d. circular Gaussian `L x M` gains with `E|h|^2 = 10^{apg/10}`.
pub fn draw_rayleigh<R: Rng + ?Sized>(l: usize, m: usize, spec: RayleighSpec, rng: &mut R) -> Result<MimoChannel> {
    if l == 0 || m == 0 {
        return Err(Error::arg("channel needs at least one antenna per side"));
    }
    spec.validate()?;
    let g = spec.path_gain();
    let h = CMatrix::from_fn(l, m, |_, _| complex_gaussian(rng, g));
    Ok(MimoChannel { h, spec })
}

/// One Gauss-Markov step `H' = rho H + sqrt(1 - rho^2) W`.
pub fn evolve<R: Rng + ?Sized>(ch: &MimoChannel, rng: &mut R) -> MimoChannel {
    let rho = ch.spec.correlation();
    if rho == 1.0 {
        return ch.clone();
    }
    let g = ch.spec.path_gain();
    let innov = (1.0 - rho * rho).sqrt();
    let h = ch.h.map(|z| z * rho + complex_gaussian(rng, g) * innov);
    MimoChannel { h, spec: ch.spec }
}

/// Passes an `M x T` transmit stream through `H`, adding noise of standard
/// deviation `noise_sigma` per receive sample. Returns `L x T`.
pub fn propagate<R: Rng + ?Sized>(ch: &MimoChannel, tx: &CMatrix, noise_sigma: f64, rng: &mut R) -> Result<CMatrix> {
    let mut rx = ch.h.matmul(tx)?;
    if noise_sigma > 0.0 {
        let v = noise_sigma * noise_sigma;
        rx = rx.map(|z| z + complex_gaussian(rng, v));
    }
    Ok(rx)
}

/// Rearranges `L x (K l)` epoch-major received samples into the `KL x l`
/// block matrix whose column `b` stacks epochs `1..K` of block `b`.
pub fn stack_epochs(rx: &CMatrix, k: usize) -> Result<CMatrix> {
    let (l_rx, t) = rx.shape();
    if k == 0 || t % k != 0 {
        return Err(Error::arg(format!("{t} samples do not split into {k}-epoch blocks")));
    }
    let blocks = t / k;
    Ok(CMatrix::from_fn(k * l_rx, blocks, |i, b| rx[(i % l_rx, b * k + i / l_rx)]))
}

/// `R = (I_K ⊗ H) C X + N` for a real `2n x l` symbol matrix `X`; the
/// channel is held static over all `l` blocks.
pub fn transmit_block<R: Rng + ?Sized>(
    ch: &MimoChannel,
    code: &StbcCode,
    x: &CMatrix,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    if ch.tx() != code.m() {
        return Err(Error::arg(format!("channel has {} transmit antennas, code needs {}", ch.tx(), code.m())));
    }
    if x.rows() != 2 * code.n() {
        return Err(Error::arg(format!("symbol matrix has {} rows, code needs {}", x.rows(), 2 * code.n())));
    }
    let mixing = kron(&CMatrix::identity(code.k()), &ch.h);
    let clean = &(&mixing * &stacked_code(code)) * x;
    if noise_sigma > 0.0 {
        let v = noise_sigma * noise_sigma;
        Ok(clean.map(|z| z + complex_gaussian(rng, v)))
    } else {
        Ok(clean)
    }
}

/// Pointwise mean of the per-antenna received signals.
pub fn simo_average(received: &[Signal]) -> Result<Signal> {
    let first = received.first().ok_or_else(|| Error::arg("no received signals to average"))?;
    if received.iter().any(|s| s.len() != first.len() || s.sample_rate != first.sample_rate) {
        return Err(Error::arg("received signals differ in length or sample rate"));
    }
    if received.len() == 1 {
        return Ok(first.clone());
    }
    let scale = 1.0 / received.len() as f64;
    let samples = (0..first.len()).map(|k| received.iter().map(|s| s.samples[k]).sum::<C64>() * scale).collect();
    Ok(Signal { samples, sample_rate: first.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stbc::{alamouti, encode, real_stack, tarokh_g3};

    fn unit_signal(len: usize, seed: u64) -> Signal {
        let mut rng = seeded(seed);
        Signal::new((0..len).map(|_| C64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU)).collect(), 1.0)
            .unwrap()
    }

    fn noise_power(y: &Signal, x: &Signal) -> f64 {
        y.samples.iter().zip(&x.samples).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn awgn_cases() {
        let x = unit_signal(1_000_000, 1);
        assert_eq!(awgn(&x, f64::INFINITY, &mut seeded(0)).unwrap(), x);
        let y = awgn(&x, 0.0, &mut seeded(2)).unwrap();
        assert!((noise_power(&y, &x) - 1.0).abs() < 0.03);
        let y = awgn(&x, 20.0, &mut seeded(3)).unwrap();
        let sigma2 = noise_power(&y, &x);
        assert!((sigma2 / 0.01 - 1.0).abs() < 0.03);
        // mean-zero noise
        let mean = y.samples.iter().zip(&x.samples).map(|(a, b)| a - b).sum::<C64>() / x.len() as f64;
        assert!(mean.norm() < 4.0 * (sigma2 / x.len() as f64).sqrt());

        let zero = Signal::new(vec![C64::new(0.0, 0.0); 4], 1.0).unwrap();
        assert!(matches!(awgn(&zero, 10.0, &mut seeded(0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn bessel_j0_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        // tabulated values
        for (x, want) in [
            (1.0, 0.765_197_686_557_966_6),
            (2.404_825_557_695_773, 0.0),
            (5.0, -0.177_596_771_314_338_3),
            (10.0, -0.245_935_764_451_348_3),
            (20.0, 0.167_024_664_340_583),
            (50.0, 0.055_812_327_669_251_86),
        ] {
            assert!((bessel_j0(x) - want).abs() < 1e-6, "J0({x}) = {}", bessel_j0(x));
        }
    }

    #[test]
    fn rayleigh_power_and_determinism() {
        for (apg, want) in [(0.0, 1.0), (-20.0, 0.01)] {
            let spec = RayleighSpec::new(apg, 0.0, 1.0).unwrap();
            let ch = draw_rayleigh(100, 1000, spec, &mut seeded(4)).unwrap();
            let p = ch.h.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e5;
            assert!((p / want - 1.0).abs() < 0.02, "apg {apg}: {p}");
        }
        let spec = RayleighSpec::new(0.0, 0.0, 1.0).unwrap();
        let a = draw_rayleigh(3, 3, spec, &mut seeded(5)).unwrap();
        let b = draw_rayleigh(3, 3, spec, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert!(draw_rayleigh(0, 3, spec, &mut seeded(5)).is_err());
        assert!(RayleighSpec::new(0.0, -1.0, 1.0).is_err());
        assert!(RayleighSpec::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn evolve_static_and_stationary() {
        let spec = RayleighSpec::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(spec.correlation(), 1.0);
        let ch = draw_rayleigh(3, 3, spec, &mut seeded(6)).unwrap();
        assert_eq!(evolve(&ch, &mut seeded(7)), ch);

        let spec = RayleighSpec::new(-10.0, 0.1, 1.0).unwrap();
        let mut ch = draw_rayleigh(2, 2, spec, &mut seeded(8)).unwrap();
        let mut rng = seeded(9);
        let mut acc = 0.0;
        let steps = 10_000;
        for _ in 0..steps {
            ch = evolve(&ch, &mut rng);
            acc += ch.h.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
        }
        let p = acc / steps as f64;
        // |h|² has unit relative variance and lag correlation ρ^{2k}; allow 4σ.
        let r2 = spec.correlation().powi(2);
        let n_eff = 4.0 * steps as f64 * (1.0 - r2) / (1.0 + r2);
        assert!((p / 0.1 - 1.0).abs() < 4.0 / n_eff.sqrt(), "{p}");
    }

    #[test]
    fn transmit_block_identity_channel() {
        let code = alamouti();
        let spec = RayleighSpec::new(0.0, 0.0, 1.0).unwrap();
        let ch = MimoChannel { h: CMatrix::identity(2), spec };
        let sy = [C64::new(0.5, -1.0), C64::new(2.0, 0.25)];
        let xv = real_stack(&sy);
        let x = CMatrix::from_fn(4, 1, |i, _| C64::new(xv[i], 0.0));
        let r = transmit_block(&ch, &code, &x, 0.0, &mut seeded(0)).unwrap();
        let enc = encode(&code, &sy).unwrap();
        assert_eq!(r.shape(), (4, 1));
        for k in 0..2 {
            for i in 0..2 {
                assert!((r[(k * 2 + i, 0)] - enc[(i, k)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn transmit_block_matches_per_epoch_oracle() {
        let code = tarokh_g3();
        let spec = RayleighSpec::new(0.0, 0.0, 1.0).unwrap();
        let mut rng = seeded(10);
        let ch = draw_rayleigh(3, 3, spec, &mut rng).unwrap();
        let l = 64;
        let x = CMatrix::from_fn(8, l, |_, _| C64::new(rng.gen::<f64>() - 0.5, 0.0));
        let r = transmit_block(&ch, &code, &x, 0.0, &mut rng).unwrap();
        assert_eq!(r.shape(), (24, 64));
        for b in 0..l {
            let xb = x.columns(b, 1);
            for k in 0..8 {
                let y = &(&ch.h * &code.c_k(k)) * &xb;
                for i in 0..3 {
                    assert!((y[(i, 0)] - r[(k * 3 + i, b)]).norm() < 1e-12);
                }
            }
        }
        // propagate + stack_epochs route
        let tx_cols: Vec<CMatrix> = (0..l)
            .map(|b| {
                let xb = x.columns(b, 1);
                let sy: Vec<C64> = (0..4).map(|i| C64::new(xb[(i, 0)].re, xb[(4 + i, 0)].re)).collect();
                encode(&code, &sy).unwrap()
            })
            .collect();
        let tx = CMatrix::hstack_all(&tx_cols).unwrap();
        let rx = propagate(&ch, &tx, 0.0, &mut rng).unwrap();
        let stacked = stack_epochs(&rx, 8).unwrap();
        assert!((&stacked - &r).max_abs() < 1e-12);

        let x1 = CMatrix::from_fn(8, 4, |_, _| C64::new(rng.gen::<f64>(), 0.0));
        let x2 = CMatrix::from_fn(8, 4, |_, _| C64::new(rng.gen::<f64>(), 0.0));
        let sum = transmit_block(&ch, &code, &(&x1 + &x2), 0.0, &mut rng).unwrap();
        let parts = &transmit_block(&ch, &code, &x1, 0.0, &mut rng).unwrap()
            + &transmit_block(&ch, &code, &x2, 0.0, &mut rng).unwrap();
        assert!((&sum - &parts).max_abs() < 1e-12);

        assert!(transmit_block(&ch, &alamouti(), &x1, 0.0, &mut rng).is_err());
        assert!(transmit_block(&ch, &code, &x1.submatrix(0, 0, 6, 4), 0.0, &mut rng).is_err());
    }

    #[test]
    fn simo_average_cases() {
        let s = unit_signal(100, 11);
        assert_eq!(simo_average(std::slice::from_ref(&s)).unwrap(), s);
        let avg = simo_average(&[s.clone(), s.clone(), s.clone()]).unwrap();
        for (a, b) in avg.samples.iter().zip(&s.samples) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(simo_average(&[]).is_err());
        let short = unit_signal(50, 12);
        assert!(simo_average(&[s.clone(), short]).is_err());

        let x = unit_signal(1_000_000, 13);
        let mut rng = seeded(14);
        let copies: Vec<Signal> = (0..4).map(|_| add_noise(&x, 1.0, &mut rng)).collect();
        let avg = simo_average(&copies).unwrap();
        assert!((noise_power(&avg, &x) / 0.25 - 1.0).abs() < 0.03);
    }
}
