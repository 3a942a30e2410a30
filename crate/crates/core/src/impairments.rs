//! Transmitter hardware impairments.
//!
//! A device is a fixed chain of memoryless distortions plus a seeded phase
//! noise process. The default chain order is IQ imbalance, DC offset, Saleh
//! PA, phase noise, carrier frequency offset.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::rng::gaussian;

/// Complex baseband samples at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub samples: Vec<C64>,
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::arg(format!("sample rate {sample_rate} must be positive")));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::arg("signal contains non-finite samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    fn map(&self, f: impl Fn(usize, C64) -> C64) -> Signal {
        Signal {
            samples: self.samples.iter().enumerate().map(|(k, &z)| f(k, z)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Impairment parameters of one simulated transmitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub device_id: String,
    /// Phase noise level in dBc/Hz; `None` disables phase noise.
    pub phase_noise_dbc_hz: Option<f64>,
    pub cfo_hz: f64,
    /// Linear gain deviation `g` of the quadrature branch.
    pub iq_gain_imb: f64,
    /// Quadrature skew in radians.
    pub iq_phase_imb: f64,
    /// Saleh AM/AM `(alpha, beta)`.
    pub amam: [f64; 2],
    /// Saleh AM/PM `(alpha, beta)`, radians.
    pub ampm: [f64; 2],
    pub dc_i: f64,
    pub dc_q: f64,
}

impl DeviceProfile {
    /// A profile whose chain is the identity.
    pub fn neutral(device_id: impl Into<String>) -> Self {
        Self {
            device_id: device_id.into(),
            phase_noise_dbc_hz: None,
            cfo_hz: 0.0,
            iq_gain_imb: 0.0,
            iq_phase_imb: 0.0,
            amam: [1.0, 0.0],
            ampm: [0.0, 0.0],
            dc_i: 0.0,
            dc_q: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.cfo_hz,
            self.iq_gain_imb,
            self.iq_phase_imb,
            self.amam[0],
            self.amam[1],
            self.ampm[0],
            self.ampm[1],
            self.dc_i,
            self.dc_q,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::arg(format!("device {}: non-finite parameter", self.device_id)));
        }
        if self.amam[0] <= 0.0 || self.amam[1] < 0.0 || self.ampm[1] < 0.0 {
            return Err(Error::arg(format!(
                "device {}: Saleh parameters need alpha_a > 0, beta_a >= 0, beta_phi >= 0",
                self.device_id
            )));
        }
        if let Some(level) = self.phase_noise_dbc_hz {
            if !(level < 0.0) {
                return Err(Error::arg(format!(
                    "device {}: phase noise level {level} dBc/Hz must be negative",
                    self.device_id
                )));
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn profile(
    id: &str,
    pn: f64,
    cfo: f64,
    g: f64,
    phi: f64,
    amam: [f64; 2],
    ampm: [f64; 2],
    dc_i: f64,
    dc_q: f64,
) -> DeviceProfile {
    DeviceProfile {
        device_id: id.to_string(),
        phase_noise_dbc_hz: Some(pn),
        cfo_hz: cfo,
        iq_gain_imb: g,
        iq_phase_imb: phi,
        amam,
        ampm,
        dc_i,
        dc_q,
    }
}

/// The bundled ten-device profile set.
pub fn default_profiles() -> Vec<DeviceProfile> {
    vec![
        profile("DV1", -60.0, 20.0, 0.08, 0.1, [2.1587, 1.1517], [4.0033, 9.104], 0.1, 0.15),
        profile("DV2", -60.15, 20.01, 0.1, 0.09, [2.1687, 1.1617], [4.1033, 9.124], 0.11, 0.14),
        profile("DV3", -59.9, 20.2, 0.09, 0.09, [2.1789, 1.1317], [4.0933, 9.151], 0.1, 0.11),
        profile("DV4", -60.1, 20.0, 0.108, 0.109, [2.1987, 1.1217], [4.1033, 9.194], 0.1, 0.1),
        profile("DV5", -60.0, 20.09, 0.1, 0.0, [2.1587, 1.1717], [4.093, 9.094], 0.089, 0.1008),
        profile("DV6", -59.95, 20.1, 0.12, 0.15, [2.1487, 1.1117], [4.1033, 9.156], 0.1, 0.098),
        profile("DV7", -59.93, 20.11, 0.11, 0.11, [2.1897, 1.1237], [4.1133, 9.135], 0.111, 0.1011),
        profile("DV8", -60.13, 20.099, 0.101, 0.14, [2.1387, 1.1627], [4.1533, 9.096], 0.12, 0.099),
        profile("DV9", -59.89, 19.9, 0.099, 0.08, [2.1548, 1.1917], [4.09833, 9.10056], 0.09, 0.0999),
        profile("DV10", -59.91, 19.98, 0.111, 0.105, [2.1777, 1.09874], [4.0987, 9.123], 0.101, 0.10015),
    ]
}

/// `y = mu x + nu conj(x)` with `mu = (1 + (1+g) e^{j phi}) / 2` and
/// `nu = (1 - (1+g) e^{j phi}) / 2`.
pub fn iq_imbalance(x: &Signal, g: f64, phi: f64) -> Signal {
    let rot = C64::from_polar(1.0 + g, phi);
    let mu = (1.0 + rot) * 0.5;
    let nu = (1.0 - rot) * 0.5;
    x.map(|_, z| mu * z + nu * z.conj())
}

pub fn dc_offset(x: &Signal, dc_i: f64, dc_q: f64) -> Signal {
    let d = C64::new(dc_i, dc_q);
    x.map(|_, z| z + d)
}

/// Memoryless Saleh amplifier.
pub fn saleh_pa(x: &Signal, amam: [f64; 2], ampm: [f64; 2]) -> Signal {
    let [aa, ba] = amam;
    let [ap, bp] = ampm;
    x.map(|_, z| {
        let r = z.norm();
        if r == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let r2 = r * r;
        let gain = aa / (1.0 + ba * r2);
        let shift = ap * r2 / (1.0 + bp * r2);
        z * gain * C64::from_polar(1.0, shift)
    })
}

/// `y[k] = x[k] e^{j 2 pi f k / fs}`.
pub fn cfo(x: &Signal, f_off: f64) -> Signal {
    if f_off == 0.0 {
        return x.clone();
    }
    let w = 2.0 * PI * f_off / x.sample_rate;
    x.map(|k, z| z * C64::from_polar(1.0, w * k as f64))
}

/// Default calibration offset for the phase-noise level, Hz.
pub const DEFAULT_PN_OFFSET_HZ: f64 = 1_000.0;

/// Ratio between the calibration offset and the filter's corner frequency.
const PN_CORNER_RATIO: f64 = 10.0;

/// Single-pole phase process `theta[k] = a theta[k-1] + w[k]`, started at
/// rest, whose one-sided PSD equals `level_dbc_hz` at `offset_hz`.
pub fn phase_noise_process<R: Rng + ?Sized>(
    len: usize,
    level_dbc_hz: f64,
    offset_hz: f64,
    sample_rate: f64,
    rng: &mut R,
) -> Vec<f64> {
    let (a, sigma_w) = phase_noise_filter(level_dbc_hz, offset_hz, sample_rate);
    let mut theta = Vec::with_capacity(len);
    let mut state = 0.0;
    for _ in 0..len {
        state = a * state + sigma_w * gaussian(rng);
        theta.push(state);
    }
    theta
}

/// Pole and drive standard deviation of the phase filter.
pub fn phase_noise_filter(level_dbc_hz: f64, offset_hz: f64, sample_rate: f64) -> (f64, f64) {
    let a = (-2.0 * PI * offset_hz / PN_CORNER_RATIO / sample_rate).exp();
    let w0 = 2.0 * PI * offset_hz / sample_rate;
    // |1 - a e^{-j w0}|^2
    let denom = 1.0 - 2.0 * a * w0.cos() + a * a;
    let target = 10f64.powf(level_dbc_hz / 10.0);
    // one-sided PSD: 2 sigma_w^2 / (fs |1 - a e^{-jw}|^2)
    let sigma_w = (target * sample_rate * denom / 2.0).sqrt();
    (a, sigma_w)
}

/// Multiplies by `e^{j theta[k]}`. `None` disables the stage.
pub fn phase_noise<R: Rng + ?Sized>(
    x: &Signal,
    level_dbc_hz: Option<f64>,
    offset_hz: f64,
    rng: &mut R,
) -> Result<Signal> {
    let Some(level) = level_dbc_hz.filter(|l| l.is_finite()) else {
        return Ok(x.clone());
    };
    if !(level < 0.0) {
        return Err(Error::arg(format!("phase noise level {level} dBc/Hz must be negative")));
    }
    if !(offset_hz > 0.0 && offset_hz < x.sample_rate / 2.0) {
        return Err(Error::arg(format!("phase noise offset {offset_hz} Hz out of band")));
    }
    let theta = phase_noise_process(x.len(), level, offset_hz, x.sample_rate, rng);
    Ok(x.map(|k, z| z * C64::from_polar(1.0, theta[k])))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    IqImbalance,
    DcOffset,
    SalehPa,
    PhaseNoise,
    Cfo,
}

/// Stage order and phase-noise calibration shared by all devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpairmentChain {
    pub order: Vec<Stage>,
    pub phase_noise_offset_hz: f64,
}

impl Default for ImpairmentChain {
    fn default() -> Self {
        Self {
            order: vec![Stage::IqImbalance, Stage::DcOffset, Stage::SalehPa, Stage::PhaseNoise, Stage::Cfo],
            phase_noise_offset_hz: DEFAULT_PN_OFFSET_HZ,
        }
    }
}

impl ImpairmentChain {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        if !self.order.iter().all(|s| seen.insert(*s)) {
            return Err(Error::arg("impairment chain repeats a stage"));
        }
        if !(self.phase_noise_offset_hz > 0.0) {
            return Err(Error::arg("phase noise offset must be positive"));
        }
        Ok(())
    }

    pub fn apply<R: Rng + ?Sized>(&self, p: &DeviceProfile, x: &Signal, rng: &mut R) -> Result<Signal> {
        if x.is_empty() {
            return Err(Error::arg("cannot impair an empty signal"));
        }
        p.validate()?;
        let mut y = x.clone();
        for stage in &self.order {
            y = match stage {
                Stage::IqImbalance => iq_imbalance(&y, p.iq_gain_imb, p.iq_phase_imb),
                Stage::DcOffset => dc_offset(&y, p.dc_i, p.dc_q),
                Stage::SalehPa => saleh_pa(&y, p.amam, p.ampm),
                Stage::PhaseNoise => phase_noise(&y, p.phase_noise_dbc_hz, self.phase_noise_offset_hz, rng)?,
                Stage::Cfo => cfo(&y, p.cfo_hz),
            };
        }
        Ok(y)
    }
}

/// Runs the default chain.
pub fn apply_device<R: Rng + ?Sized>(p: &DeviceProfile, x: &Signal, rng: &mut R) -> Result<Signal> {
    ImpairmentChain::default().apply(p, x, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, seeded};

    fn sig(samples: Vec<C64>) -> Signal {
        Signal::new(samples, 20e6).unwrap()
    }

    fn random_signal(len: usize, seed: u64) -> Signal {
        let mut rng = seeded(seed);
        sig((0..len).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
    }

    fn max_diff(a: &Signal, b: &Signal) -> f64 {
        a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn signal_rejects_bad_input() {
        assert!(Signal::new(vec![], 0.0).is_err());
        assert!(Signal::new(vec![C64::new(f64::INFINITY, 0.0)], 1.0).is_err());
    }

    #[test]
    fn iq_imbalance_cases() {
        let x = random_signal(64, 1);
        assert!(max_diff(&iq_imbalance(&x, 0.0, 0.0), &x) < 1e-15);

        // scalar oracle for x = 1: y = mu + nu = 1 regardless of (g, phi)
        let y = iq_imbalance(&sig(vec![C64::new(1.0, 0.0)]), 0.08, 0.1);
        let (g, phi) = (0.08f64, 0.1f64);
        let mu = C64::new(0.5 * (1.0 + (1.0 + g) * phi.cos()), 0.5 * (1.0 + g) * phi.sin());
        let nu = C64::new(0.5 * (1.0 - (1.0 + g) * phi.cos()), -0.5 * (1.0 + g) * phi.sin());
        assert!((y.samples[0] - (mu + nu)).norm() < 1e-15);
        // x = j: y = j (mu - nu)
        let y = iq_imbalance(&sig(vec![C64::new(0.0, 1.0)]), 0.08, 0.1);
        let want = C64::new(0.0, 1.0) * (mu - nu);
        assert!((y.samples[0] - want).norm() < 1e-15);
        assert!((want - C64::new(-(1.08 * 0.1f64.sin()), 1.08 * 0.1f64.cos())).norm() < 1e-15);

        // g = 0, phi = pi: mu = 0, nu = 1, so y = conj(x)
        let x = sig(vec![C64::new(0.0, 2.5), C64::new(0.0, -1.0)]);
        let y = iq_imbalance(&x, 0.0, PI);
        assert!((y.samples[0] - C64::new(0.0, -2.5)).norm() < 1e-15);
        assert!((y.samples[1] - C64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn dc_offset_cases() {
        let x = random_signal(1000, 2);
        assert_eq!(dc_offset(&x, 0.0, 0.0), x);
        let z = dc_offset(&sig(vec![C64::new(0.0, 0.0); 4]), 0.1, 0.15);
        assert!(z.samples.iter().all(|&s| s == C64::new(0.1, 0.15)));
        let y = dc_offset(&x, 0.1, 0.15);
        let mean = |s: &Signal| s.samples.iter().sum::<C64>() / s.len() as f64;
        assert!((mean(&y) - mean(&x) - C64::new(0.1, 0.15)).norm() < 1e-12);
    }

    #[test]
    fn saleh_cases() {
        let amam = [2.1587, 1.1517];
        let ampm = [4.0033, 9.104];
        let zero = saleh_pa(&sig(vec![C64::new(0.0, 0.0)]), amam, ampm);
        assert_eq!(zero.samples[0], C64::new(0.0, 0.0));

        let y = saleh_pa(&sig(vec![C64::new(1.0, 0.0)]), amam, ampm);
        assert!((y.samples[0].norm() - 2.1587 / 2.1517).abs() < 1e-12);
        assert!((y.samples[0].norm() - 1.00325).abs() < 1e-5);
        assert!((y.samples[0].arg() - 4.0033 / 10.104).abs() < 1e-12);

        let r = 1e-6;
        let y = saleh_pa(&sig(vec![C64::new(r, 0.0)]), amam, ampm);
        assert!((y.samples[0].norm() / r / amam[0] - 1.0).abs() < 1e-6);
        assert!(y.samples[0].arg().abs() < 1e-6);
    }

    #[test]
    fn saleh_is_rotation_equivariant() {
        let x = random_signal(256, 3);
        let rot = C64::from_polar(1.0, 0.7);
        let rotated = Signal { samples: x.samples.iter().map(|z| z * rot).collect(), sample_rate: x.sample_rate };
        let a = saleh_pa(&rotated, [2.0, 1.0], [4.0, 9.0]);
        let b = saleh_pa(&x, [2.0, 1.0], [4.0, 9.0]);
        let b_rot = Signal { samples: b.samples.iter().map(|z| z * rot).collect(), sample_rate: b.sample_rate };
        assert!(max_diff(&a, &b_rot) < 1e-12);
    }

    #[test]
    fn cfo_cases() {
        let x = random_signal(32, 4);
        assert_eq!(cfo(&x, 0.0), x);
        let ones = sig(vec![C64::new(1.0, 0.0); 8]);
        let y = cfo(&ones, 20e6 / 4.0);
        let cycle = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        for (k, z) in y.samples.iter().enumerate() {
            assert!((z - cycle[k % 4]).norm() < 1e-12);
        }
        let y = cfo(&x, 1234.5);
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_noise_preserves_modulus_and_can_be_disabled() {
        let x = random_signal(500, 5);
        let mut rng = seeded(1);
        assert_eq!(phase_noise(&x, None, 1e3, &mut rng).unwrap(), x);
        assert_eq!(phase_noise(&x, Some(f64::NEG_INFINITY), 1e3, &mut rng).unwrap(), x);
        let y = phase_noise(&x, Some(-60.0), 1e3, &mut rng).unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        assert!(phase_noise(&x, Some(3.0), 1e3, &mut rng).is_err());
    }

    /// Hann-windowed Welch estimate of the one-sided PSD at `freq`.
    fn welch_at(theta: &[f64], fs: f64, freq: f64, seg: usize) -> f64 {
        let window: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
        let wpow: f64 = window.iter().map(|w| w * w).sum();
        let w0 = 2.0 * PI * freq / fs;
        let mut acc = 0.0;
        let mut count = 0;
        let hop = seg / 2;
        let mut start = 0;
        while start + seg <= theta.len() {
            let mean = theta[start..start + seg].iter().sum::<f64>() / seg as f64;
            let mut re = 0.0;
            let mut im = 0.0;
            for i in 0..seg {
                let v = (theta[start + i] - mean) * window[i];
                re += v * (w0 * i as f64).cos();
                im -= v * (w0 * i as f64).sin();
            }
            acc += (re * re + im * im) / (fs * wpow);
            count += 1;
            start += hop;
        }
        2.0 * acc / count as f64
    }

    #[test]
    fn phase_noise_psd_matches_level_at_offset() {
        let fs = 20e6;
        for (level, offset) in [(-60.0, fs / 100.0), (-80.0, 1e5)] {
            let mut rng = seeded(6);
            let theta = phase_noise_process(1 << 20, level, offset, fs, &mut rng);
            let est = welch_at(&theta, fs, offset, 4096);
            let db = 10.0 * est.log10();
            assert!((db - level).abs() < 1.5, "level {level}: measured {db:.2} dBc/Hz");
        }
    }

    #[test]
    fn neutral_chain_is_identity() {
        let x = random_signal(160, 7);
        let mut rng = seeded(2);
        let y = apply_device(&DeviceProfile::neutral("n"), &x, &mut rng).unwrap();
        assert!(max_diff(&x, &y) < 1e-14);
    }

    #[test]
    fn devices_are_distinct_and_deterministic() {
        let x = random_signal(160, 8);
        let p = default_profiles();
        assert_eq!(p.len(), 10);
        let a1 = apply_device(&p[0], &x, &mut seeded(9)).unwrap();
        let a2 = apply_device(&p[0], &x, &mut seeded(9)).unwrap();
        let b = apply_device(&p[1], &x, &mut seeded(9)).unwrap();
        assert_eq!(a1, a2);
        assert!(a1.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        assert!(max_diff(&a1, &b) > 0.0);
        assert_eq!(a1.len(), x.len());
        assert_eq!(a1.sample_rate, x.sample_rate);
        assert!(apply_device(&p[0], &sig(vec![]), &mut seeded(9)).is_err());
    }

    #[test]
    fn profile_validation_and_serde() {
        let mut p = default_profiles()[0].clone();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<DeviceProfile>(&json).unwrap(), p);
        p.amam[0] = 0.0;
        assert!(p.validate().is_err());
        let mut chain = ImpairmentChain::default();
        chain.order.push(Stage::Cfo);
        assert!(chain.validate().is_err());
    }
}
