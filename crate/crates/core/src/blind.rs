//! Subspace blind channel estimation.
//!
//! For a received block matrix `R = (I_K ⊗ H) C S + N`, the left null space
//! `N_L` of the noise-free part satisfies `N_L^H (I_K ⊗ H) C = 0`. Stacking
//! the K epochs gives `Δ vec(H) = 0` with
//! `Δ = Σ_k C_k^T ⊗ (N_L^H E_k)`, where `E_k` selects the rows of epoch `k`.
//! The channel is the right singular vector of Δ for its smallest singular
//! value, up to one complex scalar.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{kron, left_null_basis, pinv, svd, CMatrix, C64, LSTSQ_TOL};
use crate::stbc::{stacked_code, StbcCode};

/// Relative threshold for counting near-zero singular values of Δ in
/// noiseless runs.
pub const AMB_TOL_NOISELESS: f64 = 1e-6;
/// Threshold used for noisy runs, where noise lifts the whole spectrum.
pub const AMB_TOL_NOISY: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimate {
    /// `vec(Ĥ)` (column-major, L x M), unit norm, first significant entry
    /// real and positive.
    pub h_hat: Vec<C64>,
    /// Singular values of Δ, descending.
    pub sigma: Vec<f64>,
    /// Dimension of the numerical null space of Δ (at least 1).
    pub ambiguity_dim: usize,
    pub l_rx: usize,
    pub m: usize,
}

impl ChannelEstimate {
    /// `Ĥ` as an `L x M` matrix.
    pub fn h_matrix(&self) -> CMatrix {
        CMatrix::from_vec_unchecked(self.l_rx, self.m, self.h_hat.clone())
    }
}

#[derive(Clone, Debug)]
pub struct DeltaMatrix {
    pub delta: CMatrix,
    pub l_rx: usize,
}

/// Orthonormal basis of the estimated noise subspace: left singular vectors
/// `signal_dim + 1 ..= KL` of `R`.
pub fn noise_subspace(r: &CMatrix, signal_dim: usize) -> Result<CMatrix> {
    let (rows, cols) = r.shape();
    if rows <= signal_dim {
        return Err(Error::pre(format!(
            "received matrix has {rows} rows; a nontrivial left null space needs more than {signal_dim}"
        )));
    }
    if cols < signal_dim {
        return Err(Error::pre(format!(
            "{cols} received blocks cannot span a {signal_dim}-dimensional signal subspace"
        )));
    }
    left_null_basis(r, rows - signal_dim)
}

/// `Δ = Σ_k C_k^T ⊗ (N_L^H E_k)`.
pub fn build_delta(code: &StbcCode, noise_basis: &CMatrix, l_rx: usize) -> Result<DeltaMatrix> {
    let kl = code.k() * l_rx;
    if l_rx == 0 || noise_basis.rows() != kl {
        return Err(Error::arg(format!("noise basis has {} rows, expected K*L = {kl}", noise_basis.rows())));
    }
    let nh = noise_basis.adjoint();
    let d = nh.rows();
    let mut delta = CMatrix::zeros(2 * code.n() * d, code.m() * l_rx);
    for k in 0..code.k() {
        // N_L^H E_k: the columns of N_L^H belonging to epoch k
        let block = nh.submatrix(0, k * l_rx, d, l_rx);
        delta = &delta + &kron(&code.c_k(k).transpose(), &block);
    }
    Ok(DeltaMatrix { delta, l_rx })
}

/// Blind estimate with the noiseless ambiguity threshold.
pub fn estimate(r: &CMatrix, code: &StbcCode, l_rx: usize) -> Result<ChannelEstimate> {
    estimate_with_tol(r, code, l_rx, AMB_TOL_NOISELESS)
}

pub fn estimate_with_tol(r: &CMatrix, code: &StbcCode, l_rx: usize, amb_tol: f64) -> Result<ChannelEstimate> {
    if !(amb_tol > 0.0 && amb_tol < 1.0) {
        return Err(Error::arg(format!("ambiguity tolerance {amb_tol} outside (0, 1)")));
    }
    if r.rows() != code.k() * l_rx {
        return Err(Error::arg(format!("received matrix has {} rows, expected K*L = {}", r.rows(), code.k() * l_rx)));
    }
    let nl = noise_subspace(r, 2 * code.n())?;
    let delta = build_delta(code, &nl, l_rx)?.delta;
    let d = svd(&delta)?;
    let width = delta.cols();
    let smax = d.sigma[0];
    let significant = d.sigma.iter().filter(|&&s| s > amb_tol * smax).count();
    let ambiguity_dim = (width - significant).max(1);
    let h_hat = canonical_phase(d.v.column(width - 1).to_vec());
    Ok(ChannelEstimate { h_hat, sigma: d.sigma, ambiguity_dim, l_rx, m: code.m() })
}

/// Unit norm, with the first entry above 1e-8 of the peak magnitude rotated
/// onto the positive real axis.
fn canonical_phase(mut h: Vec<C64>) -> Vec<C64> {
    let norm = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let peak = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if norm == 0.0 {
        return h;
    }
    let anchor = h.iter().find(|z| z.norm() > 1e-8 * peak).copied().unwrap_or(C64::new(1.0, 0.0));
    let rot = anchor.conj() / anchor.norm() / norm;
    h.iter_mut().for_each(|z| *z *= rot);
    h
}

/// Least-squares scalar `α` minimizing `‖α ĥ - h‖`.
pub fn align_scale(h_hat: &[C64], h_true: &[C64]) -> Result<C64> {
    if h_hat.len() != h_true.len() {
        return Err(Error::arg(format!("vectors of length {} and {}", h_hat.len(), h_true.len())));
    }
    let nn: f64 = h_hat.iter().map(|z| z.norm_sqr()).sum();
    if nn == 0.0 {
        return Err(Error::pre("estimate is the zero vector"));
    }
    let inner: C64 = h_hat.iter().zip(h_true).map(|(a, b)| a.conj() * b).sum();
    Ok(inner / nn)
}

/// `min_α ‖α ĥ - h‖ / ‖h‖`, the sine of the angle between the two lines.
pub fn alignment_error(h_hat: &[C64], h_true: &[C64]) -> Result<f64> {
    let alpha = align_scale(h_hat, h_true)?;
    let resid: f64 = h_hat.iter().zip(h_true).map(|(a, b)| (alpha * a - b).norm_sqr()).sum::<f64>().sqrt();
    let hn = h_true.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if hn == 0.0 {
        return Err(Error::arg("reference channel is zero"));
    }
    Ok(resid / hn)
}

/// Least-squares symbol recovery `x̂ = ((I_K ⊗ Ĥ) C)^+ r` for every column of
/// `R`. The result is `2n x l` and complex: with `ĥ = α h` it equals `x / α`.
pub fn equalize(r: &CMatrix, h_hat: &[C64], code: &StbcCode, l_rx: usize) -> Result<CMatrix> {
    if h_hat.len() != l_rx * code.m() {
        return Err(Error::arg(format!(
            "channel vector of length {}, expected L*M = {}",
            h_hat.len(),
            l_rx * code.m()
        )));
    }
    if r.rows() != code.k() * l_rx {
        return Err(Error::arg(format!("received matrix has {} rows, expected K*L = {}", r.rows(), code.k() * l_rx)));
    }
    let h = CMatrix::from_vec_unchecked(l_rx, code.m(), h_hat.to_vec());
    let design = &kron(&CMatrix::identity(code.k()), &h) * &stacked_code(code);
    let d = svd(&design)?;
    let smax = d.sigma[0];
    let rank = d.sigma.iter().filter(|&&s| smax > 0.0 && s > LSTSQ_TOL * smax).count();
    if rank < 2 * code.n() {
        return Err(Error::pre(format!(
            "equalizer design matrix has rank {rank} < {}; block unrecoverable",
            2 * code.n()
        )));
    }
    Ok(&pinv(&design, LSTSQ_TOL)? * r)
}

/// Complex symbols `ŝ_i = x̂_i + j x̂_{n+i}` from each column of `x̂`,
/// concatenated column by column.
pub fn symbols_from_blocks(x_hat: &CMatrix, n: usize) -> Result<Vec<C64>> {
    if x_hat.rows() != 2 * n {
        return Err(Error::arg(format!("expected {} rows, got {}", 2 * n, x_hat.rows())));
    }
    let j = C64::new(0.0, 1.0);
    Ok((0..x_hat.cols())
        .flat_map(|b| (0..n).map(move |i| (b, i)))
        .map(|(b, i)| x_hat[(i, b)] + j * x_hat[(n + i, b)])
        .collect())
}

/// Singular spectra as CSV: `estimate,index,sigma`.
pub fn spectrum_csv(estimates: &[ChannelEstimate]) -> String {
    let mut out = String::from("estimate,index,sigma\n");
    for (e, est) in estimates.iter().enumerate() {
        for (i, s) in est.sigma.iter().enumerate() {
            let _ = writeln!(out, "{e},{i},{s:.6e}");
        }
    }
    out
}
