//! Space-time block codes in linear-dispersion form and their blind
//! identifiability calculus.
//!
//! A code maps `n` complex symbols `s = s_R + j s_I` to an `M x K` matrix
//! whose column `k` is `A_k s_R + j B_k s_I = C_k x`, with
//! `C_k = [A_k, j B_k]` and `x = [s_R; s_I]`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{kron, numerical_rank, pinv, unvec, CMatrix, C64, J, RANK_TOL};
use crate::rng::{gaussian, substream, tag};

/// One entry of a generator matrix: `sign * s_i` or `sign * conj(s_i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenEntry {
    Zero,
    Sym { sign: f64, index: usize, conj: bool },
}

const fn s(index: usize) -> GenEntry {
    GenEntry::Sym { sign: 1.0, index: index - 1, conj: false }
}
const fn ns(index: usize) -> GenEntry {
    GenEntry::Sym { sign: -1.0, index: index - 1, conj: false }
}
const fn sc(index: usize) -> GenEntry {
    GenEntry::Sym { sign: 1.0, index: index - 1, conj: true }
}
const fn nsc(index: usize) -> GenEntry {
    GenEntry::Sym { sign: -1.0, index: index - 1, conj: true }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StbcCode {
    name: String,
    m: usize,
    n: usize,
    k: usize,
    a: Vec<CMatrix>,
    b: Vec<CMatrix>,
}

impl StbcCode {
    /// Validated constructor: dimensions must agree, entries must be real and
    /// `[C_1 ... C_K]` must have full row rank.
    pub fn new(name: impl Into<String>, a: Vec<CMatrix>, b: Vec<CMatrix>) -> Result<Self> {
        let code = Self::from_parts_unchecked(name, a, b)?;
        let rank = numerical_rank(&code.c_tilde(), RANK_TOL)?;
        if rank < code.m {
            return Err(Error::pre(format!(
                "code '{}' has row rank {rank} < {} (redundant transmit antennas)",
                code.name, code.m
            )));
        }
        Ok(code)
    }

    /// Checks dimensions and realness only. Row-rank deficient codes built
    /// here are rejected later by [`identifiability`].
    pub fn from_parts_unchecked(name: impl Into<String>, a: Vec<CMatrix>, b: Vec<CMatrix>) -> Result<Self> {
        let name = name.into();
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::arg(format!("code '{name}': {} A matrices and {} B matrices", a.len(), b.len())));
        }
        let (m, n) = a[0].shape();
        if m == 0 || n == 0 {
            return Err(Error::arg(format!("code '{name}': empty dispersion matrices")));
        }
        for mat in a.iter().chain(&b) {
            if mat.shape() != (m, n) {
                return Err(Error::arg(format!(
                    "code '{name}': dispersion matrix {:?}, expected {m}x{n}",
                    mat.shape()
                )));
            }
            if mat.as_slice().iter().any(|z| z.im != 0.0 || !z.re.is_finite()) {
                return Err(Error::arg(format!("code '{name}': dispersion matrices must be real")));
            }
        }
        let k = a.len();
        Ok(Self { name, m, n, k, a, b })
    }

    /// Expands a generator matrix (M rows, K columns, entries in `±s_i`,
    /// `±conj(s_i)` or zero) into its dispersion matrices.
    pub fn from_generator(name: impl Into<String>, n: usize, gen: &[Vec<GenEntry>]) -> Result<Self> {
        let m = gen.len();
        let k = gen.first().map_or(0, Vec::len);
        if gen.iter().any(|row| row.len() != k) {
            return Err(Error::arg("ragged generator matrix"));
        }
        let mut a = vec![CMatrix::zeros(m, n); k];
        let mut b = vec![CMatrix::zeros(m, n); k];
        for (row, entries) in gen.iter().enumerate() {
            for (col, e) in entries.iter().enumerate() {
                if let GenEntry::Sym { sign, index, conj } = *e {
                    if index >= n {
                        return Err(Error::arg(format!("generator references s_{}", index + 1)));
                    }
                    a[col][(row, index)] += C64::new(sign, 0.0);
                    let bsign = if conj { -sign } else { sign };
                    b[col][(row, index)] += C64::new(bsign, 0.0);
                }
            }
        }
        Self::new(name, a, b)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Transmit antennas.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Symbols per block.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Epochs per block.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.k)
    }

    pub fn a(&self, k: usize) -> &CMatrix {
        &self.a[k]
    }

    pub fn b(&self, k: usize) -> &CMatrix {
        &self.b[k]
    }

    /// `C_k = [A_k, j B_k]`, M x 2n.
    pub fn c_k(&self, k: usize) -> CMatrix {
        self.a[k].hstack(&self.b[k].scale(J)).expect("A_k and B_k share dimensions")
    }

    /// `[C_1 C_2 ... C_K]`, M x 2nK.
    pub fn c_tilde(&self) -> CMatrix {
        let blocks: Vec<CMatrix> = (0..self.k).map(|k| self.c_k(k)).collect();
        CMatrix::hstack_all(&blocks).expect("blocks share row count")
    }

    /// Same dispersion structure with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let f = C64::new(factor, 0.0);
        Self::new(
            self.name.clone(),
            self.a.iter().map(|m| m.scale(f)).collect(),
            self.b.iter().map(|m| m.scale(f)).collect(),
        )
    }
}

/// Alamouti code, `(M, n, K) = (2, 2, 2)`.
pub fn alamouti() -> StbcCode {
    let gen = vec![vec![s(1), nsc(2)], vec![s(2), sc(1)]];
    StbcCode::from_generator("alamouti", 2, &gen).expect("alamouti generator is valid")
}

/// Rate-1/2 complex orthogonal design for three antennas, `(M, n, K) = (3, 4, 8)`.
pub fn tarokh_g3() -> StbcCode {
    let gen = vec![
        vec![s(1), ns(2), ns(3), ns(4), sc(1), nsc(2), nsc(3), nsc(4)],
        vec![s(2), s(1), s(4), ns(3), sc(2), sc(1), sc(4), nsc(3)],
        vec![s(3), ns(4), s(1), s(2), sc(3), nsc(4), sc(1), sc(2)],
    ];
    StbcCode::from_generator("tarokh_g3", 4, &gen).expect("g3 generator is valid")
}

/// Built-in codes.
pub fn codebook() -> Vec<StbcCode> {
    vec![alamouti(), tarokh_g3()]
}

/// Looks up a built-in code; accepts the table aliases `O1` and `O3`.
pub fn code_by_name(name: &str) -> Result<StbcCode> {
    match name.to_ascii_lowercase().as_str() {
        "alamouti" | "o1" => Ok(alamouti()),
        "tarokh_g3" | "g3" | "o3" => Ok(tarokh_g3()),
        other => Err(Error::arg(format!("unknown code '{other}'"))),
    }
}

/// Encodes `n` symbols into the M x K transmit matrix.
pub fn encode(code: &StbcCode, symbols: &[C64]) -> Result<CMatrix> {
    if symbols.len() != code.n {
        return Err(Error::arg(format!("code '{}' takes {} symbols, got {}", code.name, code.n, symbols.len())));
    }
    let sr = CMatrix::from_fn(code.n, 1, |i, _| C64::new(symbols[i].re, 0.0));
    let si = CMatrix::from_fn(code.n, 1, |i, _| C64::new(symbols[i].im, 0.0));
    let mut out = CMatrix::zeros(code.m, code.k);
    for k in 0..code.k {
        let ar = &code.a[k] * &sr;
        let bi = &code.b[k] * &si;
        for row in 0..code.m {
            out[(row, k)] = ar[(row, 0)] + J * bi[(row, 0)];
        }
    }
    Ok(out)
}

/// Real vector `x = [s_R; s_I]` of a symbol block.
pub fn real_stack(symbols: &[C64]) -> Vec<f64> {
    symbols.iter().map(|z| z.re).chain(symbols.iter().map(|z| z.im)).collect()
}

/// `C = [C_1; C_2; ...; C_K]`, MK x 2n.
pub fn stacked_code(code: &StbcCode) -> CMatrix {
    let blocks: Vec<CMatrix> = (0..code.k).map(|k| code.c_k(k)).collect();
    CMatrix::vstack_all(&blocks).expect("blocks share column count")
}

/// Structured text dump of a code's dispersion matrices.
pub fn codebook_dump(code: &StbcCode) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "code {}", code.name);
    let _ = writeln!(out, "M {} n {} K {}", code.m, code.n, code.k);
    for k in 0..code.k {
        for (label, mat) in [("A", &code.a[k]), ("B", &code.b[k])] {
            let _ = writeln!(out, "{label}{}", k + 1);
            for i in 0..code.m {
                let row: Vec<String> = (0..code.n).map(|j| format!("{}", mat[(i, j)].re)).collect();
                let _ = writeln!(out, "  {}", row.join(" "));
            }
        }
    }
    out
}

/// Which linear map a rank witness is drawn through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WitnessMode {
    /// `Z = unvec(Γ u)`, M x 2nK.
    Gamma,
    /// `Z = unvec([Γ; Φ] u)`, M x (2nK + M).
    GammaPhi,
}

/// Γ, Φ and the code ambiguity ρ.
///
/// With `Q` the unknown 2n x 2n mixing of the signal subspace and
/// `q = vec(Q)`, the blind solution set is `ĥ = (I_M ⊗ H) Φ q` subject to
/// `(I_2nK ⊗ H) Γ q = 0`. Γ stacks K blocks of 2nM rows; Φ has M² rows, so a
/// column of `[Γ; Φ] u` reshapes to `M x (2nK + M)`.
#[derive(Clone, Debug)]
pub struct IdentifiabilityReport {
    pub gamma: CMatrix,
    pub phi: CMatrix,
    pub rho: usize,
    pub rank_gamma: usize,
    pub rank_gamma_phi: usize,
    m: usize,
}

/// Relative tolerance used when ranking witness matrices `Z`.
pub const WITNESS_TOL: f64 = 1e-8;

struct Blocks {
    c: Vec<CMatrix>,
    /// `C_i^H (C̃ C̃^H)^{-1}` for each i, 2n x M.
    cig: Vec<CMatrix>,
}

fn blocks(code: &StbcCode) -> Result<Blocks> {
    let ct = code.c_tilde();
    let gram = &ct * &ct.adjoint();
    if numerical_rank(&gram, RANK_TOL)? < code.m {
        return Err(Error::pre(format!("code '{}': C̃ C̃^H is singular (C̃ not of full row rank)", code.name)));
    }
    let gram_inv = pinv(&gram, RANK_TOL)?;
    let c: Vec<CMatrix> = (0..code.k).map(|k| code.c_k(k)).collect();
    let cig = c.iter().map(|ci| &ci.adjoint() * &gram_inv).collect();
    Ok(Blocks { c, cig })
}

fn gamma_matrix(code: &StbcCode, b: &Blocks) -> CMatrix {
    let two_n = 2 * code.n;
    let eye = CMatrix::identity(two_n);
    let rows: Vec<CMatrix> = (0..code.k)
        .map(|k| {
            let mut block = kron(&eye, &b.c[k]);
            for i in 0..code.k {
                let coef = (&b.cig[i] * &b.c[k]).transpose();
                block = &block - &kron(&coef, &b.c[i]);
            }
            block
        })
        .collect();
    CMatrix::vstack_all(&rows).expect("uniform block widths")
}

/// Φ as it enters `ĥ = (I_M ⊗ H) Φ q`: `Σ_i (C_i^H (C̃C̃^H)^{-1})^T ⊗ C_i`, M² x 4n².
pub fn phi_matrix(code: &StbcCode) -> Result<CMatrix> {
    let b = blocks(code)?;
    Ok(phi_from_blocks(code, &b))
}

fn phi_from_blocks(code: &StbcCode, b: &Blocks) -> CMatrix {
    let mut phi = CMatrix::zeros(code.m * code.m, 4 * code.n * code.n);
    for i in 0..code.k {
        phi = &phi + &kron(&b.cig[i].transpose(), &b.c[i]);
    }
    phi
}

/// Variant of Φ right-multiplied by the first code block,
/// `Σ_i (C_i^H (C̃C̃^H)^{-1} C_1)^T ⊗ C_i` (2nM x 4n²). It parameterizes
/// `vec(Ĥ C_1)` instead of `vec(Ĥ)`, so it yields the same ρ whenever `C_1`
/// has full row rank.
pub fn phi_first_block(code: &StbcCode) -> Result<CMatrix> {
    let b = blocks(code)?;
    let mut phi = CMatrix::zeros(2 * code.n * code.m, 4 * code.n * code.n);
    for i in 0..code.k {
        let coef = (&b.cig[i] * &b.c[0]).transpose();
        phi = &phi + &kron(&coef, &b.c[i]);
    }
    Ok(phi)
}

/// Builds Γ and Φ and computes `ρ = rank([Γ; Φ]) - rank(Γ)`.
pub fn identifiability(code: &StbcCode) -> Result<IdentifiabilityReport> {
    identifiability_with_tol(code, RANK_TOL)
}

pub fn identifiability_with_tol(code: &StbcCode, rel_tol: f64) -> Result<IdentifiabilityReport> {
    let b = blocks(code)?;
    let gamma = gamma_matrix(code, &b);
    let phi = phi_from_blocks(code, &b);
    assert_eq!(gamma.cols(), 4 * code.n * code.n);
    assert_eq!(phi.cols(), gamma.cols());
    let stacked = gamma.vstack(&phi)?;
    let rank_gamma = numerical_rank(&gamma, rel_tol)?;
    let rank_gamma_phi = numerical_rank(&stacked, rel_tol)?;
    Ok(IdentifiabilityReport { rho: rank_gamma_phi - rank_gamma, gamma, phi, rank_gamma, rank_gamma_phi, m: code.m })
}

impl IdentifiabilityReport {
    /// Length of the vectors `u` accepted by [`rank_witness`] (`4n²`).
    pub fn witness_len(&self) -> usize {
        self.gamma.cols()
    }

    fn operator(&self, mode: WitnessMode) -> CMatrix {
        match mode {
            WitnessMode::Gamma => self.gamma.clone(),
            WitnessMode::GammaPhi => self.gamma.vstack(&self.phi).expect("same width"),
        }
    }

    /// Rank of the M-row reshaping of `op * u`.
    pub fn rank_witness(&self, u: &[C64], mode: WitnessMode) -> Result<usize> {
        let op = self.operator(mode);
        witness_rank(&op, self.m, u)
    }
}

fn witness_rank(op: &CMatrix, m: usize, u: &[C64]) -> Result<usize> {
    if u.len() != op.cols() {
        return Err(Error::arg(format!("witness vector of length {}, expected {}", u.len(), op.cols())));
    }
    let un = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if un == 0.0 {
        return Err(Error::pre("witness vector is zero"));
    }
    let z = op * &CMatrix::column_vector(u);
    let zn = z.frobenius_norm();
    let opn = op.frobenius_norm();
    if zn <= 1e-9 * opn * un {
        return Err(Error::pre("witness vector lies in the null space of the operator"));
    }
    let zm = unvec(z.as_slice(), m, op.rows() / m)?;
    numerical_rank(&zm, WITNESS_TOL)
}

/// Rank of the reshaped witness matrix for `u` (length `4n²`).
pub fn rank_witness(code: &StbcCode, u: &[C64], mode: WitnessMode) -> Result<usize> {
    identifiability(code)?.rank_witness(u, mode)
}

#[derive(Clone, Debug)]
pub struct RminSearch {
    /// Upper bound on the minimum witness rank.
    pub best_rank: usize,
    pub witness: Vec<C64>,
    pub field: WitnessField,
    /// Random starts consumed before the search stopped.
    pub trials_used: usize,
}

const MAX_PROJECTIONS: usize = 600;
const STALL_WINDOW: usize = 25;
const CONVERGED: f64 = 1e-13;
const GRAM_RESOLVED: f64 = 1e-6;

/// Number field the witness vector `u` ranges over.
///
/// The minimum witness rank depends on it: for the Alamouti code a rank-1
/// `Γ` witness exists only for complex `u`, while the `[Γ; Φ]` minimum is 2
/// for real `u` but 1 for complex `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessField {
    Real,
    Complex,
}

impl WitnessField {
    /// Field used by [`search_rmin`]: complex for `Γ`, real for `[Γ; Φ]`.
    pub fn default_for(mode: WitnessMode) -> Self {
        match mode {
            WitnessMode::Gamma => WitnessField::Complex,
            WitnessMode::GammaPhi => WitnessField::Real,
        }
    }
}

/// [`search_rmin_in`] over the default field for `mode`.
pub fn search_rmin(code: &StbcCode, mode: WitnessMode, trials: usize, seed: u64) -> Result<RminSearch> {
    search_rmin_in(code, mode, WitnessField::default_for(mode), trials, seed)
}

/// Heuristic minimum-rank witness search.
///
/// Each trial draws a Gaussian `u` in `field`, then for every target rank
/// below the current best alternates between the rank-`r` matrices (truncated
/// SVD) and the `field`-span of the operator columns until the (r+1)-th
/// singular value vanishes or progress stalls. A candidate is only accepted
/// once [`rank_witness`] confirms it, so `best_rank` is always achieved by
/// `witness`. Stops early on a rank-1 witness, the smallest possible.
pub fn search_rmin_in(
    code: &StbcCode,
    mode: WitnessMode,
    field: WitnessField,
    trials: usize,
    seed: u64,
) -> Result<RminSearch> {
    if trials == 0 {
        return Err(Error::arg("search needs at least one trial"));
    }
    let report = identifiability(code)?;
    let op = report.operator(mode);
    let m = code.m;
    let width = op.rows() / m;
    let span = RealSpan::new(&op, m, field)?;
    let unknowns = match field {
        WitnessField::Real => op.cols(),
        WitnessField::Complex => 2 * op.cols(),
    };

    let mut best: Option<(usize, Vec<C64>)> = None;
    let mut used = 0;
    for t in 0..trials {
        used = t + 1;
        let mut rng = substream(seed, &[tag::SEARCH, t as u64]);
        let x0: Vec<f64> = (0..unknowns).map(|_| gaussian(&mut rng)).collect();
        let u0 = span.to_complex(&x0);
        let Ok(r0) = witness_rank(&op, m, &u0) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| r0 < *b) {
            best = Some((r0, u0));
        }
        let z0 = span.apply(&x0);
        let ceiling = best.as_ref().map_or(r0, |(b, _)| *b);
        for target in 1..ceiling {
            let proj = |z: &DMatrix<C64>| span.project(z);
            if let Some(z) = project_to_rank(&z0, &proj, m, width, target) {
                let u = span.to_complex(&span.solve(&z));
                if let Ok(r) = witness_rank(&op, m, &u) {
                    if r <= target {
                        best = Some((r, u));
                        break;
                    }
                }
            }
        }
        if matches!(best, Some((1, _))) {
            break;
        }
    }
    let (best_rank, witness) = best.ok_or(Error::SearchFailure { trials })?;
    Ok(RminSearch { best_rank, witness, field, trials_used: used })
}

/// The operator as a real-linear map from the real coordinates of `u`
/// (`u` itself, or `[Re u; Im u]`) to `[Re(op u); Im(op u)]`.
struct RealSpan {
    real: DMatrix<f64>,
    /// Orthonormal basis of the real range.
    basis: DMatrix<f64>,
    pinv: DMatrix<f64>,
    m: usize,
    field: WitnessField,
}

impl RealSpan {
    fn new(op: &CMatrix, m: usize, field: WitnessField) -> Result<Self> {
        let (rows, cols) = op.shape();
        let real = match field {
            WitnessField::Real => {
                DMatrix::from_fn(2 * rows, cols, |i, j| if i < rows { op[(i, j)].re } else { op[(i - rows, j)].im })
            }
            WitnessField::Complex => DMatrix::from_fn(2 * rows, 2 * cols, |i, j| {
                let z = op[(i % rows, j % cols)];
                match (i < rows, j < cols) {
                    (true, true) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                    (false, false) => z.re,
                }
            }),
        };
        let d = real.clone().svd(true, true);
        let smax = d.singular_values.max();
        let keep: Vec<usize> =
            (0..d.singular_values.len()).filter(|&i| d.singular_values[i] > RANK_TOL * smax).collect();
        if keep.is_empty() {
            return Err(Error::pre("witness operator is zero"));
        }
        let u = d.u.as_ref().expect("u requested");
        let vt = d.v_t.as_ref().expect("v_t requested");
        let basis = DMatrix::from_fn(real.nrows(), keep.len(), |i, c| u[(i, keep[c])]);
        let mut pinv = DMatrix::zeros(real.ncols(), real.nrows());
        for &k in &keep {
            pinv += vt.row(k).transpose() * u.column(k).transpose() / d.singular_values[k];
        }
        Ok(RealSpan { real, basis, pinv, m, field })
    }

    fn to_complex(&self, x: &[f64]) -> Vec<C64> {
        match self.field {
            WitnessField::Real => x.iter().map(|&v| C64::new(v, 0.0)).collect(),
            WitnessField::Complex => {
                let h = x.len() / 2;
                (0..h).map(|i| C64::new(x[i], x[i + h])).collect()
            }
        }
    }

    fn realify(z: &DMatrix<C64>) -> DVector<f64> {
        let n = z.len();
        DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
    }

    fn complexify(&self, v: &DVector<f64>) -> DMatrix<C64> {
        let n = v.len() / 2;
        DMatrix::from_fn(self.m, n / self.m, |i, j| {
            let k = j * self.m + i;
            C64::new(v[k], v[k + n])
        })
    }

    fn apply(&self, x: &[f64]) -> DMatrix<C64> {
        self.complexify(&(&self.real * DVector::from_column_slice(x)))
    }

    /// Orthogonal projection onto the real range, rescaled to unit norm.
    fn project(&self, z: &DMatrix<C64>) -> DMatrix<C64> {
        let v = Self::realify(z);
        let w = &self.basis * (self.basis.transpose() * v);
        let n = w.norm().max(f64::MIN_POSITIVE);
        self.complexify(&(w / n))
    }

    fn solve(&self, z: &DMatrix<C64>) -> Vec<f64> {
        (&self.pinv * Self::realify(z)).as_slice().to_vec()
    }
}

/// Alternating projections between rank-`target` M x width matrices and the
/// subspace imposed by `proj`. Returns the converged point, if any.
///
/// The bulk of the iterations truncate through the eigenvectors of the small
/// M x M Gram matrix `Z Z^H`; once the tail energy is below what that route
/// resolves, a full-SVD phase polishes the point to `CONVERGED`.
fn project_to_rank(
    z0: &DMatrix<C64>,
    proj: &dyn Fn(&DMatrix<C64>) -> DMatrix<C64>,
    m: usize,
    width: usize,
    target: usize,
) -> Option<DMatrix<C64>> {
    let mut z = z0.clone();
    let mut best = f64::INFINITY;
    let mut last_improvement = 0;
    let mut polishing = false;
    for it in 0..MAX_PROJECTIONS {
        let (ratio, trunc) = if polishing {
            let d = z.clone().svd(true, true);
            let mut idx: Vec<usize> = (0..d.singular_values.len()).collect();
            idx.sort_by(|&a, &b| d.singular_values[b].total_cmp(&d.singular_values[a]));
            let sv = |i: usize| idx.get(i).map_or(0.0, |&j| d.singular_values[j]);
            let ratio = sv(target) / sv(0).max(f64::MIN_POSITIVE);
            let u = d.u.as_ref().expect("u");
            let vt = d.v_t.as_ref().expect("v_t");
            let mut t = DMatrix::<C64>::zeros(m, width);
            for &j in idx.iter().take(target) {
                t += u.column(j) * vt.row(j) * C64::new(d.singular_values[j], 0.0);
            }
            (ratio, t)
        } else {
            let gram = &z * z.adjoint();
            let eig = gram.symmetric_eigen();
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let lam = |i: usize| idx.get(i).map_or(0.0, |&j| eig.eigenvalues[j].max(0.0));
            let ratio = (lam(target) / lam(0).max(f64::MIN_POSITIVE)).sqrt();
            let mut basis = DMatrix::<C64>::zeros(m, target);
            for (c, &j) in idx.iter().take(target).enumerate() {
                basis.set_column(c, &eig.eigenvectors.column(j));
            }
            let t = &basis * (basis.adjoint() * &z);
            (ratio, t)
        };
        if polishing && ratio < CONVERGED {
            return Some(z);
        }
        if !polishing && ratio < GRAM_RESOLVED {
            polishing = true;
            best = ratio;
            last_improvement = it;
            continue;
        }
        if ratio < 0.5 * best {
            best = ratio;
            last_improvement = it;
        } else if it - last_improvement > STALL_WINDOW {
            return None;
        }
        z = proj(&trunc);
    }
    None
}

/// Smallest receive-antenna count for blind identifiability, `M - r_min + 1`.
pub fn min_rx_antennas(code: &StbcCode, r_min: usize) -> Result<usize> {
    if r_min < 1 || r_min > code.m {
        return Err(Error::arg(format!("r_min {r_min} outside [1, {}] for code '{}'", code.m, code.name)));
    }
    Ok(code.m - r_min + 1)
}
