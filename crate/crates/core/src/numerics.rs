//! Dense complex linear algebra: Kronecker products, column-major
//! vectorization, SVD, numerical rank, null spaces and least squares.
//!
//! All matrices are stored column-major; `vec` stacks columns.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const J: C64 = C64 { re: 0.0, im: 1.0 };

/// Default relative tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Dense complex matrix, column-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, " ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, " {:+.4}{:+.4}j", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    /// Builds a matrix from column-major entries. Rejects non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::arg(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(p) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::arg(format!("non-finite entry at column-major index {p}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![ZERO; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self::from_vec_unchecked(rows, cols, data)
    }

    /// Row-major real entries, convenient for literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    /// Row-major complex entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn column_vector(v: &[C64]) -> Self {
        Self::from_vec_unchecked(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Column-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [C64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    /// Columns `range` as a new matrix.
    pub fn columns(&self, start: usize, count: usize) -> Self {
        assert!(start + count <= self.cols);
        Self::from_vec_unchecked(self.rows, count, self.data[start * self.rows..(start + count) * self.rows].to_vec())
    }

    pub fn submatrix(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols);
        Self::from_fn(rows, cols, |i, j| self[(row0 + i, col0 + j)])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, mut f: impl FnMut(C64) -> C64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&z| f(z)).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `[self other]`
    pub fn hstack(&self, other: &CMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::arg(format!("hstack of {} and {} rows", self.rows, other.rows)));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self::from_vec_unchecked(self.rows, self.cols + other.cols, data))
    }

    /// `[self; other]`
    pub fn vstack(&self, other: &CMatrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::arg(format!("vstack of {} and {} columns", self.cols, other.cols)));
        }
        let r = self.rows + other.rows;
        Ok(Self::from_fn(r, self.cols, |i, j| if i < self.rows { self[(i, j)] } else { other[(i - self.rows, j)] }))
    }

    pub fn hstack_all(parts: &[CMatrix]) -> Result<Self> {
        let (first, rest) = parts.split_first().ok_or_else(|| Error::arg("hstack of no matrices"))?;
        rest.iter().try_fold(first.clone(), |acc, m| acc.hstack(m))
    }

    pub fn vstack_all(parts: &[CMatrix]) -> Result<Self> {
        let (first, rest) = parts.split_first().ok_or_else(|| Error::arg("vstack of no matrices"))?;
        rest.iter().try_fold(first.clone(), |acc, m| acc.vstack(m))
    }

    /// Matrix product; errors on inner-dimension mismatch.
    pub fn matmul(&self, rhs: &CMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::arg(format!("product of {}x{} and {}x{}", self.rows, self.cols, rhs.rows, rhs.cols)));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let oc = j * self.rows;
            for p in 0..self.cols {
                let b = rhs.data[j * rhs.rows + p];
                if b == ZERO {
                    continue;
                }
                let ac = p * self.rows;
                for i in 0..self.rows {
                    out.data[oc + i] += self.data[ac + i] * b;
                }
            }
        }
        Ok(out)
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_vec_unchecked(m.nrows(), m.ncols(), m.as_slice().to_vec())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in add");
        CMatrix::from_vec_unchecked(self.rows, self.cols, self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in sub");
        CMatrix::from_vec_unchecked(self.rows, self.cols, self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.map(|z| -z)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    /// Panics on shape mismatch; use [`CMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[i, j] * b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Column-major stacking into a column vector.
pub fn vec(a: &CMatrix) -> CMatrix {
    CMatrix::from_vec_unchecked(a.rows * a.cols, 1, a.data.clone())
}

/// Inverse of [`vec`].
pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::arg(format!("cannot reshape {} entries into {rows}x{cols}", v.len())));
    }
    Ok(CMatrix::from_vec_unchecked(rows, cols, v.to_vec()))
}

/// Full singular value decomposition `A = U diag(sigma) V^H`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// rows x rows, unitary.
    pub u: CMatrix,
    /// min(rows, cols) values, descending.
    pub sigma: Vec<f64>,
    /// cols x cols, unitary.
    pub v: CMatrix,
}

impl SvdResult {
    /// Rebuilds `U diag(sigma) V^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let k = self.sigma.len();
        let us = CMatrix::from_fn(m, k, |i, j| self.u[(i, j)] * self.sigma[j]);
        let vh = CMatrix::from_fn(k, n, |i, j| self.v[(j, i)].conj());
        &us * &vh
    }
}

/// Full SVD. `U` and `V` are square; columns beyond the rank are completed
/// to orthonormal bases deterministically.
pub fn svd(a: &CMatrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(Error::arg("svd of an empty matrix"));
    }
    if a.rows >= a.cols {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.adjoint())?;
        Ok(SvdResult { u: t.v, sigma: t.sigma, v: t.u })
    }
}

fn svd_tall(a: &CMatrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let dec = nalgebra::linalg::SVD::try_new(a.to_nalgebra(), true, true, f64::EPSILON, 0)
        .ok_or(Error::NonConvergence { rows: m, cols: n })?;
    let u_thin = dec.u.as_ref().map(CMatrix::from_nalgebra).expect("u requested");
    let v_t = dec.v_t.as_ref().map(CMatrix::from_nalgebra).expect("v_t requested");
    let sv: Vec<f64> = dec.singular_values.iter().copied().collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]).then(x.cmp(&y)));

    let sigma: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    let mut u_cols = Vec::with_capacity(m * m);
    let mut v_cols = Vec::with_capacity(n * n);
    for &i in &order {
        u_cols.extend_from_slice(u_thin.column(i));
        // row i of V^H, conjugated, is column i of V
        v_cols.extend((0..n).map(|j| v_t[(i, j)].conj()));
    }
    let u = complete_orthonormal(CMatrix::from_vec_unchecked(m, n, u_cols));
    Ok(SvdResult { u, sigma, v: CMatrix::from_vec_unchecked(n, n, v_cols) })
}

/// Extends orthonormal columns `q` (m x k) to an m x m unitary by
/// Gram-Schmidt against the canonical basis, with re-orthogonalization.
fn complete_orthonormal(q: CMatrix) -> CMatrix {
    let (m, k) = q.shape();
    if k == m {
        return q;
    }
    let mut cols: Vec<Vec<C64>> = (0..k).map(|j| q.column(j).to_vec()).collect();
    // Canonical vectors in order of smallest existing projection, for conditioning.
    let mut weight: Vec<(f64, usize)> =
        (0..m).map(|i| (cols.iter().map(|c| c[i].norm_sqr()).sum::<f64>(), i)).collect();
    weight.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(_, e) in &weight {
        if cols.len() == m {
            break;
        }
        let mut w = vec![ZERO; m];
        w[e] = ONE;
        for _ in 0..2 {
            for c in &cols {
                let proj: C64 = c.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                for (wi, ci) in w.iter_mut().zip(c) {
                    *wi -= proj * ci;
                }
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(w.into_iter().map(|z| z / norm).collect());
        }
    }
    debug_assert_eq!(cols.len(), m);
    CMatrix::from_vec_unchecked(m, m, cols.concat())
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::arg(format!("rank tolerance {rel_tol} outside (0, 1)")));
    }
    if a.is_empty() {
        return Ok(0);
    }
    let s = svd(a)?.sigma;
    Ok(rank_from_sigma(&s, rel_tol))
}

pub(crate) fn rank_from_sigma(sigma: &[f64], rel_tol: f64) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// The last `dim` left singular vectors of `a`, as columns.
pub fn left_null_basis(a: &CMatrix, dim: usize) -> Result<CMatrix> {
    if dim > a.rows {
        return Err(Error::arg(format!("null basis of dimension {dim} requested for {} rows", a.rows)));
    }
    if dim == 0 {
        return Ok(CMatrix::zeros(a.rows, 0));
    }
    let u = svd(a)?.u;
    Ok(u.columns(a.rows - dim, dim))
}

/// Relative singular-value cutoff used by [`least_squares`].
pub const LSTSQ_TOL: f64 = 1e-10;

/// Minimum-norm least-squares solution of `a x = b` via the SVD
/// pseudo-inverse.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.rows != b.rows {
        return Err(Error::arg(format!("least squares with {} equations and {} right-hand rows", a.rows, b.rows)));
    }
    Ok(&pinv(a, LSTSQ_TOL)? * b)
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(a: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    let (m, n) = a.shape();
    if a.is_empty() {
        return Ok(CMatrix::zeros(n, m));
    }
    let d = svd(a)?;
    let smax = d.sigma[0];
    let mut out = CMatrix::zeros(n, m);
    for (k, &s) in d.sigma.iter().enumerate() {
        if smax == 0.0 || s <= rel_tol * smax {
            continue;
        }
        for j in 0..m {
            let uc = d.u[(j, k)].conj() / s;
            for i in 0..n {
                out[(i, j)] += d.v[(i, k)] * uc;
            }
        }
    }
    Ok(out)
}

/// Inverse of a square matrix; errors when numerically singular.
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    if a.rows != a.cols {
        return Err(Error::arg("inverse of a non-square matrix"));
    }
    let d = svd(a)?;
    if rank_from_sigma(&d.sigma, RANK_TOL) < a.rows {
        return Err(Error::pre("matrix is numerically singular"));
    }
    pinv(a, RANK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, seeded};

    fn random(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = seeded(seed);
        CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn new_rejects_non_finite_and_bad_length() {
        assert!(CMatrix::new(1, 2, vec![ONE]).is_err());
        assert!(CMatrix::new(1, 1, vec![C64::new(f64::NAN, 0.0)]).is_err());
        assert!(CMatrix::new(1, 1, vec![ONE]).is_ok());
    }

    #[test]
    fn kron_identity_cases() {
        let b = random(2, 3, 1);
        assert_eq!(kron(&CMatrix::identity(1), &b), b);
        let h = random(2, 2, 2);
        let k = kron(&CMatrix::identity(2), &h);
        assert_eq!(k.submatrix(0, 0, 2, 2), h);
        assert_eq!(k.submatrix(2, 2, 2, 2), h);
        assert_eq!(k.submatrix(0, 2, 2, 2), CMatrix::zeros(2, 2));
        assert_eq!(k.submatrix(2, 0, 2, 2), CMatrix::zeros(2, 2));
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A X B) = (B^T kron A) vec(X)
        let a = random(2, 3, 3);
        let x = random(3, 3, 4);
        let b = random(3, 2, 5);
        let lhs = vec(&(&(&a * &x) * &b));
        let rhs = &kron(&b.transpose(), &a) * &vec(&x);
        assert!((&lhs - &rhs).max_abs() < 1e-12);
    }

    #[test]
    fn vec_is_column_major() {
        let a = CMatrix::from_real_rows(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let v = vec(&a);
        assert_eq!(v.as_slice(), &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let col = random(4, 1, 9);
        assert_eq!(vec(&col), col);
        let r = random(3, 5, 10);
        assert_eq!(unvec(vec(&r).as_slice(), 3, 5).unwrap(), r);
        assert!(unvec(r.as_slice(), 4, 4).is_err());
    }

    #[test]
    fn svd_diagonal_and_zero() {
        let d = CMatrix::from_real_rows(&[&[1.0, 0.0, 0.0], &[0.0, 3.0, 0.0], &[0.0, 0.0, 2.0]]);
        let s = svd(&d).unwrap();
        for (got, want) in s.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let z = svd(&CMatrix::zeros(3, 2)).unwrap();
        assert!(z.sigma.iter().all(|&x| x == 0.0));
        assert!(svd(&CMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn svd_full_bases_for_tall_and_wide() {
        for (r, cl, seed) in [(6, 4, 11), (4, 6, 12), (5, 5, 13), (24, 3, 14)] {
            let a = random(r, cl, seed);
            let d = svd(&a).unwrap();
            assert_eq!(d.u.shape(), (r, r));
            assert_eq!(d.v.shape(), (cl, cl));
            let uu = &d.u.adjoint() * &d.u;
            let vv = &d.v.adjoint() * &d.v;
            assert!((&uu - &CMatrix::identity(r)).max_abs() < 1e-10);
            assert!((&vv - &CMatrix::identity(cl)).max_abs() < 1e-10);
            let rel = (&d.reconstruct() - &a).frobenius_norm() / a.frobenius_norm();
            assert!(rel < 1e-10, "reconstruction error {rel}");
            assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&CMatrix::identity(4), 1e-9).unwrap(), 4);
        let a = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(numerical_rank(&a, 1e-9).unwrap(), 1);
        assert_eq!(numerical_rank(&CMatrix::zeros(3, 3), 1e-9).unwrap(), 0);
        assert!(numerical_rank(&a, 0.0).is_err());
        assert!(numerical_rank(&a, 1.0).is_err());
    }

    #[test]
    fn left_null_basis_examples() {
        let x = random(3, 1, 20);
        let y = random(1, 3, 21);
        let a = &x * &y;
        let b = left_null_basis(&a, 2).unwrap();
        assert!((&b.adjoint() * &a).max_abs() < 1e-9 * svd(&a).unwrap().sigma[0]);
        assert_eq!(left_null_basis(&a, 0).unwrap().shape(), (3, 0));
        assert!(left_null_basis(&a, 4).is_err());

        let p = random(24, 8, 22);
        let q = random(8, 40, 23);
        let r = &p * &q;
        let b = left_null_basis(&r, 16).unwrap();
        let smax = svd(&r).unwrap().sigma[0];
        assert!((&b.adjoint() * &r).max_abs() < 1e-9 * smax);
        let bb = &b.adjoint() * &b;
        assert!((&bb - &CMatrix::identity(16)).max_abs() < 1e-10);
    }

    #[test]
    fn least_squares_examples() {
        let b = random(4, 2, 30);
        let x = least_squares(&CMatrix::identity(4), &b).unwrap();
        assert!((&x - &b).max_abs() < 1e-12);

        let a = random(10, 4, 31);
        let x0 = random(4, 3, 32);
        let x = least_squares(&a, &(&a * &x0)).unwrap();
        assert!((&x - &x0).max_abs() < 1e-9);

        let x = least_squares(&CMatrix::zeros(3, 2), &random(3, 1, 33)).unwrap();
        assert_eq!(x, CMatrix::zeros(2, 1));
        assert!(least_squares(&a, &random(3, 1, 34)).is_err());
    }

    #[test]
    fn inverse_rejects_singular() {
        let a = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(inverse(&a), Err(Error::Precondition(_))));
        let m = random(3, 3, 40);
        let inv = inverse(&m).unwrap();
        assert!((&(&m * &inv) - &CMatrix::identity(3)).max_abs() < 1e-10);
    }
}
