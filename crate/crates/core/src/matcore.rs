//! Small dense complex-matrix kernels.
//!
//! Everything downstream works with `d × d` (or `2d × 2d`) complex matrices
//! where `d` is tiny, so [`CMatrix`] is a plain row-major `Vec` with
//! hand-written arithmetic. Spectral work (Hermitian eigendecomposition,
//! singular values, Schur form) goes through `nalgebra`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Upper bound on the matrix dimension accepted by constructors.
pub const MAX_DIM: usize = 16;
/// Default tolerance for structure predicates.
pub const STRUCTURE_TOL: f64 = 1e-9;
/// Default positive-definiteness threshold.
pub const PD_TOL: f64 = 1e-12;
/// Default condition-number limit for [`checked_inverse`].
pub const COND_LIMIT: f64 = 1e12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix[{}]", self.dim)?;
        let mut rows = f.debug_list();
        for i in 0..self.dim {
            rows.entry(&self.row(i));
        }
        rows.finish()
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, ONE)
    }

    /// `c · I`.
    pub fn scalar(dim: usize, c: Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = c;
        }
        m
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let c: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diag(&c)
    }

    /// Build from `dim * dim` row-major entries.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(CMatrix { dim, data })
    }

    pub fn from_real_row_major(dim: usize, data: &[f64]) -> Result<Self> {
        Self::from_row_major(dim, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Build from nested rows; every row must have the same length as the outer list.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix rows must form a square"));
        }
        Self::from_row_major(dim, rows.concat())
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix rows must form a square"));
        }
        Self::from_real_row_major(dim, &rows.concat())
    }

    /// Assemble `[[a, b], [c, d]]` from four equally sized blocks.
    pub fn from_blocks(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> Self {
        let n = a.dim;
        assert!(b.dim == n && c.dim == n && d.dim == n, "block size mismatch");
        let mut m = Self::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = a[(i, j)];
                m[(i, j + n)] = b[(i, j)];
                m[(i + n, j)] = c[(i, j)];
                m[(i + n, j + n)] = d[(i, j)];
            }
        }
        m
    }

    /// The `size × size` block whose top-left corner is `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, size: usize) -> CMatrix {
        let mut m = Self::zeros(size);
        for i in 0..size {
            for j in 0..size {
                m[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> CMatrix {
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[j * n + i] = self.data[i * n + j];
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        m
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> CMatrix {
        self.map(|z| z.conj())
    }

    /// Entrywise real part.
    pub fn re(&self) -> CMatrix {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    /// Entrywise imaginary part (as a real matrix).
    pub fn im(&self) -> CMatrix {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    /// `(M - M*) / 2i`, the Hermitian imaginary part.
    pub fn im_part(&self) -> CMatrix {
        let half_over_i = Complex64::new(0.0, -0.5);
        (self - &self.adjoint()).scale(half_over_i)
    }

    /// `(M + M*) / 2`.
    pub fn hermitian_part(&self) -> CMatrix {
        (self + &self.adjoint()).scale(Complex64::new(0.5, 0.0))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> CMatrix {
        self.map(|z| z * c)
    }

    pub fn scale_re(&self, c: f64) -> CMatrix {
        self.map(|z| z * c)
    }

    /// `self + c·I`.
    pub fn shift_diag(&self, c: Complex64) -> CMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.data[i * self.dim + i] += c;
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Quadratic form `c* M c`.
    pub fn quadratic_form(&self, c: &[Complex64]) -> Complex64 {
        assert_eq!(c.len(), self.dim, "vector length mismatch");
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            let mut row = ZERO;
            for j in 0..n {
                row += self.data[i * n + j] * c[j];
            }
            acc += c[i].conj() * row;
        }
        acc
    }

    pub(crate) fn to_na(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn zip(&self, other: &CMatrix, f: impl Fn(Complex64, Complex64) -> Complex64) -> CMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.map(|z| -z)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix {
                (&self).$method(rhs)
            }
        }
        impl $tr<CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix {
                self.$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        -&self
    }
}

fn ensure_finite(m: &CMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("matrix has non-finite entries"))
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    ensure_finite(m)?;
    if m.dim() == 1 {
        return Ok(vec![m[(0, 0)].norm()]);
    }
    let mut s: Vec<f64> = m.to_na().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Orthonormal basis (as the first `k` columns) of the span of the `k`
/// dominant columns of `m`, by Gram–Schmidt with column pivoting.
pub fn range_basis(m: &CMatrix, k: usize) -> Result<CMatrix> {
    ensure_finite(m)?;
    let n = m.dim();
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| (0..n).map(|i| m[(i, j)]).collect()).collect();
    let scale = m.max_abs();
    let mut basis = CMatrix::zeros(n);
    for q in 0..k {
        let (best, norm) = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if !(norm > 1e-13 * scale) {
            return Err(Error::Degenerate("matrix rank is below the requested dimension".into()));
        }
        let v: Vec<Complex64> = cols[best].iter().map(|z| z / norm).collect();
        for c in cols.iter_mut() {
            let proj: Complex64 = v.iter().zip(c.iter()).map(|(a, b)| a.conj() * b).sum();
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= proj * vi;
            }
        }
        for i in 0..n {
            basis[(i, q)] = v[i];
        }
    }
    Ok(basis)
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> Result<f64> {
    Ok(singular_values(m)?[0])
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues ascend. Each eigenvector is phase-normalised so that its
/// first entry of maximal modulus is real and positive; eigenvalues that tie
/// (within `1e-12` relative) are ordered lexicographically by eigenvector
/// entries, so the output is reproducible.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    ensure_finite(m)?;
    let n = m.dim();
    let h = m.hermitian_part();
    if n == 1 {
        return Ok(HermitianEigen {
            values: vec![h[(0, 0)].re],
            vectors: CMatrix::identity(1),
        });
    }
    let eig = nalgebra::SymmetricEigen::try_new(h.to_na(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("Hermitian eigensolver did not converge".into()))?;

    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|k| {
            let mut v: Vec<Complex64> = eig.eigenvectors.column(k).iter().copied().collect();
            normalize_phase(&mut v);
            (eig.eigenvalues[k], v)
        })
        .collect();
    let scale = pairs.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Re-sort runs of tied eigenvalues by eigenvector entries.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[end].0 - pairs[start].0).abs() <= 1e-12 * scale {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| lexicographic(&a.1, &b.1));
        start = end;
    }

    let mut vectors = CMatrix::zeros(n);
    for (k, (_, v)) in pairs.iter().enumerate() {
        for i in 0..n {
            vectors[(i, k)] = v[i];
        }
    }
    Ok(HermitianEigen {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors,
    })
}

fn normalize_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .find(|z| z.norm() >= max * (1.0 - 1e-12))
        .copied()
        .unwrap_or(ONE);
    let phase = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

fn lexicographic(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Eigenvalues of a general complex matrix, from its complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    ensure_finite(m)?;
    if m.dim() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = nalgebra::Schur::try_new(m.to_na(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..m.dim()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    Ok(hermitian_eigen(m)?.values)
}

/// Hermitian positive-definite square root, via eigendecomposition.
pub fn hpd_sqrt(y: &CMatrix, tol: f64) -> Result<CMatrix> {
    let eig = hermitian_eigen(y)?;
    if eig.values[0] <= tol {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: eig.values[0],
        });
    }
    Ok(spectral_apply(&eig, f64::sqrt))
}

/// `V f(Λ) V*` for a Hermitian eigendecomposition.
pub fn spectral_apply(eig: &HermitianEigen, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = eig.values.len();
    let v = &eig.vectors;
    let fl: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
    let mut out = CMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += v[(i, k)] * fl[k] * v[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Inverse by Gauss–Jordan elimination with partial pivoting.
///
/// The condition estimate is `‖M‖₁ ‖M⁻¹‖₁`.
pub fn checked_inverse(m: &CMatrix, cond_limit: f64) -> Result<CMatrix> {
    ensure_finite(m)?;
    let n = m.dim();
    if n == 1 {
        let a = m[(0, 0)];
        if a == ZERO {
            return Err(Error::Singular);
        }
        let inv = CMatrix::scalar(1, a.inv());
        // κ = 1 for scalars; only underflow/overflow can go wrong.
        if !inv.is_finite() {
            return Err(Error::IllConditioned {
                estimate: f64::INFINITY,
                site: None,
            });
        }
        return Ok(inv);
    }
    let mut a = m.clone();
    let mut inv = CMatrix::identity(n);
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, a[(r, col)].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax == 0.0 {
            return Err(Error::Singular);
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(col * n + j, piv * n + j);
                inv.data.swap(col * n + j, piv * n + j);
            }
        }
        let p = a[(col, col)].inv();
        for j in 0..n {
            a[(col, j)] *= p;
            inv[(col, j)] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == ZERO {
                continue;
            }
            for j in 0..n {
                let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                a[(r, j)] -= f * ac;
                inv[(r, j)] -= f * ic;
            }
        }
    }
    let estimate = m.norm1() * inv.norm1();
    if !estimate.is_finite() || estimate > cond_limit {
        return Err(Error::IllConditioned {
            estimate,
            site: None,
        });
    }
    Ok(inv)
}

/// Inverse with the default condition limit.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    checked_inverse(m, COND_LIMIT)
}

/// Structural classification of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    pub is_real_symmetric: bool,
    pub is_hermitian: bool,
    pub is_complex_symmetric: bool,
    /// `‖M − Mᵀ‖` in operator norm.
    pub max_asymmetry: f64,
    /// `‖M − M*‖` in operator norm.
    pub hermitian_defect: f64,
    /// `‖Im M‖` (entrywise imaginary part) in operator norm.
    pub imaginary_norm: f64,
}

pub fn structure_check(m: &CMatrix, tol: f64) -> StructureReport {
    let norm = |x: &CMatrix| operator_norm(x).unwrap_or(f64::INFINITY);
    let max_asymmetry = norm(&(m - &m.transpose()));
    let hermitian_defect = norm(&(m - &m.adjoint()));
    let imaginary_norm = norm(&m.im());
    StructureReport {
        is_real_symmetric: max_asymmetry <= tol && imaginary_norm <= tol,
        is_hermitian: hermitian_defect <= tol,
        is_complex_symmetric: max_asymmetry <= tol,
        max_asymmetry,
        hermitian_defect,
        imaginary_norm,
    }
}

/// Solve `A X = B` for a banded `A` by Gaussian elimination with partial
/// pivoting. `entry(i, j)` is only queried inside the band
/// `i - kl <= j <= i + ku`; `rhs` holds the columns of `B`.
pub fn solve_banded(
    n: usize,
    kl: usize,
    ku: usize,
    entry: impl Fn(usize, usize) -> Complex64,
    rhs: &[Vec<Complex64>],
) -> Result<Vec<Vec<Complex64>>> {
    if n == 0 {
        return Err(Error::invalid("empty system"));
    }
    if rhs.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("right-hand side length mismatch"));
    }
    // Row i stores columns [i - kl, i - kl + width); pivoting can push fill-in
    // up to kl + ku above the diagonal.
    let width = 2 * kl + ku + 1;
    let col0 = |i: usize| i as isize - kl as isize;
    let mut rows: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..width)
                .map(|w| {
                    let j = col0(i) + w as isize;
                    if j >= 0 && (j as usize) < n && j as usize + kl >= i && (j as usize) <= i + ku {
                        entry(i, j as usize)
                    } else {
                        ZERO
                    }
                })
                .collect()
        })
        .collect();
    let mut b: Vec<Vec<Complex64>> = (0..n).map(|i| rhs.iter().map(|c| c[i]).collect()).collect();
    let at = |rows: &Vec<Vec<Complex64>>, i: usize, j: usize| -> Complex64 {
        let w = j as isize - col0(i);
        if w >= 0 && (w as usize) < width {
            rows[i][w as usize]
        } else {
            ZERO
        }
    };

    for k in 0..n {
        let last = (k + kl).min(n - 1);
        let (piv, pmax) = (k..=last)
            .map(|r| (r, at(&rows, r, k).norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax == 0.0 {
            return Err(Error::Singular);
        }
        if piv != k {
            // Re-index both rows into each other's column windows.
            let shift = (piv - k) as isize;
            let old_k = rows[k].clone();
            let old_p = rows[piv].clone();
            for w in 0..width {
                let from_p = w as isize - shift;
                rows[k][w] = if from_p >= 0 && (from_p as usize) < width {
                    old_p[from_p as usize]
                } else {
                    ZERO
                };
                let from_k = w as isize + shift;
                rows[piv][w] = if from_k >= 0 && (from_k as usize) < width {
                    old_k[from_k as usize]
                } else {
                    ZERO
                };
            }
            b.swap(k, piv);
        }
        let pivot = at(&rows, k, k);
        let jmax = (k + kl + ku).min(n - 1);
        for i in (k + 1)..=last {
            let f = at(&rows, i, k) / pivot;
            if f == ZERO {
                continue;
            }
            for j in k..=jmax {
                let akj = at(&rows, k, j);
                let w = (j as isize - col0(i)) as usize;
                rows[i][w] -= f * akj;
            }
            let bk = b[k].clone();
            for (bi, bkv) in b[i].iter_mut().zip(bk) {
                *bi -= f * bkv;
            }
        }
    }

    let m = rhs.len();
    let mut x = vec![vec![ZERO; m]; n];
    for i in (0..n).rev() {
        let jmax = (i + kl + ku).min(n - 1);
        for c in 0..m {
            let mut acc = b[i][c];
            for j in (i + 1)..=jmax {
                acc -= at(&rows, i, j) * x[j][c];
            }
            x[i][c] = acc / at(&rows, i, i);
        }
    }
    if x.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IllConditioned {
            estimate: f64::INFINITY,
            site: None,
        });
    }
    Ok((0..m).map(|c| x.iter().map(|row| row[c]).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        operator_norm(&(a - b)).unwrap() <= tol
    }

    fn arb_matrix(dim: usize) -> impl Strategy<Value = CMatrix> {
        prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), dim * dim).prop_map(move |v| {
            CMatrix::from_row_major(dim, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    fn arb_hpd(dim: usize) -> impl Strategy<Value = CMatrix> {
        arb_matrix(dim).prop_map(move |a| (&a.adjoint() * &a).shift_diag(c(1.0, 0.0)))
    }

    // Power iteration on M*M, written independently of the SVD path.
    fn power_norm(m: &CMatrix) -> f64 {
        let g = &m.adjoint() * m;
        let n = m.dim();
        let mut v: Vec<Complex64> = (0..n).map(|i| c(1.0 + i as f64 * 0.37, 0.11 * i as f64)).collect();
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| g[(i, j)] * v[j]).sum()).collect();
            let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nw == 0.0 {
                return 0.0;
            }
            lambda = nw;
            v = w.into_iter().map(|z| z / nw).collect();
        }
        lambda.sqrt()
    }

    #[test]
    fn operator_norm_examples() {
        assert_eq!(operator_norm(&CMatrix::identity(3)).unwrap(), 1.0);
        let d = CMatrix::from_real_diag(&[1.0, -3.0]);
        assert!((operator_norm(&d).unwrap() - 3.0).abs() < 1e-12);
        let m = CMatrix::from_rows(&[vec![c(0.3, -1.2), c(0.7, 0.4)], vec![c(-1.1, 0.2), c(0.5, 0.9)]])
            .unwrap();
        assert!((operator_norm(&m).unwrap() - power_norm(&m)).abs() < 1e-10);
    }

    #[test]
    fn operator_norm_rejects_nan() {
        let m = CMatrix::scalar(2, c(f64::NAN, 0.0));
        assert!(matches!(operator_norm(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hpd_sqrt_examples() {
        let i = CMatrix::identity(2);
        assert!(close(&hpd_sqrt(&i, PD_TOL).unwrap(), &i, 1e-14));
        let s = hpd_sqrt(&CMatrix::from_real_diag(&[4.0, 9.0]), PD_TOL).unwrap();
        assert!(close(&s, &CMatrix::from_real_diag(&[2.0, 3.0]), 1e-13));
        let err = hpd_sqrt(&CMatrix::from_real_diag(&[1.0, -0.5]), PD_TOL).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite { eigenvalue: -0.5 });
    }

    #[test]
    fn inverse_examples() {
        let i = CMatrix::identity(3);
        assert_eq!(checked_inverse(&i, COND_LIMIT).unwrap(), i);
        assert_eq!(checked_inverse(&CMatrix::zeros(2), COND_LIMIT), Err(Error::Singular));
        let m = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        // adj/det = [[4,-2],[-3,1]] / (-2)
        let expected = CMatrix::from_real_rows(&[vec![-2.0, 1.0], vec![1.5, -0.5]]).unwrap();
        assert!(close(&checked_inverse(&m, COND_LIMIT).unwrap(), &expected, 1e-14));
    }

    #[test]
    fn inverse_reports_condition() {
        let m = CMatrix::from_real_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-14]]).unwrap();
        match checked_inverse(&m, COND_LIMIT) {
            Err(Error::IllConditioned { estimate, .. }) => assert!(estimate > 1e12),
            other => panic!("expected ill-conditioned, got {other:?}"),
        }
    }

    #[test]
    fn structure_examples() {
        let r = structure_check(&CMatrix::from_real_diag(&[1.0, 2.0]), STRUCTURE_TOL);
        assert!(r.is_real_symmetric && r.is_hermitian && r.is_complex_symmetric);

        let r = structure_check(
            &CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
            STRUCTURE_TOL,
        );
        assert!(!r.is_real_symmetric);
        assert!((r.max_asymmetry - 1.0).abs() < 1e-14);

        let r = structure_check(&CMatrix::scalar(2, c(0.0, 1.0)), STRUCTURE_TOL);
        assert!(r.is_complex_symmetric);
        assert!(!r.is_hermitian);
        assert!(!r.is_real_symmetric);
    }

    #[test]
    fn eigen_ties_are_reproducible() {
        let m = CMatrix::identity(3);
        let a = hermitian_eigen(&m).unwrap();
        let b = hermitian_eigen(&m).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn banded_matches_dense_inverse() {
        // Tridiagonal 6x6 complex system, bandwidth 1.
        let n = 6;
        let entry = |i: usize, j: usize| {
            if i == j {
                c(0.1 * i as f64, -0.7)
            } else {
                c(1.0, 0.0)
            }
        };
        let mut dense = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) <= 1 {
                    dense[(i, j)] = entry(i, j);
                }
            }
        }
        let inv = checked_inverse(&dense, COND_LIMIT).unwrap();
        let mut e0 = vec![c(0.0, 0.0); n];
        e0[0] = c(1.0, 0.0);
        let x = solve_banded(n, 1, 1, entry, &[e0]).unwrap();
        for i in 0..n {
            assert!((x[0][i] - inv[(i, 0)]).norm() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn norm_is_submultiplicative(a in arb_matrix(3), b in arb_matrix(3)) {
            let na = operator_norm(&a).unwrap();
            let nb = operator_norm(&b).unwrap();
            prop_assert!(operator_norm(&(&a * &b)).unwrap() <= na * nb + 1e-10);
            prop_assert!(operator_norm(&(&a + &b)).unwrap() <= na + nb + 1e-10);
        }

        #[test]
        fn norm_matches_gram_eigenvalue(a in arb_matrix(4)) {
            let top = *hermitian_eigenvalues(&(&a.adjoint() * &a)).unwrap().last().unwrap();
            let n = operator_norm(&a).unwrap();
            prop_assert!((n - top.max(0.0).sqrt()).abs() <= 1e-12 * n.max(1.0));
        }

        #[test]
        fn sqrt_squares_back(y in arb_hpd(3)) {
            let s = hpd_sqrt(&y, PD_TOL).unwrap();
            let ny = operator_norm(&y).unwrap();
            prop_assert!(operator_norm(&(&(&s * &s) - &y)).unwrap() <= 1e-10 * ny);
            prop_assert!(structure_check(&s, 1e-10).is_hermitian);
            prop_assert!(close(&(&s * &y), &(&y * &s), 1e-10 * ny));
        }

        #[test]
        fn inverse_sqrt_commutes(y in arb_hpd(2)) {
            let a = checked_inverse(&hpd_sqrt(&y, PD_TOL).unwrap(), COND_LIMIT).unwrap();
            let b = hpd_sqrt(&checked_inverse(&y, COND_LIMIT).unwrap(), PD_TOL).unwrap();
            prop_assert!(close(&a, &b, 1e-8));
        }

        #[test]
        fn inverse_residual(m in arb_matrix(3)) {
            if let Ok(inv) = checked_inverse(&m, 1e8) {
                prop_assert!(close(&(&m * &inv), &CMatrix::identity(3), 1e-10 * 1e4));
            }
        }
    }
}
