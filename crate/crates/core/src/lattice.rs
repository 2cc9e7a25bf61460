//! The difference operator `y(n+1) + y(n-1) + B(n) y(n)`, its matrix
//! solutions, Wronskians and transfer matrices.

use std::ops::RangeInclusive;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::CMatrix;
use crate::potential::Potential;

const GROWTH_LIMIT: f64 = 1e300;

/// Half-line side, and equivalently the sign of a transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Side::Plus => "+",
            Side::Minus => "-",
        }
    }
}

/// Matrices sampled on a contiguous block of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSequence {
    start: i64,
    values: Vec<CMatrix>,
}

impl MatrixSequence {
    pub fn new(start: i64, values: Vec<CMatrix>) -> Self {
        MatrixSequence { start, values }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last sampled site.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn sites(&self) -> RangeInclusive<i64> {
        self.start..=self.end()
    }

    pub fn get(&self, n: i64) -> Result<&CMatrix> {
        if n < self.start || n > self.end() {
            return Err(Error::Range { site: n });
        }
        Ok(&self.values[(n - self.start) as usize])
    }

    pub fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        MatrixSequence {
            start: self.start,
            values: self.values.iter().map(f).collect(),
        }
    }

    /// `U + M·V`-style combination of two sequences sampled on the same sites.
    pub fn combine(&self, other: &Self, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Result<Self> {
        if self.start != other.start || self.values.len() != other.values.len() {
            return Err(Error::invalid("sequences are sampled on different sites"));
        }
        Ok(MatrixSequence {
            start: self.start,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        })
    }
}

/// The fundamental matrix solutions `U`, `V` with `U(n0) = -I`, `V(n0) = 0`,
/// `U(n0+1) = 0`, `V(n0+1) = I`.
#[derive(Debug, Clone)]
pub struct MatrixSolution {
    pub z: Complex64,
    pub base_site: i64,
    pub u: MatrixSequence,
    pub v: MatrixSequence,
    pub f: Option<MatrixSequence>,
}

impl MatrixSolution {
    /// Attach `F = U + V·M` for a given `M`.
    pub fn with_weyl(mut self, m: &CMatrix) -> Result<Self> {
        self.f = Some(self.u.combine(&self.v, |u, v| u + &(v * m))?);
        Ok(self)
    }
}

/// Solve the recurrence on `range` from the initial conditions at `base_site`.
pub fn iterate_solutions(
    pot: &dyn Potential,
    z: Complex64,
    base_site: i64,
    range: RangeInclusive<i64>,
) -> Result<MatrixSolution> {
    let (lo, hi) = (*range.start(), *range.end());
    if !(lo <= base_site && base_site < hi) {
        return Err(Error::invalid("range must contain base_site and base_site + 1"));
    }
    let d = pot.dim();
    let len = (hi - lo + 1) as usize;
    let i0 = (base_site - lo) as usize;
    let mut u = vec![CMatrix::zeros(d); len];
    let mut v = vec![CMatrix::zeros(d); len];
    u[i0] = -CMatrix::identity(d);
    v[i0 + 1] = CMatrix::identity(d);

    for i in (i0 + 1)..(len - 1) {
        let n = lo + i as i64;
        let a = pot.at(n)?.scale_re(-1.0).shift_diag(z);
        u[i + 1] = &(&a * &u[i]) - &u[i - 1];
        v[i + 1] = &(&a * &v[i]) - &v[i - 1];
        if u[i + 1].max_abs() > GROWTH_LIMIT || v[i + 1].max_abs() > GROWTH_LIMIT || !u[i + 1].is_finite() {
            return Err(Error::Growth { last_stable_site: n });
        }
    }
    for i in (1..=i0).rev() {
        let n = lo + i as i64;
        let a = pot.at(n)?.scale_re(-1.0).shift_diag(z);
        u[i - 1] = &(&a * &u[i]) - &u[i + 1];
        v[i - 1] = &(&a * &v[i]) - &v[i + 1];
        if u[i - 1].max_abs() > GROWTH_LIMIT || v[i - 1].max_abs() > GROWTH_LIMIT || !u[i - 1].is_finite() {
            return Err(Error::Growth { last_stable_site: n });
        }
    }
    Ok(MatrixSolution {
        z,
        base_site,
        u: MatrixSequence::new(lo, u),
        v: MatrixSequence::new(lo, v),
        f: None,
    })
}

/// `‖y(n+1) + y(n-1) + B(n) y(n) − z y(n)‖`.
pub fn recurrence_residual(pot: &dyn Potential, y: &MatrixSequence, z: Complex64, n: i64) -> Result<f64> {
    let b = pot.at(n)?;
    let r = &(&(y.get(n + 1)? + y.get(n - 1)?) + &(&b * y.get(n)?)) - &y.get(n)?.scale(z);
    crate::matcore::operator_norm(&r)
}

/// `W_n(F, G) = F(n+1)ᵀ G(n) − F(n)ᵀ G(n+1)`.
pub fn wronskian(f: &MatrixSequence, g: &MatrixSequence, n: i64) -> Result<CMatrix> {
    Ok(&(&f.get(n + 1)?.transpose() * g.get(n)?) - &(&f.get(n)?.transpose() * g.get(n + 1)?))
}

/// `(τY)(j) = Y(j+1) + Y(j-1) + B(j) Y(j)`.
fn apply_tau(pot: &dyn Potential, y: &MatrixSequence, j: i64) -> Result<CMatrix> {
    Ok(&(y.get(j + 1)? + y.get(j - 1)?) + &(&pot.at(j)? * y.get(j)?))
}

/// `Σ_{j=1}^{n} [F*(τG) − (τF)*G](j) − (W_0(F̄, G) − W_n(F̄, G))`.
///
/// Vanishes for arbitrary sequences whenever every `B(j)` is Hermitian.
pub fn greens_residual(pot: &dyn Potential, f: &MatrixSequence, g: &MatrixSequence, n: i64) -> Result<CMatrix> {
    let d = pot.dim();
    let mut lhs = CMatrix::zeros(d);
    for j in 1..=n {
        let fj = f.get(j)?.adjoint();
        let tf = apply_tau(pot, f, j)?.adjoint();
        lhs = &lhs + &(&(&fj * &apply_tau(pot, g, j)?) - &(&tf * g.get(j)?));
    }
    let fbar = f.map(CMatrix::conj);
    let rhs = &wronskian(&fbar, g, 0)? - &wronskian(&fbar, g, n)?;
    Ok(&lhs - &rhs)
}

/// A transfer matrix or an ordered product of them.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub matrix: CMatrix,
    pub sign: Side,
    /// First and last site of the product (equal for a single factor).
    pub sites: (i64, i64),
    pub z: Complex64,
}

impl TransferMatrix {
    pub fn a(&self) -> CMatrix {
        self.block(0, 0)
    }

    pub fn b(&self) -> CMatrix {
        self.block(0, 1)
    }

    pub fn c(&self) -> CMatrix {
        self.block(1, 0)
    }

    pub fn d(&self) -> CMatrix {
        self.block(1, 1)
    }

    fn block(&self, r: usize, c: usize) -> CMatrix {
        let d = self.matrix.dim() / 2;
        self.matrix.block(r * d, c * d, d)
    }
}

/// `T±(n, z) = (zI − B(n), ±I; ∓I, 0)`.
pub fn transfer(pot: &dyn Potential, n: i64, z: Complex64, sign: Side) -> Result<TransferMatrix> {
    let d = pot.dim();
    let s = sign.sign();
    let a = pot.at(n)?.scale_re(-1.0).shift_diag(z);
    let id = CMatrix::identity(d);
    Ok(TransferMatrix {
        matrix: CMatrix::from_blocks(&a, &id.scale_re(s), &id.scale_re(-s), &CMatrix::zeros(d)),
        sign,
        sites: (n, n),
        z,
    })
}

/// `T(to) · … · T(from)`, latest factor leftmost.
pub fn transfer_product(
    pot: &dyn Potential,
    sites: RangeInclusive<i64>,
    z: Complex64,
    sign: Side,
) -> Result<TransferMatrix> {
    let (from, to) = (*sites.start(), *sites.end());
    if from > to {
        return Err(Error::invalid("empty transfer-matrix product"));
    }
    let mut p = transfer(pot, from, z, sign)?.matrix;
    for n in (from + 1)..=to {
        p = &transfer(pot, n, z, sign)?.matrix * &p;
        if p.max_abs() > GROWTH_LIMIT || !p.is_finite() {
            return Err(Error::Growth { last_stable_site: n - 1 });
        }
    }
    Ok(TransferMatrix {
        matrix: p,
        sign,
        sites: (from, to),
        z,
    })
}

/// The Dirichlet truncation of the operator to sites `1..=N`.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    dim: usize,
    diag: Vec<CMatrix>,
}

impl BlockTridiagonal {
    pub fn block_dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn size(&self) -> usize {
        self.dim * self.diag.len()
    }

    /// Entry `(i, j)` of the `(N·d) × (N·d)` matrix; zero outside bandwidth `d`.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        let d = self.dim;
        let (bi, bj) = (i / d, j / d);
        if bi == bj {
            self.diag[bi][(i % d, j % d)]
        } else if bi.abs_diff(bj) == 1 && i % d == j % d {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.size();
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            let lo = i.saturating_sub(self.dim);
            let hi = (i + self.dim).min(n - 1);
            for j in lo..=hi {
                m[(i, j)] = self.entry(i, j);
            }
        }
        m
    }
}

pub fn truncated_operator(pot: &dyn Potential, n: usize) -> Result<BlockTridiagonal> {
    if n < 2 {
        return Err(Error::invalid("truncation needs N >= 2"));
    }
    Ok(BlockTridiagonal {
        dim: pot.dim(),
        diag: (1..=n as i64).map(|j| pot.at(j)).collect::<Result<_>>()?,
    })
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::matcore::operator_norm;
    use crate::potential::{Kind, PotentialSpec, Support};
    use crate::siegel::symplectic_check;
    use proptest::prelude::*;

    fn norm(m: &CMatrix) -> f64 {
        operator_norm(m).unwrap()
    }

    fn random_spec(d: usize, seed: u64, amplitude: f64) -> PotentialSpec {
        PotentialSpec::new(d, amplitude, Support::HalfLine, Kind::Random { seed, amplitude }).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn real_transfer_matrices_are_symplectic(
            d in 1usize..4, seed in any::<u64>(), t in -4.0..4.0f64, n in 1i64..50, plus in any::<bool>(),
        ) {
            let spec = random_spec(d, seed, 2.0);
            let side = if plus { Side::Plus } else { Side::Minus };
            let s = transfer(&spec, n, Complex64::new(t, 0.0), side).unwrap().matrix;
            prop_assert!(symplectic_check(&s) <= 1e-12 * norm(&s).powi(2).max(1.0));
        }

        #[test]
        fn wronskian_is_constant(
            d in 1usize..4, seed in any::<u64>(), x in -3.0..3.0f64, y in -0.5..0.5f64,
        ) {
            let spec = random_spec(d, seed, 0.5);
            let sol = iterate_solutions(&spec, Complex64::new(x, y), 0, -1..=41).unwrap();
            let w0 = wronskian(&sol.u, &sol.v, 0).unwrap();
            let at = |s: &MatrixSequence, k: i64| norm(s.get(k).unwrap());
            for n in 1..40 {
                let w = wronskian(&sol.u, &sol.v, n).unwrap();
                let scale = at(&sol.u, n + 1) * at(&sol.v, n) + at(&sol.u, n) * at(&sol.v, n + 1);
                prop_assert!(norm(&(&w - &w0)) <= 1e-12 * scale.max(1.0) * n as f64);
            }
        }
    }
}
