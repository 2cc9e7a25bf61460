//! Half-line Weyl m-functions by contraction iteration of Möbius actions.
//!
//! Conventions, pinned by the free case `B ≡ 0`:
//!
//! * `M̃₊(n) = −F₊(n+1)F₊(n)⁻¹` obeys `M̃₊(n−1) = −[(zI − B(n)) + M̃₊(n)]⁻¹`,
//!   so `m = −1/(z + m)` in the free case.
//! * `M̃₋(n) = F₋(n+1)F₋(n)⁻¹` obeys `M̃₋(n) = (zI − B(n)) − M̃₋(n−1)⁻¹`,
//!   so `m = z − 1/m` (the root with `|m| > 1`).
//! * `M₊ = M̃₊(0)` and `M₋ = B(0) − zI + M̃₋(0)`.
//!
//! `Im z < 0` is accepted; the iteration then runs in the lower half-space.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::IntervalUnion;
use crate::lattice::{BlockTridiagonal, MatrixSequence, Side};
use crate::matcore::{
    checked_inverse, eigenvalues, hermitian_eigenvalues, operator_norm, range_basis, solve_banded, CMatrix,
    COND_LIMIT,
};
use crate::potential::{Direction, Potential, PotentialSpec, Tail};
use crate::siegel::{siegel_distance, SiegelPoint};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Where the truncated recursion starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    /// `c · iI` for the given `c > 0`.
    Imaginary(f64),
    Matrix(CMatrix),
    /// The exact m-function of the potential's periodic (or locally frozen)
    /// tail beyond the truncation site, falling back to `iI`.
    Tail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylOptions {
    pub n_start: usize,
    pub n_max: usize,
    /// Absolute tolerance; `None` means `1e-11·(1 + |z|)`.
    pub tol: Option<f64>,
    pub seed: Seed,
    /// Rerun at the final depth from `2iI` and require agreement.
    pub certify: bool,
}

impl Default for WeylOptions {
    fn default() -> Self {
        WeylOptions {
            n_start: 32,
            n_max: 1 << 20,
            tol: None,
            seed: Seed::Imaginary(1.0),
            certify: false,
        }
    }
}

impl WeylOptions {
    /// Defaults suited to `z = t + iε` with small `ε`: tail-aware seeds.
    pub fn boundary() -> Self {
        WeylOptions {
            seed: Seed::Tail,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.seed = seed;
        self
    }

    fn tolerance(&self, z: Complex64) -> f64 {
        self.tol.unwrap_or(1e-11 * (1.0 + z.norm()))
    }
}

/// An m-function value with its truncation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylEvaluation {
    pub value: CMatrix,
    pub side: Side,
    pub site: i64,
    pub z: Complex64,
    pub depth: usize,
    pub converged: bool,
    /// Siegel distance between the last two depths (operator-norm change if
    /// either value left the half-space).
    pub last_step: f64,
    /// Difference to the `2iI`-seeded run, when certification was requested.
    pub certificate: Option<f64>,
}

/// Flat JSON record of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylRecord {
    pub z_re: f64,
    pub z_im: f64,
    pub side: String,
    pub value_re: Vec<Vec<f64>>,
    pub value_im: Vec<Vec<f64>>,
    pub depth: usize,
    pub converged: bool,
}

impl WeylEvaluation {
    pub fn record(&self) -> WeylRecord {
        let d = self.value.dim();
        let rows = |f: fn(Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..d).map(|i| (0..d).map(|j| f(self.value[(i, j)])).collect()).collect()
        };
        WeylRecord {
            z_re: self.z.re,
            z_im: self.z.im,
            side: self.side.symbol().to_string(),
            value_re: rows(|z| z.re),
            value_im: rows(|z| z.im),
            depth: self.depth,
            converged: self.converged,
        }
    }
}

fn check_off_axis(z: Complex64) -> Result<()> {
    if z.im != 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("m-functions need Im z != 0, got {z}")))
    }
}

/// One backward step `M ↦ −[(zI − B) + M]⁻¹`.
pub fn plus_step(b: &CMatrix, z: Complex64, m: &CMatrix) -> Result<CMatrix> {
    Ok(-checked_inverse(&(m - b).shift_diag(z), COND_LIMIT)?)
}

/// One forward step `M ↦ (zI − B) − M⁻¹`.
pub fn minus_step(b: &CMatrix, z: Complex64, m: &CMatrix) -> Result<CMatrix> {
    Ok(&(-b).shift_diag(z) - &checked_inverse(m, COND_LIMIT)?)
}

/// Fixed point of a periodic block of steps.
///
/// `pattern` lists the potential in the order the sites are traversed away
/// from the seed site. For the `+` side the result is `M̃₊` just before the
/// pattern; for `−` it is `M̃₋` at the last pattern site seen from the left,
/// i.e. the branch that decays away from the seed.
pub fn periodic_fixed_point(pattern: &[CMatrix], z: Complex64, side: Side) -> Result<CMatrix> {
    let d = pattern[0].dim();
    let id = CMatrix::identity(d);
    let zero = CMatrix::zeros(d);
    let transfer = |b: &CMatrix| {
        let a = (-b).shift_diag(z);
        match side {
            Side::Plus => CMatrix::from_blocks(&a, &id, &-&id, &zero),
            Side::Minus => CMatrix::from_blocks(&a, &-&id, &id, &zero),
        }
    };
    // Monodromy in the direction the data is propagated by the transfer matrices.
    let mut phi = CMatrix::identity(2 * d);
    match side {
        Side::Plus => {
            for b in pattern {
                phi = &transfer(b) * &phi;
            }
        }
        Side::Minus => {
            for b in pattern.iter().rev() {
                phi = &transfer(b) * &phi;
            }
        }
    }
    let mut ev = eigenvalues(&phi)?;
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    // The wanted subspace: decaying towards +∞ (small |λ|) for the plus side,
    // growing forward, i.e. decaying towards −∞, for the minus side.
    let others: Vec<Complex64> = match side {
        Side::Plus => ev[d..].to_vec(),
        Side::Minus => ev[..d].to_vec(),
    };
    let mut proj = CMatrix::identity(2 * d);
    for lambda in others {
        let f = phi.shift_diag(-lambda);
        proj = &f * &proj;
        let n = proj.max_abs();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate("invariant subspace collapsed".into()));
        }
        proj = proj.scale_re(1.0 / n);
    }
    let u = range_basis(&proj, d)?;
    let mut x = CMatrix::zeros(d);
    let mut y = CMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            x[(i, j)] = u[(i, j)];
            y[(i, j)] = u[(i + d, j)];
        }
    }
    let m = &x * &checked_inverse(&y, COND_LIMIT)?;
    Ok((&m + &m.transpose()).scale_re(0.5))
}

fn seed_matrix(spec: &PotentialSpec, seed: &Seed, z: Complex64, side: Side, seed_site: i64) -> CMatrix {
    let d = spec.dim();
    match seed {
        Seed::Imaginary(c) => CMatrix::scalar(d, I * (*c * z.im.signum())),
        Seed::Matrix(m) => m.clone(),
        Seed::Tail => {
            // The + seed is M̃₊(s), determined by sites > s; the − seed is
            // M̃₋(s), determined by sites ≤ s.
            let tail = match side {
                Side::Plus => spec.tail_beyond(seed_site, Direction::Right),
                Side::Minus => spec.tail_beyond(seed_site + 1, Direction::Left),
            };
            match tail {
                Tail::Exact(p) | Tail::Approximate(p) => {
                    periodic_fixed_point(&p, z, side).unwrap_or_else(|_| CMatrix::scalar(d, I * z.im.signum()))
                }
                Tail::Unknown => CMatrix::scalar(d, I * z.im.signum()),
            }
        }
    }
}

/// `M̃₊(n)` from the seed `M̃₊(n + depth)`.
fn run_plus(pot: &dyn Potential, n: i64, z: Complex64, depth: usize, seed: CMatrix) -> Result<CMatrix> {
    let mut m = seed;
    for k in ((n + 1)..=(n + depth as i64)).rev() {
        m = plus_step(&pot.at(k)?, z, &m).map_err(|e| e.at_site(k))?;
    }
    Ok(m)
}

/// `M̃₋(n)` from the seed `M̃₋(n − depth)`.
fn run_minus(pot: &dyn Potential, n: i64, z: Complex64, depth: usize, seed: CMatrix) -> Result<CMatrix> {
    let mut m = seed;
    for k in (n - depth as i64 + 1)..=n {
        m = minus_step(&pot.at(k)?, z, &m).map_err(|e| e.at_site(k))?;
    }
    Ok(m)
}

fn change(a: &CMatrix, b: &CMatrix) -> f64 {
    match (SiegelPoint::new(sym(a)), SiegelPoint::new(sym(b))) {
        (Ok(p), Ok(q)) => siegel_distance(&p, &q).unwrap_or_else(|_| operator_norm(&(a - b)).unwrap_or(f64::NAN)),
        _ => operator_norm(&(a - b)).unwrap_or(f64::NAN),
    }
}

fn sym(m: &CMatrix) -> CMatrix {
    (m + &m.transpose()).scale_re(0.5)
}

fn adaptive(spec: &PotentialSpec, n: i64, z: Complex64, side: Side, opts: &WeylOptions) -> Result<WeylEvaluation> {
    check_off_axis(z)?;
    if opts.n_start == 0 || opts.n_start > opts.n_max {
        return Err(Error::invalid("need 0 < n_start <= n_max"));
    }
    let tol = opts.tolerance(z);
    let run = |depth: usize, seed: &Seed| -> Result<CMatrix> {
        match side {
            Side::Plus => {
                let s = seed_matrix(spec, seed, z, side, n + depth as i64);
                run_plus(spec, n, z, depth, s)
            }
            Side::Minus => {
                let s = seed_matrix(spec, seed, z, side, n - depth as i64);
                run_minus(spec, n, z, depth, s)
            }
        }
    };
    let mut depth = opts.n_start;
    let mut prev = run(depth, &opts.seed)?;
    let mut successes = 0;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    while depth * 2 <= opts.n_max {
        depth *= 2;
        let next = run(depth, &opts.seed)?;
        let diff = operator_norm(&(&next - &prev))?;
        last_step = change(&prev, &next);
        prev = next;
        successes = if diff < tol { successes + 1 } else { 0 };
        if successes >= 2 {
            converged = true;
            break;
        }
    }
    let mut certificate = None;
    if opts.certify {
        let other = run(depth, &Seed::Imaginary(2.0))?;
        let diff = operator_norm(&(&other - &prev))?;
        certificate = Some(diff);
        converged &= diff < tol;
    }
    Ok(WeylEvaluation {
        value: prev,
        side,
        site: n,
        z,
        depth,
        converged,
        last_step,
        certificate,
    })
}

/// `M̃₊(n, z)`.
pub fn m_plus_at(spec: &PotentialSpec, n: i64, z: Complex64, opts: &WeylOptions) -> Result<WeylEvaluation> {
    adaptive(spec, n, z, Side::Plus, opts)
}

/// `M₊(z) = M̃₊(0, z)`.
pub fn m_plus(spec: &PotentialSpec, z: Complex64, opts: &WeylOptions) -> Result<WeylEvaluation> {
    m_plus_at(spec, 0, z, opts)
}

/// `M̃₋(n, z)`.
pub fn m_tilde_minus(spec: &PotentialSpec, n: i64, z: Complex64, opts: &WeylOptions) -> Result<WeylEvaluation> {
    adaptive(spec, n, z, Side::Minus, opts)
}

/// `M₋(0, z) = B(0) − zI + M̃₋(0, z)`.
pub fn m_minus(spec: &PotentialSpec, z: Complex64, opts: &WeylOptions) -> Result<WeylEvaluation> {
    let mut ev = m_tilde_minus(spec, 0, z, opts)?;
    ev.value = (&spec.potential_at(0)? + &ev.value).shift_diag(-z);
    Ok(ev)
}

/// `M̃₋(n, z)` from the Dirichlet normalisation `F₋(0) = 0`, iterated forward from site 1.
pub fn m_tilde_minus_dirichlet(pot: &dyn Potential, n: i64, z: Complex64) -> Result<CMatrix> {
    if n < 1 {
        return Err(Error::invalid("Dirichlet-normalised M̃₋ needs n >= 1"));
    }
    // F₋(0) = 0 gives M̃₋(0)⁻¹ = 0, hence M̃₋(1) = zI − B(1).
    let mut m = (-&pot.at(1)?).shift_diag(z);
    for k in 2..=n {
        m = minus_step(&pot.at(k)?, z, &m).map_err(|e| e.at_site(k))?;
    }
    Ok(m)
}

/// The top `d × d` block of `(J_N − z)⁻¹`, by banded elimination.
pub fn resolvent_oracle(pot: &dyn Potential, z: Complex64, n: usize) -> Result<CMatrix> {
    if z.im == 0.0 {
        return Err(Error::invalid("resolvent oracle needs Im z != 0"));
    }
    let op: BlockTridiagonal = crate::lattice::truncated_operator(pot, n)?;
    let d = op.block_dim();
    let size = op.size();
    let rhs: Vec<Vec<Complex64>> = (0..d)
        .map(|k| {
            let mut e = vec![Complex64::new(0.0, 0.0); size];
            e[k] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();
    let cols = solve_banded(
        size,
        d,
        d,
        |i, j| {
            let v = op.entry(i, j);
            if i == j {
                v - z
            } else {
                v
            }
        },
        &rhs,
    )?;
    let mut m = CMatrix::zeros(d);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..d {
            m[(i, j)] = col[i];
        }
    }
    let est = m.max_abs() * (1.0 + z.norm());
    if !(est.is_finite()) || est > COND_LIMIT {
        return Err(Error::IllConditioned { estimate: est, site: None });
    }
    Ok(m)
}

/// `M₊` together with the Weyl solution `F(j) = U(j) + V(j)M` on `0..=depth`.
pub fn weyl_solution(spec: &PotentialSpec, z: Complex64, opts: &WeylOptions) -> Result<(WeylEvaluation, MatrixSequence)> {
    let ev = m_plus(spec, z, opts)?;
    let depth = ev.depth as i64;
    let seed = seed_matrix(spec, &opts.seed, z, Side::Plus, depth);
    // M̃₊(k) for k = depth..0, then F(k+1) = −M̃₊(k) F(k).
    let mut ms = vec![seed];
    for k in (1..=depth).rev() {
        let next = plus_step(&spec.potential_at(k)?, z, ms.last().expect("nonempty"))?;
        ms.push(next);
    }
    ms.reverse();
    let d = spec.dim();
    let mut f = vec![-CMatrix::identity(d)];
    for k in 0..depth as usize {
        let next = -(&ms[k] * &f[k]);
        f.push(next);
    }
    Ok((ev, MatrixSequence::new(0, f)))
}

/// `Im(z) Σ_{j=1}^{depth} F(j)* F(j) − Im M(z)`.
pub fn energy_defect(spec: &PotentialSpec, z: Complex64, opts: &WeylOptions) -> Result<f64> {
    let (ev, f) = weyl_solution(spec, z, opts)?;
    let d = spec.dim();
    let mut acc = CMatrix::zeros(d);
    for j in 1..=f.end() {
        let fj = f.get(j)?;
        acc = &acc + &(&fj.adjoint() * fj);
    }
    operator_norm(&(&acc.scale_re(z.im) - &ev.value.im_part()))
}

/// `M₊(t + iε)` along a decreasing `ε` schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValue {
    pub t: f64,
    pub eps: Vec<f64>,
    pub values: Vec<CMatrix>,
    /// Evaluation at the smallest `ε`.
    pub last: WeylEvaluation,
    /// `‖M(t + iε_k) − M(t + iε_{k−1})‖` for the last two steps.
    pub cauchy_diff: f64,
    /// `log(diff_{k−1} / diff_k) / log(ε_{k−2} / ε_{k−1})` from the last
    /// three points (exact for geometric schedules); `None` with fewer than three.
    pub observed_order: Option<f64>,
    /// Convergence is sub-linear in `ε` (band edges give order 1/2).
    pub slow: bool,
}

pub fn boundary_value(spec: &PotentialSpec, t: f64, eps_schedule: &[f64], opts: &WeylOptions) -> Result<BoundaryValue> {
    if eps_schedule.len() < 2 {
        return Err(Error::invalid("eps schedule needs at least two values"));
    }
    if eps_schedule.iter().any(|&e| !(e > 0.0)) || eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eps schedule must be positive and strictly decreasing"));
    }
    let evals = eps_schedule
        .iter()
        .map(|&e| m_plus(spec, Complex64::new(t, e), opts))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<CMatrix> = evals.iter().map(|e| e.value.clone()).collect();
    let diffs: Vec<f64> = values
        .windows(2)
        .map(|w| operator_norm(&(&w[1] - &w[0])))
        .collect::<Result<_>>()?;
    let k = diffs.len();
    let observed_order = (k >= 2).then(|| {
        let e = eps_schedule;
        let (d1, d2) = (diffs[k - 2], diffs[k - 1]);
        if d1 > 0.0 && d2 > 0.0 {
            (d1 / d2).ln() / (e[k - 2] / e[k - 1]).ln()
        } else {
            f64::INFINITY
        }
    });
    let slow = observed_order.is_some_and(|p| p < 0.75);
    Ok(BoundaryValue {
        t,
        eps: eps_schedule.to_vec(),
        last: evals.last().expect("nonempty").clone(),
        values,
        cauchy_diff: diffs[k - 1],
        observed_order,
        slow,
    })
}

/// `π⁻¹ Im M₊(t + iε)`.
pub fn ac_density(spec: &PotentialSpec, t: f64, eps: f64, opts: &WeylOptions) -> Result<CMatrix> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let ev = m_plus(spec, Complex64::new(t, eps), opts)?;
    Ok(ev.value.im_part().scale_re(1.0 / std::f64::consts::PI))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub t: f64,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub dim: usize,
    pub eps: f64,
    pub rank_tol: f64,
    pub points: Vec<RankPoint>,
    /// Runs of consecutive grid points of rank `d`.
    pub full_rank: IntervalUnion,
}

impl RankReport {
    pub fn rank_at(&self, t: f64) -> Option<usize> {
        self.points.iter().find(|p| p.t == t).map(|p| p.rank)
    }
}

pub const RANK_TOL: f64 = 1e-4;
pub const RANK_EPS: f64 = 1e-5;

/// Rank of `Im M₊(t + iε)` over a grid of `t`.
pub fn rank_classify(spec: &PotentialSpec, t_grid: &[f64], eps: f64, rank_tol: f64, opts: &WeylOptions) -> Result<RankReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let points = t_grid
        .par_iter()
        .map(|&t| {
            let ev = m_plus(spec, Complex64::new(t, eps), opts)?;
            let eigenvalues = hermitian_eigenvalues(&ev.value.im_part())?;
            let rank = eigenvalues.iter().filter(|&&l| l > rank_tol).count();
            Ok(RankPoint { t, rank, eigenvalues })
        })
        .collect::<Result<Vec<_>>>()?;
    let d = spec.dim();
    let mut runs = Vec::new();
    let mut start: Option<f64> = None;
    let mut prev = f64::NAN;
    for p in &points {
        match (p.rank == d, start) {
            (true, None) => start = Some(p.t),
            (false, Some(s)) => {
                runs.push((s, prev));
                start = None;
            }
            _ => {}
        }
        prev = p.t;
    }
    if let Some(s) = start {
        runs.push((s, prev));
    }
    Ok(RankReport {
        dim: d,
        eps,
        rank_tol,
        points,
        full_rank: IntervalUnion::new(runs)?,
    })
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::matcore::{hermitian_eigenvalues, operator_norm};
    use crate::potential::{Kind, Support};
    use proptest::prelude::*;

    fn norm(m: &CMatrix) -> f64 {
        operator_norm(m).unwrap()
    }

    fn random_spec(d: usize, seed: u64, amplitude: f64, support: Support) -> PotentialSpec {
        PotentialSpec::new(d, amplitude, support, Kind::Random { seed, amplitude }).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn herglotz_and_symmetric(
            d in 1usize..4, seed in any::<u64>(), amp in 0.0..2.0f64,
            x in -4.0..4.0f64, y in 0.05..3.0f64,
        ) {
            let spec = random_spec(d, seed, amp, Support::WholeLine);
            let z = Complex64::new(x, y);
            for m in [
                m_plus(&spec, z, &WeylOptions::default()).unwrap().value,
                m_tilde_minus(&spec, 0, z, &WeylOptions::default()).unwrap().value,
            ] {
                let lowest = hermitian_eigenvalues(&m.im_part()).unwrap()[0];
                prop_assert!(lowest > 0.0, "Im M has eigenvalue {lowest}");
                prop_assert!(norm(&(&m - &m.transpose())) <= 1e-10 * norm(&m).max(1.0));
            }
        }

        #[test]
        fn conjugate_parameter_gives_conjugate_value(
            d in 1usize..4, seed in any::<u64>(), x in -3.0..3.0f64, y in 0.1..2.0f64,
        ) {
            let spec = random_spec(d, seed, 1.0, Support::HalfLine);
            let z = Complex64::new(x, y);
            let up = m_plus(&spec, z, &WeylOptions::default()).unwrap().value;
            let down = m_plus(&spec, z.conj(), &WeylOptions::default()).unwrap().value;
            prop_assert!(norm(&(&down - &up.conj())) <= 1e-8 * norm(&up).max(1.0));
        }
    }
}
