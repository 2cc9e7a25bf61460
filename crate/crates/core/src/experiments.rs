//! Drivers for the reflectionless criterion, the value-distribution defect
//! between the two half-line m-functions, and the ω-limit pipeline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dist_to_omega, omega_limit, potential_metric, OmegaLimitApprox, OmegaOptions, WINDOW};
use crate::error::{Error, Result};
use crate::harmonic::{vd_integral, IntervalUnion, Quadrature, POINTS_PER_UNIT};
use crate::lattice::{transfer, transfer_product, Side};
use crate::matcore::{operator_norm, CMatrix};
use crate::potential::{PotentialSpec, Support};
use crate::siegel::{fractional_action, SymplecticMap};
use crate::weyl::{
    m_plus, m_plus_at, m_tilde_minus, m_tilde_minus_dirichlet, rank_classify, RankReport, WeylOptions, RANK_EPS,
    RANK_TOL,
};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_GRID_STEP: f64 = 1e-3;

/// Uniform grid `a, a + h, …` over each interval, endpoints included.
pub fn uniform_grid(a: &IntervalUnion, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    if !a.is_bounded() {
        return Err(Error::invalid("grid needs a bounded set"));
    }
    let mut out = Vec::new();
    for &(lo, hi) in a.pieces() {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        out.extend((0..=n).map(|k| lo + k as f64 * step));
    }
    if out.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    Ok(out)
}

/// `‖M₊(t + iε) + conj M̃₋(t + iε)‖` at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionlessReport {
    pub eps: f64,
    pub grid: Vec<f64>,
    pub residual: Vec<f64>,
    pub converged: Vec<bool>,
    pub max: f64,
    pub mean: f64,
}

/// Residual of the reflectionless condition for a whole-line spec.
///
/// `M₊` is `M̃₊(0)` (sites `≥ 1`) and the left function is `M̃₋(0)` (sites `≤ 0`).
pub fn reflectionless_residual(
    b: &PotentialSpec,
    a: &IntervalUnion,
    eps: f64,
    grid_step: f64,
    opts: &WeylOptions,
) -> Result<ReflectionlessReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let grid = uniform_grid(a, grid_step)?;
    let rows = grid
        .par_iter()
        .map(|&t| {
            let z = Complex64::new(t, eps);
            let mp = m_plus(b, z, opts)?;
            let mm = m_tilde_minus(b, 0, z, opts)?;
            let r = operator_norm(&(&mp.value + &mm.value.conj()))?;
            Ok((r, mp.converged && mm.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let residual: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let max = residual.iter().copied().fold(0.0, f64::max);
    let mean = residual.iter().sum::<f64>() / residual.len() as f64;
    Ok(ReflectionlessReport {
        eps,
        converged: rows.iter().map(|r| r.1).collect(),
        grid,
        residual,
        max,
        mean,
    })
}

/// Reflectionless residuals along an `ε` schedule, with the log-log slope
/// of the maximum residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionlessScan {
    pub reports: Vec<ReflectionlessReport>,
    pub decay_order: Option<f64>,
}

impl ReflectionlessScan {
    pub fn max_at(&self, eps: f64) -> Option<f64> {
        self.reports.iter().find(|r| r.eps == eps).map(|r| r.max)
    }

    /// Maximum residual decreases along the schedule.
    pub fn decreasing(&self) -> bool {
        self.reports.windows(2).all(|w| w[1].max < w[0].max)
    }
}

pub fn reflectionless_scan(
    b: &PotentialSpec,
    a: &IntervalUnion,
    eps_list: &[f64],
    grid_step: f64,
    opts: &WeylOptions,
) -> Result<ReflectionlessScan> {
    let reports = eps_list
        .iter()
        .map(|&e| reflectionless_residual(b, a, e, grid_step, opts))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.max > 0.0)
        .map(|r| (r.eps.ln(), r.max.ln()))
        .collect();
    Ok(ReflectionlessScan {
        decay_order: loglog_slope(&pts),
        reports,
    })
}

/// Least-squares slope; `None` with fewer than two points.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// How `M̃₋(N, ·)` is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinusSeed {
    /// `F₋(0) = 0`, forward from site 1.
    Dirichlet,
    /// Forward from deep inside the (zero) left half line.
    Deep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpOptions {
    pub eps: f64,
    pub points_per_unit: usize,
    pub minus_seed: MinusSeed,
    pub weyl: WeylOptions,
    /// Check the conjugation identity for products at every 16th grid point.
    pub check_identities: bool,
    /// Grid points per interval of `A` for the full-multiplicity check.
    pub rank_points: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            eps: DEFAULT_EPS,
            points_per_unit: POINTS_PER_UNIT,
            minus_seed: MinusSeed::Dirichlet,
            weyl: WeylOptions::boundary(),
            check_identities: true,
            rank_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpRow {
    pub n: i64,
    pub minus_integral: Quadrature,
    pub plus_integral: Quadrature,
    pub defect: f64,
    /// Sum of the two quadrature error estimates.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BPDefectReport {
    pub rows: Vec<BpRow>,
    pub c: Vec<(f64, f64)>,
    pub a: IntervalUnion,
    pub s: IntervalUnion,
    pub eps: f64,
    pub minus_seed: MinusSeed,
    /// Fraction of the sampled points of `A` where `Im M₊` has full rank.
    pub full_rank_fraction: f64,
    /// `A` lies inside the estimated full-multiplicity a.c. spectrum.
    pub hypothesis_holds: bool,
    /// Largest residual of the product conjugation identity, when checked.
    pub identity_residual: Option<f64>,
}

impl BPDefectReport {
    pub fn defects(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.defect).collect()
    }
}

fn check_c(c: &[Complex64], d: usize) -> Result<()> {
    if c.len() != d {
        return Err(Error::invalid("compression vector has the wrong length"));
    }
    if c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() > 1.0 + 1e-12 {
        return Err(Error::invalid("compression vector must have norm <= 1"));
    }
    Ok(())
}

/// `∫_A ω_{c*M̃₋(N,t)c}(−S) dt − ∫_A ω_{c*M̃₊(N,t)c}(S) dt` for each `N`.
pub fn bp_defect(
    b: &PotentialSpec,
    n_list: &[i64],
    a: &IntervalUnion,
    s: &IntervalUnion,
    c: &[Complex64],
    opts: &BpOptions,
) -> Result<BPDefectReport> {
    if b.support() != Support::HalfLine {
        return Err(Error::invalid("bp_defect expects a half-line spec"));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    if n_list.iter().any(|&n| n < 1) {
        return Err(Error::invalid("N values must be >= 1"));
    }
    check_c(c, b.dim())?;
    let grid = a.midpoint_grid(opts.points_per_unit)?;
    if grid.is_empty() {
        return Err(Error::invalid("A has zero measure"));
    }
    let minus_s = s.negate();
    let mut rows = Vec::with_capacity(n_list.len());
    let mut identity_residual: Option<f64> = None;
    for &n in n_list {
        let samples = grid
            .nodes
            .par_iter()
            .enumerate()
            .map(|(k, &t)| {
                let z = Complex64::new(t, opts.eps);
                let plus = m_plus_at(b, n, z, &opts.weyl)?.value;
                let minus = match opts.minus_seed {
                    MinusSeed::Dirichlet => m_tilde_minus_dirichlet(b, n, z)?,
                    MinusSeed::Deep => m_tilde_minus(b, n, z, &opts.weyl)?.value,
                };
                let check = if opts.check_identities && k % 16 == 0 {
                    Some(conjugation_identity_residual(b, n, t, &plus)?)
                } else {
                    None
                };
                Ok((plus, minus, check))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut plus, mut minus) = (Vec::with_capacity(samples.len()), Vec::with_capacity(samples.len()));
        for (p, m, chk) in samples {
            plus.push(p);
            minus.push(m);
            if let Some(r) = chk {
                identity_residual = Some(identity_residual.map_or(r, |x: f64| x.max(r)));
            }
        }
        let minus_integral = vd_integral(&grid, &minus, c, &minus_s)?;
        let plus_integral = vd_integral(&grid, &plus, c, s)?;
        rows.push(BpRow {
            n,
            defect: minus_integral.value - plus_integral.value,
            floor: minus_integral.error + plus_integral.error,
            minus_integral,
            plus_integral,
        });
    }

    let rank_grid = rank_grid(a, opts.rank_points);
    let (_, flags) = ac_full_rank(b, &rank_grid, &opts.weyl)?;
    let full = flags.iter().filter(|&&f| f).count();
    let full_rank_fraction = full as f64 / flags.len().max(1) as f64;
    Ok(BPDefectReport {
        rows,
        c: c.iter().map(|z| (z.re, z.im)).collect(),
        a: a.clone(),
        s: s.clone(),
        eps: opts.eps,
        minus_seed: opts.minus_seed,
        full_rank_fraction,
        hypothesis_holds: full == flags.len(),
        identity_residual,
    })
}

/// Grid points where `Im M₊` has full rank both at `RANK_EPS` and at
/// `RANK_EPS / 100`, with the smallest eigenvalue keeping at least half its
/// size. Eigenvalues and gaps scale like `ε` and drop out; a.c. spectrum does not.
pub fn ac_full_rank(b: &PotentialSpec, grid: &[f64], opts: &WeylOptions) -> Result<(RankReport, Vec<bool>)> {
    let opts = opts.clone().with_tol(1e-8);
    let coarse = rank_classify(b, grid, RANK_EPS, RANK_TOL, &opts)?;
    let fine = rank_classify(b, grid, RANK_EPS / 100.0, RANK_TOL, &opts)?;
    let d = b.dim();
    let flags = coarse
        .points
        .iter()
        .zip(&fine.points)
        .map(|(c, f)| c.rank == d && f.rank == d && f.eigenvalues[0] >= 0.5 * c.eigenvalues[0])
        .collect();
    Ok((coarse, flags))
}

/// Maximal runs of consecutive flagged grid points.
fn runs(grid: &[f64], flags: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for (i, (&t, &f)) in grid.iter().zip(flags).enumerate() {
        match (f, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, grid[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, grid[grid.len() - 1]));
    }
    out
}

fn rank_grid(a: &IntervalUnion, per_interval: usize) -> Vec<f64> {
    let k = per_interval.max(2);
    a.pieces()
        .iter()
        .filter(|(lo, hi)| hi > lo)
        .flat_map(|&(lo, hi)| (0..k).map(move |j| lo + (j as f64 + 0.5) * (hi - lo) / k as f64))
        .collect()
}

/// Relative residual of `−conj(P₊(n,t)·M) = P₋(n,t)·(−T₊(1,t)·conj M)` for
/// real `t`, with `·` the fractional linear action.
pub fn conjugation_identity_residual(b: &PotentialSpec, n: i64, t: f64, m: &CMatrix) -> Result<f64> {
    let z = Complex64::new(t, 0.0);
    let p_plus = SymplecticMap::new(transfer_product(b, 1..=n, z, Side::Plus)?.matrix)?;
    let t1 = SymplecticMap::new(transfer(b, 1, z, Side::Plus)?.matrix)?;
    let lhs = -fractional_action(&p_plus, m)?.conj();
    let inner = -fractional_action(&t1, &m.conj())?;
    let rhs = if n >= 2 {
        let p_minus = SymplecticMap::new(transfer_product(b, 2..=n, z, Side::Minus)?.matrix)?;
        fractional_action(&p_minus, &inner)?
    } else {
        inner
    };
    Ok(operator_norm(&(&lhs - &rhs))? / operator_norm(&lhs)?.max(1.0))
}

/// Per-representative outcome of the ω-limit pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeSummary {
    pub index: usize,
    pub spec_hash: String,
    pub scan: ReflectionlessScan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemlingReport {
    pub omega: OmegaLimitApprox,
    pub ranks: RankReport,
    /// `A ∩` (estimated full-multiplicity a.c. spectrum), shrunk away from edges.
    /// The runs behind it are those of [`ac_full_rank`].
    pub test_set: IntervalUnion,
    pub representatives: Vec<RepresentativeSummary>,
    /// The estimate of the a.c. set is empty, so there is nothing to test.
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemlingOptions {
    pub omega: OmegaOptions,
    pub rank_step: f64,
    /// Trim this much from each end of every full-rank run.
    pub edge_margin: f64,
    pub eps_list: Vec<f64>,
    pub grid_step: f64,
    pub weyl: WeylOptions,
}

impl Default for RemlingOptions {
    fn default() -> Self {
        RemlingOptions {
            omega: OmegaOptions::default(),
            rank_step: 0.01,
            edge_margin: 0.05,
            eps_list: vec![1e-4, 1e-5],
            grid_step: DEFAULT_GRID_STEP,
            weyl: WeylOptions::boundary(),
        }
    }
}

/// ω-limit, a.c. rank estimate, and reflectionless residuals of each limit point.
pub fn remling_check(b: &PotentialSpec, a: &IntervalUnion, opts: &RemlingOptions) -> Result<RemlingReport> {
    let omega = omega_limit(b, &opts.omega)?;
    let rank_grid = uniform_grid(a, opts.rank_step)?;
    let (ranks, flags) = ac_full_rank(b, &rank_grid, &opts.weyl)?;
    let trimmed = IntervalUnion::new(
        runs(&rank_grid, &flags)
            .into_iter()
            .map(|(lo, hi)| (lo + opts.edge_margin, hi - opts.edge_margin))
            .filter(|(lo, hi)| hi > lo),
    )?;
    let test_set = a.intersect(&trimmed);
    if test_set.is_empty() {
        return Ok(RemlingReport {
            omega,
            ranks,
            test_set,
            representatives: Vec::new(),
            vacuous: true,
        });
    }
    let representatives = omega
        .representatives
        .iter()
        .enumerate()
        .map(|(index, rep)| {
            Ok(RepresentativeSummary {
                index,
                spec_hash: rep.content_hash(),
                scan: reflectionless_scan(rep, &test_set, &opts.eps_list, opts.grid_step, &opts.weyl)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RemlingReport {
        omega,
        ranks,
        test_set,
        representatives,
        vacuous: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VdRow {
    pub n: i64,
    pub c_index: usize,
    pub shifted: Quadrature,
    pub limit: Quadrature,
    pub difference: f64,
    pub floor: f64,
}

/// Value-distribution integrals of `M₊(S^{n_j}B)` against those of the
/// nearest ω-limit point, for each compression vector.
pub fn vd_convergence_check(
    b: &PotentialSpec,
    n_list: &[i64],
    a: &IntervalUnion,
    s: &IntervalUnion,
    c_list: &[Vec<Complex64>],
    eps: f64,
    opts: &WeylOptions,
) -> Result<Vec<VdRow>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n values must increase"));
    }
    for c in c_list {
        check_c(c, b.dim())?;
    }
    let omega = omega_limit(&b.with_support(Support::HalfLine), &OmegaOptions::default())?;
    let grid = a.midpoint_grid(POINTS_PER_UNIT)?;
    let eval = |spec: &PotentialSpec, site: i64| -> Result<Vec<CMatrix>> {
        grid.nodes
            .par_iter()
            .map(|&t| Ok(m_plus_at(spec, site, Complex64::new(t, eps), opts)?.value))
            .collect()
    };
    let mut rows = Vec::new();
    for &n in n_list {
        // M₊ of the shifted potential is M̃₊(n) of the original.
        let shifted = eval(b, n)?;
        let probe = b.shifted(n);
        let mut best = (f64::INFINITY, 0);
        for (i, r) in omega.representatives.iter().enumerate() {
            let dist = potential_metric(&probe, r, WINDOW as u32)?.value;
            if dist < best.0 {
                best = (dist, i);
            }
        }
        let limit = eval(&omega.representatives[best.1], 0)?;
        for (c_index, c) in c_list.iter().enumerate() {
            let q1 = vd_integral(&grid, &shifted, c, s)?;
            let q2 = vd_integral(&grid, &limit, c, s)?;
            rows.push(VdRow {
                n,
                c_index,
                difference: (q1.value - q2.value).abs(),
                floor: q1.error + q2.error,
                shifted: q1,
                limit: q2,
            });
        }
    }
    Ok(rows)
}

/// `dist_to_omega` over `n = 2^k`, `k_lo..=k_hi`.
pub fn omega_trace(b: &PotentialSpec, omega: &OmegaLimitApprox, k_lo: u32, k_hi: u32) -> Result<Vec<(i64, f64)>> {
    let ns: Vec<i64> = (k_lo..=k_hi).map(|k| 1i64 << k).collect();
    Ok(ns.iter().copied().zip(dist_to_omega(b, omega, &ns)?).collect())
}

/// Tool version and configuration hash embedded in every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_json: &str) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: crate::potential::hash_hex(config_json.as_bytes()),
        }
    }

    pub fn header(&self) -> String {
        format!("# mweyl {} config={}\n", self.version, self.config_hash)
    }

    /// `{experiment}-{hash}-{params}.{ext}` inside `dir`.
    pub fn path(&self, dir: &Path, experiment: &str, params: &str, ext: &str) -> PathBuf {
        dir.join(format!("{experiment}-{}-{params}.{ext}", self.config_hash))
    }
}

/// Locale-free float formatting with round-trip precision.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn csv(prov: &Provenance, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = prov.header();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

impl ReflectionlessReport {
    pub fn to_csv(&self, prov: &Provenance) -> String {
        csv(
            prov,
            &["t", "eps", "residual", "converged"],
            self.grid.iter().zip(&self.residual).zip(&self.converged).map(|((t, r), ok)| {
                vec![fmt_f64(*t), fmt_f64(self.eps), fmt_f64(*r), ok.to_string()]
            }),
        )
    }
}

impl ReflectionlessScan {
    pub fn to_csv(&self, prov: &Provenance) -> String {
        csv(
            prov,
            &["t", "eps", "residual", "converged"],
            self.reports.iter().flat_map(|rep| {
                rep.grid.iter().zip(&rep.residual).zip(&rep.converged).map(move |((t, r), ok)| {
                    vec![fmt_f64(*t), fmt_f64(rep.eps), fmt_f64(*r), ok.to_string()]
                })
            }),
        )
    }
}

impl BPDefectReport {
    pub fn to_csv(&self, prov: &Provenance) -> String {
        csv(
            prov,
            &["n", "minus_integral", "plus_integral", "defect", "floor"],
            self.rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    fmt_f64(r.minus_integral.value),
                    fmt_f64(r.plus_integral.value),
                    fmt_f64(r.defect),
                    fmt_f64(r.floor),
                ]
            }),
        )
    }
}

/// `(n, distance)` rows.
pub fn trace_csv(prov: &Provenance, trace: &[(i64, f64)]) -> String {
    csv(prov, &["n", "distance"], trace.iter().map(|(n, d)| vec![n.to_string(), fmt_f64(*d)]))
}

/// One-line textual summary of a scan.
pub fn describe_scan(scan: &ReflectionlessScan) -> String {
    let mut s = String::new();
    for r in &scan.reports {
        let _ = write!(s, "eps={:e} max={:.3e} mean={:.3e}; ", r.eps, r.max, r.mean);
    }
    match scan.decay_order {
        Some(p) => {
            let _ = write!(s, "order={p:.3}");
        }
        None => s.push_str("order=n/a"),
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Kind;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn iv(a: f64, b: f64) -> IntervalUnion {
        IntervalUnion::interval(a, b).unwrap()
    }

    #[test]
    fn free_reflectionless() {
        let zero = PotentialSpec::zero(1, Support::WholeLine);
        let opts = WeylOptions::boundary();
        let scan = reflectionless_scan(&zero, &iv(-1.9, 1.9), &[1e-4, 1e-5], 1e-2, &opts).unwrap();
        assert!(scan.max_at(1e-4).unwrap() <= 5e-3);
        assert!(scan.max_at(1e-5).unwrap() <= 5e-4);
        assert!(scan.decay_order.unwrap() >= 0.9);
        assert!(scan.reports.iter().all(|r| r.converged.iter().all(|&x| x)));
    }

    #[test]
    fn free_residual_off_band() {
        let zero = PotentialSpec::zero(1, Support::WholeLine);
        let r = reflectionless_residual(&zero, &iv(3.0, 3.0), 1e-6, 1.0, &WeylOptions::boundary()).unwrap();
        // M₊ + conj M̃₋ = 2m + t → √5 for t = 3.
        assert!((r.residual[0] - 5f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn periodic_reflectionless_on_band() {
        let p = PotentialSpec::new(
            1,
            1.0,
            Support::WholeLine,
            Kind::Periodic(vec![CMatrix::from_real_diag(&[1.0]), CMatrix::from_real_diag(&[-1.0])]),
        )
        .unwrap();
        let scan = reflectionless_scan(&p, &iv(1.1, 2.1), &[1e-3, 1e-4, 1e-5], 1e-2, &WeylOptions::boundary()).unwrap();
        assert!(scan.decreasing());
        assert!(scan.max_at(1e-5).unwrap() < 1e-2);
    }

    #[test]
    fn bp_full_line_set_is_exact() {
        let zero = PotentialSpec::zero(1, Support::HalfLine);
        let opts = BpOptions {
            points_per_unit: 256,
            ..BpOptions::default()
        };
        let r = bp_defect(&zero, &[4, 16], &iv(-1.0, 1.0), &IntervalUnion::real_line(), &[c(1.0, 0.0)], &opts).unwrap();
        assert!(r.defects().iter().all(|&d| d == 0.0));
        assert!(r.hypothesis_holds);
        assert!(r.identity_residual.unwrap() < 1e-8);
    }

    #[test]
    fn bp_defect_decays_in_free_case() {
        let zero = PotentialSpec::zero(1, Support::HalfLine);
        let opts = BpOptions {
            points_per_unit: 512,
            ..BpOptions::default()
        };
        let s = IntervalUnion::new([(0.0, f64::INFINITY)]).unwrap();
        let r = bp_defect(&zero, &[4, 16, 64], &iv(0.0, 1.0), &s, &[c(1.0, 0.0)], &opts).unwrap();
        let d = r.defects();
        assert!(d.iter().all(|x| x.abs() <= 2.0));
        assert!(d[2].abs() < d[0].abs());
    }

    #[test]
    fn bp_flags_localised_potential() {
        let b = PotentialSpec::new(1, 2.0, Support::HalfLine, Kind::Random { seed: 3, amplitude: 2.0 }).unwrap();
        let opts = BpOptions {
            points_per_unit: 64,
            rank_points: 11,
            ..BpOptions::default()
        };
        let s = IntervalUnion::new([(0.0, f64::INFINITY)]).unwrap();
        let r = bp_defect(&b, &[4, 16], &iv(-1.0, 1.0), &s, &[c(1.0, 0.0)], &opts).unwrap();
        assert!(!r.hypothesis_holds);
    }

    #[test]
    fn dirichlet_and_deep_seed_agree_at_depth() {
        let b = PotentialSpec::new(2, 2.0, Support::HalfLine, Kind::Random { seed: 12, amplitude: 1.0 }).unwrap();
        for t in [-1.0, 0.3] {
            let z = c(t, 1.0);
            let a = m_tilde_minus_dirichlet(&b, 64, z).unwrap();
            let d = m_tilde_minus(&b, 64, z, &WeylOptions::boundary()).unwrap().value;
            assert!(operator_norm(&(&a - &d)).unwrap() < 1e-6);
        }
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [1e-3, 1e-4, 1e-5].iter().map(|&e: &f64| (e.ln(), (3.0 * e).ln())).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn csv_is_deterministic() {
        let zero = PotentialSpec::zero(1, Support::WholeLine);
        let prov = Provenance::new("{}");
        let a = reflectionless_residual(&zero, &iv(-1.0, 1.0), 1e-3, 0.25, &WeylOptions::boundary()).unwrap();
        let b = reflectionless_residual(&zero, &iv(-1.0, 1.0), 1e-3, 0.25, &WeylOptions::boundary()).unwrap();
        assert_eq!(a.to_csv(&prov), b.to_csv(&prov));
        assert!(a.to_csv(&prov).starts_with("# mweyl "));
        let p = prov.path(Path::new("/tmp"), "reflectionless", "eps1e-3", "csv");
        assert!(p.to_string_lossy().contains(&prov.config_hash));
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = uniform_grid(&iv(-1.0, 1.0), 0.5).unwrap();
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(uniform_grid(&iv(0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn bound_states_are_not_ac() {
        let b = PotentialSpec::new(1, 3.0, Support::HalfLine, Kind::Zero)
            .unwrap()
            .with_transient([(1, CMatrix::from_real_diag(&[3.0]))])
            .unwrap();
        // B(1) = 3 binds a state at 3 + 1/3 with a wide rank-1 shadow at small ε.
        let grid = [0.0, 3.2, 3.3334];
        let (coarse, flags) = ac_full_rank(&b, &grid, &WeylOptions::boundary()).unwrap();
        assert_eq!(coarse.points[1].rank, 1);
        assert_eq!(flags, vec![true, false, false]);
    }

    #[test]
    fn vd_convergence_for_constant_and_decaying() {
        let s_set = IntervalUnion::new([(0.0, f64::INFINITY)]).unwrap();
        let cs = vec![vec![c(1.0, 0.0)], vec![c(0.6, 0.0)]];
        let constant = PotentialSpec::new(1, 1.0, Support::HalfLine, Kind::Constant(CMatrix::from_real_diag(&[0.5]))).unwrap();
        let rows = vd_convergence_check(&constant, &[4, 16], &iv(0.0, 0.5), &s_set, &cs, 1e-3, &WeylOptions::boundary()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.difference < 1e-9));

        let decaying = PotentialSpec::new(
            1,
            1.0,
            Support::HalfLine,
            Kind::Decaying { b0: CMatrix::from_real_diag(&[1.0]), alpha: 1.0 },
        )
        .unwrap();
        let opts = WeylOptions::boundary().with_tol(1e-8);
        let rows = vd_convergence_check(&decaying, &[4, 64], &iv(0.0, 0.5), &s_set, &cs[..1], 1e-3, &opts).unwrap();
        assert!(rows[1].difference < rows[0].difference);
        assert!(vd_convergence_check(&decaying, &[8, 4], &iv(0.0, 0.5), &s_set, &cs, 1e-3, &WeylOptions::boundary()).is_err());
    }
}
