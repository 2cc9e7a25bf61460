//! The space of bounded potentials under the weighted metric, the shift map
//! and ω-limit sets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{operator_norm, CMatrix};
use crate::potential::{Kind, PotentialSpec, Support};

/// Window half-width used when comparing shifts numerically.
pub const WINDOW: i64 = 64;

/// Partial sum of the metric plus a bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Σ_{|n| ≤ n_max} 2^{−|n|} ‖A(n) − B(n)‖`, with tail bound `4·max(C_A, C_B)·2^{−n_max}`.
pub fn potential_metric(a: &PotentialSpec, b: &PotentialSpec, n_max: u32) -> Result<MetricValue> {
    if a.dim() != b.dim() {
        return Err(Error::invalid("potentials have different dimensions"));
    }
    let n_max = i64::from(n_max);
    let mut value = 0.0;
    for n in -n_max..=n_max {
        let w = 0.5f64.powi(n.unsigned_abs() as i32);
        value += w * operator_norm(&(&a.potential_at(n)? - &b.potential_at(n)?))?;
    }
    Ok(MetricValue {
        value,
        tail_bound: 4.0 * a.bound().max(b.bound()) * 0.5f64.powi(n_max as i32),
    })
}

/// `(S^k B)(n) = B(n + k)`.
pub fn shift(b: &PotentialSpec, k: i64) -> PotentialSpec {
    b.shifted(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaMethod {
    ExactPeriodic,
    NumericClustering,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaLimitApprox {
    pub representatives: Vec<PotentialSpec>,
    pub method: OmegaMethod,
    /// `(n, distance from S^n B to the nearest representative)`.
    pub convergence_trace: Vec<(i64, f64)>,
    /// False when numeric clustering did not reproduce itself on an earlier
    /// block of shifts, or hit the representative cap.
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaOptions {
    pub n_max: i64,
    pub cluster_tol: f64,
    /// Upper limit on numeric representatives before giving up.
    pub max_representatives: usize,
}

impl Default for OmegaOptions {
    fn default() -> Self {
        OmegaOptions {
            n_max: 4096,
            cluster_tol: 1e-6,
            max_representatives: 512,
        }
    }
}

/// Approximate `ω(B)`.
///
/// Specs whose kind fixes the tail structure (zero, constant, periodic,
/// decaying, explicit tables) are handled exactly; sparse and random specs
/// are clustered numerically over the shifts `n ∈ [n_max/2, n_max]`.
pub fn omega_limit(b: &PotentialSpec, opts: &OmegaOptions) -> Result<OmegaLimitApprox> {
    if b.support() != Support::HalfLine {
        return Err(Error::invalid("omega_limit expects a half-line spec"));
    }
    if opts.n_max < 8 {
        return Err(Error::invalid("n_max must be at least 8"));
    }
    let d = b.dim();
    let zero = || vec![PotentialSpec::zero(d, Support::WholeLine)];
    let exact = match b.kind() {
        Kind::Zero | Kind::Decaying { .. } | Kind::Explicit(_) => Some(zero()),
        Kind::Constant(_) => Some(vec![b.tail_only()]),
        Kind::Periodic(ms) => {
            let base = b.tail_only();
            let mut reps: Vec<PotentialSpec> = Vec::new();
            for j in 0..ms.len() as i64 {
                let cand = base.shifted(j);
                let mut fresh = true;
                for r in &reps {
                    if potential_metric(r, &cand, WINDOW as u32)?.value <= opts.cluster_tol {
                        fresh = false;
                        break;
                    }
                }
                if fresh {
                    reps.push(cand);
                }
            }
            Some(reps)
        }
        Kind::Sparse { .. } | Kind::Random { .. } => None,
    };
    let trace_sites: Vec<i64> = std::iter::successors(Some(8i64), |&n| Some(n * 2))
        .take_while(|&n| n <= opts.n_max)
        .collect();
    if let Some(representatives) = exact {
        let mut omega = OmegaLimitApprox {
            representatives,
            method: OmegaMethod::ExactPeriodic,
            convergence_trace: Vec::new(),
            stable: true,
        };
        let dist = dist_to_omega(b, &omega, &trace_sites)?;
        omega.convergence_trace = trace_sites.into_iter().zip(dist).collect();
        return Ok(omega);
    }

    let late = cluster_shifts(b, opts.n_max / 2, opts.n_max, opts)?;
    let early = cluster_shifts(b, opts.n_max / 4, opts.n_max / 2, opts)?;
    let stable = late.complete
        && early.complete
        && covers(&late.windows, &early.windows, opts.cluster_tol)
        && covers(&early.windows, &late.windows, opts.cluster_tol);
    let representatives = late
        .windows
        .iter()
        .map(|w| window_spec(b, w))
        .collect::<Result<Vec<_>>>()?;
    let mut omega = OmegaLimitApprox {
        representatives,
        method: OmegaMethod::NumericClustering,
        convergence_trace: Vec::new(),
        stable,
    };
    let dist = dist_to_omega(b, &omega, &trace_sites)?;
    omega.convergence_trace = trace_sites.into_iter().zip(dist).collect();
    Ok(omega)
}

/// `min_rep d(S^n B, rep)` for each `n`, on the window `|m| ≤ 64`.
pub fn dist_to_omega(b: &PotentialSpec, omega: &OmegaLimitApprox, n_list: &[i64]) -> Result<Vec<f64>> {
    if omega.representatives.is_empty() {
        return Err(Error::invalid("empty omega-limit approximation"));
    }
    n_list
        .par_iter()
        .map(|&n| {
            let s = b.shifted(n);
            let mut best = f64::INFINITY;
            for r in &omega.representatives {
                best = best.min(potential_metric(&s, r, WINDOW as u32)?.value);
            }
            Ok(best)
        })
        .collect()
}

type Window = Vec<CMatrix>;

struct Clustering {
    windows: Vec<Window>,
    complete: bool,
}

fn window_distance(a: &Window, b: &Window, cutoff: f64) -> f64 {
    // Visit the heavy central sites first so the cutoff triggers early.
    let mut acc = 0.0;
    for k in 0..=WINDOW {
        let w = 0.5f64.powi(k as i32);
        for idx in [WINDOW + k, WINDOW - k] {
            acc += w * operator_norm(&(&a[idx as usize] - &b[idx as usize])).unwrap_or(f64::INFINITY);
            if k == 0 {
                break;
            }
        }
        if acc > cutoff {
            return acc;
        }
    }
    acc
}

fn cluster_shifts(b: &PotentialSpec, lo: i64, hi: i64, opts: &OmegaOptions) -> Result<Clustering> {
    let samples: Vec<CMatrix> = ((lo - WINDOW)..=(hi + WINDOW))
        .map(|n| b.potential_at(n))
        .collect::<Result<_>>()?;
    let mut leaders: Vec<Window> = Vec::new();
    for n in lo..=hi {
        let start = (n - WINDOW - (lo - WINDOW)) as usize;
        let w: Window = samples[start..start + 2 * WINDOW as usize + 1].to_vec();
        if leaders.iter().all(|l| window_distance(l, &w, opts.cluster_tol) > opts.cluster_tol) {
            if leaders.len() >= opts.max_representatives {
                return Ok(Clustering {
                    windows: leaders,
                    complete: false,
                });
            }
            leaders.push(w);
        }
    }
    Ok(Clustering {
        windows: leaders,
        complete: true,
    })
}

fn covers(a: &[Window], b: &[Window], tol: f64) -> bool {
    b.iter().all(|w| a.iter().any(|l| window_distance(l, w, 2.0 * tol) <= 2.0 * tol))
}

fn window_spec(b: &PotentialSpec, w: &Window) -> Result<PotentialSpec> {
    let table: BTreeMap<i64, CMatrix> = w
        .iter()
        .enumerate()
        .filter(|(_, m)| m.max_abs() > 0.0)
        .map(|(i, m)| (i as i64 - WINDOW, m.clone()))
        .collect();
    PotentialSpec::new(b.dim(), b.bound(), Support::WholeLine, Kind::Explicit(table))
}
