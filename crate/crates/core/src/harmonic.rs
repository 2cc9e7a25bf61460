//! Harmonic measure of the upper half plane and value-distribution integrals.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::CMatrix;
use crate::siegel::{compress, pseudo_hyperbolic};

/// Default quadrature density (points per unit length).
pub const POINTS_PER_UNIT: usize = 2048;

/// A finite union of disjoint closed intervals, sorted, possibly unbounded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    pieces: Vec<(f64, f64)>,
}

impl IntervalUnion {
    /// Normalise arbitrary intervals: sort and merge overlapping or touching ones.
    pub fn new(intervals: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v: Vec<(f64, f64)> = intervals.into_iter().collect();
        for &(a, b) in &v {
            if a.is_nan() || b.is_nan() || a > b || a == f64::INFINITY || b == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("bad interval [{a}, {b}]")));
            }
        }
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (a, b) in v {
            match pieces.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => pieces.push((a, b)),
            }
        }
        Ok(IntervalUnion { pieces })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new([(a, b)])
    }

    pub fn real_line() -> Self {
        IntervalUnion {
            pieces: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Lebesgue measure; infinite if a sentinel is present.
    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(|(a, b)| b - a).sum()
    }

    pub fn is_bounded(&self) -> bool {
        self.pieces.iter().all(|(a, b)| a.is_finite() && b.is_finite())
    }

    /// `−S`.
    pub fn negate(&self) -> Self {
        let mut pieces: Vec<(f64, f64)> = self.pieces.iter().map(|&(a, b)| (-b, -a)).collect();
        pieces.reverse();
        IntervalUnion { pieces }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        for &(a, b) in &self.pieces {
            for &(c, d) in &other.pieces {
                let (lo, hi) = (a.max(c), b.min(d));
                if lo < hi {
                    out.push((lo, hi));
                }
            }
        }
        Self::new(out).expect("intersection of valid intervals is valid")
    }

    /// Boundary-limit weight of a real point: 1 inside, 1/2 on an endpoint, 0 outside.
    pub fn indicator(&self, t: f64) -> f64 {
        for &(a, b) in &self.pieces {
            if a == b {
                continue;
            }
            if t == a || t == b {
                return 0.5;
            }
            if a < t && t < b {
                return 1.0;
            }
        }
        0.0
    }

    /// Composite-midpoint grid with roughly `points_per_unit` nodes per unit length.
    pub fn midpoint_grid(&self, points_per_unit: usize) -> Result<QuadratureGrid> {
        if !self.is_bounded() {
            return Err(Error::invalid("quadrature needs a bounded set"));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut blocks = Vec::new();
        for &(a, b) in &self.pieces {
            let len = b - a;
            if len <= 0.0 {
                continue;
            }
            let n = ((len * points_per_unit as f64).ceil() as usize).max(1);
            let h = len / n as f64;
            blocks.push((nodes.len(), n));
            for k in 0..n {
                nodes.push(a + (k as f64 + 0.5) * h);
                weights.push(h);
            }
        }
        Ok(QuadratureGrid { nodes, weights, blocks })
    }
}

impl fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.pieces.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
        write!(f, "{}", parts.join(" ∪ "))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Num(f64),
    Text(String),
}

impl Endpoint {
    fn encode(x: f64) -> Self {
        if x == f64::INFINITY {
            Endpoint::Text("inf".into())
        } else if x == f64::NEG_INFINITY {
            Endpoint::Text("-inf".into())
        } else {
            Endpoint::Num(x)
        }
    }

    fn decode(self) -> std::result::Result<f64, String> {
        match self {
            Endpoint::Num(x) => Ok(x),
            Endpoint::Text(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(format!("unknown endpoint '{other}'")),
            },
        }
    }
}

impl Serialize for IntervalUnion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.pieces.len()))?;
        for &(a, b) in &self.pieces {
            seq.serialize_element(&(Endpoint::encode(a), Endpoint::encode(b)))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for IntervalUnion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<(Endpoint, Endpoint)> = Vec::deserialize(d)?;
        let mut v = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            v.push((a.decode().map_err(de::Error::custom)?, b.decode().map_err(de::Error::custom)?));
        }
        IntervalUnion::new(v).map_err(de::Error::custom)
    }
}

/// Midpoint nodes and weights, grouped into uniform blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `(first node, node count)` per interval.
    blocks: Vec<(usize, usize)>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of sampled values, with an error estimate `Σ h · TV(f)` over blocks.
    pub fn integrate(&self, values: &[f64]) -> Result<Quadrature> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("empty quadrature grid"));
        }
        if values.len() != self.nodes.len() {
            return Err(Error::invalid("sample count does not match the grid"));
        }
        let value = values.iter().zip(&self.weights).map(|(f, w)| f * w).sum();
        let mut error = 0.0;
        for &(start, n) in &self.blocks {
            let h = self.weights[start];
            let tv: f64 = values[start..start + n].windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            error += h * tv;
        }
        Ok(Quadrature { value, error })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn atan_ratio(num: f64, y: f64) -> f64 {
    if num == f64::INFINITY {
        FRAC_PI_2
    } else if num == f64::NEG_INFINITY {
        -FRAC_PI_2
    } else {
        (num / y).atan()
    }
}

/// `ω_z(S) = Σ (1/π)[arctan((b − x)/y) − arctan((a − x)/y)]`.
pub fn harmonic_measure(z: Complex64, s: &IntervalUnion) -> Result<f64> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid(format!("harmonic measure needs Im z > 0, got {z}")));
    }
    let (x, y) = (z.re, z.im);
    let total: f64 = s
        .pieces
        .iter()
        .map(|&(a, b)| atan_ratio(b - x, y) - atan_ratio(a - x, y))
        .sum();
    Ok((total / PI).clamp(0.0, 1.0))
}

/// `ω_g(S)` for `Im g ≥ 0`; real `g` gives the boundary limit.
pub fn boundary_omega(g: Complex64, s: &IntervalUnion) -> f64 {
    if g.im > 0.0 {
        harmonic_measure(g, s).unwrap_or(0.0)
    } else {
        s.indicator(g.re)
    }
}

/// `∫_A ω_{c* M(t) c}(S) dt` from samples of `M` on a midpoint grid of `A`.
pub fn vd_integral(grid: &QuadratureGrid, samples: &[CMatrix], c: &[Complex64], s: &IntervalUnion) -> Result<Quadrature> {
    if grid.is_empty() {
        return Err(Error::invalid("empty quadrature grid"));
    }
    let values = samples
        .iter()
        .map(|m| Ok(boundary_omega(compress(c, m)?, s)))
        .collect::<Result<Vec<f64>>>()?;
    grid.integrate(&values)
}

/// Evaluate `m` on the default grid of `A` (in parallel) and integrate.
pub fn vd_integral_of<F>(a: &IntervalUnion, points_per_unit: usize, c: &[Complex64], s: &IntervalUnion, m: F) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<CMatrix> + Sync,
{
    let grid = a.midpoint_grid(points_per_unit)?;
    let samples = grid.nodes.par_iter().map(|&t| m(t)).collect::<Result<Vec<_>>>()?;
    vd_integral(&grid, &samples, c, s)
}

/// `(|ω_w(S) − ω_z(S)|, γ(w, z))`.
pub fn lipschitz_gap(z: Complex64, w: Complex64, s: &IntervalUnion) -> Result<(f64, f64)> {
    let gap = (harmonic_measure(w, s)? - harmonic_measure(z, s)?).abs();
    Ok((gap, pseudo_hyperbolic(z, w)?))
}
