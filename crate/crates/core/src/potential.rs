//! Bounded real symmetric matrix potentials `B(n)`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matcore::{operator_norm, structure_check, CMatrix, MAX_DIM};

/// Anything that can hand out the matrix at a lattice site.
///
/// [`PotentialSpec`] is the main implementor; tests use ad-hoc
/// implementations (for instance deliberately non-symmetric ones).
pub trait Potential: Sync {
    fn dim(&self) -> usize;
    fn at(&self, n: i64) -> Result<CMatrix>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    /// Sites `n >= 1`; everything else is zero.
    HalfLine,
    WholeLine,
}

/// The generating rule of a potential.
#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Zero,
    Constant(CMatrix),
    /// `B(n) = P[n mod p]`.
    Periodic(Vec<CMatrix>),
    /// `B(n) = B0 · |n|^(-alpha)`, with `B(0) = B0`.
    Decaying { b0: CMatrix, alpha: f64 },
    /// `B0` at the sites `first, first·ratio, first·ratio², …` and zero elsewhere.
    Sparse { b0: CMatrix, first: i64, ratio: i64 },
    /// Independent symmetric matrices with entries drawn from `[-amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
    /// Table lookup; unlisted sites are zero.
    Explicit(BTreeMap<i64, CMatrix>),
}

/// A potential generator.
///
/// `offset` shifts the underlying sequence (`B(n) = K(n + offset)`) and
/// `transient` overrides individual sites of the unshifted sequence, which
/// is how "eventually periodic" specs are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct PotentialSpec {
    dim: usize,
    bound: f64,
    support: Support,
    kind: Kind,
    offset: i64,
    transient: BTreeMap<i64, CMatrix>,
}

/// Direction of travel along the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    fn step(self) -> i64 {
        match self {
            Direction::Right => 1,
            Direction::Left => -1,
        }
    }
}

/// What is known about a potential beyond some site.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// The sites beyond repeat this pattern exactly (listed in travel order).
    Exact(Vec<CMatrix>),
    /// The pattern is a good local model of the sites beyond.
    Approximate(Vec<CMatrix>),
    Unknown,
}

impl PotentialSpec {
    pub fn new(dim: usize, bound: f64, support: Support, kind: Kind) -> Result<Self> {
        let spec = PotentialSpec {
            dim,
            bound,
            support,
            kind,
            offset: 0,
            transient: BTreeMap::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(dim: usize, support: Support) -> Self {
        Self::new(dim, 1.0, support, Kind::Zero).expect("zero spec is valid")
    }

    /// Override individual sites (in unshifted coordinates).
    pub fn with_transient(mut self, entries: impl IntoIterator<Item = (i64, CMatrix)>) -> Result<Self> {
        self.transient.extend(entries);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn transient(&self) -> &BTreeMap<i64, CMatrix> {
        &self.transient
    }

    /// `(S^k B)(n) = B(n + k)`.
    pub fn shifted(&self, k: i64) -> Self {
        let mut s = self.clone();
        s.offset += k;
        s
    }

    /// The same spec with the given support.
    pub fn with_support(&self, support: Support) -> Self {
        let mut s = self.clone();
        s.support = support;
        s
    }

    /// Drop transients and half-line truncation, keeping the generating rule.
    pub fn tail_only(&self) -> Self {
        let mut s = self.clone();
        s.transient.clear();
        s.support = Support::WholeLine;
        s
    }

    /// Short stable hash of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hash_hex(json.as_bytes())
    }

    pub fn potential_at(&self, n: i64) -> Result<CMatrix> {
        let raw = n
            .checked_add(self.offset)
            .ok_or(Error::Range { site: n })?;
        let m = self.raw_at(raw);
        let norm = operator_norm(&m)?;
        if norm > self.bound * (1.0 + 1e-12) {
            return Err(Error::SpecViolation {
                site: n,
                norm,
                bound: self.bound,
            });
        }
        Ok(m)
    }

    fn raw_at(&self, raw: i64) -> CMatrix {
        if self.support == Support::HalfLine && raw < 1 {
            return CMatrix::zeros(self.dim);
        }
        if let Some(m) = self.transient.get(&raw) {
            return m.clone();
        }
        self.kind_at(raw)
    }

    fn kind_at(&self, raw: i64) -> CMatrix {
        let d = self.dim;
        match &self.kind {
            Kind::Zero => CMatrix::zeros(d),
            Kind::Constant(b) => b.clone(),
            Kind::Periodic(ms) => ms[raw.rem_euclid(ms.len() as i64) as usize].clone(),
            Kind::Decaying { b0, alpha } => {
                let n = raw.unsigned_abs().max(1) as f64;
                b0.scale_re(n.powf(-alpha))
            }
            Kind::Sparse { b0, first, ratio } => {
                if is_sparse_site(raw, *first, *ratio) {
                    b0.clone()
                } else {
                    CMatrix::zeros(d)
                }
            }
            Kind::Random { seed, amplitude } => random_matrix(d, *seed, *amplitude, self.bound, raw),
            Kind::Explicit(table) => table.get(&raw).cloned().unwrap_or_else(|| CMatrix::zeros(d)),
        }
    }

    /// Describe the sites strictly beyond `n` in direction `dir`.
    pub fn tail_beyond(&self, n: i64, dir: Direction) -> Tail {
        let zero = || vec![CMatrix::zeros(self.dim)];
        let raw = n.saturating_add(self.offset);
        let next = raw.saturating_add(dir.step());
        let transient_clear = match dir {
            Direction::Right => self.transient.keys().next_back().is_none_or(|&s| s < next),
            Direction::Left => self.transient.keys().next().is_none_or(|&s| s > next),
        };
        if self.support == Support::HalfLine {
            match dir {
                Direction::Left if next < 1 => return Tail::Exact(zero()),
                Direction::Left => return Tail::Unknown,
                Direction::Right if next < 1 => return Tail::Unknown,
                Direction::Right => {}
            }
        }
        if !transient_clear {
            return Tail::Unknown;
        }
        match &self.kind {
            Kind::Zero => Tail::Exact(zero()),
            Kind::Constant(b) => Tail::Exact(vec![b.clone()]),
            Kind::Periodic(ms) => {
                let p = ms.len() as i64;
                let pattern = (1..=p)
                    .map(|k| ms[(raw + k * dir.step()).rem_euclid(p) as usize].clone())
                    .collect();
                Tail::Exact(pattern)
            }
            Kind::Decaying { .. } => Tail::Approximate(vec![self.kind_at(next)]),
            Kind::Sparse { .. } => Tail::Approximate(zero()),
            Kind::Random { .. } => Tail::Unknown,
            Kind::Explicit(table) => {
                let beyond = match dir {
                    Direction::Right => table.keys().next_back().is_none_or(|&s| s < next),
                    Direction::Left => table.keys().next().is_none_or(|&s| s > next),
                };
                if beyond {
                    Tail::Exact(zero())
                } else {
                    Tail::Unknown
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::invalid(format!("dim must be in 1..={MAX_DIM}")));
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(Error::invalid("bound must be positive and finite"));
        }
        let check = |m: &CMatrix, what: &str| -> Result<()> {
            if m.dim() != self.dim {
                return Err(Error::invalid(format!("{what}: expected a {0}x{0} matrix", self.dim)));
            }
            if !structure_check(m, 1e-12).is_real_symmetric {
                return Err(Error::invalid(format!("{what}: matrix is not real symmetric")));
            }
            Ok(())
        };
        match &self.kind {
            Kind::Zero => {}
            Kind::Constant(b) => check(b, "constant")?,
            Kind::Periodic(ms) => {
                if ms.is_empty() {
                    return Err(Error::invalid("periodic: empty period"));
                }
                for m in ms {
                    check(m, "periodic")?;
                }
            }
            Kind::Decaying { b0, alpha } => {
                check(b0, "decaying")?;
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::invalid("decaying: alpha must be positive"));
                }
            }
            Kind::Sparse { b0, first, ratio } => {
                check(b0, "sparse")?;
                if *first < 1 || *ratio < 2 {
                    return Err(Error::invalid("sparse: need first >= 1 and ratio >= 2"));
                }
            }
            Kind::Random { amplitude, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::invalid("random: amplitude must be nonnegative"));
                }
            }
            Kind::Explicit(table) => {
                for m in table.values() {
                    check(m, "explicit")?;
                }
            }
        }
        for m in self.transient.values() {
            check(m, "transient")?;
        }
        Ok(())
    }
}

impl Potential for PotentialSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn at(&self, n: i64) -> Result<CMatrix> {
        self.potential_at(n)
    }
}

pub(crate) fn hash_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn is_sparse_site(n: i64, first: i64, ratio: i64) -> bool {
    let mut s = first;
    while s < n {
        match s.checked_mul(ratio) {
            Some(next) => s = next,
            None => return false,
        }
    }
    s == n
}

fn random_matrix(d: usize, seed: u64, amplitude: f64, bound: f64, site: i64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site as u64);
    let mut m = CMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let v = if amplitude > 0.0 {
                rng.gen_range(-amplitude..=amplitude)
            } else {
                0.0
            };
            m[(i, j)] = Complex64::new(v, 0.0);
        }
    }
    let sym = (&m + &m.transpose()).scale_re(0.5);
    let norm = operator_norm(&sym).unwrap_or(0.0);
    if norm > bound {
        sym.scale_re(bound / norm)
    } else {
        sym
    }
}

/// Flat row-major encoding of a real matrix.
pub(crate) fn real_entries(m: &CMatrix) -> Vec<f64> {
    m.as_slice().iter().map(|z| z.re).collect()
}

fn matrix_from(dim: usize, entries: &[f64], what: &str) -> Result<CMatrix> {
    if entries.len() != dim * dim {
        return Err(Error::invalid(format!(
            "{what}: expected {} entries, got {}",
            dim * dim,
            entries.len()
        )));
    }
    if entries.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite entry")));
    }
    CMatrix::from_real_row_major(dim, entries)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dim: usize,
    bound: f64,
    support: Support,
    kind: String,
    #[serde(default)]
    parameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "is_zero")]
    offset: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    transient: Vec<(i64, Vec<f64>)>,
}

fn is_zero(x: &i64) -> bool {
    *x == 0
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrices: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    first: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<(i64, Vec<f64>)>>,
}

fn required<T>(v: Option<T>, kind: &str, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(format!("{kind}: missing parameter '{field}'")))
}

impl TryFrom<RawSpec> for PotentialSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let d = raw.dim;
        if d == 0 || d > MAX_DIM {
            return Err(Error::invalid(format!("dim must be in 1..={MAX_DIM}")));
        }
        let p: RawParams = if raw.parameters.is_null() {
            RawParams::default()
        } else {
            serde_json::from_value(raw.parameters)?
        };
        let k = raw.kind.as_str();
        let kind = match k {
            "zero" => Kind::Zero,
            "constant" => Kind::Constant(matrix_from(d, &required(p.matrix, k, "matrix")?, k)?),
            "periodic" => Kind::Periodic(
                required(p.matrices, k, "matrices")?
                    .iter()
                    .map(|e| matrix_from(d, e, k))
                    .collect::<Result<_>>()?,
            ),
            "decaying" => Kind::Decaying {
                b0: matrix_from(d, &required(p.matrix, k, "matrix")?, k)?,
                alpha: required(p.alpha, k, "alpha")?,
            },
            "sparse" => Kind::Sparse {
                b0: matrix_from(d, &required(p.matrix, k, "matrix")?, k)?,
                first: p.first.unwrap_or(1),
                ratio: p.ratio.unwrap_or(2),
            },
            "random" => Kind::Random {
                seed: required(p.seed, k, "seed")?,
                amplitude: required(p.amplitude, k, "amplitude")?,
            },
            "explicit" => Kind::Explicit(
                required(p.table, k, "table")?
                    .iter()
                    .map(|(s, e)| Ok((*s, matrix_from(d, e, k)?)))
                    .collect::<Result<_>>()?,
            ),
            other => return Err(Error::invalid(format!("unknown potential kind '{other}'"))),
        };
        let transient = raw
            .transient
            .iter()
            .map(|(s, e)| Ok((*s, matrix_from(d, e, "transient")?)))
            .collect::<Result<_>>()?;
        let spec = PotentialSpec {
            dim: d,
            bound: raw.bound,
            support: raw.support,
            kind,
            offset: raw.offset,
            transient,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<PotentialSpec> for RawSpec {
    fn from(s: PotentialSpec) -> Self {
        let mut p = RawParams::default();
        let kind = match &s.kind {
            Kind::Zero => "zero",
            Kind::Constant(b) => {
                p.matrix = Some(real_entries(b));
                "constant"
            }
            Kind::Periodic(ms) => {
                p.matrices = Some(ms.iter().map(real_entries).collect());
                "periodic"
            }
            Kind::Decaying { b0, alpha } => {
                p.matrix = Some(real_entries(b0));
                p.alpha = Some(*alpha);
                "decaying"
            }
            Kind::Sparse { b0, first, ratio } => {
                p.matrix = Some(real_entries(b0));
                p.first = Some(*first);
                p.ratio = Some(*ratio);
                "sparse"
            }
            Kind::Random { seed, amplitude } => {
                p.seed = Some(*seed);
                p.amplitude = Some(*amplitude);
                "random"
            }
            Kind::Explicit(table) => {
                p.table = Some(table.iter().map(|(k, m)| (*k, real_entries(m))).collect());
                "explicit"
            }
        };
        RawSpec {
            dim: s.dim,
            bound: s.bound,
            support: s.support,
            kind: kind.to_string(),
            parameters: serde_json::to_value(p).expect("parameters serialize"),
            offset: s.offset,
            transient: s.transient.iter().map(|(k, m)| (*k, real_entries(m))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_real_diag(v)
    }

    #[test]
    fn zero_spec_is_zero_everywhere() {
        let s = PotentialSpec::zero(2, Support::WholeLine);
        for n in [-5, 0, 7, i64::MAX / 2] {
            assert_eq!(s.potential_at(n).unwrap(), CMatrix::zeros(2));
        }
    }

    #[test]
    fn periodic_cycles() {
        let p = diag(&[1.0]);
        let q = diag(&[-0.5]);
        let s = PotentialSpec::new(1, 1.0, Support::WholeLine, Kind::Periodic(vec![p.clone(), q.clone()]))
            .unwrap();
        assert_eq!(s.potential_at(0).unwrap(), p);
        assert_eq!(s.potential_at(1).unwrap(), q);
        assert_eq!(s.potential_at(2).unwrap(), p);
        assert_eq!(s.potential_at(-1).unwrap(), q);
    }

    #[test]
    fn decaying_divides() {
        let b0 = diag(&[2.0, -1.0]);
        let s = PotentialSpec::new(
            2,
            2.0,
            Support::HalfLine,
            Kind::Decaying {
                b0: b0.clone(),
                alpha: 1.0,
            },
        )
        .unwrap();
        assert_eq!(s.potential_at(4).unwrap(), b0.scale_re(0.25));
        assert_eq!(s.potential_at(0).unwrap(), CMatrix::zeros(2));
    }

    #[test]
    fn bound_is_checked_lazily() {
        let s = PotentialSpec::new(1, 0.5, Support::HalfLine, Kind::Constant(diag(&[1.0]))).unwrap();
        assert_eq!(s.potential_at(-3).unwrap(), CMatrix::zeros(1));
        assert!(matches!(
            s.potential_at(3),
            Err(Error::SpecViolation { site: 3, .. })
        ));
    }

    #[test]
    fn random_is_deterministic_symmetric_bounded() {
        let s = PotentialSpec::new(3, 1.5, Support::WholeLine, Kind::Random { seed: 7, amplitude: 2.0 })
            .unwrap();
        for n in -20..20 {
            let a = s.potential_at(n).unwrap();
            assert_eq!(a, s.potential_at(n).unwrap());
            assert!(structure_check(&a, 1e-12).is_real_symmetric);
            assert!(operator_norm(&a).unwrap() <= 1.5 * (1.0 + 1e-12));
        }
        assert_ne!(s.potential_at(1).unwrap(), s.potential_at(2).unwrap());
    }

    #[test]
    fn sparse_sites() {
        let s = PotentialSpec::new(
            1,
            5.0,
            Support::HalfLine,
            Kind::Sparse {
                b0: diag(&[5.0]),
                first: 1,
                ratio: 2,
            },
        )
        .unwrap();
        let bumps: Vec<i64> = (0..70)
            .filter(|&n| s.potential_at(n).unwrap()[(0, 0)].re != 0.0)
            .collect();
        assert_eq!(bumps, vec![1, 2, 4, 8, 16, 32, 64]);
    }

    #[test]
    fn shift_composes() {
        let s = PotentialSpec::new(2, 2.0, Support::HalfLine, Kind::Random { seed: 1, amplitude: 1.0 })
            .unwrap();
        let a = s.shifted(3).shifted(-5);
        let b = s.shifted(-2);
        for n in -10..10 {
            assert_eq!(a.potential_at(n).unwrap(), b.potential_at(n).unwrap());
            assert_eq!(b.potential_at(n).unwrap(), s.potential_at(n - 2).unwrap());
        }
    }

    #[test]
    fn rejects_asymmetric_matrices() {
        let m = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(PotentialSpec::new(2, 2.0, Support::HalfLine, Kind::Constant(m)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{
            "dim": 2, "bound": 3.0, "support": "half-line", "kind": "periodic",
            "parameters": {"matrices": [[1, 0, 0, -1], [0, 0.5, 0.5, 0]]},
            "transient": [[1, [2, 0, 0, 2]]]
        }"#;
        let s: PotentialSpec = serde_json::from_str(json).unwrap();
        assert_eq!(s.potential_at(1).unwrap(), diag(&[2.0, 2.0]));
        assert_eq!(s.potential_at(2).unwrap(), diag(&[1.0, -1.0]));
        let back: PotentialSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.content_hash(), s.content_hash());
    }

    #[test]
    fn json_errors_are_reported() {
        let bad = r#"{"dim": 1, "bound": 1, "support": "whole-line", "kind": "decaying", "parameters": {"matrix": [1]}}"#;
        let err = serde_json::from_str::<PotentialSpec>(bad).unwrap_err();
        assert!(err.to_string().contains("alpha"));
        let explicit = r#"{"dim": 1, "bound": 1, "support": "whole-line", "kind": "explicit",
            "parameters": {"table": [[0, [0.5]], [-3, [-1]]]}}"#;
        let s: PotentialSpec = serde_json::from_str(explicit).unwrap();
        assert_eq!(s.potential_at(-3).unwrap(), diag(&[-1.0]));
        assert_eq!(s.potential_at(1).unwrap(), diag(&[0.0]));
    }

    #[test]
    fn tails() {
        let p = diag(&[1.0]);
        let q = diag(&[-1.0]);
        let s = PotentialSpec::new(1, 1.0, Support::HalfLine, Kind::Periodic(vec![p.clone(), q.clone()]))
            .unwrap()
            .with_transient([(3, diag(&[0.2]))])
            .unwrap();
        assert_eq!(s.tail_beyond(2, Direction::Right), Tail::Unknown);
        assert_eq!(s.tail_beyond(3, Direction::Right), Tail::Exact(vec![p.clone(), q.clone()]));
        assert_eq!(s.tail_beyond(0, Direction::Left), Tail::Exact(vec![CMatrix::zeros(1)]));
        assert_eq!(s.tail_beyond(5, Direction::Left), Tail::Unknown);
        let w = s.tail_only();
        assert_eq!(w.tail_beyond(0, Direction::Left), Tail::Exact(vec![q, p]));
    }
}
