//! Geometry of the Siegel upper half-space `{Z = X + iY : Zᵀ = Z, Y > 0}`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matcore::{
    checked_inverse, eigenvalues, hermitian_eigenvalues, hpd_sqrt, inverse, operator_norm, singular_values,
    CMatrix, COND_LIMIT, PD_TOL,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Smallest admissible `1 − s²` before a distance counts as saturated.
pub const SATURATION: f64 = 1e-14;

/// A point of the Siegel upper half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct SiegelPoint {
    z: CMatrix,
    x: CMatrix,
    y: CMatrix,
}

impl SiegelPoint {
    pub fn new(z: CMatrix) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::invalid("Siegel point has non-finite entries"));
        }
        let scale = z.max_abs().max(1.0);
        let asym = operator_norm(&(&z - &z.transpose()))?;
        if asym > 1e-10 * scale {
            return Err(Error::invalid(format!("Siegel point is not symmetric (defect {asym:.3e})")));
        }
        let x = z.re();
        let y = z.im();
        let min = hermitian_eigenvalues(&y)?[0];
        if min <= PD_TOL {
            return Err(Error::NotPositiveDefinite { eigenvalue: min });
        }
        Ok(SiegelPoint { z, x, y })
    }

    pub fn scalar(w: Complex64) -> Result<Self> {
        Self::new(CMatrix::scalar(1, w))
    }

    /// `iI`, the base point.
    pub fn base(dim: usize) -> Self {
        Self::new(CMatrix::scalar(dim, I)).expect("iI is a Siegel point")
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.z
    }

    pub fn x(&self) -> &CMatrix {
        &self.x
    }

    pub fn y(&self) -> &CMatrix {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }
}

/// `J = (0, −I; I, 0)`.
pub fn j_matrix(d: usize) -> CMatrix {
    let id = CMatrix::identity(d);
    CMatrix::from_blocks(&CMatrix::zeros(d), &-&id, &id, &CMatrix::zeros(d))
}

/// `‖S* J S − J‖`, which is `‖Sᵀ J S − J‖` for real `S`.
///
/// The transpose form vanishes identically for transfer matrices at any
/// complex `z`; the adjoint form only vanishes on the real symplectic group.
pub fn symplectic_check(s: &CMatrix) -> f64 {
    let j = j_matrix(s.dim() / 2);
    operator_norm(&(&(&s.adjoint() * &j) * s - &j)).unwrap_or(f64::INFINITY)
}

/// A `2d × 2d` matrix acting by `Z ↦ (AZ + B)(CZ + D)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMap {
    s: CMatrix,
}

impl SymplecticMap {
    pub fn new(s: CMatrix) -> Result<Self> {
        if s.dim() % 2 != 0 {
            return Err(Error::invalid("symplectic map needs even dimension"));
        }
        Ok(SymplecticMap { s })
    }

    pub fn identity(d: usize) -> Self {
        SymplecticMap {
            s: CMatrix::identity(2 * d),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.s
    }

    pub fn half_dim(&self) -> usize {
        self.s.dim() / 2
    }

    pub fn compose(&self, other: &SymplecticMap) -> SymplecticMap {
        SymplecticMap { s: &self.s * &other.s }
    }

    /// Smallest eigenvalue of `i(S* J' S − J')` with `J' = (0, I; −I, 0)`.
    ///
    /// The map sends the half-space into itself when this is `≥ 0`.
    pub fn validity(&self) -> Result<f64> {
        let jc = -j_matrix(self.half_dim());
        let q = (&(&(&self.s.adjoint() * &jc) * &self.s) - &jc).scale(I);
        Ok(hermitian_eigenvalues(&q)?[0])
    }
}

/// `(AZ + B)(CZ + D)⁻¹` without any admissibility check.
pub fn fractional_action(s: &SymplecticMap, z: &CMatrix) -> Result<CMatrix> {
    let d = s.half_dim();
    if z.dim() != d {
        return Err(Error::invalid("dimension mismatch in fractional action"));
    }
    let m = s.matrix();
    let (a, b, c, dd) = (m.block(0, 0, d), m.block(0, d, d), m.block(d, 0, d), m.block(d, d, d));
    let den = &(&c * z) + &dd;
    let inv = checked_inverse(&den, COND_LIMIT).map_err(|e| match e {
        Error::Singular | Error::IllConditioned { .. } => Error::Degenerate("CZ + D is not invertible".into()),
        other => other,
    })?;
    Ok(&(&(&a * z) + &b) * &inv)
}

/// Möbius action on the half-space, with the admissibility condition checked.
pub fn mobius(s: &SymplecticMap, z: &SiegelPoint) -> Result<SiegelPoint> {
    let v = s.validity()?;
    let scale = operator_norm(s.matrix())?.powi(2).max(1.0);
    if v < -1e-10 * scale {
        return Err(Error::InvalidMap { min_eigenvalue: v });
    }
    let w = fractional_action(s, z.matrix())?;
    SiegelPoint::new((&w + &w.transpose()).scale_re(0.5))
}

/// `‖Y^{-1/2} W Y^{-1/2}‖`.
pub fn finsler_norm(z: &SiegelPoint, w: &CMatrix) -> Result<f64> {
    let r = inverse(&hpd_sqrt(z.y(), PD_TOL)?)?;
    operator_norm(&(&(&r * w) * &r))
}

/// Distance with saturation information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiegelDistance {
    pub value: f64,
    /// Largest cross-ratio eigenvalue `r = s²`.
    pub max_ratio: f64,
    pub saturated: bool,
}

/// The invariant distance `d∞`.
///
/// `Z1` is moved to `iI` by a real symplectic map, the image `W` of `Z2` is
/// sent to the unit ball by the Cayley transform `K = (W − iI)(W + iI)⁻¹`,
/// and `d∞ = log((1 + s)/(1 − s))` with `s = ‖K‖`. The singular values of
/// `K` squared are the eigenvalues of the cross-ratio matrix. The factor
/// `1 − s²` is taken from `I − K*K = G*G`, `G = 2 Y_W^{1/2} (W + iI)⁻¹`, to
/// avoid cancellation for distant points.
pub fn siegel_distance_report(z1: &SiegelPoint, z2: &SiegelPoint) -> Result<SiegelDistance> {
    if z1.dim() != z2.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let d = z1.dim();
    let r = inverse(&hpd_sqrt(z1.y(), PD_TOL)?)?;
    let w = &(&r * &(z2.matrix() - z1.x())) * &r;
    let w = (&w + &w.transpose()).scale_re(0.5);
    let plus = checked_inverse(&w.shift_diag(I), f64::INFINITY).map_err(|_| Error::Degenerate("W + iI singular".into()))?;
    let k = &w.shift_diag(-I) * &plus;
    let s = operator_norm(&k)?.min(1.0);
    let yw = w.im();
    let yw_sqrt = hpd_sqrt(&yw, 0.0).map_err(|_| Error::Degenerate("cross-ratio eigenvalue reached 1".into()))?;
    let g = (&yw_sqrt * &plus).scale_re(2.0);
    let sv = singular_values(&g)?;
    let gap = sv[d - 1] * sv[d - 1];
    if !gap.is_finite() || gap <= 0.0 {
        return Err(Error::Degenerate("cross-ratio eigenvalue reached 1".into()));
    }
    let saturated = gap < SATURATION;
    let gap = gap.max(SATURATION);
    let value = (2.0 * s.ln_1p() - gap.ln()).max(0.0);
    Ok(SiegelDistance {
        value,
        max_ratio: (1.0 - gap).min(s * s),
        saturated,
    })
}

pub fn siegel_distance(z1: &SiegelPoint, z2: &SiegelPoint) -> Result<f64> {
    Ok(siegel_distance_report(z1, z2)?.value)
}

/// Eigenvalues of the cross-ratio matrix
/// `R = (Z1−Z2)(Z1−Z̄2)⁻¹(Z̄1−Z̄2)(Z̄1−Z2)⁻¹`, sorted descending.
///
/// Independent of [`siegel_distance`]; kept as its oracle.
pub fn cross_ratio_eigenvalues(z1: &SiegelPoint, z2: &SiegelPoint) -> Result<Vec<f64>> {
    let (a, b) = (z1.matrix(), z2.matrix());
    let (ac, bc) = (a.conj(), b.conj());
    let r = &(&(&(a - b) * &inverse(&(a - &bc))?) * &(&ac - &bc)) * &inverse(&(&ac - b))?;
    let mut ev: Vec<f64> = eigenvalues(&r)?.iter().map(|z| z.re).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

/// `d∞` from cross-ratio eigenvalues: `max_k log((1 + √r_k)/(1 − √r_k))`.
pub fn distance_from_ratios(ratios: &[f64]) -> f64 {
    ratios
        .iter()
        .map(|&r| {
            let s = r.clamp(0.0, 1.0 - SATURATION).sqrt();
            ((1.0 + s) / (1.0 - s)).ln()
        })
        .fold(0.0, f64::max)
}

fn check_upper(z: Complex64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{z} is not in the upper half plane")))
    }
}

/// Hyperbolic distance `arccosh(1 + |z−w|²/(2 Im z Im w))`.
pub fn hyperbolic_distance(z: Complex64, w: Complex64) -> Result<f64> {
    check_upper(z)?;
    check_upper(w)?;
    // 2·asinh(|z−w| / (2√(Im z Im w))) is the same quantity without the
    // cancellation of arccosh near 1.
    Ok(2.0 * ((z - w).norm() / (2.0 * (z.im * w.im).sqrt())).asinh())
}

/// `γ(w, z) = |w − z| / √(Im w Im z)`.
pub fn pseudo_hyperbolic(z: Complex64, w: Complex64) -> Result<f64> {
    check_upper(z)?;
    check_upper(w)?;
    Ok((w - z).norm() / (z.im * w.im).sqrt())
}

/// `c* Z c`.
pub fn compress(c: &[Complex64], z: &CMatrix) -> Result<Complex64> {
    if c.len() != z.dim() {
        return Err(Error::invalid("compression vector has the wrong length"));
    }
    let norm = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("compression vector has norm {norm} > 1")));
    }
    Ok(z.quadratic_form(c))
}

/// Length of the straight segment `Z1 → Z2` under the Finsler norm,
/// by the trapezoid rule on `segments` pieces.
pub fn segment_length(z1: &SiegelPoint, z2: &SiegelPoint, segments: usize) -> Result<f64> {
    let dz = z2.matrix() - z1.matrix();
    let f = |t: f64| -> Result<f64> {
        let p = SiegelPoint::new(z1.matrix() + &dz.scale_re(t))?;
        finsler_norm(&p, &dz)
    };
    let h = 1.0 / segments as f64;
    let mut acc = 0.5 * (f(0.0)? + f(1.0)?);
    for k in 1..segments {
        acc += f(k as f64 * h)?;
    }
    Ok(acc * h)
}

fn random_real_symmetric<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(d);
    for i in 0..d {
        for j in i..d {
            let v = Complex64::new(rng.gen_range(-scale..=scale), 0.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// A random point with `X` symmetric in `[-scale, scale]` and `Y = AAᵀ + δI`.
pub fn random_siegel_point<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> SiegelPoint {
    let x = random_real_symmetric(d, scale, rng);
    let mut a = CMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = Complex64::new(rng.gen_range(-scale..=scale), 0.0);
        }
    }
    let y = (&a * &a.transpose()).shift_diag(Complex64::new(0.05 + 0.1 * scale, 0.0));
    SiegelPoint::new(&x + &y.scale(I)).expect("construction yields a Siegel point")
}

/// A random real symplectic matrix built from the standard generators
/// `(I, S; 0, I)`, `(A, 0; 0, A⁻ᵀ)` and `J`.
pub fn random_real_symplectic<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SymplecticMap {
    let id = CMatrix::identity(d);
    let zero = CMatrix::zeros(d);
    let mut s = CMatrix::identity(2 * d);
    for _ in 0..3 {
        let sym = random_real_symmetric(d, 1.0, rng);
        let shear = CMatrix::from_blocks(&id, &sym, &zero, &id);
        let a = loop {
            let mut a = CMatrix::identity(d);
            for i in 0..d {
                for j in 0..d {
                    a[(i, j)] += Complex64::new(rng.gen_range(-0.5..=0.5), 0.0);
                }
            }
            if let Ok(inv) = checked_inverse(&a, 1e3) {
                break CMatrix::from_blocks(&a, &zero, &zero, &inv.transpose());
            }
        };
        s = &(&(&shear * &a) * &j_matrix(d)) * &s;
    }
    SymplecticMap { s }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag_point(v: &[f64]) -> SiegelPoint {
        SiegelPoint::new(CMatrix::from_real_diag(v).scale(I)).unwrap()
    }

    #[test]
    fn point_validation() {
        assert!(SiegelPoint::new(CMatrix::scalar(2, c(0.0, -1.0))).is_err());
        let asym = CMatrix::from_rows(&[vec![c(0.0, 1.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 1.0)]]).unwrap();
        assert!(SiegelPoint::new(asym).is_err());
    }

    #[test]
    fn finsler_examples() {
        let w = CMatrix::from_rows(&[vec![c(1.0, 2.0), c(0.5, 0.0)], vec![c(0.5, 0.0), c(-1.0, 0.3)]]).unwrap();
        let nw = operator_norm(&w).unwrap();
        assert!((finsler_norm(&SiegelPoint::base(2), &w).unwrap() - nw).abs() < 1e-14);
        assert!((finsler_norm(&diag_point(&[4.0, 4.0]), &w).unwrap() - nw / 4.0).abs() < 1e-14);
        let p = SiegelPoint::scalar(c(0.3, 2.5)).unwrap();
        let v = CMatrix::scalar(1, c(3.0, 4.0));
        assert!((finsler_norm(&p, &v).unwrap() - 5.0 / 2.5).abs() < 1e-14);
    }

    #[test]
    fn distance_examples() {
        let z = SiegelPoint::base(2);
        assert!(siegel_distance(&z, &z).unwrap().abs() < 1e-15);
        let d1 = siegel_distance(&SiegelPoint::scalar(I).unwrap(), &SiegelPoint::scalar(c(0.0, 2.0)).unwrap()).unwrap();
        assert!((d1 - 2f64.ln()).abs() < 1e-14);
        let d2 = siegel_distance(&z, &diag_point(&[1.0, 2.0])).unwrap();
        assert!((d2 - 2f64.ln()).abs() < 1e-14);
        assert!((1.25f64.acosh() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_cross_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for d in 1..=3 {
            for _ in 0..50 {
                let a = random_siegel_point(d, 1.0, &mut rng);
                let b = random_siegel_point(d, 1.0, &mut rng);
                let fast = siegel_distance(&a, &b).unwrap();
                let slow = distance_from_ratios(&cross_ratio_eigenvalues(&a, &b).unwrap());
                assert!((fast - slow).abs() < 1e-8 * (1.0 + fast), "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn far_points_saturate() {
        let a = SiegelPoint::scalar(I).unwrap();
        let b = SiegelPoint::scalar(c(0.0, 1e20)).unwrap();
        let r = siegel_distance_report(&a, &b).unwrap();
        assert!(r.saturated);
        assert!(r.value.is_finite() && r.value > 30.0);
        let near = SiegelPoint::scalar(c(0.0, 1e6)).unwrap();
        let r = siegel_distance_report(&a, &near).unwrap();
        assert!(!r.saturated);
        assert!((r.value - 1e6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn scalar_distances() {
        assert_eq!(hyperbolic_distance(I, I).unwrap(), 0.0);
        assert!((hyperbolic_distance(I, c(0.0, 2.0)).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(pseudo_hyperbolic(I, I).unwrap(), 0.0);
        assert!((pseudo_hyperbolic(I, c(0.0, 2.0)).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(hyperbolic_distance(c(1.0, 0.0), I).is_err());
        assert!(pseudo_hyperbolic(I, c(0.0, -1.0)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let z = c(rng.gen_range(-3.0..3.0), rng.gen_range(0.01..3.0));
            let w = c(rng.gen_range(-3.0..3.0), rng.gen_range(0.01..3.0));
            let rho = hyperbolic_distance(z, w).unwrap();
            let gamma = pseudo_hyperbolic(z, w).unwrap();
            assert!((gamma - 2.0 * (rho / 2.0).sinh()).abs() <= 1e-12 * (1.0 + gamma));
            let acosh = (1.0 + (z - w).norm_sqr() / (2.0 * z.im * w.im)).acosh();
            assert!((rho - acosh).abs() < 1e-7);
        }
    }

    #[test]
    fn mobius_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_siegel_point(2, 1.0, &mut rng);
        let id = SymplecticMap::identity(2);
        assert!(operator_norm(&(mobius(&id, &z).unwrap().matrix() - z.matrix())).unwrap() < 1e-15);

        let j = SymplecticMap::new(j_matrix(2)).unwrap();
        let out = mobius(&j, &z).unwrap();
        let expected = -inverse(z.matrix()).unwrap();
        assert!(operator_norm(&(out.matrix() - &expected)).unwrap() < 1e-12);
    }

    #[test]
    fn validity_condition() {
        // T₋ = (zI − B, −I; I, 0) maps the half-space into itself for Im z > 0.
        let d = 2;
        let id = CMatrix::identity(d);
        let a = CMatrix::from_real_diag(&[0.5, -1.0]).scale_re(-1.0).shift_diag(c(0.2, 0.7));
        let tm = SymplecticMap::new(CMatrix::from_blocks(&a, &-&id, &id, &CMatrix::zeros(d))).unwrap();
        assert!(tm.validity().unwrap() >= -1e-12);
        let z = SiegelPoint::base(2);
        assert!(mobius(&tm, &z).is_ok());
        let tp = SymplecticMap::new(CMatrix::from_blocks(&a, &id, &-&id, &CMatrix::zeros(d))).unwrap();
        assert!(matches!(mobius(&tp, &z), Err(Error::InvalidMap { .. })));
        let singular = SymplecticMap::new(CMatrix::from_blocks(&id, &CMatrix::zeros(d), &CMatrix::zeros(d), &CMatrix::zeros(d))).unwrap();
        assert!(fractional_action(&singular, z.matrix()).is_err());
    }

    #[test]
    fn symplectic_examples() {
        assert_eq!(symplectic_check(&CMatrix::identity(4)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let s = random_real_symplectic(3, &mut rng);
            let scale = operator_norm(s.matrix()).unwrap().powi(2);
            assert!(symplectic_check(s.matrix()) < 1e-12 * scale);
        }
    }

    #[test]
    fn compress_examples() {
        let z = SiegelPoint::new(
            CMatrix::from_rows(&[vec![c(1.0, 2.0), c(0.5, 0.1)], vec![c(0.5, 0.1), c(-1.0, 1.0)]]).unwrap(),
        )
        .unwrap();
        assert_eq!(compress(&[c(1.0, 0.0), c(0.0, 0.0)], z.matrix()).unwrap(), c(1.0, 2.0));
        assert_eq!(compress(&[c(0.0, 0.0), c(0.0, 0.0)], z.matrix()).unwrap(), c(0.0, 0.0));
        assert!(compress(&[c(1.0, 0.0), c(1.0, 0.0)], z.matrix()).is_err());
        let v = compress(&[c(0.6, 0.0), c(0.0, 0.8)], z.matrix()).unwrap();
        assert!(v.im > 0.0);
    }

    #[test]
    fn mobius_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let s1 = random_real_symplectic(2, &mut rng);
            let s2 = random_real_symplectic(2, &mut rng);
            let z = random_siegel_point(2, 1.0, &mut rng);
            let lhs = mobius(&s1.compose(&s2), &z).unwrap();
            let rhs = mobius(&s1, &mobius(&s2, &z).unwrap()).unwrap();
            let scale = lhs.matrix().max_abs().max(1.0);
            assert!(operator_norm(&(lhs.matrix() - rhs.matrix())).unwrap() < 1e-9 * scale);
        }
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::matcore::operator_norm;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn norm(m: &CMatrix) -> f64 {
        operator_norm(m).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mobius_action_composes(d in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = random_siegel_point(d, 1.0, &mut rng);
            let f = random_real_symplectic(d, &mut rng);
            let g = random_real_symplectic(d, &mut rng);
            let stepwise = mobius(&f, &mobius(&g, &z).unwrap()).unwrap();
            let direct = mobius(&f.compose(&g), &z).unwrap();
            let diff = norm(&(stepwise.matrix() - direct.matrix()));
            prop_assert!(diff <= 1e-8 * norm(direct.matrix()).max(1.0));
        }

        #[test]
        fn distance_is_invariant_and_metric(d in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_siegel_point(d, 1.0, &mut rng);
            let q = random_siegel_point(d, 1.0, &mut rng);
            let r = random_siegel_point(d, 1.0, &mut rng);
            let s = random_real_symplectic(d, &mut rng);
            let pq = siegel_distance(&p, &q).unwrap();
            let moved = siegel_distance(&mobius(&s, &p).unwrap(), &mobius(&s, &q).unwrap()).unwrap();
            prop_assert!((pq - moved).abs() <= 1e-7 * pq.max(1.0));
            prop_assert!((pq - siegel_distance(&q, &p).unwrap()).abs() <= 1e-9 * pq.max(1.0));
            prop_assert!(siegel_distance(&p, &p).unwrap() <= 1e-7);
            let detour = siegel_distance(&p, &r).unwrap() + siegel_distance(&r, &q).unwrap();
            prop_assert!(pq <= detour + 1e-9 * pq.max(1.0));
        }
    }
}
