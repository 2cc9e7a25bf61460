//! Shared inputs for the kernel benchmarks.

use mweyl_core::{CMatrix, Kind, PotentialSpec, Support};
use num_complex::Complex64;

pub fn random_spec(dim: usize, seed: u64) -> PotentialSpec {
    PotentialSpec::new(dim, 2.0, Support::HalfLine, Kind::Random { seed, amplitude: 2.0 }).expect("valid spec")
}

pub fn period_two(dim: usize) -> PotentialSpec {
    let a = CMatrix::from_real_diag(&vec![1.0; dim]);
    let b = CMatrix::from_real_diag(&vec![-1.0; dim]);
    PotentialSpec::new(dim, 1.0, Support::WholeLine, Kind::Periodic(vec![a, b])).expect("valid spec")
}

/// Spectral parameters used across the benches.
pub fn z_points() -> [Complex64; 3] {
    [Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.1), Complex64::new(-0.5, 1e-3)]
}
