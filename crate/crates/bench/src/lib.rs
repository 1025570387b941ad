//! Shared fixtures for the criterion benches.

use nalgebra::DMatrix;
use orps_core::corpus::{commuting_linear, GammaClass};
use orps_core::SystemSpec;

/// A representative commuting linear system with impulses.
pub fn bench_system() -> SystemSpec {
    commuting_linear(42, GammaClass::Negative)
}

/// Dense random-ish matrix with bounded entries for expm benches.
pub fn bench_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let x = (i * 31 + j * 17 + 7) % 13;
        (x as f64 - 6.0) / 4.0
    })
}
