//! Fixed workloads shared by the benchmarks.

use std::f64::consts::PI;

use wqed_core::{AtomSpec, NetworkSpec};

pub const OMEGA_A: f64 = 50.0;

/// Round trip of the Fig 2 geometry, 2·40π/ωa.
pub fn round_trip() -> f64 {
    80.0 * PI / OMEGA_A
}

/// `gammas.len()` nonchiral atoms sharing the position 40π/ωa.
pub fn colocated(gammas: &[f64]) -> NetworkSpec {
    let z = 40.0 * PI / OMEGA_A;
    NetworkSpec::new(gammas.iter().map(|&g| AtomSpec::nonchiral(z, g, OMEGA_A)).collect(), 0.0)
        .expect("valid network")
}
