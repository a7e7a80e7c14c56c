#![allow(dead_code)]

use std::sync::OnceLock;

use imreg::model::{build_example, ExampleOptions, Immersion, VanDerPolImmersion, VanDerPolPlant};
use imreg::regulator::{default_ell, default_roots, Regulator, RegulatorGains};

pub const RHO: [f64; 3] = [2.0, 1.0, 1.5];
pub const W0: [f64; 2] = [2.0, 0.0];
pub const Z0: [f64; 2] = [0.5, 0.0];

/// The worked example at `RHO`. Building it locates the steady state, so
/// the result is cached per test binary.
pub fn example() -> (VanDerPolPlant<f64>, VanDerPolImmersion<f64>) {
    static CELL: OnceLock<(VanDerPolPlant<f64>, VanDerPolImmersion<f64>)> = OnceLock::new();
    CELL.get_or_init(|| build_example(RHO[0], RHO[1], RHO[2], &ExampleOptions::default()).expect("worked example builds"))
        .clone()
}

pub fn regulator(imm: &VanDerPolImmersion<f64>, lambda: f64, k: f64) -> Regulator<f64> {
    let ell = default_ell(imm, &ExampleOptions::<f64>::default().bounds, 9);
    let gains = RegulatorGains::new(default_roots(imm.dims().d), lambda, k, ell).unwrap();
    Regulator::new(imm.dims(), gains).unwrap()
}

/// `ω²w₁² + w₂²`, conserved by the uncoupled exosystem.
pub fn harmonic_invariant(omega: f64, w: &[f64]) -> f64 {
    omega * omega * w[0] * w[0] + w[1] * w[1]
}

/// Largest relative drift of the harmonic invariant over a sequence of `w`.
pub fn harmonic_drift<'a>(omega: f64, ws: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let mut it = ws.into_iter();
    let first = match it.next() {
        Some(w) => harmonic_invariant(omega, w),
        None => return 0.0,
    };
    it.map(|w| (harmonic_invariant(omega, w) - first).abs() / first)
        .fold(0.0, f64::max)
}
