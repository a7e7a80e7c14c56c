//! Forced Van der Pol oscillator with an uncertain harmonic exosystem.
//!
//! `ẇ₁ = w₂, ẇ₂ = -ω²w₁`, `ż₁ = z₂, ż₂ = -σz₁ - (z₁² - 1)z₂ - w₁ + e`,
//! `ė = -μz₁ + u`, with `ϱ = (ω, σ, μ)`.
//!
//! The steady-state input `c = μz₁` is generated by a four-dimensional
//! system linear in five unknown parameters:
//!
//! ```text
//! τ₁ = μz₁
//! τ₂ = μz₂ + μz₁³/3 - μz₁
//! τ₃ = ω²τ₁ - μw₁
//! τ₄ = ω²τ₂ - μw₂
//! φ(y) = (y, 0, 0, 0)
//! Ω(y) = [[-y³, 0, 0, 0, 0], [0, -y, 0, 0, 0], [0, 0, y, -y³, 0], [0, 0, 0, 0, -y]]
//! θ    = (1/(3μ²), σ + ω², ω², ω²/(3μ²), ω²σ)
//! ```
//!
//! Column `j` of `Ω` is multiplied by a fixed regressor scale `s_j` and
//! `θ_j` divided by it. This leaves `Ω θ` unchanged and only balances the
//! adaptation rates of the five estimates.

use super::{Clamp, Immersion, ModelError, ParamBox, PlantModel, SystemDims};
use crate::numerics::{simulate, Matrix, Recorder};
use crate::scalar::Real;

/// Per-column regressor scale balancing the excitation of the five
/// parameter directions on the example's attractor.
pub const DEFAULT_REGRESSOR_SCALE: [f64; 5] = [0.5, 10.0, 10.0, 1.5, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct VanDerPolPlant<T> {
    coupling: T,
}

impl<T: Real> VanDerPolPlant<T> {
    /// Plant with constant parameters.
    pub fn new() -> Self {
        Self { coupling: T::zero() }
    }

    /// Parameters and exosystem driven by `e`: `ϱ̇ = g·(1, 1, 1)·e` and
    /// `ẇ = s + g·(z₁, z₂)·e`.
    pub fn with_coupling(gain: T) -> Self {
        Self { coupling: gain }
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }
}

impl<T: Real> Default for VanDerPolPlant<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn example_dims() -> SystemDims {
    SystemDims {
        n: 2,
        p: 3,
        s: 2,
        d: 4,
        q: 5,
    }
}

impl<T: Real> PlantModel<T> for VanDerPolPlant<T> {
    fn dims(&self) -> SystemDims {
        example_dims()
    }

    fn f0(&self, rho: &[T], w: &[T], z: &[T], out: &mut [T]) {
        let sigma = rho[1];
        out[0] = z[1];
        out[1] = -sigma * z[0] - (z[0] * z[0] - T::one()) * z[1] - w[0];
    }

    fn f1(&self, _rho: &[T], _w: &[T], _z: &[T], _e: T, out: &mut [T]) {
        out[0] = T::zero();
        out[1] = T::one();
    }

    fn q(&self, rho: &[T], _w: &[T], z: &[T], _e: T) -> T {
        -rho[2] * z[0]
    }

    fn s(&self, rho: &[T], w: &[T], out: &mut [T]) {
        let omega = rho[0];
        out[0] = w[1];
        out[1] = -omega * omega * w[0];
    }

    fn s_rho(&self, _rho: &[T], _w: &[T], _z: &[T], _e: T, out: &mut [T]) {
        out.fill(self.coupling);
    }

    fn s_w(&self, _rho: &[T], _w: &[T], z: &[T], _e: T, out: &mut [T]) {
        out[0] = self.coupling * z[0];
        out[1] = self.coupling * z[1];
    }
}

fn tau_common<T: Real>(rho: &[T], w: &[T], z: &[T], flip_exo_sign: bool) -> Vec<T> {
    let (omega, mu) = (rho[0], rho[2]);
    let om2 = omega * omega;
    let t1 = mu * z[0];
    // μz₂ + ∫₀^{μz₁} (x²/μ² - 1) dx
    let t2 = mu * z[1] + mu * z[0] * z[0] * z[0] / T::lit(3.0) - mu * z[0];
    if flip_exo_sign {
        vec![t1, t2, mu * w[0] - om2 * t1, mu * w[1] - om2 * t2]
    } else {
        vec![t1, t2, om2 * t1 - mu * w[0], om2 * t2 - mu * w[1]]
    }
}

/// Five-parameter immersion of the example (see the module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct VanDerPolImmersion<T> {
    scale: [T; 5],
    clamp: Clamp<T>,
}

impl<T: Real> VanDerPolImmersion<T> {
    pub fn new(scale: [T; 5], clamp: Clamp<T>) -> Result<Self, ModelError> {
        if let Some(bad) = scale.iter().find(|s| !(**s > T::zero()) || !s.is_finite()) {
            return Err(ModelError::Domain {
                name: "regressor scale",
                value: bad.to_f64_lossy(),
                reason: "must be positive and finite",
            });
        }
        Ok(Self { scale, clamp })
    }

    pub fn scale(&self) -> &[T; 5] {
        &self.scale
    }

    pub fn with_clamp(&self, clamp: Clamp<T>) -> Self {
        Self {
            scale: self.scale,
            clamp,
        }
    }
}

impl<T: Real> Immersion<T> for VanDerPolImmersion<T> {
    fn dims(&self) -> SystemDims {
        example_dims()
    }

    fn clamp(&self) -> Clamp<T> {
        self.clamp
    }

    fn phi_unclamped(&self, y: T, out: &mut [T]) {
        out.fill(T::zero());
        out[0] = y;
    }

    fn omega_unclamped(&self, y: T, out: &mut Matrix<T>) {
        let s = &self.scale;
        let y3 = y * y * y;
        out.as_mut_slice().fill(T::zero());
        out[(0, 0)] = -y3 * s[0];
        out[(1, 1)] = -y * s[1];
        out[(2, 2)] = y * s[2];
        out[(2, 3)] = -y3 * s[3];
        out[(3, 4)] = -y * s[4];
    }

    fn theta(&self, rho: &[T]) -> Vec<T> {
        let (omega, sigma, mu) = (rho[0], rho[1], rho[2]);
        let om2 = omega * omega;
        let inv3mu2 = T::one() / (T::lit(3.0) * mu * mu);
        let raw = [inv3mu2, sigma + om2, om2, om2 * inv3mu2, om2 * sigma];
        raw.iter().zip(&self.scale).map(|(&r, &s)| r / s).collect()
    }

    fn tau(&self, rho: &[T], w: &[T], z: &[T]) -> Vec<T> {
        tau_common(rho, w, z, false)
    }
}

/// Four-parameter candidate with `Ω = diag(-y³, -y, -y, -y)` and
/// `θ = (1/μ, σ, σ - ω², -ω⁴ - ω²σ)`.
///
/// It does not satisfy the immersion identity on the example's attractor
/// and is kept as a negative reference for the residual diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FourParameterCandidate<T> {
    clamp: Clamp<T>,
}

impl<T: Real> FourParameterCandidate<T> {
    pub fn new(clamp: Clamp<T>) -> Self {
        Self { clamp }
    }
}

impl<T: Real> Immersion<T> for FourParameterCandidate<T> {
    fn dims(&self) -> SystemDims {
        SystemDims { q: 4, ..example_dims() }
    }

    fn clamp(&self) -> Clamp<T> {
        self.clamp
    }

    fn phi_unclamped(&self, y: T, out: &mut [T]) {
        out.fill(T::zero());
        out[0] = y;
    }

    fn omega_unclamped(&self, y: T, out: &mut Matrix<T>) {
        out.as_mut_slice().fill(T::zero());
        out[(0, 0)] = -y * y * y;
        out[(1, 1)] = -y;
        out[(2, 2)] = -y;
        out[(3, 3)] = -y;
    }

    fn theta(&self, rho: &[T]) -> Vec<T> {
        let (omega, sigma, mu) = (rho[0], rho[1], rho[2]);
        let om2 = omega * omega;
        vec![T::one() / mu, sigma, sigma - om2, -om2 * om2 - om2 * sigma]
    }

    fn tau(&self, rho: &[T], w: &[T], z: &[T]) -> Vec<T> {
        tau_common(rho, w, z, true)
    }
}

/// Construction options for [`build_example`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleOptions<T> {
    pub bounds: ParamBox<T>,
    pub regressor_scale: [T; 5],
    /// `None` derives the radius from the zero-dynamics steady state.
    pub clamp_radius: Option<T>,
    pub clamp_blend: T,
    /// Margin factor applied to the steady-state bound of `|c|`.
    pub clamp_margin: T,
    /// Exosystem and plant initial state used to locate the steady state.
    pub w0: Vec<T>,
    pub z0: Vec<T>,
    pub coupling: T,
}

impl<T: Real> Default for ExampleOptions<T> {
    fn default() -> Self {
        Self {
            bounds: ParamBox::new(
                vec![T::lit(0.5), T::lit(0.2), T::lit(0.5)],
                vec![T::lit(3.0), T::lit(2.0), T::lit(2.0)],
            )
            .expect("static bounds are valid"),
            regressor_scale: DEFAULT_REGRESSOR_SCALE.map(T::lit),
            clamp_radius: None,
            clamp_blend: T::one(),
            clamp_margin: T::lit(1.25),
            w0: vec![T::lit(2.0), T::zero()],
            z0: vec![T::lit(0.5), T::zero()],
            coupling: T::zero(),
        }
    }
}

/// Builds the plant and immersion for `ϱ = (ω, σ, μ)`.
pub fn build_example<T: Real>(
    omega: T,
    sigma: T,
    mu: T,
    opts: &ExampleOptions<T>,
) -> Result<(VanDerPolPlant<T>, VanDerPolImmersion<T>), ModelError> {
    if mu == T::zero() {
        return Err(ModelError::Domain {
            name: "mu",
            value: 0.0,
            reason: "must be nonzero",
        });
    }
    if !(omega > T::zero()) {
        return Err(ModelError::Domain {
            name: "omega",
            value: omega.to_f64_lossy(),
            reason: "must be positive",
        });
    }
    if !(sigma > T::zero()) {
        return Err(ModelError::Domain {
            name: "sigma",
            value: sigma.to_f64_lossy(),
            reason: "must be positive",
        });
    }
    let rho = [omega, sigma, mu];
    if !opts.bounds.contains(&rho) {
        return Err(ModelError::Domain {
            name: "rho",
            value: f64::NAN,
            reason: "(omega, sigma, mu) lies outside the parameter box",
        });
    }
    let plant = VanDerPolPlant::with_coupling(opts.coupling);
    let radius = match opts.clamp_radius {
        Some(r) => r,
        None => {
            let bound = steady_state_input_bound(&plant, &rho, &opts.w0, &opts.z0, T::lit(200.0), T::lit(50.0), T::lit(1e-3))?;
            opts.clamp_margin * bound
        }
    };
    let clamp = Clamp::new(radius, opts.clamp_blend)?;
    let imm = VanDerPolImmersion::new(opts.regressor_scale, clamp)?;
    Ok((plant, imm))
}

/// Zero-dynamics field on the stacked state `(w, z)` with `ϱ` frozen and `e ≡ 0`.
pub fn zero_dynamics_field<'a, T: Real, P: PlantModel<T> + ?Sized>(
    plant: &'a P,
    rho: &'a [T],
) -> impl FnMut(T, &[T], &mut [T]) + 'a {
    let dims = plant.dims();
    move |_t, x, dx| {
        let (w, z) = x.split_at(dims.s);
        let (dw, dz) = dx.split_at_mut(dims.s);
        plant.s(rho, w, dw);
        plant.f0(rho, w, z, dz);
    }
}

/// `max |c|` over a window of the zero dynamics after a transient.
pub fn steady_state_input_bound<T: Real, P: PlantModel<T> + ?Sized>(
    plant: &P,
    rho: &[T],
    w0: &[T],
    z0: &[T],
    t_transient: T,
    t_window: T,
    h: T,
) -> Result<T, ModelError> {
    let dims = plant.dims();
    let x0: Vec<T> = w0.iter().chain(z0).copied().collect();
    let steps_per_sample = 10;
    let transient = simulate(zero_dynamics_field(plant, rho), &x0, T::zero(), t_transient, h, Recorder::every(usize::MAX))
        .map_err(|e| ModelError::Simulation(e.to_string()))?;
    let start = transient.last_state().expect("simulate records the final point").to_vec();
    let window = simulate(
        zero_dynamics_field(plant, rho),
        &start,
        t_transient,
        t_transient + t_window,
        h,
        Recorder::every(steps_per_sample),
    )
    .map_err(|e| ModelError::Simulation(e.to_string()))?;
    Ok(window
        .states()
        .iter()
        .map(|x| plant.c(rho, &x[..dims.s], &x[dims.s..]).abs())
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{directional_derivative, DEFAULT_H_REL};
    use approx::assert_abs_diff_eq;

    fn unclamped() -> VanDerPolImmersion<f64> {
        VanDerPolImmersion::new([1.0; 5], Clamp::unbounded()).unwrap()
    }

    /// `∂τ/∂x · f₀ - (Aτ + φ(τ₁) + Ω(τ₁)θ)` by central differences.
    fn residual<I: Immersion<f64>>(imm: &I, rho: &[f64], x: &[f64]) -> Vec<f64> {
        let plant = VanDerPolPlant::new();
        let mut f = vec![0.0; 4];
        zero_dynamics_field(&plant, rho)(0.0, x, &mut f);
        let lhs = directional_derivative(|v| imm.tau(rho, &v[..2], &v[2..]), x, &f, DEFAULT_H_REL);
        let tau = imm.tau(rho, &x[..2], &x[2..]);
        let mut phi = vec![0.0; 4];
        imm.phi(tau[0], &mut phi);
        let om = imm.omega_mat(tau[0]);
        let ot = om.mul_vec(&imm.theta(rho)).unwrap();
        (0..4)
            .map(|i| {
                let shift = if i + 1 < 4 { tau[i + 1] } else { 0.0 };
                lhs[i] - (shift + phi[i] + ot[i])
            })
            .collect()
    }

    #[test]
    fn immersion_identity_holds_everywhere_unclamped() {
        let imm = unclamped();
        let rho = [2.0, 1.0, 1.5];
        for x in [[0.3, -1.0, 0.7, 2.0], [-2.0, 0.5, -1.9, -0.4], [1.0, 1.0, 3.0, -3.0]] {
            let r = residual(&imm, &rho, &x);
            assert!(r.iter().all(|v| v.abs() < 1e-6), "{r:?}");
        }
    }

    #[test]
    fn scaling_leaves_omega_theta_invariant() {
        let rho = [1.3, 0.4, 0.8];
        let a = unclamped();
        let b = VanDerPolImmersion::new([0.5, 10.0, 10.0, 1.5, 10.0], Clamp::unbounded()).unwrap();
        for y in [-2.0, 0.1, 3.0] {
            let pa = a.omega_mat(y).mul_vec(&a.theta(&rho)).unwrap();
            let pb = b.omega_mat(y).mul_vec(&b.theta(&rho)).unwrap();
            for (x, z) in pa.iter().zip(&pb) {
                assert_abs_diff_eq!(x, z, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tau_vanishes_at_origin() {
        let imm = unclamped();
        assert!(imm.tau(&[2.0, 1.0, 1.5], &[0.0, 0.0], &[0.0, 0.0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_tau_component_is_steady_state_input() {
        let imm = unclamped();
        let plant = VanDerPolPlant::new();
        let rho = [2.0, 1.0, 1.5];
        let (w, z) = ([0.4, -1.0], [1.2, 0.3]);
        assert_eq!(imm.tau(&rho, &w, &z)[0], plant.c(&rho, &w, &z));
    }

    #[test]
    fn four_parameter_candidate_values() {
        let c = FourParameterCandidate::new(Clamp::unbounded());
        assert_eq!(c.theta(&[1.0, 0.0, 1.0]), vec![1.0, 0.0, -1.0, -1.0]);
        let tau = c.tau(&[1.0, 0.0, 1.0], &[0.0, 0.0], &[1.0, 0.0]);
        let want = [1.0, -2.0 / 3.0, -1.0, 2.0 / 3.0];
        for (t, w) in tau.iter().zip(&want) {
            assert_abs_diff_eq!(t, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn four_parameter_candidate_fails_identity() {
        let c = FourParameterCandidate::new(Clamp::unbounded());
        let r = residual(&c, &[2.0, 1.0, 1.5], &[0.3, -1.0, 0.7, 2.0]);
        assert!(r.iter().any(|v| v.abs() > 1e-2), "{r:?}");
    }

    #[test]
    fn domain_errors() {
        let opts = ExampleOptions {
            clamp_radius: Some(4.0),
            ..ExampleOptions::default()
        };
        assert!(matches!(build_example(2.0, 1.0, 0.0, &opts), Err(ModelError::Domain { name: "mu", .. })));
        assert!(build_example(-2.0, 1.0, 1.5, &opts).is_err());
        assert!(build_example(2.0, 1.0, 5.0, &opts).is_err());
        assert!(build_example(2.0, 1.0, 1.5, &opts).is_ok());
    }

    #[test]
    fn default_clamp_covers_steady_state() {
        let (plant, imm) = build_example(2.0, 1.0, 1.5, &ExampleOptions::default()).unwrap();
        let bound = steady_state_input_bound(&plant, &[2.0, 1.0, 1.5], &[2.0, 0.0], &[0.5, 0.0], 200.0, 50.0, 1e-3).unwrap();
        assert!(bound > 1.0 && bound < 10.0, "bound {bound}");
        assert_abs_diff_eq!(imm.clamp().radius, 1.25 * bound, epsilon = 1e-12);
    }

    #[test]
    fn parameters_stay_constant_without_coupling() {
        let plant = VanDerPolPlant::<f64>::new();
        let mut out = [1.0; 3];
        plant.s_rho(&[2.0, 1.0, 1.5], &[1.0, 0.0], &[1.0, 1.0], 0.7, &mut out);
        assert_eq!(out, [0.0; 3]);
    }
}
