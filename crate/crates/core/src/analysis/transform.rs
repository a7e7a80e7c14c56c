use crate::model::Immersion;
use crate::numerics::{adaptive_simpson, Matrix, QuadratureError};
use crate::regulator::{m_of_x, Regulator, RegulatorState};
use crate::scalar::{dot, Real};

/// Error coordinates `(χ, ζ, θ̃)` around the steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState<T> {
    /// `η - τ`
    pub chi: Vec<T>,
    /// `b̂χ₁ + χ₂` with `b̂ = -(b₂, …, b_d)`
    pub zeta: Vec<T>,
    pub theta_tilde: Vec<T>,
}

/// `θ̃ = θ̂ - θ(ϱ)`, `η = ξ - M(X)θ̃`.
pub fn to_eta_theta<T: Real, I: Immersion<T> + ?Sized>(
    rs: &RegulatorState<T>,
    rho: &[T],
    imm: &I,
) -> (Vec<T>, Vec<T>) {
    let theta = imm.theta(rho);
    let theta_tilde: Vec<T> = rs.theta_hat.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
    let eta = eta_from(&rs.xi, &rs.x, &theta_tilde);
    debug_assert!(eta[0] == rs.xi[0]);
    (eta, theta_tilde)
}

/// `ξ - M(X)θ̃`; the first component is `ξ₁` because `M(X)` has a zero top row.
pub fn eta_from<T: Real>(xi: &[T], x: &Matrix<T>, theta_tilde: &[T]) -> Vec<T> {
    let mut eta = xi.to_vec();
    for i in 1..xi.len() {
        eta[i] -= dot(x.row(i - 1), theta_tilde);
    }
    eta
}

/// Inverse of [`to_eta_theta`]: `ξ = η + M(X)θ̃`, `θ̂ = θ̃ + θ(ϱ)`.
pub fn from_eta_theta<T: Real, I: Immersion<T> + ?Sized>(
    eta: &[T],
    theta_tilde: &[T],
    x: &Matrix<T>,
    rho: &[T],
    imm: &I,
) -> RegulatorState<T> {
    let theta = imm.theta(rho);
    let mut xi = eta.to_vec();
    for i in 1..xi.len() {
        xi[i] += dot(x.row(i - 1), theta_tilde);
    }
    RegulatorState {
        xi,
        theta_hat: theta_tilde.iter().zip(&theta).map(|(&a, &b)| a + b).collect(),
        x: x.clone(),
    }
}

/// `χ = η - τ` and `ζ = b̂χ₁ + χ₂`.
pub fn to_transformed<T: Real>(eta: &[T], theta_tilde: &[T], tau: &[T], b: &[T]) -> TransformedState<T> {
    let chi: Vec<T> = eta.iter().zip(tau).map(|(&a, &b)| a - b).collect();
    let zeta = (1..chi.len()).map(|i| chi[i] - b[i] * chi[0]).collect();
    TransformedState {
        chi,
        zeta,
        theta_tilde: theta_tilde.to_vec(),
    }
}

/// Coordinates putting the loop with input `v` and output `e` in normal form:
///
/// ```text
/// θ̃ = θ̂ - θ(ϱ) - ∫₀ᵉ β(X, ξ₁ - CKe + CKs) ds
/// η = ξ - M(X)(θ̂ - θ(ϱ)) - Ke
/// ```
///
/// The integral is computed by adaptive Simpson quadrature to `1e-10`
/// (scaled to the scalar type's precision).
pub fn to_normal_form<T: Real, I: Immersion<T> + ?Sized>(
    rs: &RegulatorState<T>,
    e: T,
    rho: &[T],
    reg: &Regulator<T>,
    imm: &I,
) -> Result<(Vec<T>, Vec<T>), QuadratureError> {
    let theta = imm.theta(rho);
    let diff: Vec<T> = rs.theta_hat.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
    let k = reg.k_vec();
    let ck = k[0];
    let base = rs.xi[0] - ck * e;
    let x = &rs.x;
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3));
    let integral = adaptive_simpson(
        |s| {
            let y = base + ck * s;
            let om = imm.omega_mat(y);
            let mut beta = om.row(0).to_vec();
            if x.rows() > 0 {
                for (b, &xv) in beta.iter_mut().zip(x.row(0)) {
                    *b += xv;
                }
            }
            beta
        },
        T::zero(),
        e,
        tol,
    )?;
    let theta_tilde: Vec<T> = diff.iter().zip(&integral).map(|(&a, &b)| a - b).collect();
    let m = m_of_x(x);
    let md = m.mul_vec(&diff).expect("M(X) is d×q");
    let eta = rs
        .xi
        .iter()
        .zip(&md)
        .zip(k)
        .map(|((&xi, &mdi), &ki)| xi - mdi - ki * e)
        .collect();
    Ok((eta, theta_tilde))
}
