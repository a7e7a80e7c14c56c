//! The adaptive internal-model regulator.
//!
//! Controller state `(ξ, θ̂, X)` with `ξ ∈ ℝᵈ`, `θ̂ ∈ ℝ^q`, `X ∈ ℝ^{(d-1)×q}`:
//!
//! ```text
//! u   = ξ₁ + v,  v = -k e
//! ξ̇   = Aξ + φ(ξ₁) + Ω(ξ₁)θ̂ + H(X, ξ₁)v - M(X) dzv(θ̂)
//! θ̂̇   = β(X, ξ₁)v - dzv(θ̂)
//! Ẋ   = FX + GΩ(ξ₁)
//! β   = (CA M(X) + C Ω(ξ₁))ᵀ
//! H   = M(X)β + K,  K = Ab + λb
//! ```
//!
//! where `M(X)` stacks a zero row on top of `X`.

use thiserror::Error;

use crate::model::{Immersion, ParamBox, SystemDims};
use crate::numerics::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegulatorError {
    #[error("roots {0} and {1} coincide; the filter needs distinct eigenvalues")]
    RepeatedRoot(f64, f64),
    #[error("root {0} is not negative")]
    UnstableRoot(f64),
    #[error("gain {name} = {value} is invalid: {reason}")]
    InvalidGain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("expected {expected} roots for internal-model order {d}, got {got}")]
    RootCount { d: usize, expected: usize, got: usize },
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    StateDimension { expected: usize, got: usize },
}

/// Width of the dead-zone transition band `(ℓ, ℓ + 1)`.
pub const DEAD_ZONE_BLEND: f64 = 1.0;

/// Default ℓ is this factor times the largest `|θ(ϱ)|` on the grid.
pub const DEFAULT_ELL_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorGains<T> {
    roots: Vec<T>,
    lambda: T,
    k: T,
    ell: T,
}

impl<T: Real> RegulatorGains<T> {
    /// Validates the gains. `k = 0` is accepted so that the stabilizer can be
    /// switched off for comparison runs.
    pub fn new(roots: Vec<T>, lambda: T, k: T, ell: T) -> Result<Self, RegulatorError> {
        poly_to_b(&roots)?;
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(RegulatorError::InvalidGain {
                name: "lambda",
                value: lambda.to_f64_lossy(),
                reason: "must be positive",
            });
        }
        if !(k >= T::zero()) || !k.is_finite() {
            return Err(RegulatorError::InvalidGain {
                name: "k",
                value: k.to_f64_lossy(),
                reason: "must be non-negative",
            });
        }
        if !(ell > T::zero()) || !ell.is_finite() {
            return Err(RegulatorError::InvalidGain {
                name: "ell",
                value: ell.to_f64_lossy(),
                reason: "must be positive",
            });
        }
        Ok(Self { roots, lambda, k, ell })
    }

    pub fn roots(&self) -> &[T] {
        &self.roots
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn ell(&self) -> T {
        self.ell
    }

    pub fn with_lambda_k(&self, lambda: T, k: T) -> Result<Self, RegulatorError> {
        Self::new(self.roots.clone(), lambda, k, self.ell)
    }
}

/// `{-1, -2, …, -(d-1)}`
pub fn default_roots<T: Real>(d: usize) -> Vec<T> {
    (1..d).map(|i| -T::from_count(i)).collect()
}

/// `DEFAULT_ELL_FACTOR` times the largest `|θ(ϱ)|` over a `per_axis`-point grid of the box.
pub fn default_ell<T: Real, I: Immersion<T> + ?Sized>(imm: &I, bounds: &ParamBox<T>, per_axis: usize) -> T {
    let worst = bounds
        .grid(per_axis)
        .iter()
        .map(|rho| crate::scalar::norm(&imm.theta(rho)))
        .fold(T::zero(), T::max);
    T::lit(DEFAULT_ELL_FACTOR) * worst
}

/// Coefficients `(1, b₂, …, b_d)` of the monic polynomial with the given roots.
pub fn poly_to_b<T: Real>(roots: &[T]) -> Result<Vec<T>, RegulatorError> {
    for &r in roots {
        if !(r < T::zero()) || !r.is_finite() {
            return Err(RegulatorError::UnstableRoot(r.to_f64_lossy()));
        }
    }
    for (i, &a) in roots.iter().enumerate() {
        for &b in &roots[..i] {
            let scale = a.abs().max(b.abs()).max(T::one());
            if (a - b).abs() <= T::lit(1e-9) * scale {
                return Err(RegulatorError::RepeatedRoot(b.to_f64_lossy(), a.to_f64_lossy()));
            }
        }
    }
    let mut coeffs = vec![T::one()];
    for &r in roots {
        // multiply by (x - r)
        let mut next = vec![T::zero(); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= r * c;
        }
        coeffs = next;
    }
    Ok(coeffs)
}

/// Filter matrices `F` ((d-1)×(d-1)) and `G` ((d-1)×d): first column
/// `-(b₂, …, b_d)`, then an identity block shifted one column right.
/// `F` is `G` without its last column.
pub fn build_f_g<T: Real>(b: &[T]) -> (Matrix<T>, Matrix<T>) {
    let d = b.len();
    assert!(d >= 1, "build_f_g: b must be non-empty");
    let m = d - 1;
    let g = Matrix::from_fn(m, d, |i, j| {
        if j == 0 {
            -b[i + 1]
        } else if j == i + 1 {
            T::one()
        } else {
            T::zero()
        }
    });
    let f = Matrix::from_fn(m, m, |i, j| g[(i, j)]);
    (f, g)
}

/// `K = Ab + λb`, i.e. `Kᵢ = b_{i+1} + λbᵢ`.
pub fn compute_k<T: Real>(b: &[T], lambda: T) -> Vec<T> {
    (0..b.len())
        .map(|i| b.get(i + 1).copied().unwrap_or(T::zero()) + lambda * b[i])
        .collect()
}

/// C¹ dead zone: `0` on `|x| ≤ ℓ`, `x` on `|x| ≥ ℓ + 1`, cubic Hermite
/// blend in between (value and slope matched at both ends).
#[inline]
pub fn dead_zone<T: Real>(x: T, ell: T) -> T {
    let a = x.abs();
    if a <= ell {
        return T::zero();
    }
    if a >= ell + T::one() {
        return x;
    }
    let t = a - ell;
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (ell + T::one()) * (T::lit(3.0) * t2 - T::lit(2.0) * t3) + (t3 - t2);
    v.copysign(x)
}

pub fn dead_zone_derivative<T: Real>(x: T, ell: T) -> T {
    let a = x.abs();
    if a <= ell {
        return T::zero();
    }
    if a >= ell + T::one() {
        return T::one();
    }
    let t = a - ell;
    (ell + T::one()) * T::lit(6.0) * t * (T::one() - t) + T::lit(3.0) * t * t - T::lit(2.0) * t
}

/// Componentwise dead zone.
pub fn dzv<T: Real>(v: &[T], ell: T) -> Vec<T> {
    v.iter().map(|&x| dead_zone(x, ell)).collect()
}

/// `M(X)`: a zero row stacked on top of `X`.
pub fn m_of_x<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    Matrix::from_fn(x.rows() + 1, x.cols(), |i, j| if i == 0 { T::zero() } else { x[(i - 1, j)] })
}

/// `β = (CA M(X) + C Ω(ξ₁))ᵀ`, which for the canonical pair is row 1 of
/// `X` plus row 1 of `Ω(ξ₁)`.
pub fn beta_map<T: Real, I: Immersion<T> + ?Sized>(x: &Matrix<T>, xi1: T, imm: &I) -> Vec<T> {
    let om = imm.omega_mat(xi1);
    let mut beta = om.row(0).to_vec();
    if x.rows() > 0 {
        for (b, &xv) in beta.iter_mut().zip(x.row(0)) {
            *b += xv;
        }
    }
    beta
}

/// `H = M(X)β(X, ξ₁) + K`.
pub fn h_map<T: Real, I: Immersion<T> + ?Sized>(x: &Matrix<T>, xi1: T, k: &[T], imm: &I) -> Vec<T> {
    let beta = beta_map(x, xi1, imm);
    let mb = m_of_x(x).mul_vec(&beta).expect("M(X) and β agree in size");
    mb.iter().zip(k).map(|(&a, &b)| a + b).collect()
}

/// Controller state `(ξ, θ̂, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorState<T> {
    pub xi: Vec<T>,
    pub theta_hat: Vec<T>,
    pub x: Matrix<T>,
}

impl<T: Real> RegulatorState<T> {
    pub fn zeros(dims: SystemDims) -> Self {
        Self {
            xi: vec![T::zero(); dims.d],
            theta_hat: vec![T::zero(); dims.q],
            x: Matrix::zeros(dims.d - 1, dims.q),
        }
    }

    pub fn flat_len(dims: SystemDims) -> usize {
        dims.d + dims.q + (dims.d - 1) * dims.q
    }

    /// Layout `[ξ, θ̂, vec(X) row-major]`.
    pub fn to_flat(&self) -> Vec<T> {
        self.xi
            .iter()
            .chain(&self.theta_hat)
            .chain(self.x.as_slice())
            .copied()
            .collect()
    }

    pub fn from_flat(dims: SystemDims, flat: &[T]) -> Result<Self, RegulatorError> {
        let expected = Self::flat_len(dims);
        if flat.len() != expected {
            return Err(RegulatorError::StateDimension {
                expected,
                got: flat.len(),
            });
        }
        let (xi, rest) = flat.split_at(dims.d);
        let (th, xs) = rest.split_at(dims.q);
        Ok(Self {
            xi: xi.to_vec(),
            theta_hat: th.to_vec(),
            x: Matrix::from_fn(dims.d - 1, dims.q, |i, j| xs[i * dims.q + j]),
        })
    }

    pub fn is_finite(&self) -> bool {
        crate::scalar::all_finite(&self.xi) && crate::scalar::all_finite(&self.theta_hat) && self.x.is_finite()
    }
}

/// Scratch buffers for allocation-free derivative evaluation.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    omega: Matrix<T>,
    phi: Vec<T>,
    beta: Vec<T>,
    dz: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(dims: SystemDims) -> Self {
        Self {
            omega: Matrix::zeros(dims.d, dims.q),
            phi: vec![T::zero(); dims.d],
            beta: vec![T::zero(); dims.q],
            dz: vec![T::zero(); dims.q],
        }
    }
}

/// Regulator with its design matrices precomputed.
#[derive(Debug, Clone)]
pub struct Regulator<T> {
    dims: SystemDims,
    gains: RegulatorGains<T>,
    b: Vec<T>,
    f: Matrix<T>,
    g: Matrix<T>,
    k_vec: Vec<T>,
    h_includes_k: bool,
}

impl<T: Real> Regulator<T> {
    pub fn new(dims: SystemDims, gains: RegulatorGains<T>) -> Result<Self, RegulatorError> {
        if gains.roots.len() + 1 != dims.d {
            return Err(RegulatorError::RootCount {
                d: dims.d,
                expected: dims.d - 1,
                got: gains.roots.len(),
            });
        }
        let b = poly_to_b(&gains.roots)?;
        let (f, g) = build_f_g(&b);
        let k_vec = compute_k(&b, gains.lambda);
        Ok(Self {
            dims,
            gains,
            b,
            f,
            g,
            k_vec,
            h_includes_k: true,
        })
    }

    /// Deliberately wrong variant whose `H` omits `K`, used as a negative
    /// control for the coordinate-change checks.
    pub fn with_k_dropped_from_h(mut self) -> Self {
        self.h_includes_k = false;
        self
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn gains(&self) -> &RegulatorGains<T> {
        &self.gains
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn f(&self) -> &Matrix<T> {
        &self.f
    }

    pub fn g(&self) -> &Matrix<T> {
        &self.g
    }

    pub fn k_vec(&self) -> &[T] {
        &self.k_vec
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace::new(self.dims)
    }

    /// Derivative of the flattened controller state for a given `v`.
    /// Returns `u = ξ₁ + v`.
    pub fn derivative_with_v<I: Immersion<T> + ?Sized>(
        &self,
        state: &[T],
        v: T,
        imm: &I,
        ws: &mut Workspace<T>,
        out: &mut [T],
    ) -> T {
        let SystemDims { d, q, .. } = self.dims;
        let (xi, rest) = state.split_at(d);
        let (th, xs) = rest.split_at(q);
        let (dxi, drest) = out.split_at_mut(d);
        let (dth, dxs) = drest.split_at_mut(q);
        let xi1 = xi[0];
        let ell = self.gains.ell;

        imm.omega(xi1, &mut ws.omega);
        imm.phi(xi1, &mut ws.phi);
        for j in 0..q {
            let x_row1 = if d > 1 { xs[j] } else { T::zero() };
            ws.beta[j] = x_row1 + ws.omega[(0, j)];
            ws.dz[j] = dead_zone(th[j], ell);
        }

        for i in 0..d {
            let shift = if i + 1 < d { xi[i + 1] } else { T::zero() };
            let omega_th = crate::scalar::dot(ws.omega.row(i), th);
            let k_i = if self.h_includes_k { self.k_vec[i] } else { T::zero() };
            // rows of M(X): zero for i = 0, row i-1 of X otherwise
            let (mx_beta, mx_dz) = if i == 0 {
                (T::zero(), T::zero())
            } else {
                let row = &xs[(i - 1) * q..i * q];
                (crate::scalar::dot(row, &ws.beta), crate::scalar::dot(row, &ws.dz))
            };
            dxi[i] = shift + ws.phi[i] + omega_th + (mx_beta + k_i) * v - mx_dz;
        }
        for j in 0..q {
            dth[j] = ws.beta[j] * v - ws.dz[j];
        }
        let m = d - 1;
        for i in 0..m {
            for j in 0..q {
                let mut acc = T::zero();
                for l in 0..m {
                    acc += self.f[(i, l)] * xs[l * q + j];
                }
                for l in 0..d {
                    acc += self.g[(i, l)] * ws.omega[(l, j)];
                }
                dxs[i * q + j] = acc;
            }
        }
        xi1 + v
    }

    /// Controller derivative with the stabilizer `v = -k e`.
    pub fn derivative<I: Immersion<T> + ?Sized>(
        &self,
        state: &RegulatorState<T>,
        e: T,
        imm: &I,
    ) -> (T, RegulatorState<T>) {
        let flat = state.to_flat();
        let mut out = vec![T::zero(); flat.len()];
        let mut ws = self.workspace();
        let u = self.derivative_with_v(&flat, -self.gains.k * e, imm, &mut ws, &mut out);
        let deriv = RegulatorState::from_flat(self.dims, &out).expect("derivative has the state layout");
        (u, deriv)
    }
}
