//! Plant, exosystem and immersion abstractions.
//!
//! A plant is `ż = f₀ + f₁·e`, `ė = q + u`, driven by an exosystem
//! `ϱ̇ = s_ϱ·e`, `ẇ = s + s_w·e` (the couplings default to zero, which
//! makes `ϱ` constant). The immersion describes the steady-state input
//! generator in output-injection form `(A, C, φ, Ω, θ)`.

mod example;

pub use example::{
    build_example, steady_state_input_bound, zero_dynamics_field, ExampleOptions, FourParameterCandidate,
    VanDerPolImmersion, VanDerPolPlant, DEFAULT_REGRESSOR_SCALE,
};

use thiserror::Error;

use crate::numerics::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension `{0}` must be at least 1")]
    ZeroDimension(&'static str),
    #[error("parameter box: {0}")]
    InvalidBox(String),
    #[error("parameter {name} = {value} is outside its domain: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("clamp: {0}")]
    InvalidClamp(String),
    #[error("steady-state simulation failed: {0}")]
    Simulation(String),
}

/// Dimensions tying plant, exosystem and internal model together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    /// plant state `z`
    pub n: usize,
    /// uncertain parameters `ϱ`
    pub p: usize,
    /// exosystem state `w`
    pub s: usize,
    /// internal-model order
    pub d: usize,
    /// adapted parameters
    pub q: usize,
}

impl SystemDims {
    pub fn new(n: usize, p: usize, s: usize, d: usize, q: usize) -> Result<Self, ModelError> {
        for (name, v) in [("n", n), ("p", p), ("s", s), ("d", d), ("q", q)] {
            if v == 0 {
                return Err(ModelError::ZeroDimension(name));
            }
        }
        Ok(Self { n, p, s, d, q })
    }
}

/// Componentwise bounds on the uncertain parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> ParamBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(ModelError::InvalidBox(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::InvalidBox(format!("component {i} is unbounded")));
            }
            if lo > hi {
                return Err(ModelError::InvalidBox(format!("component {i}: lower {lo} > upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, rho: &[T]) -> bool {
        rho.len() == self.dim()
            && rho
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&r, (&lo, &hi))| lo <= r && r <= hi)
    }

    /// Tensor grid with `per_axis` points per component (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<T>> {
        let per_axis = per_axis.max(1);
        let axes: Vec<Vec<T>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                if per_axis == 1 {
                    vec![(lo + hi) * T::lit(0.5)]
                } else {
                    (0..per_axis)
                        .map(|i| lo + (hi - lo) * T::from_count(i) / T::from_count(per_axis - 1))
                        .collect()
                }
            })
            .collect();
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        points
    }

    /// The `2^p` corners of the box.
    pub fn corners(&self) -> Vec<Vec<T>> {
        self.grid(2)
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[T]) -> Vec<T> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&ui, (&lo, &hi))| lo + (hi - lo) * ui)
            .collect()
    }
}

/// Plant and exosystem vector fields.
///
/// Only the regulated error `e` is available to a controller; `q` is read by
/// the simulation and by diagnostics, never by the regulator.
pub trait PlantModel<T: Real>: Send + Sync {
    fn dims(&self) -> SystemDims;

    fn f0(&self, rho: &[T], w: &[T], z: &[T], out: &mut [T]);

    /// Coupling field; the plant state obeys `ż = f₀ + f₁·e`.
    fn f1(&self, rho: &[T], w: &[T], z: &[T], e: T, out: &mut [T]);

    fn q(&self, rho: &[T], w: &[T], z: &[T], e: T) -> T;

    /// Exosystem drift `ẇ = s(ϱ, w)` when uncoupled.
    fn s(&self, rho: &[T], w: &[T], out: &mut [T]);

    /// Parameter coupling: `ϱ̇ = s_ϱ·e`.
    fn s_rho(&self, _rho: &[T], _w: &[T], _z: &[T], _e: T, out: &mut [T]) {
        out.fill(T::zero());
    }

    /// Exosystem coupling: `ẇ = s + s_w·e`.
    fn s_w(&self, _rho: &[T], _w: &[T], _z: &[T], _e: T, out: &mut [T]) {
        out.fill(T::zero());
    }

    /// Steady-state input `c = -q(ϱ, w, z, 0)`.
    fn c(&self, rho: &[T], w: &[T], z: &[T]) -> T {
        -self.q(rho, w, z, T::zero())
    }
}

/// C¹ saturation applied to the argument of `φ` and `Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamp<T> {
    pub radius: T,
    pub blend: T,
}

impl<T: Real> Clamp<T> {
    pub fn new(radius: T, blend: T) -> Result<Self, ModelError> {
        if !(radius > T::zero()) || !(blend > T::zero()) || !radius.is_finite() || !blend.is_finite() {
            return Err(ModelError::InvalidClamp(format!(
                "radius {radius} and blend {blend} must be positive and finite"
            )));
        }
        Ok(Self { radius, blend })
    }

    /// Effectively disabled clamp, for diagnostics off the attractor.
    pub fn unbounded() -> Self {
        Self {
            radius: T::max_value().sqrt(),
            blend: T::one(),
        }
    }

    #[inline]
    pub fn apply(&self, y: T) -> T {
        clamp_injection(y, self.radius, self.blend)
    }

    pub fn derivative(&self, y: T) -> T {
        let a = y.abs();
        if a <= self.radius {
            T::one()
        } else if a >= self.radius + self.blend {
            T::zero()
        } else {
            T::one() - (a - self.radius) / self.blend
        }
    }
}

/// Identity on `|y| ≤ Y`, quadratic blend on `(Y, Y + b)` with slope going
/// from 1 to 0, constant `±(Y + b/2)` beyond.
#[inline]
pub fn clamp_injection<T: Real>(y: T, radius: T, blend: T) -> T {
    let a = y.abs();
    if a <= radius {
        return y;
    }
    let sat = if a >= radius + blend {
        radius + blend * T::lit(0.5)
    } else {
        let t = (a - radius) / blend;
        radius + blend * (t - t * t * T::lit(0.5))
    };
    sat.copysign(y)
}

/// Output-injection model of the steady-state input generator:
/// `ẋ = A x + φ(Cx) + Ω(Cx) θ(ϱ)` with `(A, C)` in canonical form.
///
/// `tau` and `theta` are diagnostic data; the regulator only uses the
/// clamped `phi` and `omega`.
pub trait Immersion<T: Real>: Send + Sync {
    fn dims(&self) -> SystemDims;

    fn clamp(&self) -> Clamp<T>;

    fn phi_unclamped(&self, y: T, out: &mut [T]);

    /// Writes the `d×q` matrix `Ω(y)`; every entry must be overwritten.
    fn omega_unclamped(&self, y: T, out: &mut Matrix<T>);

    fn theta(&self, rho: &[T]) -> Vec<T>;

    fn tau(&self, rho: &[T], w: &[T], z: &[T]) -> Vec<T>;

    fn phi(&self, y: T, out: &mut [T]) {
        self.phi_unclamped(self.clamp().apply(y), out);
    }

    fn omega(&self, y: T, out: &mut Matrix<T>) {
        self.omega_unclamped(self.clamp().apply(y), out);
    }

    fn phi_vec(&self, y: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dims().d];
        self.phi(y, &mut out);
        out
    }

    fn omega_mat(&self, y: T) -> Matrix<T> {
        let dims = self.dims();
        let mut out = Matrix::zeros(dims.d, dims.q);
        self.omega(y, &mut out);
        out
    }
}

/// Canonical observable pair: `A` the upper shift, `C = (1, 0, …, 0)`.
pub fn canonical_ac<T: Real>(d: usize) -> (Matrix<T>, Vec<T>) {
    assert!(d >= 1, "canonical_ac: d must be at least 1");
    let a = Matrix::from_fn(d, d, |i, j| if j == i + 1 { T::one() } else { T::zero() });
    let mut c = vec![T::zero(); d];
    c[0] = T::one();
    (a, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_pair_small_sizes() {
        let (a, c) = canonical_ac::<f64>(2);
        assert_eq!(a.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(c, vec![1.0, 0.0]);
        let (a1, c1) = canonical_ac::<f64>(1);
        assert_eq!(a1.as_slice(), &[0.0]);
        assert_eq!(c1, vec![1.0]);
    }

    #[test]
    fn observability_rows() {
        for d in 1..7 {
            let (a, c) = canonical_ac::<f64>(d);
            let mut row = c.clone();
            for k in 0..d {
                let mut unit = vec![0.0; d];
                unit[k] = 1.0;
                assert_eq!(row, unit, "C·A^{k} for d = {d}");
                row = a.vec_mul(&row).unwrap();
            }
        }
    }

    #[test]
    fn clamp_examples() {
        let (r, b) = (3.0, 1.0);
        assert_eq!(clamp_injection(0.0, r, b), 0.0);
        assert_eq!(clamp_injection(r / 2.0, r, b), r / 2.0);
        let far = 10.0 * (r + b);
        let v = clamp_injection(far, r, b);
        assert!((r..=r + b).contains(&v));
        let h = 1e-6;
        let slope = (clamp_injection(far + h, r, b) - clamp_injection(far - h, r, b)) / (2.0 * h);
        assert_abs_diff_eq!(slope, 0.0, epsilon = 1e-8);
        assert_eq!(clamp_injection(-far, r, b), -v);
    }

    #[test]
    fn clamp_is_c1_at_breakpoints() {
        let c = Clamp::new(2.0, 0.5).unwrap();
        let h = 1e-7;
        for y in [2.0, 2.5, -2.0, -2.5] {
            let left = (c.apply(y) - c.apply(y - h)) / h;
            let right = (c.apply(y + h) - c.apply(y)) / h;
            assert_abs_diff_eq!(left, right, epsilon = 1e-5);
            assert_abs_diff_eq!(left, c.derivative(y), epsilon = 1e-5);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Clamp::<f64>::new(0.0, 1.0).is_err());
        assert!(Clamp::<f64>::new(1.0, -1.0).is_err());
        assert!(SystemDims::new(2, 3, 2, 0, 4).is_err());
        assert!(ParamBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(ParamBox::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(ParamBox::<f64>::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn box_grid_and_corners() {
        let b = ParamBox::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert!(g.iter().all(|p| b.contains(p)));
        assert_eq!(g[0], vec![0.0, 1.0]);
        assert_eq!(g[8], vec![1.0, 3.0]);
        assert_eq!(b.corners().len(), 4);
        assert!(!b.contains(&[2.0, 2.0]));
    }
}
