use crate::closed_loop::Layout;
use crate::model::Immersion;
use crate::numerics::Matrix;
use crate::regulator::{dzv, Regulator};
use crate::scalar::{dot, norm, Real};

use super::transform::{to_eta_theta, to_transformed, TransformedState};

/// `V = χ₁² + ζᵀPζ + θ̃ᵀθ̃`
pub fn lyapunov_value<T: Real>(state: &TransformedState<T>, p: &Matrix<T>) -> T {
    let chi1 = state.chi[0];
    let zpz = if state.zeta.is_empty() {
        T::zero()
    } else {
        p.quadratic_form(&state.zeta).expect("P matches ζ")
    };
    chi1 * chi1 + zpz + dot(&state.theta_tilde, &state.theta_tilde)
}

pub fn lyapunov_series<T: Real>(states: &[TransformedState<T>], p: &Matrix<T>) -> Vec<T> {
    states.iter().map(|s| lyapunov_value(s, p)).collect()
}

/// Indices `i` where `V[i+1] - V[i] > tol`.
pub fn increase_violations<T: Real>(series: &[T], tol: T) -> Vec<usize> {
    series
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] - w[0] > tol)
        .map(|(i, _)| i)
        .collect()
}

/// Maps raw closed-loop states to `(χ, ζ, θ̃)`.
pub fn transformed_states<T: Real, I: Immersion<T> + ?Sized>(
    states: &[Vec<T>],
    lay: &Layout,
    reg: &Regulator<T>,
    imm: &I,
) -> Vec<TransformedState<T>> {
    states
        .iter()
        .map(|x| {
            let rho = &x[lay.rho()];
            let rs = lay.regulator_state(x);
            let (eta, tt) = to_eta_theta(&rs, rho, imm);
            let tau = imm.tau(rho, &x[lay.w()], &x[lay.z()]);
            to_transformed(&eta, &tt, &tau, reg.b())
        })
        .collect()
}

/// Exponential envelope `|x(t)| ≤ c·e^{-αt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope<T> {
    pub c: T,
    pub alpha: T,
}

/// Fits `α` by least squares on `ln|x|`, then takes the smallest `c` that
/// makes the envelope dominate every sample. `None` when there are fewer
/// than two positive samples or the fitted rate is not a decay.
pub fn fit_exponential_envelope<T: Real>(times: &[T], magnitudes: &[T]) -> Option<Envelope<T>> {
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(magnitudes)
        .filter(|(_, &m)| m > T::zero() && m.is_finite())
        .map(|(&t, &m)| (t, m.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_count(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum::<T>();
    if sxx == T::zero() {
        return None;
    }
    let sxy = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<T>();
    let alpha = -sxy / sxx;
    if !(alpha > T::zero()) {
        return None;
    }
    let c = times
        .iter()
        .zip(magnitudes)
        .map(|(&t, &m)| m * (alpha * t).exp())
        .fold(T::zero(), T::max);
    Some(Envelope { c, alpha })
}

/// First time after which `|e| ≤ eps` for the rest of the record, or `None`
/// if the last sample still violates it.
pub fn settling_time<T: Real>(times: &[T], e: &[T], eps: T) -> Option<T> {
    match e.iter().rposition(|v| !(v.abs() <= eps)) {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// `sup |x(t)|` over samples with `t ≥ t_from` (zero if there are none).
pub fn sup_abs_from<T: Real>(times: &[T], values: &[T], t_from: T) -> T {
    times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t_from)
        .fold(T::zero(), |m, (_, &v)| if v.is_nan() { T::infinity() } else { m.max(v.abs()) })
}

/// Largest norm of a state block over `t ≤ t_split` and over the whole record.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBound<T> {
    pub name: String,
    pub initial_max: T,
    pub overall_max: T,
}

impl<T: Real> BlockBound<T> {
    /// `overall_max ≤ factor·initial_max`
    pub fn within(&self, factor: T) -> bool {
        self.overall_max <= factor * self.initial_max
    }
}

/// Per-block norm bounds of a closed-loop run (`w, z, e, ξ, θ̂, X`).
pub fn block_bounds<T: Real>(times: &[T], states: &[Vec<T>], lay: &Layout, t_split: T) -> Vec<BlockBound<T>> {
    let e = lay.e();
    let blocks = [
        ("w", lay.w()),
        ("z", lay.z()),
        ("e", e..e + 1),
        ("xi", lay.xi()),
        ("theta_hat", lay.theta_hat()),
        ("X", lay.x()),
    ];
    blocks
        .into_iter()
        .map(|(name, r)| {
            let mut initial_max = T::zero();
            let mut overall_max = T::zero();
            for (&t, s) in times.iter().zip(states) {
                let n = norm(&s[r.clone()]);
                let n = if n.is_nan() { T::infinity() } else { n };
                overall_max = overall_max.max(n);
                if t <= t_split {
                    initial_max = initial_max.max(n);
                }
            }
            BlockBound {
                name: name.to_string(),
                initial_max,
                overall_max,
            }
        })
        .collect()
}

/// Number of samples with `θ̃ᵀ dzv(θ̃ + θ) < 0`.
pub fn dead_zone_sign_violations<T: Real>(samples: &[(Vec<T>, Vec<T>)], ell: T) -> usize {
    samples
        .iter()
        .filter(|(tt, theta)| {
            let arg: Vec<T> = tt.iter().zip(theta).map(|(&a, &b)| a + b).collect();
            dot(tt, &dzv(&arg, ell)) < T::zero()
        })
        .count()
}

/// `min 2θ̃ᵀ dzv(θ̃ + θ) / |θ̃|²` over the samples.
pub fn dead_zone_ratio_min<T: Real>(samples: &[(Vec<T>, Vec<T>)], ell: T) -> T {
    samples
        .iter()
        .map(|(tt, theta)| {
            let arg: Vec<T> = tt.iter().zip(theta).map(|(&a, &b)| a + b).collect();
            T::lit(2.0) * dot(tt, &dzv(&arg, ell)) / dot(tt, tt)
        })
        .fold(T::infinity(), T::min)
}

/// Threshold `√q (2ℓ + 1) + margin` beyond which the dead-zone ratio is bounded below.
pub fn dead_zone_radius<T: Real>(q: usize, ell: T, margin: T) -> T {
    T::from_count(q).sqrt() * (T::lit(2.0) * ell + T::one()) + margin
}
