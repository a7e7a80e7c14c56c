use crate::model::{zero_dynamics_field, Immersion, PlantModel};
use crate::numerics::{directional_derivative, DEFAULT_H_REL};
use crate::scalar::{dot, Real};

/// Residuals of the immersion identities at `(ϱ, w, z)`:
///
/// * `r_dyn = ∂τ/∂(w,z)·(s, f₀) - (Aτ + φ(τ₁) + Ω(τ₁)θ(ϱ))`
/// * `r_out = c - τ₁` with `c = -q(ϱ, w, z, 0)`
///
/// The derivative is a central difference with relative step `h_rel`.
pub fn immersion_residual<T: Real, P: PlantModel<T> + ?Sized, I: Immersion<T> + ?Sized>(
    rho: &[T],
    w: &[T],
    z: &[T],
    imm: &I,
    plant: &P,
    h_rel: T,
) -> (Vec<T>, T) {
    let dims = plant.dims();
    let x: Vec<T> = w.iter().chain(z).copied().collect();
    let mut f = vec![T::zero(); x.len()];
    zero_dynamics_field(plant, rho)(T::zero(), &x, &mut f);
    let lhs = directional_derivative(|v| imm.tau(rho, &v[..dims.s], &v[dims.s..]), &x, &f, h_rel);
    let tau = imm.tau(rho, w, z);
    let theta = imm.theta(rho);
    let phi = imm.phi_vec(tau[0]);
    let om = imm.omega_mat(tau[0]);
    let d = tau.len();
    let r_dyn = (0..d)
        .map(|i| {
            let shift = if i + 1 < d { tau[i + 1] } else { T::zero() };
            lhs[i] - (shift + phi[i] + dot(om.row(i), &theta))
        })
        .collect();
    let r_out = plant.c(rho, w, z) - tau[0];
    (r_dyn, r_out)
}

/// Summary of residuals over a set of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats<T> {
    pub samples: usize,
    pub max_dyn: T,
    pub max_out: T,
}

/// Evaluates [`immersion_residual`] on stacked `(w, z)` points.
pub fn residual_stats<T: Real, P: PlantModel<T> + ?Sized, I: Immersion<T> + ?Sized>(
    rho: &[T],
    points: &[Vec<T>],
    imm: &I,
    plant: &P,
) -> ResidualStats<T> {
    let s = plant.dims().s;
    let mut stats = ResidualStats {
        samples: points.len(),
        max_dyn: T::zero(),
        max_out: T::zero(),
    };
    for p in points {
        let (r_dyn, r_out) = immersion_residual(rho, &p[..s], &p[s..], imm, plant, T::lit(DEFAULT_H_REL));
        stats.max_dyn = stats.max_dyn.max(crate::scalar::max_abs(&r_dyn));
        stats.max_out = stats.max_out.max(r_out.abs());
    }
    stats
}

/// `φ(χ₁ + τ₁) - φ(χ₁) + [Ω(χ₁ + τ₁) - Ω(χ₁)]θ`, the perturbation term in
/// the form usually displayed. It vanishes at `τ₁ = 0`, not at `χ₁ = 0`.
pub fn delta_displayed<T: Real, I: Immersion<T> + ?Sized>(chi1: T, tau1: T, theta: &[T], imm: &I) -> Vec<T> {
    delta_between(chi1 + tau1, chi1, theta, imm)
}

/// `φ(χ₁ + τ₁) - φ(τ₁) + [Ω(χ₁ + τ₁) - Ω(τ₁)]θ`: the term that actually
/// appears in the `χ = η - τ` dynamics. It vanishes at `χ₁ = 0`.
pub fn delta_term<T: Real, I: Immersion<T> + ?Sized>(chi1: T, tau1: T, theta: &[T], imm: &I) -> Vec<T> {
    delta_between(chi1 + tau1, tau1, theta, imm)
}

fn delta_between<T: Real, I: Immersion<T> + ?Sized>(a: T, b: T, theta: &[T], imm: &I) -> Vec<T> {
    let pa = imm.phi_vec(a);
    let pb = imm.phi_vec(b);
    let oa = imm.omega_mat(a);
    let ob = imm.omega_mat(b);
    (0..pa.len())
        .map(|i| pa[i] - pb[i] + dot(oa.row(i), theta) - dot(ob.row(i), theta))
        .collect()
}

/// Sampled Lipschitz constants `(L_φ, L_Ω)` of the clamped maps on
/// `[-range, range]` (Euclidean and Frobenius norms).
pub fn lipschitz_estimate<T: Real, I: Immersion<T> + ?Sized>(imm: &I, range: T, points: usize) -> (T, T) {
    let points = points.max(2);
    let grid: Vec<T> = (0..points)
        .map(|i| -range + (range + range) * T::from_count(i) / T::from_count(points - 1))
        .collect();
    let mut l_phi = T::zero();
    let mut l_omega = T::zero();
    // Adjacent pairs bound the slope of a piecewise-smooth scalar map.
    for w in grid.windows(2) {
        let dy = w[1] - w[0];
        let dphi: Vec<T> = imm
            .phi_vec(w[1])
            .iter()
            .zip(imm.phi_vec(w[0]))
            .map(|(&a, b)| a - b)
            .collect();
        let dom = imm.omega_mat(w[1]).try_sub(&imm.omega_mat(w[0])).expect("same shape");
        l_phi = l_phi.max(crate::scalar::norm(&dphi) / dy);
        l_omega = l_omega.max(dom.frobenius_norm() / dy);
    }
    (l_phi, l_omega)
}
