//! Diagnostics for closed-loop runs: coordinate changes, the transformed
//! system used as an independent oracle, immersion residuals, steady-state
//! sampling, the filter steady-state map, excitation, Lyapunov values and
//! regulation metrics.

mod attractor;
mod immersion;
mod metrics;
mod oracle;
mod transform;

pub use attractor::{
    hausdorff, pe_check, pe_gram, regressor_samples, sample_omega_limit, sigma_map, AttractorError,
    OmegaLimitSamples, SigmaRun,
};
pub use immersion::{delta_displayed, delta_term, immersion_residual, lipschitz_estimate, residual_stats, ResidualStats};
pub use metrics::{
    block_bounds, dead_zone_radius, dead_zone_ratio_min, dead_zone_sign_violations, fit_exponential_envelope,
    increase_violations, lyapunov_series, lyapunov_value, settling_time, sup_abs_from, transformed_states,
    BlockBound, Envelope,
};
pub use oracle::{cross_coordinate_oracle, transformed_channel_names, AlgebraMismatch, OracleReport, TransformedLoop};
pub use transform::{eta_from, from_eta_theta, to_eta_theta, to_normal_form, to_transformed, TransformedState};

use crate::scalar::Real;

/// Aggregated diagnostics of one run. Optional entries are those that need
/// extra simulations and may be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport<T> {
    pub v_series: Vec<T>,
    pub v_violations: usize,
    pub residual: Option<ResidualStats<T>>,
    pub pe_min_eigenvalue: Option<T>,
    pub dead_zone_violations: usize,
    pub dead_zone_c1: Option<T>,
    pub bounds: Vec<BlockBound<T>>,
    pub sup_e_after: T,
    pub settling_time: Option<T>,
}

impl<T: Real> DiagnosticsReport<T> {
    pub fn is_finite(&self) -> bool {
        let opt = |v: &Option<T>| v.is_none_or(|x| x.is_finite());
        self.v_series.iter().all(|v| v.is_finite())
            && self.residual.is_none_or(|r| r.max_dyn.is_finite() && r.max_out.is_finite())
            && opt(&self.pe_min_eigenvalue)
            && opt(&self.dead_zone_c1)
            && self.bounds.iter().all(|b| b.overall_max.is_finite())
            && self.sup_e_after.is_finite()
            && opt(&self.settling_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Clamp, Immersion, PlantModel, SystemDims, VanDerPolImmersion, VanDerPolPlant};
    use crate::numerics::{simulate, solve_lyapunov, Matrix, Recorder};
    use crate::regulator::{Regulator, RegulatorGains, RegulatorState};
    use approx::assert_abs_diff_eq;

    fn imm() -> VanDerPolImmersion<f64> {
        VanDerPolImmersion::new([0.5, 10.0, 10.0, 1.5, 10.0], Clamp::new(4.0, 1.0).unwrap()).unwrap()
    }

    fn reg(lambda: f64, k: f64) -> Regulator<f64> {
        Regulator::new(
            imm().dims(),
            RegulatorGains::new(vec![-1.0, -2.0, -3.0], lambda, k, 9.6).unwrap(),
        )
        .unwrap()
    }

    fn sample_state(seed: f64) -> RegulatorState<f64> {
        RegulatorState {
            xi: (0..4).map(|i| (seed + i as f64).sin()).collect(),
            theta_hat: (0..5).map(|i| (seed * 1.3 + i as f64).cos() * 3.0).collect(),
            x: Matrix::from_fn(3, 5, |i, j| (seed + 0.7 * (i * 5 + j) as f64).sin()),
        }
    }

    const RHO: [f64; 3] = [2.0, 1.0, 1.5];

    #[test]
    fn eta_theta_at_exact_estimate() {
        let im = imm();
        let mut st = sample_state(0.3);
        st.theta_hat = im.theta(&RHO);
        let (eta, tt) = to_eta_theta(&st, &RHO, &im);
        assert!(tt.iter().all(|&v| v == 0.0));
        assert_eq!(eta, st.xi);
    }

    #[test]
    fn eta_equals_xi_when_filter_is_zero() {
        let im = imm();
        let mut st = sample_state(1.1);
        st.x = Matrix::zeros(3, 5);
        let (eta, _) = to_eta_theta(&st, &RHO, &im);
        assert_eq!(eta, st.xi);
    }

    #[test]
    fn eta_theta_round_trip() {
        let im = imm();
        for k in 0..20 {
            let st = sample_state(k as f64 * 0.77);
            let (eta, tt) = to_eta_theta(&st, &RHO, &im);
            assert_eq!(eta[0], st.xi[0]);
            let back = from_eta_theta(&eta, &tt, &st.x, &RHO, &im);
            for (a, b) in back.xi.iter().zip(&st.xi) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
            for (a, b) in back.theta_hat.iter().zip(&st.theta_hat) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn normal_form_at_zero_error() {
        let im = imm();
        let r = reg(10.0, 10.0);
        let st = sample_state(0.4);
        let (eta, tt) = to_normal_form(&st, 0.0, &RHO, &r, &im).unwrap();
        let (eta11, tt11) = to_eta_theta(&st, &RHO, &im);
        assert_eq!(tt, tt11);
        for (a, b) in eta.iter().zip(&eta11) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let mut exact = st.clone();
        exact.theta_hat = im.theta(&RHO);
        let (eta, _) = to_normal_form(&exact, 0.0, &RHO, &r, &im).unwrap();
        assert_eq!(eta, exact.xi);
    }

    #[test]
    fn normal_form_constant_integrand() {
        // Far in the saturated region Ω is constant, so the integral is β·e.
        let im = imm();
        let r = reg(10.0, 10.0);
        let mut st = sample_state(0.9);
        st.x = Matrix::zeros(3, 5);
        st.xi[0] = 100.0;
        let e = 0.3;
        let (eta, tt) = to_normal_form(&st, e, &RHO, &r, &im).unwrap();
        let beta = im.omega_mat(100.0).row(0).to_vec();
        let theta = im.theta(&RHO);
        for j in 0..5 {
            assert_abs_diff_eq!(tt[j], st.theta_hat[j] - theta[j] - beta[j] * e, epsilon = 1e-9);
        }
        for i in 0..4 {
            assert_abs_diff_eq!(eta[i], st.xi[i] - r.k_vec()[i] * e, epsilon = 1e-12);
        }
    }

    #[test]
    fn normal_form_cubic_integrand() {
        // X = 0 and unsaturated: β₁(y) = -s₀y³, integrated in closed form.
        let im = imm();
        let r = reg(2.0, 10.0);
        let mut st = sample_state(0.2);
        st.x = Matrix::zeros(3, 5);
        st.xi[0] = 0.5;
        let e = 0.02;
        let ck = r.k_vec()[0];
        let a = st.xi[0] - ck * e;
        let (_, tt) = to_normal_form(&st, e, &RHO, &r, &im).unwrap();
        // ∫₀ᵉ -(a + ck s)³ ds = -((a + ck e)⁴ - a⁴) / (4 ck)
        let integral = -0.5 * ((a + ck * e).powi(4) - a.powi(4)) / (4.0 * ck);
        let theta = im.theta(&RHO);
        assert_abs_diff_eq!(tt[0], st.theta_hat[0] - theta[0] - integral, epsilon = 1e-10);
    }

    #[test]
    fn lyapunov_value_examples() {
        let p = solve_lyapunov(reg(1.0, 1.0).f()).unwrap();
        let zero = TransformedState {
            chi: vec![0.0; 4],
            zeta: vec![0.0; 3],
            theta_tilde: vec![0.0; 5],
        };
        assert_eq!(lyapunov_value(&zero, &p), 0.0);
        let mut unit = zero.clone();
        unit.theta_tilde[2] = 1.0;
        assert_eq!(lyapunov_value(&unit, &p), 1.0);
        assert_eq!(increase_violations(&[3.0, 2.0, 2.0 + 1e-9, 5.0], 1e-8), vec![2]);
    }

    #[test]
    fn zeta_uses_b_hat() {
        let ts = to_transformed(&[1.0, 2.0, 3.0, 4.0], &[0.0], &[0.5, 0.0, 0.0, 0.0], &[1.0, 6.0, 11.0, 6.0]);
        assert_eq!(ts.chi, vec![0.5, 2.0, 3.0, 4.0]);
        assert_eq!(ts.zeta, vec![2.0 - 3.0, 3.0 - 5.5, 4.0 - 3.0]);
    }

    #[test]
    fn envelope_of_hurwitz_linear_system() {
        let f = Matrix::<f64>::from_f64_rows(&[&[-1.0, 5.0], &[0.0, -2.0]]).unwrap();
        let traj = simulate(
            |_t, x: &[f64], dx: &mut [f64]| dx.copy_from_slice(&f.mul_vec(x).unwrap()),
            &[1.0, 1.0],
            0.0,
            10.0,
            1e-3,
            Recorder::every(10),
        )
        .unwrap();
        let mags: Vec<f64> = traj.states().iter().map(|s| crate::scalar::norm(s)).collect();
        let env = fit_exponential_envelope(traj.times(), &mags).unwrap();
        assert!(env.alpha > 0.0);
        for (t, m) in traj.times().iter().zip(&mags) {
            assert!(*m <= env.c * (-env.alpha * t).exp() * (1.0 + 1e-12));
        }
        assert!(fit_exponential_envelope(&[0.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn settling_and_sup() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let e = [1.0, 0.5, 0.001, -0.002, 0.0];
        assert_eq!(settling_time(&t, &e, 0.01), Some(2.0));
        assert_eq!(settling_time(&t, &[0.0; 5], 0.01), Some(0.0));
        assert_eq!(settling_time(&t, &[0.0, 0.0, 0.0, 0.0, 1.0], 0.01), None);
        assert_eq!(sup_abs_from(&t, &e, 2.5), 0.002);
    }

    #[test]
    fn pe_degenerate_cases() {
        let constant: Vec<Vec<f64>> = (0..100).map(|_| vec![1.0, 0.0, 0.0]).collect();
        assert_abs_diff_eq!(pe_check(&constant, 0.01).unwrap(), 0.0, epsilon = 1e-14);
        let zero: Vec<Vec<f64>> = (0..100).map(|_| vec![0.0; 3]).collect();
        assert_eq!(pe_gram(&zero, 0.01), Matrix::zeros(3, 3));
        let rich: Vec<Vec<f64>> = (0..1000).map(|i| {
            let t = i as f64 * 0.01;
            vec![t.sin(), t.cos(), 1.0]
        }).collect();
        assert!(pe_check(&rich, 0.01).unwrap() > 0.1);
    }

    #[test]
    fn hausdorff_of_shifted_cloud() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 0.5], vec![1.0, 0.5], vec![3.0, 0.0]];
        assert_abs_diff_eq!(hausdorff(&a, &b), 2.0);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }

    #[test]
    fn delta_vanishing_sets() {
        let im = imm();
        let theta = im.theta(&RHO);
        assert!(delta_term(0.0, 1.7, &theta, &im).iter().all(|&v| v == 0.0));
        assert!(delta_displayed(1.3, 0.0, &theta, &im).iter().all(|&v| v == 0.0));
        assert!(delta_displayed(0.0, 1.7, &theta, &im).iter().any(|&v| v != 0.0));
    }

    /// Plant whose state never moves, so `τ₁` is constant along trajectories.
    struct Frozen;

    impl PlantModel<f64> for Frozen {
        fn dims(&self) -> SystemDims {
            imm().dims()
        }
        fn f0(&self, _: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn f1(&self, _: &[f64], _: &[f64], _: &[f64], _: f64, out: &mut [f64]) {
            out.fill(0.0);
        }
        fn q(&self, rho: &[f64], _: &[f64], z: &[f64], _: f64) -> f64 {
            -rho[2] * z[0]
        }
        fn s(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn sigma_under_constant_forcing_is_equilibrium() {
        let im = imm();
        let r = reg(1.0, 1.0);
        let wz0 = [0.3, 0.0, 1.2, 0.0];
        let run = sigma_map(&Frozen, &RHO, r.f(), r.g(), &im, &wz0, 40.0, 1.0, 1e-3, 100).unwrap();
        let tau1 = im.tau(&RHO, &wz0[..2], &wz0[2..])[0];
        let forcing = r.g().matmul(&im.omega_mat(tau1)).unwrap();
        let want = r.f().solve_matrix(&forcing).unwrap().scale(-1.0);
        for x in &run.x {
            assert!(x.max_abs_diff(&want).unwrap() < 1e-10);
        }
    }

    #[test]
    fn sigma_is_zero_without_forcing() {
        let im = imm();
        let r = reg(1.0, 1.0);
        let run = sigma_map(&Frozen, &RHO, r.f(), r.g(), &im, &[0.3, 0.0, 0.0, 0.0], 5.0, 1.0, 1e-3, 100).unwrap();
        assert!(run.x.iter().all(|x| x.max_abs() == 0.0));
    }

    #[test]
    fn transformed_loop_matches_raw_loop() {
        let plant = VanDerPolPlant::new();
        let im = imm();
        let r = reg(10.0, 10.0);
        let lay = crate::closed_loop::Layout::new(im.dims());
        let x0 = lay.pack(&RHO, &[2.0, 0.0], &[0.5, 0.0], 0.0, &RegulatorState::zeros(im.dims()));
        let report = cross_coordinate_oracle(&plant, &im, &r, &r, &x0, 1.0, 1e-3, 1e-6).unwrap();
        assert!(report.max_deviation < 1e-6, "{report:?}");
        assert!(report.check().is_ok());
        assert_eq!(report.channel_max.len(), lay.len());
    }
}
