use thiserror::Error;

use crate::closed_loop::{ClosedLoop, Feedback, Layout};
use crate::model::{Immersion, PlantModel};
use crate::numerics::{simulate, IntegrationError, Matrix, Recorder};
use crate::regulator::{dead_zone, Regulator};
use crate::scalar::{dot, Real};

use super::transform::{eta_from, to_eta_theta};

/// The closed loop written in `(e, η, θ̃, X)` coordinates with `v = -k e`:
///
/// ```text
/// ė  = q + η₁ + v
/// η̇  = Aη + bβᵀ(X, η₁)θ̃ + Kv + φ(η₁) + Ω(η₁)θ(ϱ)
/// θ̃̇  = β(X, η₁)v - dzv(θ̃ + θ(ϱ))
/// Ẋ  = FX + GΩ(η₁)
/// ```
///
/// Shares the closed-loop layout, with `η` in the `ξ` slot and `θ̃` in the
/// `θ̂` slot. Valid for constant `ϱ` only.
pub struct TransformedLoop<'a, T, P: ?Sized, I: ?Sized> {
    pub plant: &'a P,
    pub imm: &'a I,
    pub regulator: &'a Regulator<T>,
}

impl<'a, T: Real, P: PlantModel<T> + ?Sized, I: Immersion<T> + ?Sized> TransformedLoop<'a, T, P, I> {
    pub fn new(plant: &'a P, imm: &'a I, regulator: &'a Regulator<T>) -> Self {
        Self { plant, imm, regulator }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.imm.dims())
    }

    pub fn field(&self) -> impl FnMut(T, &[T], &mut [T]) + '_ {
        let lay = self.layout();
        let dims = lay.dims();
        let (d, q) = (dims.d, dims.q);
        let reg = self.regulator;
        let b = reg.b().to_vec();
        let k_vec = reg.k_vec().to_vec();
        let ell = reg.gains().ell();
        let gain = reg.gains().k();
        let mut omega = Matrix::zeros(d, q);
        let mut phi = vec![T::zero(); d];
        let mut beta = vec![T::zero(); q];
        let mut f1 = vec![T::zero(); dims.n];
        move |_t, x, dx| {
            let rho = &x[lay.rho()];
            let w = &x[lay.w()];
            let z = &x[lay.z()];
            let e = x[lay.e()];
            let eta = &x[lay.xi()];
            let tt = &x[lay.theta_hat()];
            let xs = &x[lay.x()];
            let theta = self.imm.theta(rho);
            let v = -gain * e;
            let y = eta[0];
            self.imm.omega(y, &mut omega);
            self.imm.phi(y, &mut phi);
            for j in 0..q {
                beta[j] = omega[(0, j)] + if d > 1 { xs[j] } else { T::zero() };
            }
            let beta_tt = dot(&beta, tt);

            dx[lay.rho()].fill(T::zero());
            self.plant.s(rho, w, &mut dx[lay.w()]);
            self.plant.f0(rho, w, z, &mut dx[lay.z()]);
            self.plant.f1(rho, w, z, e, &mut f1);
            for (dz, &c) in dx[lay.z()].iter_mut().zip(&f1) {
                *dz += c * e;
            }
            dx[lay.e()] = self.plant.q(rho, w, z, e) + eta[0] + v;

            let deta = lay.xi().start;
            for i in 0..d {
                let shift = if i + 1 < d { eta[i + 1] } else { T::zero() };
                dx[deta + i] = shift + b[i] * beta_tt + k_vec[i] * v + phi[i] + dot(omega.row(i), &theta);
            }
            let dth = lay.theta_hat().start;
            for j in 0..q {
                dx[dth + j] = beta[j] * v - dead_zone(tt[j] + theta[j], ell);
            }
            let dxs = lay.x().start;
            let (f, g) = (reg.f(), reg.g());
            for i in 0..d - 1 {
                for j in 0..q {
                    let mut acc = T::zero();
                    for l in 0..d - 1 {
                        acc += f[(i, l)] * xs[l * q + j];
                    }
                    for l in 0..d {
                        acc += g[(i, l)] * omega[(l, j)];
                    }
                    dx[dxs + i * q + j] = acc;
                }
            }
        }
    }

    /// Maps a raw closed-loop state into these coordinates.
    pub fn from_raw(&self, raw: &[T]) -> Vec<T> {
        let lay = self.layout();
        let rs = lay.regulator_state(raw);
        let (eta, tt) = to_eta_theta(&rs, &raw[lay.rho()], self.imm);
        let mut out = raw.to_vec();
        out[lay.xi()].copy_from_slice(&eta);
        out[lay.theta_hat()].copy_from_slice(&tt);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("coordinate mismatch: channel {channel} deviates by {deviation:e} at t = {t}")]
pub struct AlgebraMismatch {
    pub channel: String,
    pub t: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport<T> {
    pub max_deviation: T,
    /// Largest deviation per channel, in layout order.
    pub channel_max: Vec<(String, T)>,
    /// First (channel, time) whose deviation exceeded the tolerance.
    pub first_divergent: Option<(String, T)>,
    pub tolerance: T,
}

impl<T: Real> OracleReport<T> {
    pub fn check(&self) -> Result<(), AlgebraMismatch> {
        match &self.first_divergent {
            None => Ok(()),
            Some((channel, t)) => Err(AlgebraMismatch {
                channel: channel.clone(),
                t: t.to_f64_lossy(),
                deviation: self.max_deviation.to_f64_lossy(),
            }),
        }
    }
}

/// Channel names for the transformed layout.
pub fn transformed_channel_names(lay: &Layout) -> Vec<String> {
    let dims = lay.dims();
    let mut names = Vec::with_capacity(lay.len());
    names.extend((1..=dims.p).map(|i| format!("rho{i}")));
    names.extend((1..=dims.s).map(|i| format!("w{i}")));
    names.extend((1..=dims.n).map(|i| format!("z{i}")));
    names.push("e".into());
    names.extend((1..=dims.d).map(|i| format!("eta{i}")));
    names.extend((1..=dims.q).map(|i| format!("theta_tilde{i}")));
    for i in 1..dims.d {
        names.extend((1..=dims.q).map(|j| format!("X{i}_{j}")));
    }
    names
}

/// Integrates the raw loop (with `raw_regulator`) and the transformed loop
/// (with `regulator`) from the same initial condition, maps every raw
/// sample through `θ̃ = θ̂ - θ`, `η = ξ - M(X)θ̃`, and reports the largest
/// pointwise deviation.
///
/// Passing a deliberately altered `raw_regulator` turns this into a
/// mutation test.
#[allow(clippy::too_many_arguments)]
pub fn cross_coordinate_oracle<T: Real, P: PlantModel<T> + ?Sized, I: Immersion<T> + ?Sized>(
    plant: &P,
    imm: &I,
    regulator: &Regulator<T>,
    raw_regulator: &Regulator<T>,
    raw_x0: &[T],
    horizon: T,
    h: T,
    tolerance: T,
) -> Result<OracleReport<T>, IntegrationError<T>> {
    let raw = ClosedLoop::new(plant, imm, raw_regulator, Feedback::Stabilizer);
    let tl = TransformedLoop::new(plant, imm, regulator);
    let lay = tl.layout();
    let raw_traj = simulate(raw.field(), raw_x0, T::zero(), horizon, h, Recorder::every(1))?;
    let tr_x0 = tl.from_raw(raw_x0);
    let tr_traj = simulate(tl.field(), &tr_x0, T::zero(), horizon, h, Recorder::every(1))?;

    let names = transformed_channel_names(&lay);
    let mut channel_max = vec![T::zero(); names.len()];
    let mut first = None;
    let q = lay.dims().q;
    for ((t, rs), ts) in raw_traj.times().iter().zip(raw_traj.states()).zip(tr_traj.states()) {
        let mapped = {
            let theta = imm.theta(&rs[lay.rho()]);
            let th_hat = &rs[lay.theta_hat()];
            let tt: Vec<T> = th_hat.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
            let x = Matrix::from_fn(lay.dims().d - 1, q, |i, j| rs[lay.x().start + i * q + j]);
            let eta = eta_from(&rs[lay.xi()], &x, &tt);
            let mut m = rs.clone();
            m[lay.xi()].copy_from_slice(&eta);
            m[lay.theta_hat()].copy_from_slice(&tt);
            m
        };
        for (i, (&a, &b)) in mapped.iter().zip(ts).enumerate() {
            let dev = (a - b).abs();
            let dev = if dev.is_nan() { T::infinity() } else { dev };
            if dev > channel_max[i] {
                channel_max[i] = dev;
            }
            if first.is_none() && dev > tolerance {
                first = Some((names[i].clone(), *t));
            }
        }
    }
    let max_deviation = channel_max.iter().copied().fold(T::zero(), T::max);
    Ok(OracleReport {
        max_deviation,
        channel_max: names.into_iter().zip(channel_max).collect(),
        first_divergent: first,
        tolerance,
    })
}
