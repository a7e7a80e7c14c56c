use thiserror::Error;

use crate::model::{zero_dynamics_field, Immersion, PlantModel};
use crate::numerics::{simulate, IntegrationError, Matrix, NumericsError, Recorder};
use crate::scalar::{distance, norm, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttractorError {
    #[error("zero-dynamics trajectory left the ball of radius {cap} near t = {t}")]
    Unbounded { t: f64, cap: f64 },
    #[error("a seed has length {got}, expected {expected}")]
    SeedLength { expected: usize, got: usize },
    #[error("no seeds given")]
    NoSeeds,
}

/// Post-transient samples of the zero dynamics, stacked as `(w, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaLimitSamples<T> {
    pub points: Vec<Vec<T>>,
    /// Componentwise bounding box of the samples.
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

/// Integrates the zero dynamics from each seed for `t_transient`, then
/// takes `per_seed` evenly spaced samples over the following `t_window`.
#[allow(clippy::too_many_arguments)]
pub fn sample_omega_limit<T: Real, P: PlantModel<T> + ?Sized>(
    plant: &P,
    rho: &[T],
    seeds: &[Vec<T>],
    t_transient: T,
    t_window: T,
    h: T,
    per_seed: usize,
    cap: T,
) -> Result<OmegaLimitSamples<T>, AttractorError> {
    if seeds.is_empty() {
        return Err(AttractorError::NoSeeds);
    }
    let dims = plant.dims();
    let dim = dims.s + dims.n;
    let per_seed = per_seed.max(1);
    let unbounded = |t: T| AttractorError::Unbounded {
        t: t.to_f64_lossy(),
        cap: cap.to_f64_lossy(),
    };
    let mut points = Vec::with_capacity(seeds.len() * per_seed);
    for seed in seeds {
        if seed.len() != dim {
            return Err(AttractorError::SeedLength {
                expected: dim,
                got: seed.len(),
            });
        }
        let check_stride = 100;
        let transient = simulate(zero_dynamics_field(plant, rho), seed, T::zero(), t_transient, h, Recorder::every(check_stride))
            .map_err(|e: IntegrationError<T>| unbounded(e.t))?;
        for (t, s) in transient.times().iter().zip(transient.states()) {
            if norm(s) > cap {
                return Err(unbounded(*t));
            }
        }
        let start = transient.last_state().expect("final point recorded").to_vec();
        let steps = (t_window / h).round().to_usize().unwrap_or(1).max(1);
        let stride = (steps / per_seed).max(1);
        let window = simulate(
            zero_dynamics_field(plant, rho),
            &start,
            t_transient,
            t_transient + t_window,
            h,
            Recorder::every(stride),
        )
        .map_err(|e| unbounded(e.t))?;
        for s in window.states().iter().skip(1).take(per_seed) {
            if norm(s) > cap {
                return Err(unbounded(t_transient + t_window));
            }
            points.push(s.clone());
        }
    }
    let mut lower = vec![T::infinity(); dim];
    let mut upper = vec![T::neg_infinity(); dim];
    for p in &points {
        for i in 0..dim {
            lower[i] = lower[i].min(p[i]);
            upper[i] = upper[i].max(p[i]);
        }
    }
    Ok(OmegaLimitSamples { points, lower, upper })
}

impl<T: Real> OmegaLimitSamples<T> {
    /// Hausdorff distance in the max norm between the two bounding boxes,
    /// which is the largest shift of any face.
    pub fn box_distance(&self, other: &Self) -> T {
        self.lower
            .iter()
            .zip(&other.lower)
            .chain(self.upper.iter().zip(&other.upper))
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Symmetric Hausdorff distance between two finite point clouds.
pub fn hausdorff<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> T {
    let directed = |x: &[Vec<T>], y: &[Vec<T>]| {
        x.iter()
            .map(|p| y.iter().map(|q| distance(p, q)).fold(T::infinity(), T::min))
            .fold(T::zero(), T::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Zero-dynamics trajectory together with the filter state driven along it.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRun<T> {
    pub times: Vec<T>,
    /// Stacked `(w, z)`.
    pub wz: Vec<Vec<T>>,
    /// Filter state, approximating `σ(w, z)` once the pre-roll has decayed.
    pub x: Vec<Matrix<T>>,
}

/// Drives `Ẋ = FX + GΩ(τ₁)` along the zero dynamics, starting from `X = 0`
/// at `wz0`. After `pre_roll` the initial condition has been forgotten up to
/// `e^{-α·pre_roll}` and `X` tracks the steady-state map; the following
/// `window` is recorded every `stride` steps.
#[allow(clippy::too_many_arguments)]
pub fn sigma_map<T: Real, P: PlantModel<T> + ?Sized, I: Immersion<T> + ?Sized>(
    plant: &P,
    rho: &[T],
    f: &Matrix<T>,
    g: &Matrix<T>,
    imm: &I,
    wz0: &[T],
    pre_roll: T,
    window: T,
    h: T,
    stride: usize,
) -> Result<SigmaRun<T>, IntegrationError<T>> {
    let dims = imm.dims();
    let (d, q) = (dims.d, dims.q);
    let nwz = wz0.len();
    let mut zd = zero_dynamics_field(plant, rho);
    let mut omega = Matrix::zeros(d, q);
    let field = move |t: T, x: &[T], dx: &mut [T]| {
        let (wz, xs) = x.split_at(nwz);
        let (dwz, dxs) = dx.split_at_mut(nwz);
        zd(t, wz, dwz);
        let tau1 = imm.tau(rho, &wz[..dims.s], &wz[dims.s..])[0];
        imm.omega(tau1, &mut omega);
        for i in 0..d - 1 {
            for j in 0..q {
                let mut acc = T::zero();
                for l in 0..d - 1 {
                    acc += f[(i, l)] * xs[l * q + j];
                }
                for l in 0..d {
                    acc += g[(i, l)] * omega[(l, j)];
                }
                dxs[i * q + j] = acc;
            }
        }
    };
    let mut x0 = wz0.to_vec();
    x0.extend(std::iter::repeat_n(T::zero(), (d - 1) * q));
    let mut field = field;
    let start = if pre_roll > T::zero() {
        let pre = simulate(&mut field, &x0, T::zero(), pre_roll, h, Recorder::every(usize::MAX))?;
        pre.last_state().expect("final point recorded").to_vec()
    } else {
        x0
    };
    let traj = simulate(&mut field, &start, pre_roll, pre_roll + window, h, Recorder::every(stride))?;
    let mut run = SigmaRun {
        times: traj.times().to_vec(),
        wz: Vec::with_capacity(traj.len()),
        x: Vec::with_capacity(traj.len()),
    };
    for s in traj.states() {
        run.wz.push(s[..nwz].to_vec());
        run.x.push(Matrix::from_fn(d - 1, q, |i, j| s[nwz + i * q + j]));
    }
    Ok(run)
}

/// Regressor `γ = β(σ, τ₁)` along a [`SigmaRun`].
pub fn regressor_samples<T: Real, I: Immersion<T> + ?Sized>(run: &SigmaRun<T>, rho: &[T], imm: &I) -> Vec<Vec<T>> {
    let s = imm.dims().s;
    run.wz
        .iter()
        .zip(&run.x)
        .map(|(wz, x)| {
            let tau1 = imm.tau(rho, &wz[..s], &wz[s..])[0];
            crate::regulator::beta_map(x, tau1, imm)
        })
        .collect()
}

/// Gram matrix `Σ γγᵀ·dt` of regressor samples taken every `dt`.
pub fn pe_gram<T: Real>(samples: &[Vec<T>], dt: T) -> Matrix<T> {
    let q = samples.first().map_or(0, |s| s.len());
    let mut gram = Matrix::zeros(q, q);
    for g in samples {
        for i in 0..q {
            for j in 0..q {
                gram[(i, j)] += g[i] * g[j] * dt;
            }
        }
    }
    gram
}

/// Smallest eigenvalue of the regressor Gram matrix. Positive iff no fixed
/// nonzero vector is orthogonal to the regressor over the whole window.
pub fn pe_check<T: Real>(samples: &[Vec<T>], dt: T) -> Result<T, NumericsError> {
    let gram = pe_gram(samples, dt);
    if gram.rows() == 0 {
        return Ok(T::zero());
    }
    Ok(gram.symmetric_eigenvalues()?[0])
}
