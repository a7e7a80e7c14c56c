//! Plant, exosystem and regulator interconnected into one ODE.
//!
//! State layout: `[ϱ (p), w (s), z (n), e, ξ (d), θ̂ (q), vec(X) ((d-1)q)]`.

use std::ops::Range;

use crate::model::{Immersion, PlantModel, SystemDims};
use crate::numerics::Matrix;
use crate::regulator::{Regulator, RegulatorState};
use crate::scalar::Real;

/// How the auxiliary input `v` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    /// `v = -k e`
    Stabilizer,
    /// `v = c(ϱ, w, z) - ξ₁`, which keeps `e ≡ 0`. Reads the plant's `q`,
    /// so it is an analysis device rather than an implementable controller.
    ZeroDynamics,
}

/// Index ranges of the stacked closed-loop state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    dims: SystemDims,
}

impl Layout {
    pub fn new(dims: SystemDims) -> Self {
        Self { dims }
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn rho(&self) -> Range<usize> {
        0..self.dims.p
    }

    pub fn w(&self) -> Range<usize> {
        let a = self.dims.p;
        a..a + self.dims.s
    }

    pub fn z(&self) -> Range<usize> {
        let a = self.w().end;
        a..a + self.dims.n
    }

    pub fn e(&self) -> usize {
        self.z().end
    }

    /// The whole controller block `[ξ, θ̂, vec(X)]`.
    pub fn controller(&self) -> Range<usize> {
        let a = self.e() + 1;
        a..a + RegulatorState::<f64>::flat_len(self.dims)
    }

    pub fn xi(&self) -> Range<usize> {
        let a = self.controller().start;
        a..a + self.dims.d
    }

    pub fn theta_hat(&self) -> Range<usize> {
        let a = self.xi().end;
        a..a + self.dims.q
    }

    pub fn x(&self) -> Range<usize> {
        let a = self.theta_hat().end;
        a..self.controller().end
    }

    pub fn len(&self) -> usize {
        self.controller().end
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// One name per state entry, in layout order: `rho1.., w1.., z1.., e,
    /// xi1.., theta_hat1.., X1_1..` (filter rows then columns, 1-based).
    pub fn channel_names(&self) -> Vec<String> {
        let d = self.dims;
        let mut names = Vec::with_capacity(self.len());
        names.extend((1..=d.p).map(|i| format!("rho{i}")));
        names.extend((1..=d.s).map(|i| format!("w{i}")));
        names.extend((1..=d.n).map(|i| format!("z{i}")));
        names.push("e".into());
        names.extend((1..=d.d).map(|i| format!("xi{i}")));
        names.extend((1..=d.q).map(|i| format!("theta_hat{i}")));
        for i in 1..d.d {
            names.extend((1..=d.q).map(|j| format!("X{i}_{j}")));
        }
        names
    }

    /// Stacks the pieces into a closed-loop state vector.
    pub fn pack<T: Real>(&self, rho: &[T], w: &[T], z: &[T], e: T, reg: &RegulatorState<T>) -> Vec<T> {
        assert_eq!(rho.len(), self.dims.p, "rho length");
        assert_eq!(w.len(), self.dims.s, "w length");
        assert_eq!(z.len(), self.dims.n, "z length");
        let mut x = Vec::with_capacity(self.len());
        x.extend_from_slice(rho);
        x.extend_from_slice(w);
        x.extend_from_slice(z);
        x.push(e);
        x.extend(reg.to_flat());
        x
    }

    pub fn regulator_state<T: Real>(&self, x: &[T]) -> RegulatorState<T> {
        RegulatorState::from_flat(self.dims, &x[self.controller()]).expect("layout matches regulator state")
    }

    pub fn x_matrix<T: Real>(&self, x: &[T]) -> Matrix<T> {
        let q = self.dims.q;
        let xs = &x[self.x()];
        Matrix::from_fn(self.dims.d - 1, q, |i, j| xs[i * q + j])
    }
}

pub struct ClosedLoop<'a, T, P: ?Sized, I: ?Sized> {
    pub plant: &'a P,
    pub imm: &'a I,
    pub regulator: &'a Regulator<T>,
    pub feedback: Feedback,
}

impl<'a, T: Real, P: PlantModel<T> + ?Sized, I: Immersion<T> + ?Sized> ClosedLoop<'a, T, P, I> {
    pub fn new(plant: &'a P, imm: &'a I, regulator: &'a Regulator<T>, feedback: Feedback) -> Self {
        assert_eq!(plant.dims(), imm.dims(), "plant and immersion disagree on dimensions");
        assert_eq!(regulator.dims(), imm.dims(), "regulator and immersion disagree on dimensions");
        Self {
            plant,
            imm,
            regulator,
            feedback,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.imm.dims())
    }

    fn v(&self, lay: &Layout, x: &[T]) -> T {
        match self.feedback {
            Feedback::Stabilizer => -self.regulator.gains().k() * x[lay.e()],
            Feedback::ZeroDynamics => {
                self.plant.c(&x[lay.rho()], &x[lay.w()], &x[lay.z()]) - x[lay.xi().start]
            }
        }
    }

    /// Control input `u = ξ₁ + v` at a closed-loop state.
    pub fn control(&self, x: &[T]) -> T {
        let lay = self.layout();
        x[lay.xi().start] + self.v(&lay, x)
    }

    /// Vector field of the interconnection, with private scratch buffers.
    pub fn field(&self) -> impl FnMut(T, &[T], &mut [T]) + '_ {
        let lay = self.layout();
        let dims = lay.dims();
        let mut ws = self.regulator.workspace();
        let mut f1 = vec![T::zero(); dims.n];
        let mut sw = vec![T::zero(); dims.s];
        move |_t, x, dx| {
            let rho = &x[lay.rho()];
            let w = &x[lay.w()];
            let z = &x[lay.z()];
            let e = x[lay.e()];
            let v = self.v(&lay, x);
            let u = self
                .regulator
                .derivative_with_v(&x[lay.controller()], v, self.imm, &mut ws, &mut dx[lay.controller()]);

            self.plant.s_rho(rho, w, z, e, &mut dx[lay.rho()]);
            for d in &mut dx[lay.rho()] {
                *d *= e;
            }
            self.plant.s(rho, w, &mut dx[lay.w()]);
            self.plant.s_w(rho, w, z, e, &mut sw);
            for (d, &c) in dx[lay.w()].iter_mut().zip(&sw) {
                *d += c * e;
            }
            self.plant.f0(rho, w, z, &mut dx[lay.z()]);
            self.plant.f1(rho, w, z, e, &mut f1);
            for (d, &c) in dx[lay.z()].iter_mut().zip(&f1) {
                *d += c * e;
            }
            dx[lay.e()] = match self.feedback {
                Feedback::Stabilizer => self.plant.q(rho, w, z, e) + u,
                Feedback::ZeroDynamics => T::zero(),
            };
        }
    }
}
