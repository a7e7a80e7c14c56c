use thiserror::Error;

use crate::scalar::{all_finite, Real};

/// Failure of a fixed-step integration: some stage produced a non-finite
/// derivative. Carries the time and state at the start of the failing step.
#[derive(Debug, Clone, Error)]
#[error("non-finite derivative in step starting at t = {t}")]
pub struct IntegrationError<T: Real> {
    pub t: T,
    pub state: Vec<T>,
    /// Samples recorded before the failure (empty when not produced by `simulate`).
    pub partial: Box<Trajectory<T>>,
}

/// Time-stamped states plus named scalar channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    times: Vec<T>,
    states: Vec<Vec<T>>,
    names: Vec<String>,
    channels: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(channel_names: Vec<String>) -> Self {
        let channels = vec![Vec::new(); channel_names.len()];
        Self {
            times: Vec::new(),
            states: Vec::new(),
            names: channel_names,
            channels,
        }
    }

    /// Appends a sample. Panics if time does not increase or the channel
    /// count is wrong; both are programming errors.
    pub fn push(&mut self, t: T, state: Option<Vec<T>>, channel_values: &[T]) {
        if let Some(&last) = self.times.last() {
            assert!(t > last, "trajectory times must be strictly increasing");
        }
        assert_eq!(channel_values.len(), self.names.len(), "channel count mismatch");
        self.times.push(t);
        if let Some(s) = state {
            self.states.push(s);
        }
        for (c, &v) in self.channels.iter_mut().zip(channel_values) {
            c.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Recorded states; empty if the recorder dropped them.
    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    pub fn channel_names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Option<&[T]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.channels[i].as_slice())
    }

    pub fn channel_at(&self, index: usize) -> &[T] {
        &self.channels[index]
    }

    /// One state component across all samples.
    pub fn component(&self, index: usize) -> Vec<T> {
        self.states.iter().map(|s| s[index]).collect()
    }

    pub fn last_state(&self) -> Option<&[T]> {
        self.states.last().map(|s| s.as_slice())
    }

    /// Checks strictly increasing times and one value per sample in every
    /// channel (and in the state list when states are kept).
    pub fn is_consistent(&self) -> bool {
        let increasing = self.times.windows(2).all(|w| w[1] > w[0]);
        let channels_ok = self.channels.iter().all(|c| c.len() == self.times.len());
        let states_ok = self.states.is_empty() || self.states.len() == self.times.len();
        increasing && channels_ok && states_ok
    }
}

type Probe<'a, T> = Box<dyn FnMut(T, &[T]) -> Vec<T> + 'a>;
type Observer<'a, T> = Box<dyn FnMut(T, &[T]) + 'a>;

/// Controls what `simulate` stores: every `stride`-th step (and always the
/// first and last point), optionally the full state, plus named channels
/// computed by a probe. An observer, if set, sees every step.
pub struct Recorder<'a, T> {
    stride: usize,
    keep_states: bool,
    names: Vec<String>,
    probe: Option<Probe<'a, T>>,
    observer: Option<Observer<'a, T>>,
}

impl<'a, T: Real> Recorder<'a, T> {
    pub fn every(stride: usize) -> Self {
        Self {
            stride: stride.max(1),
            keep_states: true,
            names: Vec::new(),
            probe: None,
            observer: None,
        }
    }

    pub fn without_states(mut self) -> Self {
        self.keep_states = false;
        self
    }

    pub fn with_channels(mut self, names: Vec<String>, probe: impl FnMut(T, &[T]) -> Vec<T> + 'a) -> Self {
        self.names = names;
        self.probe = Some(Box::new(probe));
        self
    }

    /// Called with `(t, x)` at the initial point and after every step,
    /// independent of the stride. For streaming metrics that would be too
    /// large to store.
    pub fn with_observer(mut self, observer: impl FnMut(T, &[T]) + 'a) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    fn observe(&mut self, t: T, x: &[T]) {
        if let Some(o) = self.observer.as_mut() {
            o(t, x);
        }
    }

    fn record(&mut self, traj: &mut Trajectory<T>, t: T, x: &[T]) {
        let values = match self.probe.as_mut() {
            Some(p) => p(t, x),
            None => Vec::new(),
        };
        let state = self.keep_states.then(|| x.to_vec());
        traj.push(t, state, &values);
    }
}

/// Classical fourth-order Runge-Kutta stepper with preallocated stage
/// buffers. The field writes `dx/dt` into its third argument.
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![T::zero(); dim],
            k2: vec![T::zero(); dim],
            k3: vec![T::zero(); dim],
            k4: vec![T::zero(); dim],
            tmp: vec![T::zero(); dim],
        }
    }

    /// Advances `x` in place by one step of length `h`. On failure `x` is
    /// left untouched and `false` is returned.
    pub fn step(&mut self, field: &mut impl FnMut(T, &[T], &mut [T]), t: T, x: &mut [T], h: T) -> bool {
        let half = h * T::lit(0.5);
        field(t, x, &mut self.k1);
        if !all_finite(&self.k1) {
            return false;
        }
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        field(t + half, &self.tmp, &mut self.k2);
        if !all_finite(&self.k2) {
            return false;
        }
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        field(t + half, &self.tmp, &mut self.k3);
        if !all_finite(&self.k3) {
            return false;
        }
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field(t + h, &self.tmp, &mut self.k4);
        if !all_finite(&self.k4) {
            return false;
        }
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + sixth * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        if !all_finite(&self.tmp) {
            return false;
        }
        x.copy_from_slice(&self.tmp);
        true
    }
}

/// One RK4 step from `(t, x)`.
pub fn rk4_step<T: Real>(
    mut field: impl FnMut(T, &[T], &mut [T]),
    x: &[T],
    t: T,
    h: T,
) -> Result<Vec<T>, IntegrationError<T>> {
    assert!(h > T::zero(), "rk4_step: step must be positive");
    let mut out = x.to_vec();
    if Rk4::new(x.len()).step(&mut field, t, &mut out, h) {
        Ok(out)
    } else {
        Err(IntegrationError {
            t,
            state: x.to_vec(),
            partial: Box::new(Trajectory::new(Vec::new())),
        })
    }
}

/// Fixed-step RK4 integration from `t0` to `t1`.
///
/// Step `i` starts at `t0 + i·h` (no accumulated time drift); a final
/// shorter step lands exactly on `t1`.
pub fn simulate<T: Real>(
    mut field: impl FnMut(T, &[T], &mut [T]),
    x0: &[T],
    t0: T,
    t1: T,
    h: T,
    mut recorder: Recorder<'_, T>,
) -> Result<Trajectory<T>, IntegrationError<T>> {
    assert!(h > T::zero(), "simulate: step must be positive");
    assert!(t1 > t0, "simulate: horizon must be positive");
    let ratio = (t1 - t0) / h;
    let nearest = ratio.round();
    // Treat ratios within a few ulps of an integer as exact multiples.
    let (full_steps, partial) = if (ratio - nearest).abs() <= T::lit(1e-9) * nearest.max(T::one()) {
        (nearest.to_usize().unwrap_or(0), false)
    } else {
        (ratio.floor().to_usize().unwrap_or(0), true)
    };
    let total = full_steps + usize::from(partial);

    let mut traj = Trajectory::new(recorder.names.clone());
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    recorder.observe(t0, &x);
    recorder.record(&mut traj, t0, &x);
    for i in 0..total {
        let t = t0 + T::from_count(i) * h;
        let (step, t_next) = if i + 1 == total {
            (t1 - t, t1)
        } else {
            (h, t0 + T::from_count(i + 1) * h)
        };
        if !rk.step(&mut field, t, &mut x, step) {
            return Err(IntegrationError {
                t,
                state: x,
                partial: Box::new(traj),
            });
        }
        recorder.observe(t_next, &x);
        if (i + 1) % recorder.stride == 0 || i + 1 == total {
            recorder.record(&mut traj, t_next, &x);
        }
    }
    Ok(traj)
}
