use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not reach tolerance {tol:e} on [{a}, {b}] (max depth {depth})")]
    NoConvergence { a: f64, b: f64, tol: f64, depth: usize },
    #[error("integrand returned a non-finite value at s = {0}")]
    NonFinite(f64),
}

const MAX_DEPTH: usize = 50;

/// Adaptive Simpson quadrature of a vector-valued integrand over `[a, b]`.
///
/// Subdivides until the Richardson error estimate of every component is
/// below the local share of `tol`. Works for `b < a` (signed integral).
pub fn adaptive_simpson<T: Real>(
    mut f: impl FnMut(T) -> Vec<T>,
    a: T,
    b: T,
    tol: T,
) -> Result<Vec<T>, QuadratureError> {
    if a == b {
        let dim = f(a).len();
        return Ok(vec![T::zero(); dim]);
    }
    let fa = eval(&mut f, a)?;
    let m = (a + b) * T::lit(0.5);
    let fm = eval(&mut f, m)?;
    let fb = eval(&mut f, b)?;
    let whole = simpson(a, b, &fa, &fm, &fb);
    recurse(&mut f, a, b, &fa, &fm, &fb, &whole, tol, MAX_DEPTH)
}

fn eval<T: Real>(f: &mut impl FnMut(T) -> Vec<T>, s: T) -> Result<Vec<T>, QuadratureError> {
    let v = f(s);
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(QuadratureError::NonFinite(s.to_f64_lossy()))
    }
}

fn simpson<T: Real>(a: T, b: T, fa: &[T], fm: &[T], fb: &[T]) -> Vec<T> {
    let w = (b - a) / T::lit(6.0);
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((&x, &y), &z)| w * (x + T::lit(4.0) * y + z))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Real>(
    f: &mut impl FnMut(T) -> Vec<T>,
    a: T,
    b: T,
    fa: &[T],
    fm: &[T],
    fb: &[T],
    whole: &[T],
    tol: T,
    depth: usize,
) -> Result<Vec<T>, QuadratureError> {
    let half = T::lit(0.5);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let flm = eval(f, lm)?;
    let frm = eval(f, rm)?;
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let fifteen = T::lit(15.0);
    let err = left
        .iter()
        .zip(&right)
        .zip(whole)
        .fold(T::zero(), |acc, ((&l, &r), &w)| acc.max((l + r - w).abs()));
    if err <= fifteen * tol {
        return Ok(left
            .iter()
            .zip(&right)
            .zip(whole)
            .map(|((&l, &r), &w)| l + r + (l + r - w) / fifteen)
            .collect());
    }
    if depth == 0 {
        return Err(QuadratureError::NoConvergence {
            a: a.to_f64_lossy(),
            b: b.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
            depth: MAX_DEPTH,
        });
    }
    let mut l = recurse(f, a, m, fa, &flm, fm, &left, tol * half, depth - 1)?;
    let r = recurse(f, m, b, fm, &frm, fb, &right, tol * half, depth - 1)?;
    for (li, ri) in l.iter_mut().zip(r) {
        *li += ri;
    }
    Ok(l)
}
