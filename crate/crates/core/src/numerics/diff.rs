use crate::scalar::{norm, Real};

/// Default relative step for central differences.
pub const DEFAULT_H_REL: f64 = 1e-5;

/// Central-difference derivative of `map` at `x` along `dir`.
///
/// The absolute step is `h_rel * max(1, |x|)`; the result approximates
/// `D map(x) · dir` with O(h²) truncation error.
pub fn directional_derivative<T: Real>(
    mut map: impl FnMut(&[T]) -> Vec<T>,
    x: &[T],
    dir: &[T],
    h_rel: T,
) -> Vec<T> {
    assert_eq!(x.len(), dir.len(), "directional_derivative: x and dir differ in length");
    let h = h_rel * norm(x).max(T::one());
    let plus: Vec<T> = x.iter().zip(dir).map(|(&xi, &di)| xi + h * di).collect();
    let minus: Vec<T> = x.iter().zip(dir).map(|(&xi, &di)| xi - h * di).collect();
    let fp = map(&plus);
    let fm = map(&minus);
    assert_eq!(fp.len(), fm.len(), "directional_derivative: map output length changed");
    let two_h = h + h;
    fp.iter().zip(&fm).map(|(&a, &b)| (a - b) / two_h).collect()
}
