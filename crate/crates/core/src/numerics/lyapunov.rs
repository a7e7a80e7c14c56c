use super::{Matrix, NumericsError};
use crate::scalar::Real;

/// Solves `P F + Fᵀ P = -I` for a Hurwitz `F`.
///
/// The equation is vectorized into an n²×n² dense system and solved
/// directly, followed by one step of iterative refinement. The result is
/// symmetrized before returning.
pub fn solve_lyapunov<T: Real>(f: &Matrix<T>) -> Result<Matrix<T>, NumericsError> {
    if !f.is_square() {
        return Err(NumericsError::DimensionMismatch {
            op: "solve_lyapunov",
            left: f.shape(),
            right: f.shape(),
        });
    }
    for ev in f.eigenvalues()? {
        if ev.re >= T::zero() {
            return Err(NumericsError::NotHurwitz {
                re: ev.re.to_f64_lossy(),
                im: ev.im.to_f64_lossy(),
            });
        }
    }
    let n = f.rows();
    let mut l = Matrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                l[(row, i * n + k)] += f[(k, j)];
                l[(row, k * n + j)] += f[(k, i)];
            }
        }
    }
    let rhs: Vec<T> = (0..n * n)
        .map(|r| if r / n == r % n { -T::one() } else { T::zero() })
        .collect();
    let mut x = l.solve(&rhs)?;
    let lx = l.mul_vec(&x)?;
    let resid: Vec<T> = rhs.iter().zip(&lx).map(|(&b, &y)| b - y).collect();
    let corr = l.solve(&resid)?;
    for (xi, ci) in x.iter_mut().zip(corr) {
        *xi += ci;
    }
    Ok(Matrix::new(n, n, x)?.symmetrized())
}

/// Largest entry of `P F + Fᵀ P + I`.
pub fn lyapunov_residual<T: Real>(p: &Matrix<T>, f: &Matrix<T>) -> Result<T, NumericsError> {
    let pf = p.matmul(f)?;
    let ftp = f.transpose().matmul(p)?;
    let r = pf.try_add(&ftp)?.try_add(&Matrix::identity(f.rows()))?;
    Ok(r.max_abs())
}
