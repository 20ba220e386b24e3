//! Dense Lyapunov solves, Hurwitz checks and symplectic spectra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Complex, Real};

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<Complex<T>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> T {
    eigenvalues(m).iter().map(|z| z.re).reduce(|a, b| a.max(b)).unwrap_or(T::zero())
}

/// Fails with the offending eigenvalues unless every eigenvalue of `s` has a
/// strictly negative real part.
pub fn ensure_hurwitz<T: Real>(s: &DMatrix<T>) -> Result<()> {
    let bad: Vec<(f64, f64)> = eigenvalues(s)
        .into_iter()
        .filter(|z| !(z.re < T::zero()))
        .map(|z| (to_f64(z.re), to_f64(z.im)))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::NotHurwitz { eigenvalues: bad })
    }
}

/// `S C + C Sᵀ + N`.
pub fn lyapunov_residual<T: Real>(s: &DMatrix<T>, c: &DMatrix<T>, n: &DMatrix<T>) -> DMatrix<T> {
    s * c + c * s.transpose() + n
}

/// Solves `S C + C Sᵀ + N = 0` for Hurwitz `S` through the Kronecker form
/// `(I⊗S + S⊗I) vec C = -vec N`, with one step of iterative refinement.
pub fn lyapunov_steady<T: Real>(s: &DMatrix<T>, n: &DMatrix<T>) -> Result<DMatrix<T>> {
    let dim = s.nrows();
    if s.ncols() != dim || n.shape() != (dim, dim) {
        return Err(Error::InvalidParameter { field: "lyapunov", reason: "dimension mismatch".into() });
    }
    ensure_hurwitz(s)?;
    let k = kronecker_sum(s);
    let lu = k.clone().lu();
    let rhs = -DVector::from_column_slice(n.as_slice());
    let mut x = lu.solve(&rhs).ok_or(Error::Singular("Lyapunov operator"))?;
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let c = DMatrix::from_column_slice(dim, dim, x.as_slice());
    Ok((&c + c.transpose()) * lit::<T>(0.5))
}

fn kronecker_sum<T: Real>(s: &DMatrix<T>) -> DMatrix<T> {
    let d = s.nrows();
    let mut k = DMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for i in 0..d {
            let row = a * d + i;
            for j in 0..d {
                k[(row, a * d + j)] += s[(i, j)];
            }
            for b in 0..d {
                k[(row, b * d + i)] += s[(a, b)];
            }
        }
    }
    k
}

/// Solves `S V + V S† + N = 0` for complex Hurwitz `S`.
pub fn lyapunov_steady_complex<T: Real>(
    s: &DMatrix<Complex<T>>,
    n: &DMatrix<Complex<T>>,
) -> Result<DMatrix<Complex<T>>> {
    let d = s.nrows();
    let bad: Vec<(f64, f64)> = s
        .clone()
        .eigenvalues()
        .ok_or(Error::Singular("complex eigen decomposition"))?
        .iter()
        .filter(|z| !(z.re < T::zero()))
        .map(|z| (to_f64(z.re), to_f64(z.im)))
        .collect();
    if !bad.is_empty() {
        return Err(Error::NotHurwitz { eigenvalues: bad });
    }
    let mut k = DMatrix::<Complex<T>>::zeros(d * d, d * d);
    for a in 0..d {
        for i in 0..d {
            let row = a * d + i;
            for j in 0..d {
                k[(row, a * d + j)] += s[(i, j)];
            }
            for b in 0..d {
                k[(row, b * d + i)] += s[(a, b)].conj();
            }
        }
    }
    let rhs = -DVector::from_column_slice(n.as_slice());
    let x = k.lu().solve(&rhs).ok_or(Error::Singular("complex Lyapunov operator"))?;
    let v = DMatrix::from_column_slice(d, d, x.as_slice());
    Ok((&v + v.adjoint()) * Complex::new(lit::<T>(0.5), T::zero()))
}

/// Block-diagonal symplectic form for `modes` canonical pairs `(q, p)`.
pub fn symplectic_form<T: Real>(modes: usize) -> DMatrix<T> {
    let mut w = DMatrix::zeros(2 * modes, 2 * modes);
    for m in 0..modes {
        w[(2 * m, 2 * m + 1)] = T::one();
        w[(2 * m + 1, 2 * m)] = -T::one();
    }
    w
}

/// Symplectic eigenvalues of a covariance matrix ordered as consecutive
/// canonical pairs, ascending.
///
/// Uses `ν² = eig(-(C^{1/2} Ω C^{1/2})²)`, which keeps everything symmetric.
pub fn symplectic_eigenvalues<T: Real>(c: &DMatrix<T>) -> Result<Vec<T>> {
    let d = c.nrows();
    if !d.is_multiple_of(2) || c.ncols() != d {
        return Err(Error::InvalidParameter { field: "covariance", reason: "must be square of even size".into() });
    }
    let eig = c.clone().symmetric_eigen();
    if let Some(&lmin) = eig.eigenvalues.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
        if !(lmin > T::zero()) {
            return Err(Error::NonPhysical(format!("covariance not positive definite (eigenvalue {:e})", to_f64(lmin))));
        }
    }
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.sqrt()));
    let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    // Singular values of the antisymmetric √C Ω √C come in equal pairs.
    // Going through MᵀM instead would square the dynamic range, and with hot
    // mirrors next to vacuum cavities that loses the small eigenvalues.
    let m = &root * symplectic_form::<T>(d / 2) * &root;
    let mut nu: Vec<T> = m.singular_values().iter().copied().collect();
    nu.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(nu.chunks(2).map(|p| (p[0] + p[1]) * lit(0.5)).collect())
}
