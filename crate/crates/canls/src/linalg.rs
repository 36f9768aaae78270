//! Small dense complex linear algebra: inner products, Cholesky
//! factorization, and regularized least squares.
//!
//! Everything here targets tall-skinny systems (tens of rows, at most a
//! handful of columns), so simple `O(k³)` kernels with no pivoting are both
//! adequate and deterministic. Positive-definite Gram systems are solved via
//! an in-place Cholesky factorization; least squares falls back to a
//! gradually escalating ridge when a Gram matrix is numerically
//! semidefinite (e.g. duplicated steering columns).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::C64;

/// Conjugated inner product `aᴴ b`.
#[inline]
pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

/// Squared Euclidean norm `‖a‖²`.
#[inline]
pub fn norm_sq(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// In-place Cholesky factorization of a Hermitian positive-definite matrix
/// stored row-major in `a` (`k × k`). On success the lower triangle holds
/// `L` with `A = L Lᴴ`; the strict upper triangle is left untouched.
/// Returns `false` if a pivot is not strictly positive.
pub fn cholesky_in_place(a: &mut [C64], k: usize) -> bool {
    debug_assert!(a.len() >= k * k);
    for j in 0..k {
        let mut d = a[j * k + j].re;
        for p in 0..j {
            d -= a[j * k + p].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * k + j] = C64::new(d, 0.0);
        for i in (j + 1)..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p].conj();
            }
            a[i * k + j] = s / d;
        }
    }
    true
}

/// Solves `L y = rhs` in place (`rhs` becomes `y`), with `L` the lower
/// triangle produced by [`cholesky_in_place`].
pub fn forward_solve_in_place(l: &[C64], k: usize, rhs: &mut [C64]) {
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= l[i * k + p] * rhs[p];
        }
        rhs[i] = s / l[i * k + i].re;
    }
}

/// Solves `Lᴴ x = y` in place (`y` becomes `x`), completing a
/// positive-definite solve after [`forward_solve_in_place`].
pub fn adjoint_solve_in_place(l: &[C64], k: usize, y: &mut [C64]) {
    for i in (0..k).rev() {
        let mut s = y[i];
        for p in (i + 1)..k {
            s -= l[p * k + i].conj() * y[p];
        }
        y[i] = s / l[i * k + i].re;
    }
}

/// Least squares fit of `g` onto the span of `cols`: returns the
/// coefficient vector and the residual `g - A x`.
///
/// The Gram system is solved by Cholesky; if the columns are numerically
/// dependent the diagonal is loaded with an escalating relative ridge until
/// the factorization succeeds. The residual is insensitive to how the ridge
/// splits coefficients across (near-)duplicate columns.
pub fn least_squares(cols: &[&[C64]], g: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
    let k = cols.len();
    if k == 0 {
        return Ok((Vec::new(), g.to_vec()));
    }
    let n = g.len();
    for c in cols {
        if c.len() != n {
            return Err(Error::InvalidParameter("column length mismatch"));
        }
    }

    let mut gram = vec![C64::new(0.0, 0.0); k * k];
    let mut rhs = vec![C64::new(0.0, 0.0); k];
    for i in 0..k {
        for j in i..k {
            let v = vdot(cols[i], cols[j]);
            gram[i * k + j] = v;
            gram[j * k + i] = v.conj();
        }
        rhs[i] = vdot(cols[i], g);
    }
    let trace_mean: f64 = (0..k).map(|i| gram[i * k + i].re).sum::<f64>() / k as f64;

    let mut factor = gram.clone();
    let mut coef = rhs.clone();
    let mut ridge = 0.0_f64;
    let mut attempt = 0;
    loop {
        if cholesky_in_place(&mut factor, k) {
            forward_solve_in_place(&factor, k, &mut coef);
            adjoint_solve_in_place(&factor, k, &mut coef);
            break;
        }
        attempt += 1;
        if attempt > 6 {
            return Err(Error::SingularSystem);
        }
        ridge = if ridge == 0.0 {
            1e-12 * trace_mean.max(f64::MIN_POSITIVE)
        } else {
            ridge * 100.0
        };
        factor.copy_from_slice(&gram);
        for i in 0..k {
            factor[i * k + i] += C64::new(ridge, 0.0);
        }
        coef.copy_from_slice(&rhs);
    }

    let mut residual = g.to_vec();
    for (i, c) in cols.iter().enumerate() {
        for (r, v) in residual.iter_mut().zip(c.iter()) {
            *r -= coef[i] * v;
        }
    }
    Ok((coef, residual))
}
