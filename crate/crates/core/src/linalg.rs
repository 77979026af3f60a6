//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` and stays `no_std`.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute entrywise tolerance used when checking symmetry of inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Band around zero used by the semidefinite / definite tests.
pub const DEFINITENESS_TOL: f64 = 1e-9;

const SCHUR_MAX_ITER: usize = 10_000;

/// `(M + M')/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.transpose()) <= tol
}

/// Largest absolute entry; zero for empty matrices.
pub fn sup_norm(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Smallest eigenvalue of the symmetric part of `m`.
///
/// Returns `+inf` for a 0x0 matrix so that empty blocks pass every
/// definiteness test.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NotSquare("M"));
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

pub fn is_psd(m: &Matrix) -> bool {
    matches!(min_symmetric_eigenvalue(m), Ok(v) if v >= -DEFINITENESS_TOL)
}

pub fn is_pd(m: &Matrix) -> bool {
    matches!(min_symmetric_eigenvalue(m), Ok(v) if v >= DEFINITENESS_TOL)
}

/// Solves `U X = rhs` for symmetric positive definite `U` via Cholesky on the
/// symmetrized matrix. `None` when the factorization fails.
pub fn spd_solve(u: &Matrix, rhs: &Matrix) -> Option<Matrix> {
    let chol = symmetrize(u).cholesky()?;
    Some(chol.solve(rhs))
}

/// Symmetric square root of a PSD matrix; negative eigenvalues (within
/// rounding) are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|v| libm::sqrt(v.max(0.0)));
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::NotSquare("M"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::EigenFailure("schur"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus; zero for an empty matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max))
}

/// Orthonormal basis (as columns) of the null space of `m`.
///
/// Singular values below `rel_tol * max(1, sigma_max)` count as zero.
pub fn null_space(m: &Matrix, rel_tol: f64) -> Matrix {
    let cols = m.ncols();
    if cols == 0 {
        return Matrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return Matrix::identity(cols, cols);
    }
    // Pad with zero rows so the SVD returns a full right basis.
    let padded = if m.nrows() < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * smax.max(1.0);
    let picked: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    let mut basis = Matrix::zeros(cols, picked.len());
    for (j, &i) in picked.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    basis
}

/// Dimension of the symmetric matrix space of order `r`.
pub const fn sym_dim(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Coordinates of a symmetric matrix in the basis `{E_ii} ∪ {E_ij + E_ji : i<j}`,
/// i.e. its upper-triangular entries in row-major order.
pub fn svec(s: &Matrix) -> Vector {
    let r = s.nrows();
    let mut v = Vector::zeros(sym_dim(r));
    let mut idx = 0;
    for i in 0..r {
        for j in i..r {
            v[idx] = s[(i, j)];
            idx += 1;
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &Vector, r: usize) -> Matrix {
    let mut s = Matrix::zeros(r, r);
    let mut idx = 0;
    for i in 0..r {
        for j in i..r {
            s[(i, j)] = v[idx];
            s[(j, i)] = v[idx];
            idx += 1;
        }
    }
    s
}

/// Matrix of the linear map `S ↦ Σ w_i F_i S F_i'` on symmetric `r x r`
/// matrices, in [`svec`] coordinates.
pub fn congruence_operator(terms: &[(f64, &Matrix)], r: usize) -> Matrix {
    let d = sym_dim(r);
    let mut op = Matrix::zeros(d, d);
    let mut col = 0;
    for i in 0..r {
        for j in i..r {
            let mut basis = Matrix::zeros(r, r);
            basis[(i, j)] = 1.0;
            basis[(j, i)] = 1.0;
            let mut image = Matrix::zeros(r, r);
            for &(w, f) in terms {
                image += (f * &basis * f.transpose()) * w;
            }
            op.set_column(col, &svec(&image));
            col += 1;
        }
    }
    op
}

/// Roots of `c[0] x^deg + c[1] x^(deg-1) + ... + c[deg]` from the eigenvalues
/// of the companion matrix. Leading coefficients that are zero relative to the
/// largest one are dropped first.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>> {
    let scale = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let first = coeffs
        .iter()
        .position(|c| c.abs() > 1e-14 * scale)
        .unwrap_or(coeffs.len());
    let c = &coeffs[first..];
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let mut companion = Matrix::zeros(deg, deg);
    for j in 0..deg {
        companion[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    eigenvalues(&companion)
}

/// Horner evaluation of a real polynomial at a real point.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}
