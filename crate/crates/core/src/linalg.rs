//! Dense complex matrix primitives.
//!
//! Everything here is a thin layer over `nalgebra`'s factorizations with the
//! conditioning policy of the crate applied uniformly: any inversion whose
//! 2-norm condition number exceeds [`COND_LIMIT`] is reported as
//! [`Error::SingularInput`] instead of silently producing garbage.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense complex matrix used for every channel, filter and covariance.
pub type CMatrix = DMatrix<C64>;

/// Largest admissible 2-norm condition number for any inversion.
pub const COND_LIMIT: f64 = 1e8;

/// Relative rank tolerance used when extracting null spaces.
pub const NULL_RANK_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Columns `cols` of the `m x m` identity, i.e. `I_{M, a:b}` with zero-based
/// half-open bounds.
pub fn identity_columns(m: usize, cols: Range<usize>) -> CMatrix {
    let n = cols.len();
    CMatrix::from_fn(m, n, |i, j| {
        if i == cols.start + j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

/// Builds a matrix from real entries in row-major order.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    assert_eq!(data.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| C64::new(data[i * cols + j], 0.0))
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(a: &CMatrix, op: &'static str) -> Result<()> {
    if is_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

/// Real part of the trace.
pub fn trace_re(a: &CMatrix) -> f64 {
    a.trace().re
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn scale(a: &CMatrix, s: f64) -> CMatrix {
    a * C64::new(s, 0.0)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let h = hermitian_part(a);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let mut sv: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// 2-norm condition number of a Hermitian positive semidefinite matrix.
pub fn cond_hermitian(a: &CMatrix) -> f64 {
    let ev = hermitian_eigenvalues(a);
    let lo = ev.first().copied().unwrap_or(0.0);
    let hi = ev.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// 2-norm condition number of a general matrix.
pub fn cond_general(a: &CMatrix) -> f64 {
    let sv = singular_values(a);
    let hi = sv.first().copied().unwrap_or(0.0);
    let lo = sv.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn check_cond(cond: f64, op: &'static str) -> Result<()> {
    if cond.is_finite() && cond <= COND_LIMIT {
        Ok(())
    } else {
        Err(Error::SingularInput {
            op,
            cond,
            limit: COND_LIMIT,
        })
    }
}

/// Inverse of a Hermitian positive definite matrix via Cholesky, after the
/// conditioning check.
pub fn inv_hermitian_pd(a: &CMatrix, op: &'static str) -> Result<CMatrix> {
    ensure_finite(a, op)?;
    check_cond(cond_hermitian(a), op)?;
    inv_hermitian_pd_unchecked(a, op)
}

/// Cholesky-based inverse without the conditioning gate. Used for matrices
/// of the form `I + K` with `K` positive semidefinite, which cannot be
/// singular but may legitimately have a large spread at extreme SNR.
pub fn inv_hermitian_pd_unchecked(a: &CMatrix, op: &'static str) -> Result<CMatrix> {
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { op })?;
    Ok(chol.inverse())
}

/// Inverse of a general square matrix with the conditioning check.
pub fn inv_general(a: &CMatrix, op: &'static str) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::dim(op, format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    ensure_finite(a, op)?;
    check_cond(cond_general(a), op)?;
    a.clone().try_inverse().ok_or(Error::SingularInput {
        op,
        cond: f64::INFINITY,
        limit: COND_LIMIT,
    })
}

/// Natural log-determinant of a Hermitian positive definite matrix, computed
/// from its Cholesky factor.
pub fn logdet_hermitian_pd(a: &CMatrix) -> Result<f64> {
    const OP: &str = "core_linalg::logdet_hermitian_pd";
    if !a.is_square() {
        return Err(Error::dim(OP, "matrix is not square"));
    }
    ensure_finite(a, OP)?;
    let asym = (a - a.adjoint()).norm();
    if asym > 1e-8 * (1.0 + a.norm()) {
        return Err(Error::NotPositiveDefinite { op: OP });
    }
    let chol = hermitian_part(a)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { op: OP })?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        // complex Cholesky takes principal square roots, so a negative pivot
        // shows up as an imaginary diagonal entry
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re {
            return Err(Error::NotPositiveDefinite { op: OP });
        }
        acc += d.re.ln();
    }
    Ok(2.0 * acc)
}

/// `I + A^H A` in factored form: its log-determinant and inverse, both read
/// off the triangular factor of the stacked matrix `[I; A]`. Unlike forming
/// the Gram matrix explicitly this stays positive definite when `A` is
/// huge and rank deficient (very high SNR).
#[derive(Debug, Clone)]
pub struct IdentityPlusGram {
    pub logdet: f64,
    pub inverse: CMatrix,
}

pub fn identity_plus_gram(a: &CMatrix, op: &'static str) -> Result<IdentityPlusGram> {
    ensure_finite(a, op)?;
    let d = a.ncols();
    let mut stacked = CMatrix::zeros(d + a.nrows(), d);
    stacked.view_mut((0, 0), (d, d)).copy_from(&identity(d));
    stacked.view_mut((d, 0), (a.nrows(), d)).copy_from(a);
    let r = stacked.qr().r();
    let mut logdet = 0.0;
    for i in 0..d {
        let v = r[(i, i)].norm();
        if !(v > 0.0) {
            return Err(Error::NotPositiveDefinite { op });
        }
        logdet += 2.0 * v.ln();
    }
    let r_inv = r
        .solve_upper_triangular(&identity(d))
        .ok_or(Error::NotPositiveDefinite { op })?;
    Ok(IdentityPlusGram {
        logdet,
        inverse: hermitian_part(&(&r_inv * r_inv.adjoint())),
    })
}

/// `L^-1 B` where `L L^H = S` is the Cholesky factor of a Hermitian positive
/// definite `S`, so that `(L^-1 B)^H (L^-1 B) = B^H S^-1 B`.
pub fn whiten(s: &CMatrix, b: &CMatrix, op: &'static str) -> Result<CMatrix> {
    let chol = hermitian_part(s).cholesky().ok_or(Error::NotPositiveDefinite { op })?;
    chol.l()
        .solve_lower_triangular(b)
        .ok_or(Error::NotPositiveDefinite { op })
}

/// Projector onto the orthogonal complement of span(Z) together with the
/// semi-inverse `Z (Z^H Z)^{-1}`, sharing a single Gram inversion.
#[derive(Debug, Clone)]
pub struct Complement {
    /// `I - Z (Z^H Z)^{-1} Z^H`
    pub perp: CMatrix,
    /// `Z (Z^H Z)^{-1}`
    pub dagger: CMatrix,
}

impl Complement {
    pub fn of(z: &CMatrix) -> Result<Self> {
        const OP: &str = "core_linalg::orth_complement_projector";
        if z.nrows() < z.ncols() || z.ncols() == 0 {
            return Err(Error::dim(
                OP,
                format!("expected a tall matrix, got {}x{}", z.nrows(), z.ncols()),
            ));
        }
        let gram = z.adjoint() * z;
        let gram_inv = inv_hermitian_pd(&gram, OP)?;
        let dagger = z * gram_inv;
        let perp = identity(z.nrows()) - &dagger * z.adjoint();
        Ok(Complement { perp, dagger })
    }
}

/// `Z^⊥ = I - Z (Z^H Z)^{-1} Z^H` for a tall full-column-rank `Z`.
pub fn orth_complement_projector(z: &CMatrix) -> Result<CMatrix> {
    Complement::of(z).map(|c| c.perp)
}

/// `Z^† = Z (Z^H Z)^{-1}` for a tall full-column-rank `Z`.
pub fn semi_inverse(z: &CMatrix) -> Result<CMatrix> {
    Complement::of(z).map(|c| c.dagger)
}

/// Orthonormal basis of the dominant `rank`-dimensional column space of `a`,
/// from a column-pivoted QR. The SVD in `nalgebra` returns accurate singular
/// values but can lose orthogonality of the singular vectors of a
/// rank-deficient square input, so it is only used for rank decisions.
pub fn column_space_basis(a: &CMatrix, rank: usize) -> CMatrix {
    let q = a.clone().col_piv_qr().q();
    q.columns(0, rank).into_owned()
}

/// Orthonormal `rows(A) x k` basis `U` with `U^H A = 0`.
pub fn orthonormal_null_basis(a: &CMatrix, k: usize) -> Result<CMatrix> {
    const OP: &str = "core_linalg::orthonormal_null_basis";
    ensure_finite(a, OP)?;
    let m = a.nrows();
    let sv = singular_values(a);
    let tol = NULL_RANK_TOL * sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > tol && s > 0.0).count();
    let available = m - rank;
    if k > available {
        return Err(Error::RankDeficiency {
            op: OP,
            requested: k,
            available,
        });
    }
    let complement = if rank == 0 {
        identity(m)
    } else {
        let q = column_space_basis(a, rank);
        identity(m) - &q * q.adjoint()
    };
    Ok(column_space_basis(&complement, available).columns(0, k).into_owned())
}

/// Principal angles (radians, ascending) between the `rank`-dimensional
/// dominant column spaces of `a` and `b`. Computed from the sines, which
/// stay accurate for nearly coincident subspaces.
pub fn principal_angles(a: &CMatrix, b: &CMatrix, rank: usize) -> Vec<f64> {
    let qa = column_space_basis(a, rank);
    let qb = column_space_basis(b, rank);
    let residual = &qb - &qa * (qa.adjoint() * &qb);
    let mut angles: Vec<f64> = singular_values(&residual)
        .into_iter()
        .take(rank)
        .map(|s| s.clamp(0.0, 1.0).asin())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    angles
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Matrix of i.i.d. CN(0, 1) entries: real and imaginary parts are
/// independent Normal(0, 1/2).
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(s * re, s * im)
    })
}

/// Random matrix with orthonormal columns (Q factor of a Gaussian draw).
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let g = complex_gaussian(rows, cols, rng);
    g.qr().q().columns(0, cols).into_owned()
}
