//! Rank-aware dense linear algebra built on a one-sided Jacobi SVD.
//!
//! All matrices follow the regression convention: a design matrix `X` is
//! `N × M` with one sample per row. Singular directions are split into a
//! feature-space basis (`M × r`, the eigenvectors of `XᵀX`) and a sample-space
//! basis (`N × r`), so that `X = V · diag(s) · Uᵀ` with `U` the feature basis.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative cutoff below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// `‖x_⊥‖²` values below this fraction of `‖x‖²` are clamped to zero.
pub const ORTH_CLAMP_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 80;
// Column pairs whose cosine is below this are treated as orthogonal.
const JACOBI_ORTH_TOL: f64 = 1e-15;
// A factorization that does not reproduce its input to this relative level is rejected.
const SVD_RECONSTRUCTION_TOL: f64 = 1e-10;

/// Thin SVD of a design matrix restricted to its numeric rank.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    feature_basis: DMatrix<f64>,
    singular_values: DVector<f64>,
    sample_basis: DMatrix<f64>,
    n_samples: usize,
    n_features: usize,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Raw singular values `s_i`, strictly positive and descending.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    /// Orthonormal `M × r` basis of the row space (columns `u_i`).
    pub fn feature_basis(&self) -> &DMatrix<f64> {
        &self.feature_basis
    }

    /// Orthonormal `N × r` basis of the column space.
    pub fn sample_basis(&self) -> &DMatrix<f64> {
        &self.sample_basis
    }

    /// Normalized eigenvalues `h_i² = s_i² / N` of `XᵀX / N`.
    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_samples as f64;
        self.singular_values.iter().map(move |s| s * s / n)
    }

    /// Coordinates `Uᵀx` of a feature vector in the row-space basis.
    pub fn feature_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.feature_basis.tr_mul(x)
    }

    /// Coordinates `Vᵀy` of a sample-space vector.
    pub fn sample_coords(&self, y: &DVector<f64>) -> DVector<f64> {
        self.sample_basis.tr_mul(y)
    }

    /// `V · diag(s) · Uᵀ`, the rank-`r` reconstruction of `X`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.sample_basis.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.feature_basis.transpose()
    }
}

/// Moore–Penrose pseudo-inverse `X⁺` (`M × N`).
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    matrix: DMatrix<f64>,
    source_rank: usize,
}

impl PseudoInverse {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn source_rank(&self) -> usize {
        self.source_rank
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub(crate) fn from_parts(matrix: DMatrix<f64>, source_rank: usize) -> Self {
        Self {
            matrix,
            source_rank,
        }
    }
}

fn check_finite(what: &'static str, x: &DMatrix<f64>) -> Result<()> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !x[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    what,
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_finite_vec(what: &'static str, v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|a| !a.is_finite()) {
        Some(row) => Err(Error::NonFinite { what, row, col: 0 }),
        None => Ok(()),
    }
}

pub(crate) fn check_len(what: &'static str, v: &DVector<f64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Thin SVD of `x` (`N × M`) keeping singular values above `rank_tol · s_max`.
///
/// An all-zero matrix yields rank 0 with empty bases.
pub fn svd_decompose(x: &DMatrix<f64>, rank_tol: f64) -> Result<SvdFactors> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidArgument("rank tolerance must lie in (0, 1)"));
    }
    let (n, m) = x.shape();
    if n == 0 || m == 0 {
        return Err(Error::Empty("design matrix"));
    }
    check_finite("design matrix", x)?;

    // Orthogonalize the shorter side: columns of X when N ≥ M, of Xᵀ otherwise.
    let tall = n >= m;
    let work = if tall { x.clone() } else { x.transpose() };
    let (w, rotations) = one_sided_jacobi(work)?;
    let q = w.ncols();

    let norms: Vec<f64> = (0..q).map(|k| w.column(k).norm()).collect();
    let s_max = norms.iter().copied().fold(0.0_f64, f64::max);
    let mut order: Vec<usize> = (0..q).filter(|&k| s_max > 0.0 && norms[k] > rank_tol * s_max).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let r = order.len();
    let mut feature_basis = DMatrix::zeros(m, r);
    let mut sample_basis = DMatrix::zeros(n, r);
    let mut singular_values = DVector::zeros(r);
    for (j, &k) in order.iter().enumerate() {
        singular_values[j] = norms[k];
        let left = w.column(k) / norms[k];
        let right = rotations.column(k);
        if tall {
            sample_basis.set_column(j, &left);
            feature_basis.set_column(j, &right);
        } else {
            feature_basis.set_column(j, &left);
            sample_basis.set_column(j, &right);
        }
    }

    let factors = SvdFactors {
        feature_basis,
        singular_values,
        sample_basis,
        n_samples: n,
        n_features: m,
    };
    let scale = x.norm();
    if scale > 0.0 && (factors.reconstruct() - x).norm() > SVD_RECONSTRUCTION_TOL * scale {
        return Err(Error::SvdNoConvergence);
    }
    Ok(factors)
}

/// Hestenes iteration: rotates column pairs of `a` (`p × q`) until all are
/// mutually orthogonal, returning the rotated matrix `W = A·J` and `J`.
/// Then `A = W Jᵀ`, the column norms of `W` are the singular values and its
/// normalized columns are the left singular vectors.
fn one_sided_jacobi(mut a: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (p, q) = a.shape();
    let mut j = DMatrix::<f64>::identity(q, q);
    let tiny = f64::MIN_POSITIVE / f64::EPSILON;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for k in i + 1..q {
                let (alpha, beta, gamma) = {
                    let ci = a.column(i);
                    let ck = a.column(k);
                    (ci.norm_squared(), ck.norm_squared(), ci.dot(&ck))
                };
                if alpha <= tiny || beta <= tiny || libm::fabs(gamma) <= JACOBI_ORTH_TOL * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_columns(a.as_mut_slice(), p, i, k, c, s);
                rotate_columns(j.as_mut_slice(), q, i, k, c, s);
            }
        }
        if !rotated {
            return Ok((a, j));
        }
    }
    Err(Error::SvdNoConvergence)
}

/// `(col_i, col_k) ← (c·col_i − s·col_k, s·col_i + c·col_k)` on column-major storage.
fn rotate_columns(data: &mut [f64], rows: usize, i: usize, k: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(k * rows);
    let ci = &mut head[i * rows..(i + 1) * rows];
    let ck = &mut tail[..rows];
    for (x, y) in ci.iter_mut().zip(ck.iter_mut()) {
        let (xi, yk) = (*x, *y);
        *x = c * xi - s * yk;
        *y = s * xi + c * yk;
    }
}

/// `X⁺ = U · diag(1/s) · Vᵀ` over the retained singular triplets.
pub fn pseudo_inverse(svd: &SvdFactors) -> PseudoInverse {
    let mut scaled = svd.feature_basis.clone();
    for (j, s) in svd.singular_values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    PseudoInverse {
        matrix: scaled * svd.sample_basis.transpose(),
        source_rank: svd.rank(),
    }
}

/// `‖x_⊥‖² = xᵀ(I − X⁺X)x`, evaluated as the squared norm of `x − X⁺(Xx)`.
pub fn orth_residual_sq(pinv: &PseudoInverse, x_mat: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    check_len("test vector", x, x_mat.ncols())?;
    if pinv.matrix.shape() != (x_mat.ncols(), x_mat.nrows()) {
        return Err(Error::Dimension {
            what: "pseudo-inverse rows",
            expected: x_mat.ncols(),
            found: pinv.matrix.nrows(),
        });
    }
    let projected = &pinv.matrix * (x_mat * x);
    Ok(clamp_orth(x.norm_squared(), (x - projected).norm_squared()))
}

pub(crate) fn clamp_orth(x_norm_sq: f64, orth_sq: f64) -> f64 {
    if orth_sq <= ORTH_CLAMP_TOL * x_norm_sq {
        0.0
    } else {
        orth_sq
    }
}

/// `xᵀX⁺X⁺ᵀx` as the squared norm of `X⁺ᵀx`.
pub fn row_space_quad(pinv: &PseudoInverse, x: &DVector<f64>) -> Result<f64> {
    check_len("test vector", x, pinv.matrix.nrows())?;
    Ok(pinv.matrix.tr_mul(x).norm_squared())
}

/// Ridge minimizer of `‖Y − Xθ‖² + λ‖θ‖²`.
pub fn ridge_solve(x_mat: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_len("label vector", y, x_mat.nrows())?;
    let svd = svd_decompose(x_mat, DEFAULT_RANK_TOL)?;
    ridge_solve_factored(&svd, y, lambda)
}

/// Ridge solve reusing cached factors: `θ = Σ u_i s_i/(s_i²+λ) (v_iᵀY)`.
pub fn ridge_solve_factored(svd: &SvdFactors, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositive {
            name: "lambda",
            value: lambda,
        });
    }
    check_len("label vector", y, svd.n_samples)?;
    let mut coords = svd.sample_coords(y);
    for (c, s) in coords.iter_mut().zip(svd.singular_values.iter()) {
        *c *= s / (s * s + lambda);
    }
    Ok(&svd.feature_basis * coords)
}
