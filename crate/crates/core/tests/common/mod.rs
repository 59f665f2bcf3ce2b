//! Reference implementations used only as test oracles.
//!
//! None of these touch nalgebra's decompositions: they are textbook
//! algorithms written against plain `Vec<Vec<f64>>`-style indexing so a bug in
//! the library's SVD path cannot hide behind a shared helper.

#![allow(dead_code)]

use pnml_core::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Product of two Gaussian factors, so the rank is at most `rank`.
pub fn low_rank_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    let a = gaussian_matrix(rng, rows, rank);
    let b = gaussian_matrix(rng, rank, cols);
    a * b
}

pub fn stack_row(x: &DMatrix<f64>, row: &DVector<f64>) -> DMatrix<f64> {
    let (n, m) = x.shape();
    DMatrix::from_fn(n + 1, m, |i, j| if i < n { x[(i, j)] } else { row[j] })
}

pub fn stack_label(y: &DVector<f64>, label: f64) -> DVector<f64> {
    DVector::from_fn(y.len() + 1, |i, _| if i < y.len() { y[i] } else { label })
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as columns.
pub fn jacobi_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = sym.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| sym[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r][order[c]]);
    (values, vectors)
}

/// Gauss–Jordan inverse with partial pivoting; `None` for a (numerically) singular input.
pub fn gauss_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..2 * n).map(|j| if j < n { m[(i, j)] } else if j - n == i { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some(DMatrix::from_fn(n, n, |i, j| a[i][n + j]))
}

/// Modified Gram–Schmidt on the rows of `x`; returns an orthonormal row-space
/// basis as the columns of an `M × r` matrix.
pub fn row_space_basis(x: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let scale = (0..x.nrows()).map(|i| x.row(i).norm()).fold(0.0_f64, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..x.nrows() {
        let mut v: DVector<f64> = x.row(i).transpose();
        // Two passes keep orthogonality at working precision.
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > tol * scale.max(1e-300) {
            basis.push(v / norm);
        }
    }
    let m = x.ncols();
    DMatrix::from_fn(m, basis.len(), |r, c| basis[c][r])
}

/// `‖x − B Bᵀ x‖²` for an orthonormal basis `B`.
pub fn projection_residual_sq(basis: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let p = basis * (basis.transpose() * x);
    (x - p).norm_squared()
}

/// Pseudo-inverse from the Gram-matrix eigendecomposition `XᵀX = Q diag(μ) Qᵀ`:
/// `X⁺ = Q diag(1/μ) Qᵀ Xᵀ` over `μ > tol · μ_max`.
pub fn eigen_pinv(x: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let gram = x.transpose() * x;
    let (mu, q) = jacobi_eigen(&gram);
    let top = mu.first().copied().unwrap_or(0.0).max(0.0);
    let m = x.ncols();
    let mut inv = DMatrix::zeros(m, m);
    for (k, &value) in mu.iter().enumerate() {
        if value > tol * top && value > 0.0 {
            let col = q.column(k);
            inv += col * col.transpose() / value;
        }
    }
    inv * x.transpose()
}

/// `Xᵀ(XXᵀ)⁻¹Y` for a full-row-rank `X`, through the elimination inverse.
pub fn batch_mn(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let gram = x * x.transpose();
    let inv = gauss_inverse(&gram).expect("full row rank");
    x.transpose() * (inv * y)
}

/// `(XᵀX + λI)⁻¹XᵀY` through the elimination inverse.
pub fn batch_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let m = x.ncols();
    let a = x.transpose() * x + DMatrix::identity(m, m) * lambda;
    gauss_inverse(&a).expect("ridge system is positive definite") * (x.transpose() * y)
}

/// Stacked ridge norm as a function of `λ` via one Jacobi eigendecomposition,
/// so a dense scan costs `O(M)` per point.
pub struct RidgePath {
    mu: Vec<f64>,
    proj: Vec<f64>,
}

impl RidgePath {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let (mu, q) = jacobi_eigen(&(x.transpose() * x));
        let b = q.transpose() * (x.transpose() * y);
        Self {
            mu: mu.into_iter().map(|v| v.max(0.0)).collect(),
            proj: b.iter().copied().collect(),
        }
    }

    pub fn norm_sq(&self, lambda: f64) -> f64 {
        self.mu
            .iter()
            .zip(&self.proj)
            .map(|(m, b)| {
                let c = b / (m + lambda);
                c * c
            })
            .sum()
    }
}

/// Smallest grid `λ` at which the stacked ridge norm drops to the target,
/// scanning `points` log-spaced values on `[lo, hi]`.
pub fn dense_lambda_scan(path: &RidgePath, target_norm_sq: f64, lo: f64, hi: f64, points: usize) -> Option<(f64, f64)> {
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (points - 1) as f64;
    let mut prev = lo;
    for k in 0..points {
        let lambda = (a + k as f64 * step).exp();
        if path.norm_sq(lambda) <= target_norm_sq {
            return Some((prev, lambda));
        }
        prev = lambda;
    }
    None
}

/// Composite Simpson rule on `[a, b]` with `panels` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels % 2 == 0);
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}
