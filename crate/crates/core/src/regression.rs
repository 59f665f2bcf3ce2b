//! Minimum-norm and ridge least squares with single-sample recursions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    self, check_finite_vec, check_len, clamp_orth, PseudoInverse, SvdFactors, DEFAULT_RANK_TOL,
};
use crate::pnml::gaussian_density;

/// Relative scale used for "perfect fit" comparisons: `1e-8 · (1 + ‖Y‖)`.
pub const PERFECT_FIT_TOL: f64 = 1e-8;

/// Training pair `(X, Y)` with its SVD and pseudo-inverse cached at construction.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    svd: SvdFactors,
    pinv: PseudoInverse,
    label_coords: DVector<f64>,
}

impl DesignMatrix {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        Self::with_rank_tol(features, targets, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(features: DMatrix<f64>, targets: DVector<f64>, rank_tol: f64) -> Result<Self> {
        check_len("label vector", &targets, features.nrows())?;
        check_finite_vec("label vector", &targets)?;
        let svd = linalg::svd_decompose(&features, rank_tol)?;
        let pinv = linalg::pseudo_inverse(&svd);
        let label_coords = svd.sample_coords(&targets);
        Ok(Self {
            features,
            targets,
            svd,
            pinv,
            label_coords,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn svd(&self) -> &SvdFactors {
        &self.svd
    }

    pub fn pinv(&self) -> &PseudoInverse {
        &self.pinv
    }

    /// `VᵀY`, the labels in the column-space basis.
    pub fn label_coords(&self) -> &DVector<f64> {
        &self.label_coords
    }

    pub fn perfect_fit_tol(&self) -> f64 {
        PERFECT_FIT_TOL * (1.0 + self.targets.norm())
    }

    /// The `(N+1)`-row design with `(x, y)` appended, refactored from scratch.
    pub fn append(&self, x: &DVector<f64>, y: f64) -> Result<Self> {
        check_len("test vector", x, self.n_features())?;
        let n = self.n_samples();
        let features = self.features.clone().insert_row(n, 0.0);
        let mut features = features;
        features.row_mut(n).copy_from(&x.transpose());
        let targets = self.targets.clone().push(y);
        Self::new(features, targets)
    }

    /// `x − X⁺Xx` and its clamped squared norm.
    pub fn orth_component(&self, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        check_len("test vector", x, self.n_features())?;
        let perp = x - self.pinv.matrix() * (&self.features * x);
        let orth_sq = clamp_orth(x.norm_squared(), perp.norm_squared());
        Ok((perp, orth_sq))
    }
}

/// Minimum-norm least-squares fit `θ_MN = X⁺Y` with the quadratic forms the bounds use.
#[derive(Debug, Clone, PartialEq)]
pub struct MnModel {
    theta: DVector<f64>,
    norm_sq: f64,
    theta_quad: f64,
}

impl MnModel {
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// `‖θ_MN‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `θ_MNᵀ X⁺X⁺ᵀ θ_MN`.
    pub fn theta_quad(&self) -> f64 {
        self.theta_quad
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.theta.dot(x)
    }
}

pub fn mn_solve(design: &DesignMatrix) -> MnModel {
    let theta = design.pinv().matrix() * design.targets();
    let theta_quad = design.pinv().matrix().tr_mul(&theta).norm_squared();
    MnModel {
        norm_sq: theta.norm_squared(),
        theta,
        theta_quad,
    }
}

/// Appends `(x, y)` through `θ_{N+1} = θ_MN + c⁺(y − xᵀθ_MN)` with `c⁺ = x_⊥/‖x_⊥‖²`.
///
/// The returned `theta_quad` refers to the `(N+1)`-row design. Expanding the
/// stacked pseudo-inverse and using `X⁺ᵀx_⊥ = 0` gives
/// `θᵀX⁺X⁺ᵀθ − 2r·θᵀX⁺X⁺ᵀx/‖x_⊥‖² + r²(1 + xᵀX⁺X⁺ᵀx)/‖x_⊥‖⁴`.
/// Test vectors inside the row space are rejected; refit the stacked design instead.
pub fn mn_update(design: &DesignMatrix, model: &MnModel, x: &DVector<f64>, y: f64) -> Result<MnModel> {
    let (perp, orth_sq) = design.orth_component(x)?;
    if orth_sq == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let residual = y - model.predict(x);
    let theta = &model.theta + perp * (residual / orth_sq);
    let pinv = design.pinv().matrix();
    let x_image = pinv.tr_mul(x);
    let theta_image = pinv.tr_mul(&model.theta);
    let gain = residual / orth_sq;
    let theta_quad = model.theta_quad - 2.0 * gain * theta_image.dot(&x_image)
        + gain * gain * (1.0 + x_image.norm_squared());
    Ok(MnModel {
        norm_sq: theta.norm_squared(),
        theta,
        theta_quad: theta_quad.max(0.0),
    })
}

/// `‖θ_{N+1}‖² = ‖θ_MN‖² + (y − xᵀθ_MN)²/‖x_⊥‖²`.
///
/// With `x_⊥ = 0` the norm is unchanged for a label the row space reproduces and
/// unbounded otherwise.
pub fn mn_norm_after_update(design: &DesignMatrix, model: &MnModel, x: &DVector<f64>, y: f64) -> Result<f64> {
    let (_, orth_sq) = design.orth_component(x)?;
    let residual = y - model.predict(x);
    if orth_sq == 0.0 {
        if residual.abs() <= design.perfect_fit_tol() {
            return Ok(model.norm_sq);
        }
        return Err(Error::UnboundedNorm { residual });
    }
    Ok(model.norm_sq + residual * residual / orth_sq)
}

/// Pseudo-inverse of the stacked design, `[X⁺ − c⁺xᵀX⁺, c⁺]`, for `c ≠ 0`.
pub fn recursive_pinv_update(design: &DesignMatrix, x: &DVector<f64>) -> Result<PseudoInverse> {
    let (perp, orth_sq) = design.orth_component(x)?;
    if orth_sq == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let c_plus = perp / orth_sq;
    let pinv = design.pinv().matrix();
    let x_row_pinv = pinv.tr_mul(x).transpose();
    let mut head = pinv - &c_plus * x_row_pinv;
    let n = design.n_samples();
    head = head.insert_column(n, 0.0);
    head.column_mut(n).copy_from(&c_plus);
    Ok(PseudoInverse::from_parts(head, design.rank() + 1))
}

/// Ridge genie on the stacked design, produced by one recursive step from `θ_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeGenie {
    pub theta: DVector<f64>,
    /// `y − xᵀθ_N`, the innovation before the update.
    pub ridge_residual: f64,
    /// `1 + xᵀP_N x`.
    pub gain: f64,
    /// `y − xᵀθ̂ = ridge_residual / gain`.
    pub residual: f64,
}

impl RidgeGenie {
    pub fn density(&self, sigma_sq: f64) -> f64 {
        gaussian_density(self.residual, sigma_sq)
    }
}

/// `θ̂ = θ_N + P_N x (y − xᵀθ_N)/(1 + xᵀP_N x)` with `P_N = (XᵀX + λI)⁻¹` applied
/// through the cached SVD, so no `M × M` matrix is formed.
pub fn ridge_genie_fit(
    design: &DesignMatrix,
    theta_ridge: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    lambda: f64,
) -> Result<RidgeGenie> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositive {
            name: "lambda",
            value: lambda,
        });
    }
    check_len("ridge solution", theta_ridge, design.n_features())?;
    check_len("test vector", x, design.n_features())?;
    let svd = design.svd();
    let coords = svd.feature_coords(x);
    let perp = x - svd.feature_basis() * &coords;
    let orth_sq = clamp_orth(x.norm_squared(), perp.norm_squared());

    let mut scaled = coords.clone();
    let mut quad = 0.0;
    for (c, s) in scaled.iter_mut().zip(svd.singular_values().iter()) {
        let w = 1.0 / (s * s + lambda);
        quad += *c * *c * w;
        *c *= w;
    }
    let p_x = if orth_sq > 0.0 {
        svd.feature_basis() * scaled + perp / lambda
    } else {
        svd.feature_basis() * scaled
    };
    let gain = 1.0 + quad + orth_sq / lambda;
    let ridge_residual = y - theta_ridge.dot(x);
    let theta = theta_ridge + p_x * (ridge_residual / gain);
    Ok(RidgeGenie {
        theta,
        ridge_residual,
        gain,
        residual: ridge_residual / gain,
    })
}
