//! The pNML learner over the hypothesis set `{θ : ‖θ‖ ≤ ‖θ_MN‖}`.
//!
//! For a test vector `x` the genie refits on the training set plus each
//! candidate label `y`. Its density `p_θ̂(y|x)` integrates to the normalization
//! factor `K ≥ 1`, the pNML assignment is `p_θ̂(y|x)/K` and the regret is
//! `log K`, identical for every label.

mod bounds;
mod genie;
mod quadrature;

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;

pub use bounds::{genie_density_upper_bound, lambda_lower_bound, regret_upper_bound};
pub use genie::{solve_lambda_for_label, GenieFit};
pub use quadrature::QuadConfig;

use crate::error::{Error, Result};
use crate::linalg;
use crate::regression::{DesignMatrix, MnModel};
use genie::GenieProblem;

/// `N(residual; 0, σ²)` density.
pub fn gaussian_density(residual: f64, sigma_sq: f64) -> f64 {
    libm::exp(-residual * residual / (2.0 * sigma_sq)) / libm::sqrt(2.0 * PI * sigma_sq)
}

/// Quantities of a test vector relative to a fitted design.
#[derive(Debug, Clone, PartialEq)]
pub struct TestGeometry {
    /// `Uᵀx` in the row-space basis.
    pub coords: DVector<f64>,
    /// `‖x_⊥‖²`, clamped to zero inside the row space.
    pub orth_sq: f64,
    /// `xᵀX⁺X⁺ᵀx`.
    pub x_quad: f64,
    /// `xᵀθ_MN`.
    pub mn_prediction: f64,
}

impl TestGeometry {
    pub fn new(design: &DesignMatrix, mn: &MnModel, x: &DVector<f64>) -> Result<Self> {
        let (_, orth_sq) = design.orth_component(x)?;
        linalg::check_finite_vec("test vector", x)?;
        Ok(Self {
            coords: design.svd().feature_coords(x),
            orth_sq,
            x_quad: linalg::row_space_quad(design.pinv(), x)?,
            mn_prediction: mn.predict(x),
        })
    }
}

/// How the normalization factor was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Numerical integration of the constrained genie density.
    Quadrature,
    /// `x` lies in the training row space: `K = 1 + xᵀX⁺X⁺ᵀx` in closed form.
    RowSpace,
    /// `θ_MN = 0`, so the hypothesis set is `{0}` and `K = 1`.
    ZeroNorm,
}

/// pNML result for one test vector.
#[derive(Debug, Clone)]
pub struct PnmlEvaluation {
    pub k_factor: f64,
    pub regret: f64,
    pub regret_bound: f64,
    pub k0: f64,
    pub x_orth_sq: f64,
    pub x_quad: f64,
    pub mn_prediction: f64,
    /// `(y, q_pNML(y|x))` on a symmetric uniform grid around `mn_prediction`.
    pub density_grid: Vec<(f64, f64)>,
    pub sigma_sq: f64,
    pub branch: Branch,
}

impl PnmlEvaluation {
    /// Linear interpolation of the stored density; zero outside the grid.
    pub fn density_at(&self, y: f64) -> f64 {
        let grid = &self.density_grid;
        if grid.len() < 2 || y < grid[0].0 || y > grid[grid.len() - 1].0 {
            return 0.0;
        }
        let h = grid[1].0 - grid[0].0;
        let pos = (y - grid[0].0) / h;
        let i = (libm::floor(pos) as usize).min(grid.len() - 2);
        let t = pos - i as f64;
        grid[i].1 * (1.0 - t) + grid[i + 1].1 * t
    }

    /// Trapezoid mass of the stored density grid.
    pub fn grid_mass(&self) -> f64 {
        self.density_grid
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum()
    }
}

/// Under-parameterized normalization `K0 = 1 + (1/N) Σ (xᵀu_i)²/h_i²` over the
/// retained singular directions, and `log K0`.
pub fn under_param_regret(design: &DesignMatrix, x: &DVector<f64>) -> Result<(f64, f64)> {
    linalg::check_len("test vector", x, design.n_features())?;
    let svd = design.svd();
    let coords = svd.feature_coords(x);
    let n = design.n_samples() as f64;
    let sum: f64 = coords
        .iter()
        .zip(svd.eigenvalues())
        .map(|(c, h_sq)| c * c / h_sq)
        .sum();
    let k0 = 1.0 + sum / n;
    Ok((k0, libm::log(k0)))
}

/// Genie density `p_θ̂(y|x)` for one label, on whichever branch applies to `x`.
pub fn genie_density(design: &DesignMatrix, mn: &MnModel, x: &DVector<f64>, y: f64, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma_sq",
            value: sigma_sq,
        });
    }
    let geometry = TestGeometry::new(design, mn, x)?;
    genie_density_at(design, mn, &geometry, y, sigma_sq, QuadConfig::default().lambda_tol, &mut None)
}

fn genie_density_at(
    design: &DesignMatrix,
    mn: &MnModel,
    geometry: &TestGeometry,
    y: f64,
    sigma_sq: f64,
    lambda_tol: f64,
    warm_start: &mut Option<f64>,
) -> Result<f64> {
    if mn.norm_sq() == 0.0 {
        return Ok(gaussian_density(y, sigma_sq));
    }
    if geometry.orth_sq == 0.0 {
        let residual = (y - geometry.mn_prediction) / (1.0 + geometry.x_quad);
        return Ok(gaussian_density(residual, sigma_sq));
    }
    let solution = GenieProblem::new(design, mn, geometry).solve_near(y, lambda_tol, *warm_start)?;
    if solution.lambda > 0.0 {
        *warm_start = Some(solution.lambda);
    }
    Ok(gaussian_density(solution.at.residual, sigma_sq))
}

fn gaussian_grid(center: f64, sd: f64, cfg: &QuadConfig) -> Vec<(f64, f64)> {
    let half = (cfg.initial_points - 1) / 2;
    let h = cfg.initial_width_scale * sd / half as f64;
    (0..=2 * half)
        .map(|i| {
            let y = center + (i as f64 - half as f64) * h;
            (y, gaussian_density(y - center, sd * sd))
        })
        .collect()
}

/// Evaluates the pNML learner at `x`: normalization factor, regret, the
/// analytic regret bound and the normalized density on a label grid.
pub fn pnml_evaluate(
    design: &DesignMatrix,
    mn: &MnModel,
    x: &DVector<f64>,
    sigma_sq: f64,
    cfg: &QuadConfig,
) -> Result<PnmlEvaluation> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma_sq",
            value: sigma_sq,
        });
    }
    cfg.validate()?;
    let geometry = TestGeometry::new(design, mn, x)?;
    let k0 = 1.0 + geometry.x_quad;
    let sigma = libm::sqrt(sigma_sq);
    let regret_bound = bounds::regret_upper_bound_at(geometry.x_quad, geometry.orth_sq, mn.theta_quad(), sigma_sq)?;

    let (branch, k_factor, density_grid) = if mn.norm_sq() == 0.0 {
        (Branch::ZeroNorm, 1.0, gaussian_grid(0.0, sigma, cfg))
    } else if geometry.orth_sq == 0.0 && !cfg.force_quadrature {
        (Branch::RowSpace, k0, gaussian_grid(geometry.mn_prediction, sigma * k0, cfg))
    } else {
        // Consecutive nodes have nearby roots, so each solve starts from the last one.
        let mut warm_start = None;
        let integral = quadrature::integrate_symmetric(
            geometry.mn_prediction,
            cfg.initial_width_scale * sigma * k0,
            cfg,
            |y| genie_density_at(design, mn, &geometry, y, sigma_sq, cfg.lambda_tol, &mut warm_start),
        )?;
        let k = integral.value;
        let grid = integral.nodes().map(|(y, p)| (y, p / k)).collect();
        let branch = if geometry.orth_sq == 0.0 {
            Branch::RowSpace
        } else {
            Branch::Quadrature
        };
        (branch, k, grid)
    };

    Ok(PnmlEvaluation {
        k_factor,
        regret: libm::log(k_factor),
        regret_bound,
        k0,
        x_orth_sq: geometry.orth_sq,
        x_quad: geometry.x_quad,
        mn_prediction: if mn.norm_sq() == 0.0 { 0.0 } else { geometry.mn_prediction },
        density_grid,
        sigma_sq,
        branch,
    })
}
