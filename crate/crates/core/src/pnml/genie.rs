//! The norm-constrained genie: for a candidate label `y`, the ridge fit on the
//! stacked design whose norm equals `‖θ_MN‖`.
//!
//! Everything runs in the rank-`r` coordinates of the cached SVD. With
//! `c = Uᵀx`, `z = VᵀY` and `w_i = 1/(s_i² + λ)`:
//!
//! ```text
//! a_i   = s_i z_i w_i                     (ridge fit on N samples)
//! r_N   = y − Σ c_i a_i
//! D     = λ(1 + Σ c_i² w_i) + ‖x_⊥‖²
//! e     = r_N λ / D                       (genie residual y − xᵀθ̂)
//! θ̂     = Σ u_i (a_i + c_i w_i e) + x_⊥ r_N / D
//! ```
//!
//! which stays finite at `λ = 0`, where it reduces to the minimum-norm
//! interpolant of the `N + 1` samples.

use nalgebra::DVector;

use super::{gaussian_density, TestGeometry};
use crate::error::{Error, Result};
use crate::regression::{DesignMatrix, MnModel};

/// Below this the genie is a perfect fit to working precision.
const LAMBDA_FLOOR: f64 = 1e-72;
/// Largest change of `log λ` per iteration.
const MAX_LOG_STEP: f64 = 4.0;
const MAX_ITERATIONS: u32 = 200;

/// The constrained genie for one candidate label.
#[derive(Debug, Clone, PartialEq)]
pub struct GenieFit {
    /// Regularization meeting the norm constraint; `+∞` when `θ_MN = 0`.
    pub lambda_y: f64,
    pub theta_hat: DVector<f64>,
    /// `p_θ̂(y|x)` under the Gaussian noise model.
    pub density: f64,
    /// `‖θ̂‖ − ‖θ_MN‖`.
    pub norm_gap: f64,
    /// `y − xᵀθ̂`.
    pub residual: f64,
    /// `y − xᵀθ_N` for the ridge fit on the training set at `lambda_y`.
    pub ridge_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluated {
    pub norm_sq: f64,
    pub residual: f64,
    pub ridge_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LambdaSolution {
    pub lambda: f64,
    pub at: Evaluated,
}

/// Borrowed view of everything the scalar genie recursion needs.
pub(crate) struct GenieProblem<'a> {
    singular_values: &'a DVector<f64>,
    label_coords: &'a DVector<f64>,
    coords: &'a DVector<f64>,
    orth_sq: f64,
    target_norm_sq: f64,
    mn_prediction: f64,
}

impl<'a> GenieProblem<'a> {
    pub fn new(design: &'a DesignMatrix, mn: &MnModel, geometry: &'a TestGeometry) -> Self {
        Self {
            singular_values: design.svd().singular_values(),
            label_coords: design.label_coords(),
            coords: &geometry.coords,
            orth_sq: geometry.orth_sq,
            target_norm_sq: mn.norm_sq(),
            mn_prediction: geometry.mn_prediction,
        }
    }

    pub fn evaluate(&self, lambda: f64, y: f64) -> Evaluated {
        let mut prediction = 0.0;
        let mut leverage = 0.0;
        for ((s, z), c) in self
            .singular_values
            .iter()
            .zip(self.label_coords.iter())
            .zip(self.coords.iter())
        {
            let w = 1.0 / (s * s + lambda);
            prediction += c * s * z * w;
            leverage += c * c * w;
        }
        let ridge_residual = y - prediction;
        let denom = lambda * (1.0 + leverage) + self.orth_sq;
        let residual = ridge_residual * lambda / denom;

        let mut norm_sq = 0.0;
        for ((s, z), c) in self
            .singular_values
            .iter()
            .zip(self.label_coords.iter())
            .zip(self.coords.iter())
        {
            let w = 1.0 / (s * s + lambda);
            let coef = s * z * w + c * w * residual;
            norm_sq += coef * coef;
        }
        let orth_coef = ridge_residual / denom;
        norm_sq += self.orth_sq * orth_coef * orth_coef;

        Evaluated {
            norm_sq,
            residual,
            ridge_residual,
        }
    }

    /// `evaluate` plus `d‖θ̂‖²/dλ`.
    fn evaluate_with_slope(&self, lambda: f64, y: f64) -> (Evaluated, f64) {
        let (mut prediction, mut d_prediction) = (0.0, 0.0);
        let (mut leverage, mut d_leverage) = (0.0, 0.0);
        for ((s, z), c) in self
            .singular_values
            .iter()
            .zip(self.label_coords.iter())
            .zip(self.coords.iter())
        {
            let w = 1.0 / (s * s + lambda);
            prediction += c * s * z * w;
            d_prediction -= c * s * z * w * w;
            leverage += c * c * w;
            d_leverage -= c * c * w * w;
        }
        let ridge_residual = y - prediction;
        let d_ridge_residual = -d_prediction;
        let denom = lambda * (1.0 + leverage) + self.orth_sq;
        let d_denom = 1.0 + leverage + lambda * d_leverage;
        let residual = ridge_residual * lambda / denom;
        let d_residual = (d_ridge_residual * lambda + ridge_residual) / denom - residual * d_denom / denom;

        let (mut norm_sq, mut d_norm_sq) = (0.0, 0.0);
        for ((s, z), c) in self
            .singular_values
            .iter()
            .zip(self.label_coords.iter())
            .zip(self.coords.iter())
        {
            let w = 1.0 / (s * s + lambda);
            let coef = s * z * w + c * w * residual;
            let d_coef = -w * coef + c * w * d_residual;
            norm_sq += coef * coef;
            d_norm_sq += 2.0 * coef * d_coef;
        }
        let orth_coef = ridge_residual / denom;
        let d_orth_coef = (d_ridge_residual - orth_coef * d_denom) / denom;
        norm_sq += self.orth_sq * orth_coef * orth_coef;
        d_norm_sq += 2.0 * self.orth_sq * orth_coef * d_orth_coef;

        let at = Evaluated {
            norm_sq,
            residual,
            ridge_residual,
        };
        (at, d_norm_sq)
    }

    /// Finds `λ_y` by safeguarded Newton iteration on `u = log λ` against
    /// `log ‖θ̂‖² − log ‖θ_MN‖²`, which is monotone and nearly linear in `u`.
    /// Iterates stay inside the tightest known bracket, falling back to
    /// bisection when a step would leave it, and stop once a step is below `tol`.
    ///
    /// The relative sensitivity of a ridge norm to `λ` is at most one, so a
    /// relative `λ` accuracy of `tol` bounds the relative norm gap by `tol`.
    pub fn solve(&self, y: f64, tol: f64) -> Result<LambdaSolution> {
        self.solve_near(y, tol, None)
    }

    /// As [`Self::solve`], starting from `guess` when it is a positive finite
    /// value, such as the root for a nearby label.
    pub fn solve_near(&self, y: f64, tol: f64, guess: Option<f64>) -> Result<LambdaSolution> {
        let at_zero = self.evaluate(0.0, y);
        if y == self.mn_prediction || at_zero.norm_sq <= self.target_norm_sq {
            return Ok(LambdaSolution {
                lambda: 0.0,
                at: at_zero,
            });
        }

        let log_target = libm::log(self.target_norm_sq);
        let log_floor = libm::log(LAMBDA_FLOOR);
        let mut u = match guess {
            Some(g) if g > 0.0 && g.is_finite() => libm::log(g),
            _ => 0.0,
        };
        let (mut u_lo, mut u_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..MAX_ITERATIONS {
            let lambda = libm::exp(u);
            let (at, slope) = self.evaluate_with_slope(lambda, y);
            let g = libm::log(at.norm_sq.max(f64::MIN_POSITIVE)) - log_target;
            if g == 0.0 {
                return Ok(LambdaSolution { lambda, at });
            }
            if g > 0.0 {
                u_lo = u;
            } else {
                u_hi = u;
            }
            let dg = lambda * slope / at.norm_sq;
            let mut step = if dg < 0.0 { -g / dg } else { f64::NAN };
            if !step.is_finite() {
                step = if g > 0.0 { MAX_LOG_STEP } else { -MAX_LOG_STEP };
            }
            step = step.clamp(-MAX_LOG_STEP, MAX_LOG_STEP);
            let mut next = u + step;
            if !(next > u_lo && next < u_hi) {
                // Bisect when both ends are known, otherwise jump towards the open side.
                next = if u_lo.is_finite() && u_hi.is_finite() {
                    0.5 * (u_lo + u_hi)
                } else if u_hi.is_finite() {
                    u_hi - MAX_LOG_STEP
                } else {
                    u_lo + MAX_LOG_STEP
                };
            }
            if libm::fabs(next - u) <= tol {
                let lambda = libm::exp(next);
                return Ok(LambdaSolution {
                    lambda,
                    at: self.evaluate(lambda, y),
                });
            }
            if next < log_floor {
                // Indistinguishable from the perfect fit at working precision.
                let lambda = LAMBDA_FLOOR;
                return Ok(LambdaSolution {
                    lambda,
                    at: self.evaluate(lambda, y),
                });
            }
            u = next;
        }
        let at = self.evaluate(libm::exp(u), y);
        Err(Error::BracketFailure {
            norm_gap: libm::sqrt(at.norm_sq) - libm::sqrt(self.target_norm_sq),
        })
    }

    /// Full parameter vector for a solved `λ`.
    fn theta_hat(&self, design: &DesignMatrix, x: &DVector<f64>, solution: &LambdaSolution) -> DVector<f64> {
        let lambda = solution.lambda;
        let svd = design.svd();
        let mut leverage = 0.0;
        let mut coefs = DVector::zeros(self.coords.len());
        for (i, ((s, z), c)) in self
            .singular_values
            .iter()
            .zip(self.label_coords.iter())
            .zip(self.coords.iter())
            .enumerate()
        {
            let w = 1.0 / (s * s + lambda);
            leverage += c * c * w;
            coefs[i] = s * z * w + c * w * solution.at.residual;
        }
        let mut theta = svd.feature_basis() * coefs;
        if self.orth_sq > 0.0 {
            let denom = lambda * (1.0 + leverage) + self.orth_sq;
            let perp = x - svd.feature_basis() * self.coords;
            theta += perp * (solution.at.ridge_residual / denom);
        }
        theta
    }
}

/// Solves the norm constraint `‖θ̂(x, y)‖ = ‖θ_MN‖` for the regularization `λ_y`.
///
/// At `y = xᵀθ_MN` the genie fits perfectly with `λ_y = 0`; any other label
/// needs `λ_y > 0`. A zero minimum-norm solution leaves only `θ = 0` in the
/// hypothesis set, reported as `λ_y = +∞`.
pub fn solve_lambda_for_label(
    design: &DesignMatrix,
    mn: &MnModel,
    x: &DVector<f64>,
    y: f64,
    sigma_sq: f64,
    tol: f64,
) -> Result<GenieFit> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma_sq",
            value: sigma_sq,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::NonPositive {
            name: "tol",
            value: tol,
        });
    }
    let geometry = TestGeometry::new(design, mn, x)?;
    if mn.norm_sq() == 0.0 {
        return Ok(GenieFit {
            lambda_y: f64::INFINITY,
            theta_hat: DVector::zeros(design.n_features()),
            density: gaussian_density(y, sigma_sq),
            norm_gap: 0.0,
            residual: y,
            ridge_residual: y,
        });
    }
    if geometry.orth_sq == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let problem = GenieProblem::new(design, mn, &geometry);
    let solution = problem.solve(y, tol)?;
    let theta_hat = problem.theta_hat(design, x, &solution);
    Ok(GenieFit {
        lambda_y: solution.lambda,
        norm_gap: theta_hat.norm() - libm::sqrt(mn.norm_sq()),
        theta_hat,
        density: gaussian_density(solution.at.residual, sigma_sq),
        residual: solution.at.residual,
        ridge_residual: solution.at.ridge_residual,
    })
}
