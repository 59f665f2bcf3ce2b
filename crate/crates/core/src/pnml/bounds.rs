//! Closed-form bounds on the constrained genie and on the pNML regret.

use core::f64::consts::PI;

use nalgebra::DVector;

use super::TestGeometry;
use crate::error::{Error, Result};
use crate::regression::{DesignMatrix, MnModel};

/// Gaussian envelope of the genie density with standard deviation
/// `σ · (K0 + ‖x_⊥‖²/λ)`, evaluated at the ridge innovation `y − xᵀθ_N`.
pub fn genie_density_upper_bound(
    k0: f64,
    x_orth_sq: f64,
    lambda: f64,
    residual: f64,
    sigma_sq: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositive {
            name: "lambda",
            value: lambda,
        });
    }
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma_sq",
            value: sigma_sq,
        });
    }
    if !(k0 >= 1.0) {
        return Err(Error::InvalidArgument("k0 must be at least 1"));
    }
    let scale = k0 + x_orth_sq / lambda;
    let exponent = -residual * residual / (2.0 * sigma_sq * scale * scale);
    Ok(libm::exp(exponent) / libm::sqrt(2.0 * PI * sigma_sq))
}

/// Lower bound on `λ_y` from the first-order expansion of the ridge norm.
pub fn lambda_lower_bound(design: &DesignMatrix, mn: &MnModel, x: &DVector<f64>, y: f64) -> Result<f64> {
    let geometry = TestGeometry::new(design, mn, x)?;
    lambda_lower_bound_at(&geometry, mn.theta_quad(), y)
}

pub(crate) fn lambda_lower_bound_at(geometry: &TestGeometry, theta_quad: f64, y: f64) -> Result<f64> {
    if geometry.orth_sq == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let residual = y - geometry.mn_prediction;
    let excess = residual * residual / geometry.orth_sq;
    if excess == 0.0 {
        return Ok(0.0);
    }
    Ok(0.5 * excess / (theta_quad + excess * geometry.x_quad))
}

/// `log[(1 + xᵀX⁺X⁺ᵀx)(1 + 2‖x_⊥‖²) + 3·∛(‖x_⊥‖² θ_MNᵀX⁺X⁺ᵀθ_MN / (πσ²))]`.
pub fn regret_upper_bound(design: &DesignMatrix, mn: &MnModel, x: &DVector<f64>, sigma_sq: f64) -> Result<f64> {
    let geometry = TestGeometry::new(design, mn, x)?;
    regret_upper_bound_at(geometry.x_quad, geometry.orth_sq, mn.theta_quad(), sigma_sq)
}

pub(crate) fn regret_upper_bound_at(x_quad: f64, orth_sq: f64, theta_quad: f64, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::NonPositive {
            name: "sigma_sq",
            value: sigma_sq,
        });
    }
    let leading = (1.0 + x_quad) * (1.0 + 2.0 * orth_sq);
    let spread = 3.0 * libm::cbrt(orth_sq * theta_quad / (PI * sigma_sq));
    Ok(libm::log(leading + spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn envelope_without_orthogonal_part() {
        let sigma_sq: f64 = 0.7;
        let k0 = 1.8;
        let r = 0.9;
        let expected = (-r * r / (2.0 * sigma_sq * k0 * k0)).exp() / (2.0 * PI * sigma_sq).sqrt();
        let got = genie_density_upper_bound(k0, 0.0, 3.0, r, sigma_sq).unwrap();
        assert_relative_eq!(got, expected, epsilon = 1e-15);
    }

    #[test]
    fn envelope_peak_at_zero_residual() {
        let got = genie_density_upper_bound(2.5, 0.4, 0.01, 0.0, 2.0).unwrap();
        assert_relative_eq!(got, 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        assert!(genie_density_upper_bound(2.5, 0.4, 0.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn bound_reduces_to_under_parameterized_regret() {
        let got = regret_upper_bound_at(0.6, 0.0, 12.0, 0.3).unwrap();
        assert_relative_eq!(got, 1.6_f64.ln(), epsilon = 1e-15);
        assert_eq!(regret_upper_bound_at(0.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn lambda_bound_limits() {
        let geometry = TestGeometry {
            coords: DVector::zeros(0),
            orth_sq: 0.3,
            x_quad: 0.8,
            mn_prediction: 1.0,
        };
        assert_eq!(lambda_lower_bound_at(&geometry, 2.0, 1.0).unwrap(), 0.0);
        let far = lambda_lower_bound_at(&geometry, 2.0, 1e9).unwrap();
        assert_relative_eq!(far, 1.0 / (2.0 * 0.8), max_relative = 1e-12);
        let flat = TestGeometry { orth_sq: 0.0, ..geometry };
        assert_eq!(lambda_lower_bound_at(&flat, 2.0, 3.0), Err(Error::DegenerateDirection));
    }
}
