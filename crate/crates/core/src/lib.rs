//! Predictive normalized maximum likelihood (pNML) for linear regression.
//!
//! The learner assigns to every candidate test label the probability that a
//! "genie" would assign after refitting on the training set plus that label,
//! restricted to predictors whose norm does not exceed the minimum-norm
//! solution. The log of the normalization factor is the regret, a per-sample
//! confidence score that stays informative when the model has more parameters
//! than training samples.
//!
//! The crate is `no_std` and only needs `alloc`:
//!
//! - [`linalg`]: SVD, Moore–Penrose pseudo-inverse, row-space projections, ridge solves.
//! - [`regression`]: minimum-norm and ridge fits and their single-sample recursions.
//! - [`pnml`]: the constrained genie, the normalization integral and the analytic bounds.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod linalg;
pub mod pnml;
pub mod regression;

pub use error::{Error, Result};
pub use linalg::{PseudoInverse, SvdFactors};
pub use nalgebra::{DMatrix, DVector};
pub use pnml::{
    genie_density, genie_density_upper_bound, gaussian_density, lambda_lower_bound, pnml_evaluate, regret_upper_bound,
    solve_lambda_for_label, under_param_regret, Branch, GenieFit, PnmlEvaluation, QuadConfig,
    TestGeometry,
};
pub use regression::{
    mn_norm_after_update, mn_solve, mn_update, recursive_pinv_update, ridge_genie_fit, DesignMatrix,
    MnModel, RidgeGenie,
};
