//! Trapezoid integration of a unimodal density over the real line on a
//! symmetric, progressively widened uniform grid.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Controls for the normalization integral.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConfig {
    /// Points on the first grid (odd, so the center is a node).
    pub initial_points: usize,
    /// Hard cap on grid points; beyond it widening coarsens the spacing.
    pub max_points: usize,
    /// Initial half-width in units of `σ · K0`.
    pub initial_width_scale: f64,
    /// Each outermost panel must carry less than this fraction of `K`.
    pub tail_tol: f64,
    /// Consecutive estimates must agree to this relative tolerance.
    pub rel_tol: f64,
    pub max_widenings: u32,
    /// Relative bracket width at which the `λ_y` bisection stops.
    pub lambda_tol: f64,
    /// Integrate numerically even when a closed form exists.
    pub force_quadrature: bool,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            initial_points: 2049,
            max_points: (1 << 17) + 1,
            initial_width_scale: 10.0,
            tail_tol: 1e-6,
            rel_tol: 1e-4,
            max_widenings: 40,
            lambda_tol: 1e-10,
            force_quadrature: false,
        }
    }
}

impl QuadConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.initial_points < 5 {
            return Err(Error::InvalidArgument("quadrature needs at least 5 initial points"));
        }
        if self.max_points < self.initial_points {
            return Err(Error::InvalidArgument("max_points must be at least initial_points"));
        }
        for (name, value) in [
            ("initial_width_scale", self.initial_width_scale),
            ("tail_tol", self.tail_tol),
            ("rel_tol", self.rel_tol),
            ("lambda_tol", self.lambda_tol),
        ] {
            if !(value > 0.0) {
                return Err(Error::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Integral {
    pub value: f64,
    pub center: f64,
    pub spacing: f64,
    /// Integrand at `center + k·spacing` for `k = -n..=n`.
    pub samples: Vec<f64>,
}

impl Integral {
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = (self.samples.len() / 2) as f64;
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.center + (i as f64 - n) * self.spacing, *v))
    }
}

fn trapezoid(samples: &[f64], spacing: f64) -> f64 {
    let inner: f64 = samples.iter().sum();
    spacing * (inner - 0.5 * (samples[0] + samples[samples.len() - 1]))
}

/// Integrates `f` over ℝ starting from `[center − half_width, center + half_width]`.
///
/// The grid doubles its half-width (keeping the spacing, so old samples are
/// reused) until the point cap is reached, after which the spacing doubles too.
/// It stops once both outermost panels are below `tail_tol · K` and the last two
/// estimates agree to `rel_tol`.
pub(crate) fn integrate_symmetric<F>(center: f64, half_width: f64, cfg: &QuadConfig, mut f: F) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut half = (cfg.initial_points - 1) / 2;
    if half % 2 == 1 {
        half += 1;
    }
    let mut spacing = half_width / half as f64;
    let mut samples = Vec::with_capacity(2 * half + 1);
    for i in 0..=2 * half {
        let offset = i as f64 - half as f64;
        samples.push(f(center + offset * spacing)?);
    }
    let mut value = trapezoid(&samples, spacing);
    let mut relative_change = f64::INFINITY;

    for widenings in 0..=cfg.max_widenings {
        if widenings > 0 {
            let left = 0.5 * spacing * (samples[0] + samples[1]);
            let last = samples.len() - 1;
            let right = 0.5 * spacing * (samples[last] + samples[last - 1]);
            let tails_ok = left < cfg.tail_tol * value && right < cfg.tail_tol * value;
            if tails_ok && relative_change < cfg.rel_tol {
                return Ok(Integral {
                    value,
                    center,
                    spacing,
                    samples,
                });
            }
        }
        if widenings == cfg.max_widenings {
            break;
        }

        let mut next = Vec::with_capacity(samples.len() * 2);
        if 4 * half + 1 <= cfg.max_points {
            let new_half = 2 * half;
            for k in 0..=2 * new_half {
                let offset = k as isize - new_half as isize;
                if offset.unsigned_abs() <= half {
                    next.push(samples[(offset + half as isize) as usize]);
                } else {
                    next.push(f(center + offset as f64 * spacing)?);
                }
            }
            half = new_half;
        } else {
            spacing *= 2.0;
            for k in 0..=2 * half {
                let offset = k as isize - half as isize;
                if offset.unsigned_abs() <= half / 2 {
                    next.push(samples[(2 * offset + half as isize) as usize]);
                } else {
                    next.push(f(center + offset as f64 * spacing)?);
                }
            }
        }
        samples = next;
        let updated = trapezoid(&samples, spacing);
        relative_change = libm::fabs(updated - value) / updated;
        value = updated;
    }

    Err(Error::QuadratureFailure {
        widenings: cfg.max_widenings,
        relative_change,
    })
}
