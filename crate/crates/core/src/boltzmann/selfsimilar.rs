//! Self-similar diagnostic: exponential growth rate of `theta` and the
//! long-time limit of the normalized stress `P / (rho theta)`.

use nalgebra::Matrix3;
use serde::Serialize;

use super::{BoltzmannError, MomentSeries};
use crate::stats;

/// Tolerance on the normalized-stress drift over the fit window.
pub const DRIFT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSimilarReport {
    /// Fitted `beta` in `theta ~ exp(2 beta t)`.
    pub beta_hat: f64,
    /// 95% interval for `beta_hat`, widened for autocorrelated residuals.
    pub beta_ci: (f64, f64),
    pub beta_se: f64,
    /// Mean of `P / (rho theta)` over the fit window, row-major.
    pub normalized_p_limit: [f64; 9],
    /// `|<N>_second half - <N>_first half|_F` over the fit window.
    pub drift: f64,
    pub self_similar: bool,
    pub window_start: f64,
    pub samples_used: usize,
}

impl SelfSimilarReport {
    pub fn normalized_p_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.normalized_p_limit)
    }

    /// Whether two fitted rates agree within their joint interval.
    pub fn beta_agrees_with(&self, other: &Self) -> bool {
        let half_a = 0.5 * (self.beta_ci.1 - self.beta_ci.0);
        let half_b = 0.5 * (other.beta_ci.1 - other.beta_ci.0);
        (self.beta_hat - other.beta_hat).abs() <= (half_a * half_a + half_b * half_b).sqrt()
    }
}

/// Fit on the last half of the samples recorded after `theta` first reached
/// four times its initial value.
pub fn selfsimilar_diagnostic(series: &MomentSeries) -> Result<SelfSimilarReport, BoltzmannError> {
    let s = &series.samples;
    let theta0 = s
        .first()
        .ok_or_else(|| BoltzmannError::Invalid("empty series".into()))?
        .theta;
    let growth = s.iter().map(|m| m.theta).fold(f64::MIN, f64::max) / theta0;
    let Some(first) = s.iter().position(|m| m.theta >= 4.0 * theta0) else {
        return Err(BoltzmannError::InsufficientGrowth { growth });
    };
    let after = &s[first..];
    let window = &after[after.len() / 2..];
    if window.len() < 6 {
        return Err(BoltzmannError::Invalid(format!(
            "only {} samples in the fit window",
            window.len()
        )));
    }
    let t: Vec<f64> = window.iter().map(|m| m.t).collect();
    let lt: Vec<f64> = window.iter().map(|m| m.theta.ln()).collect();
    let fit = stats::linear_fit(&t, &lt)
        .ok_or_else(|| BoltzmannError::Invalid("degenerate fit window".into()))?;
    let (lo, hi) = fit.slope_ci_autocorrelated(0.95);

    let mean_n = |ms: &[super::Moments]| {
        ms.iter()
            .map(|m| m.normalized_stress())
            .sum::<Matrix3<f64>>()
            / ms.len() as f64
    };
    let half = window.len() / 2;
    let drift = (mean_n(&window[half..]) - mean_n(&window[..half])).norm();
    let limit = mean_n(window);
    let mut flat = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            flat[3 * r + c] = limit[(r, c)];
        }
    }
    Ok(SelfSimilarReport {
        beta_hat: 0.5 * fit.slope,
        beta_ci: (0.5 * lo, 0.5 * hi),
        beta_se: 0.5 * fit.slope_se,
        normalized_p_limit: flat,
        drift,
        self_similar: drift < DRIFT_TOLERANCE,
        window_start: window[0].t,
        samples_used: window.len(),
    })
}
