//! Small regression helpers shared by the diagnostics.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (OLS, uncorrected).
    pub slope_se: f64,
    pub n: usize,
    /// Lag-one autocorrelation of the residuals.
    pub residual_lag1: f64,
}

/// Ordinary least squares `y = intercept + slope x`. Needs at least 3 points.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - intercept - slope * a)
        .collect();
    let ss: f64 = res.iter().map(|r| r * r).sum();
    let slope_se = (ss / (nf - 2.0) / sxx).sqrt();
    let num: f64 = res.windows(2).map(|p| p[0] * p[1]).sum();
    let residual_lag1 = if ss > 0.0 { num / ss } else { 0.0 };
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        n,
        residual_lag1,
    })
}

impl LinearFit {
    /// Two-sided Student-t interval for the slope.
    pub fn slope_ci(&self, level: f64) -> (f64, f64) {
        let half = t_quantile(level, self.n as f64 - 2.0) * self.slope_se;
        (self.slope - half, self.slope + half)
    }

    /// Slope interval with the sample size deflated for positively
    /// correlated residuals, `n_eff = n (1 - r) / (1 + r)`.
    pub fn slope_ci_autocorrelated(&self, level: f64) -> (f64, f64) {
        let r = self.residual_lag1.clamp(0.0, 0.99);
        let nf = self.n as f64;
        let n_eff = (nf * (1.0 - r) / (1.0 + r)).max(3.0);
        let inflate = ((nf - 2.0) / (n_eff - 2.0)).sqrt();
        let half = t_quantile(level, n_eff - 2.0) * self.slope_se * inflate;
        (self.slope - half, self.slope + half)
    }
}

pub fn t_quantile(level: f64, dof: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof.max(1.0)).expect("valid dof");
    dist.inverse_cdf(0.5 + 0.5 * level)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}
