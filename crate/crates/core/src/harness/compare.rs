//! Cross-level comparison of observables.

use serde::Serialize;

use super::config::MetricKind;
use super::HarnessError;
use crate::measure::{w1_exact, EmpiricalMeasure};

/// Minimum fraction of the longer time span the two arms must share.
pub const MIN_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ArmData {
    /// A scalar observable sampled on an increasing time grid.
    Scalar { t: Vec<f64>, y: Vec<f64> },
    /// A distribution at a single time.
    Distribution(EmpiricalMeasure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub data: ArmData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub arm_a: String,
    pub arm_b: String,
    pub metric: MetricKind,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Grid points (scalar arms) or support points (distributions) compared.
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Piecewise-linear interpolation; `t` must be increasing and `x` inside it.
pub fn interpolate(t: &[f64], y: &[f64], x: f64) -> f64 {
    let k = t.partition_point(|&s| s <= x);
    if k == 0 {
        return y[0];
    }
    if k >= t.len() {
        return y[t.len() - 1];
    }
    let (t0, t1) = (t[k - 1], t[k]);
    let s = (x - t0) / (t1 - t0);
    y[k - 1] + s * (y[k] - y[k - 1])
}

fn check_grid(t: &[f64], y: &[f64], name: &str) -> Result<(), HarnessError> {
    if t.is_empty() || t.len() != y.len() {
        return Err(HarnessError::Config(format!(
            "arm {name}: {} times for {} values",
            t.len(),
            y.len()
        )));
    }
    if t.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(HarnessError::Config(format!(
            "arm {name}: times are not increasing"
        )));
    }
    Ok(())
}

/// `sup |a - b| / |a|` over the times of `a` inside the common window, with `b`
/// interpolated linearly.
fn sup_rel_dev(
    a: (&[f64], &[f64]),
    b: (&[f64], &[f64]),
    names: (&str, &str),
) -> Result<(f64, usize), HarnessError> {
    check_grid(a.0, a.1, names.0)?;
    check_grid(b.0, b.1, names.1)?;
    let (ta, tb) = (a.0, b.0);
    let lo = ta[0].max(tb[0]);
    let hi = ta[ta.len() - 1].min(tb[tb.len() - 1]);
    let span = (ta[ta.len() - 1] - ta[0]).max(tb[tb.len() - 1] - tb[0]);
    let overlap = if span > 0.0 {
        ((hi - lo) / span).max(0.0)
    } else if hi >= lo {
        1.0
    } else {
        0.0
    };
    if overlap < MIN_OVERLAP {
        return Err(HarnessError::GridMismatch { overlap });
    }
    let mut dev: f64 = 0.0;
    let mut n = 0;
    for (&t, &ya) in ta.iter().zip(a.1) {
        if t < lo || t > hi {
            continue;
        }
        let yb = interpolate(tb, b.1, t);
        dev = dev.max((ya - yb).abs() / ya.abs());
        n += 1;
    }
    Ok((dev, n))
}

/// Compare two arms with the given metric; the check passes iff the
/// deviation is at most `tolerance`.
pub fn compare(
    a: &Arm,
    b: &Arm,
    metric: MetricKind,
    tolerance: f64,
) -> Result<ComparisonReport, HarnessError> {
    let (max_deviation, points) = match (&a.data, &b.data, metric) {
        (
            ArmData::Scalar { t: ta, y: ya },
            ArmData::Scalar { t: tb, y: yb },
            MetricKind::SupRelDev,
        ) => sup_rel_dev((ta, ya), (tb, yb), (&a.name, &b.name))?,
        (ArmData::Distribution(ma), ArmData::Distribution(mb), MetricKind::W1) => {
            (w1_exact(ma, mb)?, ma.len())
        }
        _ => {
            return Err(HarnessError::Config(format!(
                "metric {metric:?} does not apply to arms {} and {}",
                a.name, b.name
            )));
        }
    };
    Ok(ComparisonReport {
        arm_a: a.name.clone(),
        arm_b: b.name.clone(),
        metric,
        max_deviation,
        tolerance,
        pass: max_deviation <= tolerance,
        points,
        provenance: None,
    })
}
