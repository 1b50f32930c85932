//! Empirical convergence of the N-particle measure to the mean-field solution.

use std::io::Write;

use serde::Serialize;

use super::{
    evolve_particles, exact_transport, integrate_characteristic, CharacteristicState, MeanField,
    MeanFieldError,
};
use crate::deformation::DeformationMatrix;
use crate::measure::{join, w1_exact, EmpiricalMeasure};
use crate::omd::potential::PairPotential;
use crate::rng::{self, Rng};
use crate::stats;

/// How the mean-field solution at `t_eval` is represented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// A fresh sample pushed by the exact `U = 0` transport.
    ExactTransport,
    /// A fresh sample pushed along characteristics of the field generated by
    /// an `n_ref`-particle run started from the stream `(seed, u64::MAX)`.
    HighN { n_ref: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub n_list: Vec<usize>,
    pub t_eval: f64,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub reference: Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub t: f64,
    #[serde(rename = "W1")]
    pub w1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<ConvergenceSummary>,
    /// OLS slope of `ln W1` against `ln N` over all rows.
    pub slope: f64,
    pub slope_ci: (f64, f64),
}

impl ConvergenceTable {
    /// Fraction of seeds whose W1 strictly decreases along `n_list`.
    pub fn fraction_strictly_decreasing(&self) -> f64 {
        let mut seeds: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let good = seeds
            .iter()
            .filter(|&&s| {
                let mut v: Vec<&ConvergenceRow> =
                    self.rows.iter().filter(|r| r.seed == s).collect();
                v.sort_by_key(|r| r.n);
                v.windows(2).all(|p| p[1].w1 < p[0].w1)
            })
            .count();
        good as f64 / seeds.len().max(1) as f64
    }

    /// Rows `N,seed,t,W1`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "N,seed,t,W1")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.n, r.seed, r.t, r.w1)?;
        }
        out.flush()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": self.slope,
            "ci_low": self.slope_ci.0,
            "ci_high": self.slope_ci.1,
            "table": self.summary,
        })
    }
}

fn push_through_field(
    sample: &EmpiricalMeasure,
    pot: &PairPotential,
    path: &super::SampledPath,
    def: &DeformationMatrix,
    dt: f64,
    t_eval: f64,
) -> Result<EmpiricalMeasure, MeanFieldError> {
    let field = MeanField { pot, path };
    let mut pts = Vec::with_capacity(sample.len());
    for i in 0..sample.len() {
        let s0 = CharacteristicState::new(sample.x(i), sample.w(i), 0.0);
        let end = *integrate_characteristic(s0, &field, def, dt, t_eval)?
            .last()
            .unwrap();
        pts.push(join(&end.x, &end.w));
    }
    Ok(EmpiricalMeasure::uniform(pts)?)
}

/// For each seed and `N`, evolve an i.i.d. `N`-sample with the mean-field
/// particle system and measure W1 against an independent `N`-sample of the
/// reference solution at `t_eval`.
pub fn convergence_study<S>(
    sampler: S,
    pot: Option<&PairPotential>,
    def: &DeformationMatrix,
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceTable, MeanFieldError>
where
    S: Fn(&mut Rng, usize) -> Result<EmpiricalMeasure, MeanFieldError>,
{
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(MeanFieldError::Invalid(
            "n_list must be non-empty and increasing".into(),
        ));
    }
    if cfg.seeds.is_empty() {
        return Err(MeanFieldError::Invalid("no seeds".into()));
    }
    let n_max = *cfg.n_list.last().unwrap();
    let evolve = |m: &EmpiricalMeasure| -> Result<EmpiricalMeasure, MeanFieldError> {
        if cfg.t_eval == 0.0 {
            return Ok(m.clone());
        }
        evolve_particles(m, pot, def, 0.0, cfg.dt, cfg.t_eval, usize::MAX)?.last_measure()
    };

    let high_n_path = match cfg.reference {
        Reference::HighN { n_ref, seed } => {
            if n_ref < 8 * n_max {
                return Err(MeanFieldError::Invalid(format!(
                    "n_ref = {n_ref} is below 8 x {n_max}"
                )));
            }
            let p = pot.ok_or_else(|| {
                MeanFieldError::Invalid("high-N reference needs a potential".into())
            })?;
            let m = sampler(&mut rng::stream(seed, u64::MAX), n_ref)?;
            Some((
                p,
                evolve_particles(&m, pot, def, 0.0, cfg.dt, cfg.t_eval.max(cfg.dt), 1)?
                    .to_sampled_path()?,
            ))
        }
        Reference::ExactTransport => None,
    };

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for &n in &cfg.n_list {
            let g = evolve(&sampler(&mut rng::stream(seed, 2 * n as u64), n)?)?;
            let fresh = sampler(&mut rng::stream(seed, 2 * n as u64 + 1), n)?;
            let reference = match &high_n_path {
                None => exact_transport(&fresh, def, cfg.t_eval)?,
                Some(_) if cfg.t_eval == 0.0 => fresh,
                Some((p, path)) => push_through_field(&fresh, p, path, def, cfg.dt, cfg.t_eval)?,
            };
            rows.push(ConvergenceRow {
                n,
                seed,
                t: cfg.t_eval,
                w1: w1_exact(&g, &reference)?,
            });
        }
    }

    let summary = cfg
        .n_list
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.w1).collect();
            ConvergenceSummary {
                n,
                mean: stats::mean(&v),
                std: stats::std_dev(&v),
            }
        })
        .collect();
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.w1.ln()).collect();
    let (slope, slope_ci) = match stats::linear_fit(&lx, &ly) {
        Some(f) => (f.slope, f.slope_ci(0.95)),
        None => (f64::NAN, (f64::NAN, f64::NAN)),
    };
    Ok(ConvergenceTable {
        rows,
        summary,
        slope,
        slope_ci,
    })
}
