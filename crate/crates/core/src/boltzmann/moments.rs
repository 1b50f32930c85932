//! Macroscopic moments of a velocity ensemble and their time series.

use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};

use super::{BoltzmannError, VelocityEnsemble};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub t: f64,
    pub rho: f64,
    /// Mean of `w`.
    pub u_w: Vector3<f64>,
    /// Internal energy per unit mass, `<|c|^2> / 2` with `c = w - u_w`.
    pub e: f64,
    /// `2 e / 3`.
    pub theta: f64,
    /// `rho <c c^T>`.
    pub p: Matrix3<f64>,
    /// `rho <c |c|^2>`.
    pub q: Vector3<f64>,
}

impl Moments {
    /// Ideal-gas moments: `P = rho theta I`, no heat flux.
    pub fn ideal(t: f64, rho: f64, theta: f64) -> Self {
        Self {
            t,
            rho,
            u_w: Vector3::zeros(),
            e: 1.5 * theta,
            theta,
            p: Matrix3::identity() * (rho * theta),
            q: Vector3::zeros(),
        }
    }

    /// Build from `rho` and the stress; `theta = Tr P / (3 rho)`.
    pub fn from_stress(t: f64, rho: f64, p: Matrix3<f64>) -> Self {
        let theta = p.trace() / (3.0 * rho);
        Self {
            t,
            rho,
            u_w: Vector3::zeros(),
            e: 1.5 * theta,
            theta,
            p,
            q: Vector3::zeros(),
        }
    }

    /// `P / (rho theta)`.
    pub fn normalized_stress(&self) -> Matrix3<f64> {
        self.p / (self.rho * self.theta)
    }
}

/// Moments of the ensemble, all averages uniform over particles.
pub fn moments(ens: &VelocityEnsemble) -> Moments {
    let n = ens.w.len() as f64;
    let rho = ens.number_density;
    let u = ens.w.iter().sum::<Vector3<f64>>() / n;
    let mut cc = Matrix3::zeros();
    let mut q = Vector3::zeros();
    for w in &ens.w {
        let c = w - u;
        cc += c * c.transpose();
        q += c * c.norm_squared();
    }
    cc /= n;
    let e = 0.5 * cc.trace();
    Moments {
        t: ens.t,
        rho,
        u_w: u,
        e,
        theta: 2.0 * e / 3.0,
        p: cc * rho,
        q: q * (rho / n),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentSeries {
    pub samples: Vec<Moments>,
}

const HEADER: &str = "t,rho,theta,e,P11,P12,P13,P22,P23,P33,q1,q2,q3";

impl MomentSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|m| m.t).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.samples.iter().map(|m| m.theta).collect()
    }

    /// Rows `t,rho,theta,e,P11,P12,P13,P22,P23,P33,q1,q2,q3`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "{HEADER}")?;
        for m in &self.samples {
            let p = &m.p;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                m.t,
                m.rho,
                m.theta,
                m.e,
                p[(0, 0)],
                p[(0, 1)],
                p[(0, 2)],
                p[(1, 1)],
                p[(1, 2)],
                p[(2, 2)],
                m.q[0],
                m.q[1],
                m.q[2]
            )?;
        }
        out.flush()
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, BoltzmannError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| BoltzmannError::Invalid(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>().join(",") != HEADER {
            return Err(BoltzmannError::Invalid(format!(
                "unexpected moments header {headers:?}"
            )));
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| BoltzmannError::Invalid(e.to_string()))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| BoltzmannError::Invalid(e.to_string()))
                })
                .collect::<Result<_, _>>()?;
            let p = Matrix3::new(v[4], v[5], v[6], v[5], v[7], v[8], v[6], v[8], v[9]);
            samples.push(Moments {
                t: v[0],
                rho: v[1],
                u_w: Vector3::zeros(),
                theta: v[2],
                e: v[3],
                p,
                q: Vector3::new(v[10], v[11], v[12]),
            });
        }
        Ok(Self { samples })
    }

    /// Sample-wise average of series recorded on identical time grids.
    pub fn ensemble_mean(runs: &[MomentSeries]) -> Result<Self, BoltzmannError> {
        let first = runs
            .first()
            .ok_or_else(|| BoltzmannError::Invalid("no runs".into()))?;
        let k = runs.len() as f64;
        let mut samples = Vec::with_capacity(first.samples.len());
        for (idx, m0) in first.samples.iter().enumerate() {
            let mut acc = Moments {
                t: m0.t,
                rho: 0.0,
                u_w: Vector3::zeros(),
                e: 0.0,
                theta: 0.0,
                p: Matrix3::zeros(),
                q: Vector3::zeros(),
            };
            for r in runs {
                let m = r
                    .samples
                    .get(idx)
                    .ok_or_else(|| BoltzmannError::Invalid("runs differ in length".into()))?;
                if (m.t - m0.t).abs() > 1e-12 * m0.t.abs().max(1.0) {
                    return Err(BoltzmannError::Invalid("runs differ in time grid".into()));
                }
                acc.rho += m.rho / k;
                acc.u_w += m.u_w / k;
                acc.e += m.e / k;
                acc.theta += m.theta / k;
                acc.p += m.p / k;
                acc.q += m.q / k;
            }
            samples.push(acc);
        }
        Ok(Self { samples })
    }
}
