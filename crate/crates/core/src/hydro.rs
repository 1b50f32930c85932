//! Reduced Euler and Navier-Stokes systems for homo-energetic flow, the
//! universal conservation-law residuals, and viscosity calibration.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boltzmann::{MomentSeries, Moments};
use crate::deformation::{DeformationError, DeformationMatrix};
use crate::stats;

/// Largest `|P / (rho theta) - I|_F` accepted by the calibration.
pub const NEAR_EQUILIBRIUM_TOL: f64 = 0.2;

#[derive(Debug, Error)]
pub enum HydroError {
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error("state left the physical region at t = {t}: rho = {rho}, theta = {theta}")]
    Unphysical { t: f64, rho: f64, theta: f64 },
    #[error("series is not near equilibrium: |P/(rho theta) - I|_F = {anisotropy:.3} at t = {t}")]
    NotNearEquilibrium { t: f64, anisotropy: f64 },
    #[error("no usable heating signal: {0}")]
    InsufficientSignal(String),
    #[error("deformation is not a simple shear")]
    NotSimpleShear,
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroState {
    pub rho: f64,
    pub theta: f64,
    pub t: f64,
}

/// `mu(theta) = mu0 theta^omega_exp`, entering the heating term as `epsilon mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityLaw {
    pub mu0: f64,
    pub omega_exp: f64,
    pub epsilon: f64,
}

impl ViscosityLaw {
    pub fn new(mu0: f64, omega_exp: f64, epsilon: f64) -> Result<Self, HydroError> {
        if !(mu0 > 0.0) || !(epsilon >= 0.0) || !omega_exp.is_finite() {
            return Err(HydroError::Invalid(format!(
                "mu0 = {mu0}, omega = {omega_exp}, epsilon = {epsilon}"
            )));
        }
        Ok(Self {
            mu0,
            omega_exp,
            epsilon,
        })
    }

    pub fn mu(&self, theta: f64) -> f64 {
        self.mu0 * theta.powf(self.omega_exp)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HydroSeries {
    pub samples: Vec<HydroState>,
}

impl HydroSeries {
    /// Rows `t,rho,theta`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "t,rho,theta")?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.t, s.rho, s.theta)?;
        }
        out.flush()
    }

    /// Moments with the ideal closure `P = rho theta I`.
    pub fn to_moments(&self) -> MomentSeries {
        MomentSeries {
            samples: self
                .samples
                .iter()
                .map(|s| Moments::ideal(s.t, s.rho, s.theta))
                .collect(),
        }
    }
}

/// `(1/2)(Tr L^2 + L:L - (2/3)(Tr L)^2)`.
pub fn shear_invariant(l: &nalgebra::Matrix3<f64>) -> f64 {
    let tr = l.trace();
    0.5 * ((l * l).trace() + l.component_mul(l).sum() - 2.0 / 3.0 * tr * tr)
}

fn rhs(
    def: &DeformationMatrix,
    visc: Option<&ViscosityLaw>,
    t: f64,
    rho: f64,
    theta: f64,
) -> Result<(f64, f64), HydroError> {
    let l = def.l_at(t)?;
    let tr = l.trace();
    let mut dtheta = -2.0 / 3.0 * tr * theta;
    if let Some(v) = visc {
        if v.epsilon != 0.0 {
            dtheta += v.epsilon * v.mu(theta) * shear_invariant(&l);
        }
    }
    Ok((-tr * rho, dtheta))
}

fn solve(
    state: HydroState,
    def: &DeformationMatrix,
    visc: Option<&ViscosityLaw>,
    dt: f64,
    horizon: f64,
) -> Result<HydroSeries, HydroError> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(HydroError::Invalid(format!(
            "dt = {dt}, horizon = {horizon}"
        )));
    }
    if !(state.rho > 0.0 && state.theta > 0.0) {
        return Err(HydroError::Unphysical {
            t: state.t,
            rho: state.rho,
            theta: state.theta,
        });
    }
    let n = ((horizon / dt).round() as usize).max(1);
    let h = horizon / n as f64;
    let t0 = state.t;
    let mut out = HydroSeries {
        samples: Vec::with_capacity(n + 1),
    };
    out.samples.push(state);
    let (mut rho, mut theta) = (state.rho, state.theta);
    for s in 0..n {
        let t = t0 + s as f64 * h;
        let (a1, b1) = rhs(def, visc, t, rho, theta)?;
        let (a2, b2) = rhs(
            def,
            visc,
            t + 0.5 * h,
            rho + 0.5 * h * a1,
            theta + 0.5 * h * b1,
        )?;
        let (a3, b3) = rhs(
            def,
            visc,
            t + 0.5 * h,
            rho + 0.5 * h * a2,
            theta + 0.5 * h * b2,
        )?;
        let (a4, b4) = rhs(def, visc, t + h, rho + h * a3, theta + h * b3)?;
        rho += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        theta += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        let t1 = t0 + (s + 1) as f64 * h;
        if !(rho > 0.0 && theta > 0.0) {
            return Err(HydroError::Unphysical { t: t1, rho, theta });
        }
        out.samples.push(HydroState { rho, theta, t: t1 });
    }
    Ok(out)
}

/// RK4 on `rho' = -Tr L rho`, `theta' = -(2/3) Tr L theta`.
pub fn euler_solve(
    state: HydroState,
    def: &DeformationMatrix,
    dt: f64,
    horizon: f64,
) -> Result<HydroSeries, HydroError> {
    solve(state, def, None, dt, horizon)
}

/// Euler plus viscous heating `eps mu(theta) (1/2)(Tr L^2 + L:L - (2/3)(Tr L)^2)`.
pub fn navier_stokes_solve(
    state: HydroState,
    def: &DeformationMatrix,
    visc: &ViscosityLaw,
    dt: f64,
    horizon: f64,
) -> Result<HydroSeries, HydroError> {
    solve(state, def, Some(visc), dt, horizon)
}

/// `rho_0 / det(I + tA)`, `theta_0 / det(I + tA)^{2/3}` for a state given at `t = 0`.
pub fn euler_closed_form(
    state: &HydroState,
    def: &DeformationMatrix,
    t: f64,
) -> Result<HydroState, HydroError> {
    def.l_at(t)?;
    let d = def.det(t);
    Ok(HydroState {
        rho: state.rho / d,
        theta: state.theta / d.powf(2.0 / 3.0),
        t,
    })
}

/// Simple-shear NS temperature: `theta' = c theta^omega` with `c = eps mu0 K^2 / 2`.
pub fn ns_shear_closed_form(theta0: f64, visc: &ViscosityLaw, k: f64, t: f64) -> f64 {
    let c = visc.epsilon * visc.mu0 * k * k / 2.0;
    let om = visc.omega_exp;
    if om == 1.0 {
        theta0 * (c * t).exp()
    } else {
        (theta0.powf(1.0 - om) + (1.0 - om) * c * t).powf(1.0 / (1.0 - om))
    }
}

/// Second-order finite-difference derivative on a uniform grid: centred in
/// the interior, one-sided three-point at the ends.
pub fn fd_derivative(t: &[f64], y: &[f64]) -> Result<Vec<f64>, HydroError> {
    let n = t.len();
    if n < 3 || y.len() != n {
        return Err(HydroError::Invalid("need at least three samples".into()));
    }
    let h = t[1] - t[0];
    if !(h > 0.0)
        || t.windows(2)
            .any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.max(1.0))
    {
        return Err(HydroError::Invalid("output grid is not uniform".into()));
    }
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSample {
    pub t: f64,
    /// `d rho/dt + Tr L rho`.
    pub r1: f64,
    /// `rho de/dt + P:L`.
    pub r3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSeries {
    pub samples: Vec<ResidualSample>,
    /// `max |r1| / (rho |L|_F)`.
    pub max_normalized_r1: f64,
    /// `max |r3| / (rho theta |L|_F)`.
    pub max_normalized_r3: f64,
}

impl ResidualSeries {
    /// Rows `t,r1,r3`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "t,r1,r3")?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.t, s.r1, s.r3)?;
        }
        out.flush()
    }
}

/// Finite-difference residuals of mass and energy balance on a moment series.
/// The characteristic rate is `|L(t)|_F` (1 when `L = 0`).
pub fn conservation_residual(
    series: &MomentSeries,
    def: &DeformationMatrix,
) -> Result<ResidualSeries, HydroError> {
    let t: Vec<f64> = series.samples.iter().map(|m| m.t).collect();
    let rho: Vec<f64> = series.samples.iter().map(|m| m.rho).collect();
    let e: Vec<f64> = series.samples.iter().map(|m| m.e).collect();
    let drho = fd_derivative(&t, &rho)?;
    let de = fd_derivative(&t, &e)?;
    let mut out = ResidualSeries {
        samples: Vec::with_capacity(t.len()),
        max_normalized_r1: 0.0,
        max_normalized_r3: 0.0,
    };
    for (k, m) in series.samples.iter().enumerate() {
        let l = def.l_at(m.t)?;
        let r1 = drho[k] + l.trace() * m.rho;
        let r3 = m.rho * de[k] + m.p.component_mul(&l).sum();
        let rate = match l.norm() {
            r if r > 0.0 => r,
            _ => 1.0,
        };
        out.max_normalized_r1 = out.max_normalized_r1.max(r1.abs() / (m.rho * rate));
        out.max_normalized_r3 = out
            .max_normalized_r3
            .max(r3.abs() / (m.rho * m.theta * rate));
        out.samples.push(ResidualSample { t: m.t, r1, r3 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscosityCalibration {
    pub mu0_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub omega_exp: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub epsilon: f64,
}

impl ViscosityCalibration {
    pub fn law(&self) -> Result<ViscosityLaw, HydroError> {
        ViscosityLaw::new(self.mu0_hat, self.omega_exp, self.epsilon)
    }
}

/// Fit `mu0` in `theta' = eps mu0 theta^omega K^2 / 2` by least squares
/// through the origin, using samples with `t >= t_min`. `theta'` comes from
/// finite differences of the full series.
pub fn calibrate_viscosity(
    series: &MomentSeries,
    def: &DeformationMatrix,
    omega_exp: f64,
    epsilon: f64,
    t_min: f64,
) -> Result<ViscosityCalibration, HydroError> {
    let k = if def.a().iter().all(|v| *v == 0.0) {
        0.0
    } else {
        def.shear_rate().ok_or(HydroError::NotSimpleShear)?
    };
    if !(epsilon > 0.0) {
        return Err(HydroError::Invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let t: Vec<f64> = series.samples.iter().map(|m| m.t).collect();
    let theta: Vec<f64> = series.samples.iter().map(|m| m.theta).collect();
    let dtheta = fd_derivative(&t, &theta)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, m) in series.samples.iter().enumerate() {
        if m.t < t_min {
            continue;
        }
        let aniso = (m.normalized_stress() - nalgebra::Matrix3::identity()).norm();
        if !(aniso < NEAR_EQUILIBRIUM_TOL) {
            return Err(HydroError::NotNearEquilibrium {
                t: m.t,
                anisotropy: aniso,
            });
        }
        xs.push(epsilon * m.theta.powf(omega_exp) * k * k / 2.0);
        ys.push(dtheta[i]);
    }
    let n = xs.len();
    if n < 3 {
        return Err(HydroError::InsufficientSignal(format!(
            "{n} samples after t = {t_min}"
        )));
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if !(sxx > 0.0) {
        return Err(HydroError::InsufficientSignal(
            "heating regressor vanishes (K = 0)".into(),
        ));
    }
    let mu0 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - mu0 * x).collect();
    let ss: f64 = res.iter().map(|r| r * r).sum();
    let se = (ss / (n as f64 - 1.0) / sxx).sqrt();
    let lag1 = if ss > 0.0 {
        res.windows(2).map(|p| p[0] * p[1]).sum::<f64>() / ss
    } else {
        0.0
    };
    let r = lag1.clamp(0.0, 0.99);
    let n_eff = (n as f64 * (1.0 - r) / (1.0 + r)).max(2.0);
    let half =
        stats::t_quantile(0.95, n_eff - 1.0) * se * ((n as f64 - 1.0) / (n_eff - 1.0)).sqrt();
    if !(mu0 - half > 0.0) {
        return Err(HydroError::InsufficientSignal(format!(
            "mu0 = {mu0} is not distinguishable from zero (+/- {half})"
        )));
    }
    Ok(ViscosityCalibration {
        mu0_hat: mu0,
        ci_low: mu0 - half,
        ci_high: mu0 + half,
        omega_exp,
        k,
        epsilon,
    })
}
