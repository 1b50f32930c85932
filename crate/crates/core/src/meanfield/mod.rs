//! Mean-field level: characteristics of the Vlasov-type equation in `(x, w)`,
//! the mean-field particle system, and the exact solution of the reduced
//! transport equation `d_t g - (L w) . grad_w g = 0`.

mod convergence;
mod hypothesis;
mod weak;

use nalgebra::Vector3;
use thiserror::Error;

use crate::deformation::{DeformationError, DeformationMatrix};
use crate::measure::{EmpiricalMeasure, MeasureError};
use crate::omd::potential::{PairPotential, OVERLAP_FRACTION};

pub use convergence::{
    convergence_study, ConvergenceConfig, ConvergenceRow, ConvergenceSummary, ConvergenceTable,
    Reference,
};
pub use hypothesis::{
    dce_bound, gronwall_growth_holds, stability_check, FieldHypothesisReport, ProbeSpec,
    StabilityReport,
};
pub use weak::{weak_form_pairing, weak_form_rhs, Bump, TestFunction};

type V3 = Vector3<f64>;

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("measure path does not cover t = {t} (range [{start}, {end}])")]
    PathRange { t: f64, start: f64, end: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicState {
    pub x: V3,
    pub w: V3,
    pub t: f64,
}

impl CharacteristicState {
    pub fn new(x: V3, w: V3, t: f64) -> Self {
        Self { x, w, t }
    }

    /// Euclidean norm of `(x, w)` in R^6.
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.w.norm_squared()).sqrt()
    }
}

/// The x-dependent part `E(t, x)` of the force operator.
pub trait ForceField {
    fn force(&self, t: f64, x: &V3) -> Result<V3, MeanFieldError>;
}

pub struct ZeroField;

impl ForceField for ZeroField {
    fn force(&self, _t: f64, _x: &V3) -> Result<V3, MeanFieldError> {
        Ok(V3::zeros())
    }
}

/// `inner + shift`, a bounded perturbation of another field.
pub struct ShiftedField<'a, F: ForceField> {
    pub inner: &'a F,
    pub shift: V3,
}

impl<F: ForceField> ForceField for ShiftedField<'_, F> {
    fn force(&self, t: f64, x: &V3) -> Result<V3, MeanFieldError> {
        Ok(self.inner.force(t, x)? + self.shift)
    }
}

/// A time-indexed family of weighted position clouds.
pub trait MeasurePath {
    fn weights(&self) -> &[f64];
    /// Visit `(j, x_j(t))` for every atom.
    fn for_each_position(&self, t: f64, f: &mut dyn FnMut(usize, V3))
        -> Result<(), MeanFieldError>;
}

impl MeasurePath for EmpiricalMeasure {
    fn weights(&self) -> &[f64] {
        EmpiricalMeasure::weights(self)
    }

    fn for_each_position(
        &self,
        _t: f64,
        f: &mut dyn FnMut(usize, V3),
    ) -> Result<(), MeanFieldError> {
        for j in 0..self.len() {
            f(j, self.x(j));
        }
        Ok(())
    }
}

/// Positions recorded at increasing times together with their time
/// derivatives; cubic Hermite interpolation in between.
#[derive(Debug, Clone)]
pub struct SampledPath {
    times: Vec<f64>,
    x: Vec<Vec<V3>>,
    xdot: Vec<Vec<V3>>,
    weights: Vec<f64>,
}

impl SampledPath {
    pub fn new(
        times: Vec<f64>,
        x: Vec<Vec<V3>>,
        xdot: Vec<Vec<V3>>,
        weights: Vec<f64>,
    ) -> Result<Self, MeanFieldError> {
        if times.is_empty() || times.len() != x.len() || times.len() != xdot.len() {
            return Err(MeanFieldError::Invalid("inconsistent sampled path".into()));
        }
        if times.windows(2).any(|p| p[1] <= p[0]) {
            return Err(MeanFieldError::Invalid("path times must increase".into()));
        }
        Ok(Self {
            times,
            x,
            xdot,
            weights,
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

impl MeasurePath for SampledPath {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn for_each_position(
        &self,
        t: f64,
        f: &mut dyn FnMut(usize, V3),
    ) -> Result<(), MeanFieldError> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-9 * (end - start).abs().max(1.0);
        if t < start - slack || t > end + slack {
            return Err(MeanFieldError::PathRange { t, start, end });
        }
        if self.times.len() == 1 {
            for (j, x) in self.x[0].iter().enumerate() {
                f(j, *x);
            }
            return Ok(());
        }
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(self.times.len() - 2),
        };
        let h = self.times[k + 1] - self.times[k];
        let s = ((t - self.times[k]) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * h;
        for j in 0..self.weights.len() {
            let p = self.x[k][j] * h00
                + self.xdot[k][j] * h10
                + self.x[k + 1][j] * h01
                + self.xdot[k + 1][j] * h11;
            f(j, p);
        }
        Ok(())
    }
}

/// `E[g](t, x) = -sum_j m_j grad U(x - x_j)`; coincident atoms are skipped.
pub struct MeanField<'a, P: MeasurePath + ?Sized> {
    pub pot: &'a PairPotential,
    pub path: &'a P,
}

impl<P: MeasurePath + ?Sized> ForceField for MeanField<'_, P> {
    fn force(&self, t: f64, x: &V3) -> Result<V3, MeanFieldError> {
        let rc = self.pot.cutoff;
        let rmin = OVERLAP_FRACTION * rc;
        let weights = self.path.weights();
        let mut f = V3::zeros();
        self.path.for_each_position(t, &mut |j, xj| {
            let sep = x - xj;
            let r2 = sep.norm_squared();
            if r2 < rc * rc {
                let r = r2.sqrt();
                if r >= rmin {
                    f -= sep * (weights[j] * self.pot.derivative(r) / r);
                }
            }
        })?;
        Ok(f)
    }
}

fn step_count(dt: f64, horizon: f64) -> Result<(usize, f64), MeanFieldError> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(MeanFieldError::Invalid(format!(
            "dt = {dt}, horizon = {horizon}"
        )));
    }
    let n = ((horizon / dt).round() as usize).max(1);
    Ok((n, horizon / n as f64))
}

/// RK4 for `dX = W + L X`, `dW = E(t, X) - L W`; returns every step.
pub fn integrate_characteristic<F: ForceField + ?Sized>(
    state: CharacteristicState,
    field: &F,
    def: &DeformationMatrix,
    dt: f64,
    horizon: f64,
) -> Result<Vec<CharacteristicState>, MeanFieldError> {
    let (n, h) = step_count(dt, horizon)?;
    let rhs =
        |t: f64, x: &V3, w: &V3, l: &nalgebra::Matrix3<f64>| -> Result<(V3, V3), MeanFieldError> {
            Ok((w + l * x, field.force(t, x)? - l * w))
        };
    let mut out = Vec::with_capacity(n + 1);
    out.push(state);
    let mut s = state;
    for _ in 0..n {
        let t = s.t;
        let l0 = def.l_at(t)?;
        let lm = def.l_at(t + 0.5 * h)?;
        let l1 = def.l_at(t + h)?;
        let (k1x, k1w) = rhs(t, &s.x, &s.w, &l0)?;
        let (k2x, k2w) = rhs(
            t + 0.5 * h,
            &(s.x + k1x * (0.5 * h)),
            &(s.w + k1w * (0.5 * h)),
            &lm,
        )?;
        let (k3x, k3w) = rhs(
            t + 0.5 * h,
            &(s.x + k2x * (0.5 * h)),
            &(s.w + k2w * (0.5 * h)),
            &lm,
        )?;
        let (k4x, k4w) = rhs(t + h, &(s.x + k3x * h), &(s.w + k3w * h), &l1)?;
        s.x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        s.w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        s.t = t + h;
        out.push(s);
    }
    Ok(out)
}

/// Snapshots of the mean-field particle system.
#[derive(Debug, Clone)]
pub struct ParticlePath {
    pub times: Vec<f64>,
    pub x: Vec<Vec<V3>>,
    pub w: Vec<Vec<V3>>,
    pub weights: Vec<f64>,
    pub deformation: DeformationMatrix,
}

impl ParticlePath {
    pub fn measure(&self, k: usize) -> Result<EmpiricalMeasure, MeanFieldError> {
        let points = self.x[k]
            .iter()
            .zip(&self.w[k])
            .map(|(x, w)| crate::measure::join(x, w))
            .collect();
        Ok(EmpiricalMeasure::weighted(points, self.weights.clone())?)
    }

    pub fn last_measure(&self) -> Result<EmpiricalMeasure, MeanFieldError> {
        self.measure(self.times.len() - 1)
    }

    /// Hermite path of the positions using `dx/dt = w + L x`.
    pub fn to_sampled_path(&self) -> Result<SampledPath, MeanFieldError> {
        let mut xdot = Vec::with_capacity(self.times.len());
        for (k, &t) in self.times.iter().enumerate() {
            let l = self.deformation.l_at(t)?;
            xdot.push(
                self.x[k]
                    .iter()
                    .zip(&self.w[k])
                    .map(|(x, w)| w + l * x)
                    .collect(),
            );
        }
        SampledPath::new(
            self.times.clone(),
            self.x.clone(),
            xdot,
            self.weights.clone(),
        )
    }
}

/// Mean-field accelerations `-sum_j m_j grad U(x_i - x_j)`, coincident pairs skipped.
pub fn particle_forces(x: &[V3], weights: &[f64], pot: Option<&PairPotential>, out: &mut [V3]) {
    out.iter_mut().for_each(|f| *f = V3::zeros());
    let Some(pot) = pot else { return };
    let rc = pot.cutoff;
    let rmin = OVERLAP_FRACTION * rc;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let sep = x[i] - x[j];
            let r2 = sep.norm_squared();
            if r2 >= rc * rc {
                continue;
            }
            let r = r2.sqrt();
            if r < rmin {
                continue;
            }
            let g = sep * (pot.derivative(r) / r);
            out[i] -= g * weights[j];
            out[j] += g * weights[i];
        }
    }
}

/// RK4 evolution of the weighted particle system from time `t0`, keeping
/// every `stride`-th step and the final state. `pot = None` means `U = 0`.
pub fn evolve_particles(
    initial: &EmpiricalMeasure,
    pot: Option<&PairPotential>,
    def: &DeformationMatrix,
    t0: f64,
    dt: f64,
    horizon: f64,
    stride: usize,
) -> Result<ParticlePath, MeanFieldError> {
    let (n_steps, h) = step_count(dt, horizon)?;
    let n = initial.len();
    let weights = initial.weights().to_vec();
    let mut x: Vec<V3> = (0..n).map(|i| initial.x(i)).collect();
    let mut w: Vec<V3> = (0..n).map(|i| initial.w(i)).collect();
    let mut path = ParticlePath {
        times: vec![t0],
        x: vec![x.clone()],
        w: vec![w.clone()],
        weights: weights.clone(),
        deformation: *def,
    };

    let mut f = vec![V3::zeros(); n];
    let mut kx = vec![[V3::zeros(); 4]; n];
    let mut kw = vec![[V3::zeros(); 4]; n];
    let mut xs = x.clone();
    let mut ws = w.clone();
    let stride = stride.max(1);
    for step in 1..=n_steps {
        let t = t0 + (step - 1) as f64 * h;
        let ls = [
            def.l_at(t)?,
            def.l_at(t + 0.5 * h)?,
            def.l_at(t + 0.5 * h)?,
            def.l_at(t + h)?,
        ];
        let coeff = [0.0, 0.5 * h, 0.5 * h, h];
        for stage in 0..4 {
            if stage > 0 {
                for i in 0..n {
                    xs[i] = x[i] + kx[i][stage - 1] * coeff[stage];
                    ws[i] = w[i] + kw[i][stage - 1] * coeff[stage];
                }
            } else {
                xs.copy_from_slice(&x);
                ws.copy_from_slice(&w);
            }
            particle_forces(&xs, &weights, pot, &mut f);
            let l = &ls[stage];
            for i in 0..n {
                kx[i][stage] = ws[i] + l * xs[i];
                kw[i][stage] = f[i] - l * ws[i];
            }
        }
        for i in 0..n {
            let k = &kx[i];
            x[i] += (k[0] + k[1] * 2.0 + k[2] * 2.0 + k[3]) * (h / 6.0);
            let k = &kw[i];
            w[i] += (k[0] + k[1] * 2.0 + k[2] * 2.0 + k[3]) * (h / 6.0);
        }
        if step % stride == 0 || step == n_steps {
            path.times.push(t0 + step as f64 * h);
            path.x.push(x.clone());
            path.w.push(w.clone());
        }
    }
    Ok(path)
}

/// Exact solution of the reduced transport equation for a density `g0(w)`.
pub struct ExactTransport<F: Fn(&V3) -> f64> {
    pub g0: F,
    pub deformation: DeformationMatrix,
}

impl<F: Fn(&V3) -> f64> ExactTransport<F> {
    /// `g(t, w) = g0((I + tA) w)`.
    pub fn eval(&self, t: f64, w: &V3) -> Result<f64, MeanFieldError> {
        self.deformation.l_at(t)?;
        Ok((self.g0)(&(self.deformation.gradient(t) * w)))
    }
}

/// Push an empirical measure given at time 0 to time `t` under `U = 0`:
/// `w <- M(0, t) w` and `x <- (I + tA) x + t w`.
pub fn exact_transport(
    g0: &EmpiricalMeasure,
    def: &DeformationMatrix,
    t: f64,
) -> Result<EmpiricalMeasure, MeanFieldError> {
    let m = def.flow_map(0.0, t)?;
    let g = def.gradient(t);
    Ok(g0.map_points(|x, w| (g * x + w * t, m * w)))
}
