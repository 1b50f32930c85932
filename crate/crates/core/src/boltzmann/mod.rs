//! Direct simulation Monte Carlo for the homo-energetic Boltzmann equation
//! `d_t g - (L w) . grad_w g = Q(g, g) / eps`.
//!
//! A step is Strang split: half a collision step, the exact deformation map
//! `w <- M(t, t + dt) w`, and another half collision step. The number density
//! is carried as a scalar so that `rho(t) = rho(0) / det(I + tA)` exactly.

mod bgk;
mod moments;
mod selfsimilar;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deformation::{DeformationError, DeformationMatrix};
use crate::rng::{self, Rng};

pub use bgk::{bgk_moment_oracle, bgk_rhs};
pub use moments::{moments, MomentSeries, Moments};
pub use selfsimilar::{selfsimilar_diagnostic, SelfSimilarReport, DRIFT_TOLERANCE};

type V3 = Vector3<f64>;

/// Stream used for collision randomness; stream 0 is left for initial data.
const COLLISION_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum BoltzmannError {
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error("relative speed {g} exceeds the collision majorant {g_max}")]
    MajorantOverflow { g: f64, g_max: f64 },
    #[error("theta grew by a factor {growth:.3}, below the required 4")]
    InsufficientGrowth { growth: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind {
    /// Constant kernel `b0`, isotropic in the collision direction.
    Maxwell { b0: f64 },
    /// Hard spheres of the given diameter.
    HardSphere { diameter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionKernel {
    pub kind: KernelKind,
    /// Knudsen number `eps`; the collision operator is scaled by `1 / eps`.
    pub knudsen: f64,
}

impl CollisionKernel {
    pub fn new(kind: KernelKind, knudsen: f64) -> Result<Self, BoltzmannError> {
        if !(knudsen > 0.0) {
            return Err(BoltzmannError::Invalid(format!(
                "knudsen must be positive, got {knudsen}"
            )));
        }
        match kind {
            KernelKind::Maxwell { b0 } if !(b0 > 0.0) => Err(BoltzmannError::Invalid(format!(
                "b0 must be positive, got {b0}"
            ))),
            KernelKind::HardSphere { diameter } if !(diameter > 0.0) => Err(
                BoltzmannError::Invalid(format!("diameter must be positive, got {diameter}")),
            ),
            _ => Ok(Self { kind, knudsen }),
        }
    }

    /// Maxwell kernel whose traceless stress relaxes at rate `lambda` for
    /// number density `rho`: `lambda = (2/5) 4 pi b0 rho / eps`.
    pub fn maxwell_with_relaxation_rate(
        lambda: f64,
        knudsen: f64,
        rho: f64,
    ) -> Result<Self, BoltzmannError> {
        let b0 = lambda * knudsen / (0.4 * 4.0 * PI * rho);
        Self::new(KernelKind::Maxwell { b0 }, knudsen)
    }

    /// Per-particle collision frequency of the Maxwell kernel at density `rho`.
    pub fn maxwell_collision_frequency(&self, rho: f64) -> Option<f64> {
        match self.kind {
            KernelKind::Maxwell { b0 } => Some(4.0 * PI * b0 * rho / self.knudsen),
            KernelKind::HardSphere { .. } => None,
        }
    }

    /// Relaxation rate of the traceless stress for the Maxwell kernel.
    pub fn maxwell_relaxation_rate(&self, rho: f64) -> Option<f64> {
        self.maxwell_collision_frequency(rho).map(|nu| 0.4 * nu)
    }
}

/// Running collision bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CollisionStats {
    pub candidates: u64,
    pub collisions: u64,
    /// Largest `|v' + v'_* - v - v_*|_inf` over all collisions.
    pub max_momentum_error: f64,
    /// Largest `| |v'|^2 + |v'_*|^2 - |v|^2 - |v_*|^2 |` over all collisions.
    pub max_energy_error: f64,
}

#[derive(Debug, Clone)]
pub struct VelocityEnsemble {
    pub w: Vec<V3>,
    pub number_density: f64,
    pub t: f64,
    pub rng_seed: u64,
    rng: Rng,
    remainder: f64,
    g_max: f64,
    pub stats: CollisionStats,
}

impl VelocityEnsemble {
    pub fn new(
        w: Vec<V3>,
        number_density: f64,
        t: f64,
        rng_seed: u64,
    ) -> Result<Self, BoltzmannError> {
        if w.len() < 2 {
            return Err(BoltzmannError::Invalid(
                "need at least two particles".into(),
            ));
        }
        if !(number_density > 0.0) {
            return Err(BoltzmannError::Invalid(format!(
                "number density must be positive, got {number_density}"
            )));
        }
        Ok(Self {
            w,
            number_density,
            t,
            rng_seed,
            rng: rng::stream(rng_seed, COLLISION_STREAM),
            remainder: 0.0,
            g_max: 0.0,
            stats: CollisionStats::default(),
        })
    }

    /// `n` samples of a centred Gaussian with covariance `cov`, drawn from
    /// stream 0 of `seed`.
    pub fn gaussian(
        n: usize,
        cov: &Matrix3<f64>,
        number_density: f64,
        seed: u64,
    ) -> Result<Self, BoltzmannError> {
        let chol = cov
            .cholesky()
            .ok_or_else(|| BoltzmannError::Invalid("covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut r = rng::stream(seed, 0);
        let w = (0..n)
            .map(|_| {
                l * V3::new(
                    StandardNormal.sample(&mut r),
                    StandardNormal.sample(&mut r),
                    StandardNormal.sample(&mut r),
                )
            })
            .collect();
        Self::new(w, number_density, 0.0, seed)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Current hard-sphere majorant (0 until first used).
    pub fn g_max(&self) -> f64 {
        self.g_max
    }
}

/// Exact deformation map over `[t, t + dt]`; density rescaled by the Jacobian.
pub fn deformation_substep(
    ens: &mut VelocityEnsemble,
    def: &DeformationMatrix,
    dt: f64,
) -> Result<(), BoltzmannError> {
    let m = def.flow_map(ens.t, ens.t + dt)?;
    for w in ens.w.iter_mut() {
        *w = m * *w;
    }
    ens.number_density *= def.det(ens.t) / def.det(ens.t + dt);
    ens.t += dt;
    Ok(())
}

/// Scatter the pair with `v' = v - ((v - v_*) . omega) omega`,
/// `v'_* = v_* + ((v - v_*) . omega) omega`.
fn scatter(w: &mut [V3], i: usize, j: usize, omega: &V3, stats: &mut CollisionStats) {
    let (v, vs) = (w[i], w[j]);
    let d = omega * (v - vs).dot(omega);
    let (v1, vs1) = (v - d, vs + d);
    let mom = ((v1 + vs1) - (v + vs)).amax();
    let en =
        ((v1.norm_squared() + vs1.norm_squared()) - (v.norm_squared() + vs.norm_squared())).abs();
    stats.max_momentum_error = stats.max_momentum_error.max(mom);
    stats.max_energy_error = stats.max_energy_error.max(en);
    stats.collisions += 1;
    w[i] = v1;
    w[j] = vs1;
}

fn random_pair(rng: &mut Rng, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn uniform_direction(rng: &mut Rng) -> V3 {
    let c: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let s = (1.0 - c * c).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    V3::new(s * phi.cos(), s * phi.sin(), c)
}

/// Direction with density proportional to `|ghat . omega|`.
fn hard_sphere_direction(rng: &mut Rng, ghat: &V3) -> V3 {
    let mu = rng.random::<f64>().sqrt() * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    let helper = if ghat[0].abs() < 0.9 {
        V3::x()
    } else {
        V3::y()
    };
    let e1 = ghat.cross(&helper).normalize();
    let e2 = ghat.cross(&e1);
    ghat * mu + (e1 * phi.cos() + e2 * phi.sin()) * s
}

/// No-time-counter collision step over `dt`.
pub fn collision_substep(
    ens: &mut VelocityEnsemble,
    kernel: &CollisionKernel,
    dt: f64,
) -> Result<(), BoltzmannError> {
    let n = ens.len();
    let rho = ens.number_density;
    match kernel.kind {
        KernelKind::Maxwell { .. } => {
            let nu = kernel.maxwell_collision_frequency(rho).unwrap();
            if nu * dt > 0.5 {
                log::warn!(
                    "{:.3} expected collisions per particle per substep",
                    nu * dt
                );
            }
            let expected = 0.5 * n as f64 * nu * dt + ens.remainder;
            let m = expected.floor();
            ens.remainder = expected - m;
            for _ in 0..m as u64 {
                let (i, j) = random_pair(&mut ens.rng, n);
                let omega = uniform_direction(&mut ens.rng);
                ens.stats.candidates += 1;
                scatter(&mut ens.w, i, j, &omega, &mut ens.stats);
            }
        }
        KernelKind::HardSphere { diameter } => {
            let mean = ens.w.iter().sum::<V3>() / n as f64;
            let spread = ens.w.iter().map(|w| (w - mean).norm()).fold(0.0, f64::max);
            let bound = 1.5 * 2.0 * spread;
            if bound > ens.g_max {
                ens.g_max = bound;
            }
            let g_max = ens.g_max;
            let sigma = PI * diameter * diameter;
            let rate = rho * sigma * g_max / kernel.knudsen;
            if rate * dt > 0.5 {
                log::warn!(
                    "{:.3} candidate collisions per particle per substep",
                    rate * dt
                );
            }
            let expected = 0.5 * n as f64 * rate * dt + ens.remainder;
            let m = expected.floor();
            ens.remainder = expected - m;
            for _ in 0..m as u64 {
                let (i, j) = random_pair(&mut ens.rng, n);
                ens.stats.candidates += 1;
                let g = ens.w[i] - ens.w[j];
                let speed = g.norm();
                if !(speed <= g_max) {
                    return Err(BoltzmannError::MajorantOverflow { g: speed, g_max });
                }
                if speed == 0.0 || ens.rng.random::<f64>() * g_max >= speed {
                    continue;
                }
                let omega = hard_sphere_direction(&mut ens.rng, &(g / speed));
                scatter(&mut ens.w, i, j, &omega, &mut ens.stats);
            }
        }
    }
    Ok(())
}

/// One Strang step: half collision, full deformation, half collision.
pub fn strang_step(
    ens: &mut VelocityEnsemble,
    def: &DeformationMatrix,
    kernel: &CollisionKernel,
    dt: f64,
) -> Result<(), BoltzmannError> {
    collision_substep(ens, kernel, 0.5 * dt)?;
    deformation_substep(ens, def, dt)?;
    collision_substep(ens, kernel, 0.5 * dt)
}

/// Run for `round(horizon / dt)` steps, recording moments every `stride`
/// steps (and at the start and end).
pub fn run_homoenergetic(
    ens: &mut VelocityEnsemble,
    def: &DeformationMatrix,
    kernel: &CollisionKernel,
    dt: f64,
    horizon: f64,
    stride: usize,
) -> Result<MomentSeries, BoltzmannError> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(BoltzmannError::Invalid(format!(
            "dt = {dt}, horizon = {horizon}"
        )));
    }
    let t_end = ens.t + horizon;
    if let Some(ts) = def.t_star() {
        if t_end >= ts {
            return Err(DeformationError::PastBlowUp {
                t: t_end,
                t_star: ts,
            }
            .into());
        }
    }
    let steps = (horizon / dt).round() as usize;
    let stride = stride.max(1);
    let t0 = ens.t;
    let mut series = MomentSeries {
        samples: vec![moments(ens)],
    };
    for s in 1..=steps {
        strang_step(ens, def, kernel, dt)?;
        // avoid drift of t from repeated addition
        ens.t = t0 + s as f64 * dt;
        if s % stride == 0 || s == steps {
            series.samples.push(moments(ens));
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn shear_substep_matches_hand_example() {
        let mut ens =
            VelocityEnsemble::new(vec![V3::new(0.0, 1.0, 0.0), V3::zeros()], 1.0, 0.0, 0).unwrap();
        deformation_substep(&mut ens, &DeformationMatrix::simple_shear(1.0), 0.1).unwrap();
        assert_abs_diff_eq!(ens.w[0], V3::new(-0.1, 1.0, 0.0), epsilon = 1e-15);
        assert_eq!(ens.number_density, 1.0);
    }

    #[test]
    fn isotropic_expansion_dilutes_density() {
        let def = DeformationMatrix::new(Matrix3::identity()).unwrap();
        let mut ens = VelocityEnsemble::new(vec![V3::x(), V3::y()], 1.0, 0.0, 0).unwrap();
        for _ in 0..10 {
            deformation_substep(&mut ens, &def, 0.1).unwrap();
        }
        assert!((ens.number_density - 0.125).abs() < 1e-14);
    }

    #[test]
    fn equal_velocities_do_not_change() {
        let mut w = vec![V3::new(0.3, -0.2, 1.0); 2];
        let mut st = CollisionStats::default();
        scatter(&mut w, 0, 1, &V3::new(0.0, 0.6, 0.8), &mut st);
        assert_eq!(w[0], V3::new(0.3, -0.2, 1.0));
        assert_eq!(w[1], V3::new(0.3, -0.2, 1.0));
    }

    #[test]
    fn hard_sphere_direction_has_linear_cosine_density() {
        let mut r = rng::stream(3, 0);
        let ghat = V3::new(1.0, 2.0, 2.0) / 3.0;
        let n = 200_000;
        let mut mean_abs = 0.0;
        for _ in 0..n {
            let o = hard_sphere_direction(&mut r, &ghat);
            assert!((o.norm() - 1.0).abs() < 1e-12);
            mean_abs += o.dot(&ghat).abs();
        }
        mean_abs /= n as f64;
        // density 2|mu| on [0,1] has mean 2/3, std sqrt(1/2 - 4/9)
        assert!(
            (mean_abs - 2.0 / 3.0).abs() < 4.0 * (0.5f64 - 4.0 / 9.0).sqrt() / (n as f64).sqrt()
        );
    }

    #[test]
    fn relaxation_rate_helper_round_trips() {
        let k = CollisionKernel::maxwell_with_relaxation_rate(2.0, 0.1, 1.5).unwrap();
        assert!((k.maxwell_relaxation_rate(1.5).unwrap() - 2.0).abs() < 1e-12);
        assert!(CollisionKernel::new(KernelKind::HardSphere { diameter: 0.0 }, 1.0).is_err());
    }

    #[test]
    fn runs_are_reproducible() {
        let cov = Matrix3::from_diagonal(&V3::new(2.0, 1.0, 0.5));
        let def = DeformationMatrix::simple_shear(1.0);
        let kernel = CollisionKernel::new(KernelKind::HardSphere { diameter: 0.3 }, 1.0).unwrap();
        let run = || {
            let mut e = VelocityEnsemble::gaussian(500, &cov, 1.0, 11).unwrap();
            run_homoenergetic(&mut e, &def, &kernel, 0.05, 1.0, 5).unwrap()
        };
        assert_eq!(run(), run());
    }
}
