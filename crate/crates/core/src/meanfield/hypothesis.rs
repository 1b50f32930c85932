//! Growth and Lipschitz constants of the characteristic vector field, and the
//! W1 stability check built on them.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{evolve_particles, CharacteristicState, ForceField, MeanField, MeanFieldError};
use crate::deformation::DeformationMatrix;
use crate::measure::{w1_exact, EmpiricalMeasure};
use crate::omd::potential::{PairPotential, OVERLAP_FRACTION};
use crate::rng;

type V3 = Vector3<f64>;

/// Where the field is probed: a ball in R^6 around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    /// `None` uses 1.5 times the largest `|(x, w)|` among the atoms.
    pub radius: Option<f64>,
    pub n_probe: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            radius: None,
            n_probe: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FieldHypothesisReport {
    /// `|w + L x| <= C_xi (1 + |x| + |w|)`.
    pub c_xi: f64,
    /// Lipschitz constant of `(x, w) -> w + L x`.
    pub l_xi: f64,
    /// Largest observed `|E - L w| / (1 + |x| + |w|)` on the probes.
    pub c_h: f64,
    /// Lipschitz constant of the force operator in `(x, w)` and in the measure.
    pub l_h: f64,
    /// Lipschitz constant of the full field `(w + L x, E - L w)`.
    pub l_p: f64,
    pub probe_radius: f64,
}

fn spectral_norm(m: DMatrix<f64>) -> f64 {
    m.svd(false, false).singular_values.max()
}

fn block(l: &Matrix3<f64>, je: &Matrix3<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut xi = DMatrix::zeros(3, 6);
    let mut h = DMatrix::zeros(3, 6);
    let mut full = DMatrix::zeros(6, 6);
    for r in 0..3 {
        for c in 0..3 {
            xi[(r, c)] = l[(r, c)];
            h[(r, c)] = je[(r, c)];
            h[(r, c + 3)] = -l[(r, c)];
            full[(r, c)] = l[(r, c)];
            full[(r + 3, c)] = je[(r, c)];
            full[(r + 3, c + 3)] = -l[(r, c)];
        }
        xi[(r, r + 3)] = 1.0;
        full[(r, r + 3)] = 1.0;
    }
    (xi, h, full)
}

/// `dE/dx` for the empirical mean field.
fn field_jacobian(pot: &PairPotential, m: &EmpiricalMeasure, x: &V3) -> Matrix3<f64> {
    let rc = pot.cutoff;
    let mut j = Matrix3::zeros();
    for k in 0..m.len() {
        let sep = x - m.x(k);
        let r = sep.norm();
        if r >= rc || r < OVERLAP_FRACTION * rc {
            continue;
        }
        let e = sep / r;
        let ee = e * e.transpose();
        let d1 = pot.derivative(r) / r;
        let d2 = pot.second_derivative(r);
        j -= (ee * d2 + (Matrix3::identity() - ee) * d1) * m.weights()[k];
    }
    j
}

/// `sup_{0 < r <= r_max} ||Hess U||`, sampled.
fn grad_u_lipschitz(pot: &PairPotential, r_max: f64) -> f64 {
    let r_max = r_max.min(pot.cutoff);
    (1..=400)
        .map(|k| {
            let r = r_max * k as f64 / 400.0;
            pot.second_derivative(r)
                .abs()
                .max((pot.derivative(r) / r).abs())
        })
        .fold(0.0, f64::max)
}

impl FieldHypothesisReport {
    /// Evaluate the constants on a set of `(t, measure)` snapshots.
    pub fn measure(
        def: &DeformationMatrix,
        pot: Option<&PairPotential>,
        snapshots: &[(f64, &EmpiricalMeasure)],
        probe: &ProbeSpec,
    ) -> Result<Self, MeanFieldError> {
        if snapshots.is_empty() {
            return Err(MeanFieldError::Invalid("no snapshots".into()));
        }
        let radius = probe.radius.unwrap_or_else(|| {
            1.5 * snapshots
                .iter()
                .flat_map(|(_, m)| {
                    m.points()
                        .iter()
                        .map(|p| p.iter().map(|c| c * c).sum::<f64>().sqrt())
                })
                .fold(1e-12, f64::max)
        });
        let mut rng = rng::stream(probe.seed, 0x9e37);
        let mut probes: Vec<[f64; 6]> = vec![[0.0; 6]];
        for k in 0..probe.n_probe {
            let dir: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
            // alternate surface and interior points
            let s = if k % 2 == 0 {
                1.0
            } else {
                rng.random::<f64>().powf(1.0 / 6.0)
            };
            probes.push(dir.map(|c| c / n * radius * s));
        }

        let mut rep = Self {
            c_xi: 0.0,
            l_xi: 0.0,
            c_h: 0.0,
            l_h: 0.0,
            l_p: 0.0,
            probe_radius: radius,
        };
        if let Some(p) = pot {
            rep.l_h = grad_u_lipschitz(p, 2.0 * radius);
        }
        for (t, m) in snapshots {
            let l = def.l_at(*t)?;
            let l_norm = spectral_norm(DMatrix::from_iterator(3, 3, l.iter().copied()));
            rep.c_xi = rep.c_xi.max(l_norm.max(1.0));
            for pt in &probes {
                let x = V3::new(pt[0], pt[1], pt[2]);
                let w = V3::new(pt[3], pt[4], pt[5]);
                let (e, je) = match pot {
                    Some(p) => (
                        MeanField { pot: p, path: *m }.force(*t, &x)?,
                        field_jacobian(p, m, &x),
                    ),
                    None => (V3::zeros(), Matrix3::zeros()),
                };
                let h = e - l * w;
                rep.c_h = rep.c_h.max(h.norm() / (1.0 + x.norm() + w.norm()));
                let (bxi, bh, bfull) = block(&l, &je);
                rep.l_xi = rep.l_xi.max(spectral_norm(bxi));
                rep.l_h = rep.l_h.max(spectral_norm(bh));
                rep.l_p = rep.l_p.max(spectral_norm(bfull));
            }
        }
        Ok(rep)
    }

    /// `L = max(L_P, L_H)`.
    pub fn lipschitz(&self) -> f64 {
        self.l_p.max(self.l_h)
    }

    /// Linear-growth constant of the full field, `sqrt(2) (C_xi + C_H)`.
    pub fn c_psi(&self) -> f64 {
        std::f64::consts::SQRT_2 * (self.c_xi + self.c_h)
    }
}

/// Deviation bound `(e^{t L_P} - 1) / L_P * delta` for fields differing by `delta`.
pub fn dce_bound(t: f64, l_p: f64, delta: f64) -> f64 {
    if l_p == 0.0 {
        t * delta
    } else {
        (t * l_p).exp_m1() / l_p * delta
    }
}

/// Largest `|P(t)| / (|P_0| e^{C (t - t_0)})` with `C = c_psi (1 + 1 / |P_0|)`;
/// the growth bound holds when this is at most 1.
pub fn gronwall_growth_holds(traj: &[CharacteristicState], c_psi: f64) -> f64 {
    let Some(first) = traj.first() else {
        return 0.0;
    };
    let p0 = first.norm();
    if p0 == 0.0 {
        return if traj.iter().all(|s| s.norm() == 0.0) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let c = c_psi * (1.0 + 1.0 / p0);
    traj.iter()
        .map(|s| s.norm() / (p0 * (c * (s.t - first.t)).exp()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilitySample {
    pub t: f64,
    pub w1: f64,
    /// `e^{2tL} W1(g_0, h_0)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityReport {
    pub ratio_max: f64,
    pub lipschitz: f64,
    pub w1_initial: f64,
    pub samples: Vec<StabilitySample>,
    /// `g_0 = h_0`: the ratio is undefined and the distance must stay zero.
    pub degenerate: bool,
    pub violation: bool,
    pub tolerance: f64,
    pub hypotheses: FieldHypothesisReport,
}

/// Co-evolve two empirical measures with the mean-field particle system and
/// compare `W1(g_t, h_t)` with `e^{2tL} W1(g_0, h_0)` at every `stride` steps.
#[allow(clippy::too_many_arguments)]
pub fn stability_check(
    g0: &EmpiricalMeasure,
    h0: &EmpiricalMeasure,
    pot: Option<&PairPotential>,
    def: &DeformationMatrix,
    dt: f64,
    horizon: f64,
    stride: usize,
    tolerance: f64,
    probe: &ProbeSpec,
) -> Result<StabilityReport, MeanFieldError> {
    if g0.len() != h0.len() {
        return Err(MeanFieldError::Invalid("particle counts differ".into()));
    }
    let gp = evolve_particles(g0, pot, def, 0.0, dt, horizon, stride)?;
    let hp = evolve_particles(h0, pot, def, 0.0, dt, horizon, stride)?;
    let gm: Vec<EmpiricalMeasure> = (0..gp.times.len())
        .map(|k| gp.measure(k))
        .collect::<Result<_, _>>()?;
    let hm: Vec<EmpiricalMeasure> = (0..hp.times.len())
        .map(|k| hp.measure(k))
        .collect::<Result<_, _>>()?;
    let snaps: Vec<(f64, &EmpiricalMeasure)> = gp
        .times
        .iter()
        .copied()
        .zip(gm.iter())
        .chain(hp.times.iter().copied().zip(hm.iter()))
        .collect();
    let hypotheses = FieldHypothesisReport::measure(def, pot, &snaps, probe)?;
    let lip = hypotheses.lipschitz();

    let w1_initial = w1_exact(g0, h0)?;
    let degenerate = w1_initial == 0.0;
    let mut samples = Vec::with_capacity(gp.times.len());
    let mut ratio_max: f64 = 0.0;
    for (k, &t) in gp.times.iter().enumerate() {
        let w1 = w1_exact(&gm[k], &hm[k])?;
        let bound = (2.0 * t * lip).exp() * w1_initial;
        if !degenerate {
            ratio_max = ratio_max.max(w1 / bound);
        }
        samples.push(StabilitySample { t, w1, bound });
    }
    let violation = if degenerate {
        samples.iter().any(|s| s.w1 > 1e-10)
    } else {
        ratio_max > 1.0 + tolerance
    };
    Ok(StabilityReport {
        ratio_max,
        lipschitz: lip,
        w1_initial,
        samples,
        degenerate,
        violation,
        tolerance,
        hypotheses,
    })
}
