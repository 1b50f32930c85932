//! Objective molecular dynamics in `(x, w)` coordinates.
//!
//! The simulated particles carry positions `x_i` and peculiar velocities
//! `w_i = v_i - L(t) x_i`; image `(i, nu)` sits at `x_i + (I + tA) nu` with the
//! same peculiar velocity. A step is a Strang splitting of the exact free
//! drift (`x' = w + Lx`, `w' = -Lw`) around a force kick.

pub mod lattice;
pub mod potential;

use std::io::Write;

use nalgebra::Vector3;
use thiserror::Error;

use crate::deformation::{DeformationError, DeformationMatrix};
pub use lattice::ImageLattice;
pub use potential::{PairPotential, PotentialKind, Scaling};

#[derive(Debug, Error)]
pub enum OmdError {
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error("particles {i} and {k} (image {image:?}) overlap at t = {t}: r = {r:e}")]
    ParticleOverlap {
        i: usize,
        k: usize,
        image: [i32; 3],
        t: f64,
        r: f64,
    },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

type V3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub x: Vec<V3>,
    pub w: Vec<V3>,
    pub t: f64,
    pub deformation: DeformationMatrix,
}

impl ParticleSystem {
    pub fn new(
        x: Vec<V3>,
        w: Vec<V3>,
        t: f64,
        deformation: DeformationMatrix,
    ) -> Result<Self, OmdError> {
        if x.is_empty() {
            return Err(OmdError::InvalidSystem("no particles".into()));
        }
        if x.len() != w.len() {
            return Err(OmdError::InvalidSystem(format!(
                "{} positions but {} velocities",
                x.len(),
                w.len()
            )));
        }
        deformation.l_at(t)?;
        Ok(Self {
            x,
            w,
            t,
            deformation,
        })
    }

    /// Build from lab-frame velocities `v_i`.
    pub fn from_velocities(
        x: Vec<V3>,
        v: Vec<V3>,
        t: f64,
        deformation: DeformationMatrix,
    ) -> Result<Self, OmdError> {
        let l = deformation.l_at(t)?;
        let w = x.iter().zip(&v).map(|(xi, vi)| vi - l * xi).collect();
        Self::new(x, w, t, deformation)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn velocities(&self) -> Result<Vec<V3>, OmdError> {
        let l = self.deformation.l_at(self.t)?;
        Ok(self.x.iter().zip(&self.w).map(|(x, w)| w + l * x).collect())
    }

    /// Exact free flight over `h`: `v` is conserved, `w` follows the flow map.
    pub fn drift(&mut self, h: f64) -> Result<(), OmdError> {
        let l = self.deformation.l_at(self.t)?;
        let m = self.deformation.flow_map(self.t, self.t + h)?;
        for (x, w) in self.x.iter_mut().zip(self.w.iter_mut()) {
            let v = *w + l * *x;
            *x += v * h;
            *w = m * *w;
        }
        self.t += h;
        Ok(())
    }

    /// Force on a point at `y` from all particles and their images `center + nu`,
    /// skipping the copy `skip`.
    fn field_at(
        &self,
        y: &V3,
        center: [i32; 3],
        skip: Option<(usize, [i32; 3])>,
        images: &[([i32; 3], V3)],
        pot: &PairPotential,
        scaling: Scaling,
    ) -> Result<V3, OmdError> {
        let rc = pot.effective_cutoff(scaling);
        let rmin = potential::OVERLAP_FRACTION * rc;
        let mut f = V3::zeros();
        for (k, xk) in self.x.iter().enumerate() {
            for (n, shift) in images {
                let mu = [n[0] + center[0], n[1] + center[1], n[2] + center[2]];
                if skip == Some((k, mu)) {
                    continue;
                }
                let sep = y - xk - shift;
                let r2 = sep.norm_squared();
                if r2 >= rc * rc {
                    continue;
                }
                let r = r2.sqrt();
                if r < rmin {
                    return Err(OmdError::ParticleOverlap {
                        i: skip.map_or(usize::MAX, |s| s.0),
                        k,
                        image: mu,
                        t: self.t,
                        r,
                    });
                }
                f -= sep * (pot.scaled_derivative(r, scaling) / r);
            }
        }
        Ok(f)
    }

    /// Image shifts `(I + tA)(center + nu)` for `nu` in `{0} ∪ lattice`.
    fn image_shifts(&self, lat: &ImageLattice, center: [i32; 3]) -> Vec<([i32; 3], V3)> {
        let g = self.deformation.gradient(self.t);
        std::iter::once([0, 0, 0])
            .chain(lat.offsets().iter().copied())
            .map(|n| {
                let mu = [n[0] + center[0], n[1] + center[1], n[2] + center[2]];
                (n, g * lat.vector(mu))
            })
            .collect()
    }

    /// Total force on every simulated particle.
    pub fn forces(
        &self,
        pot: &PairPotential,
        lat: &ImageLattice,
        scaling: Scaling,
    ) -> Result<Vec<V3>, OmdError> {
        let images = self.image_shifts(lat, [0, 0, 0]);
        (0..self.len())
            .map(|i| {
                self.field_at(
                    &self.x[i],
                    [0, 0, 0],
                    Some((i, [0, 0, 0])),
                    &images,
                    pot,
                    scaling,
                )
            })
            .collect()
    }

    /// Kinetic energy in `w` plus the interaction energy per cell.
    pub fn energy(&self, pot: &PairPotential, lat: &ImageLattice, scaling: Scaling) -> f64 {
        let images = self.image_shifts(lat, [0, 0, 0]);
        let rc = pot.effective_cutoff(scaling);
        let kinetic: f64 = self.w.iter().map(|w| 0.5 * w.norm_squared()).sum();
        let mut potential = 0.0;
        for (i, xi) in self.x.iter().enumerate() {
            for (k, xk) in self.x.iter().enumerate() {
                for (n, shift) in &images {
                    if i == k && *n == [0, 0, 0] {
                        continue;
                    }
                    let r = (xi - xk - shift).norm();
                    if r < rc {
                        potential += 0.5 * pot.scaled_energy(r, scaling);
                    }
                }
            }
        }
        kinetic + potential
    }

    /// One Strang step: half drift, kick, half drift.
    pub fn step(
        &mut self,
        pot: &PairPotential,
        lat: &ImageLattice,
        dt: f64,
        scaling: Scaling,
    ) -> Result<(), OmdError> {
        self.drift(0.5 * dt)?;
        let f = self.forces(pot, lat, scaling)?;
        for (w, fi) in self.w.iter_mut().zip(&f) {
            *w += fi * dt;
        }
        self.drift(0.5 * dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<V3>,
    pub w: Vec<V3>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    /// Rows `t,particle,x1,x2,x3,w1,w2,w3`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OmdError> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "t,particle,x1,x2,x3,w1,w2,w3")?;
        for s in &self.snapshots {
            for (i, (x, w)) in s.x.iter().zip(&s.w).enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.t, i, x[0], x[1], x[2], w[0], w[1], w[2]
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn snapshot(sys: &ParticleSystem) -> Snapshot {
    Snapshot {
        t: sys.t,
        x: sys.x.clone(),
        w: sys.w.clone(),
    }
}

/// Integrate for `round(horizon / dt)` steps, recording every `stride` steps.
pub fn run(
    sys: &mut ParticleSystem,
    pot: &PairPotential,
    lat: &ImageLattice,
    dt: f64,
    horizon: f64,
    scaling: Scaling,
    stride: usize,
) -> Result<Trajectory, OmdError> {
    let steps = (horizon / dt).round() as usize;
    let stride = stride.max(1);
    let mut traj = Trajectory {
        snapshots: vec![snapshot(sys)],
    };
    for s in 1..=steps {
        sys.step(pot, lat, dt, scaling)?;
        if s % stride == 0 || s == steps {
            traj.snapshots.push(snapshot(sys));
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IndistinguishabilityReport {
    /// sup over steps of `|y(t) - x_i(t) - (I + tA) nu|_inf`.
    pub max_position_deviation: f64,
    /// sup over steps of `|(v(t) - L y(t)) - w_i(t)|_inf`.
    pub max_peculiar_deviation: f64,
    pub steps: usize,
}

impl IndistinguishabilityReport {
    /// Trajectory deviation (positions, max norm).
    pub fn max_deviation(&self) -> f64 {
        self.max_position_deviation
    }
}

/// Follow image `(i, nu)` as an ordinary particle in lab coordinates and
/// compare it with the position and velocity the image rule assigns to it.
///
/// The followed copy feels every other particle of the OMD configuration,
/// with the image sum centred on its own cell, and is advanced by velocity
/// Verlet in step with the OMD integrator.
pub fn verify_indistinguishability(
    sys: &ParticleSystem,
    pot: &PairPotential,
    lat: &ImageLattice,
    dt: f64,
    horizon: f64,
    scaling: Scaling,
    image: (usize, [i32; 3]),
) -> Result<IndistinguishabilityReport, OmdError> {
    let (i, nu) = image;
    if i >= sys.len() {
        return Err(OmdError::InvalidSystem(format!(
            "particle {i} out of range"
        )));
    }
    let def = sys.deformation;
    let nu_vec = lat.vector(nu);
    let mut omd = sys.clone();
    let mut y = omd.x[i] + def.gradient(omd.t) * nu_vec;
    let mut v = omd.w[i] + def.l_at(omd.t)? * y;
    let images = omd.image_shifts(lat, nu);
    let mut a = omd.field_at(&y, nu, Some((i, nu)), &images, pot, scaling)?;
    let steps = (horizon / dt).round() as usize;
    let mut report = IndistinguishabilityReport {
        max_position_deviation: 0.0,
        max_peculiar_deviation: 0.0,
        steps,
    };
    for _ in 0..steps {
        omd.step(pot, lat, dt, scaling)?;
        let v_half = v + a * (0.5 * dt);
        y += v_half * dt;
        let images = omd.image_shifts(lat, nu);
        a = omd.field_at(&y, nu, Some((i, nu)), &images, pot, scaling)?;
        v = v_half + a * (0.5 * dt);

        let expected = omd.x[i] + def.gradient(omd.t) * nu_vec;
        let w_img = v - def.l_at(omd.t)? * y;
        report.max_position_deviation = report.max_position_deviation.max((y - expected).amax());
        report.max_peculiar_deviation =
            report.max_peculiar_deviation.max((w_img - omd.w[i]).amax());
    }
    Ok(report)
}
