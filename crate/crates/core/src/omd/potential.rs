//! Short-range pair potentials, shifted to vanish at the cutoff.

use serde::{Deserialize, Serialize};

use super::OmdError;

/// Pairs closer than this fraction of the effective cutoff are an overlap.
pub const OVERLAP_FRACTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    /// `s r^{-alpha}`
    InversePower { alpha: f64, strength: f64 },
    /// `k (r - r0)^2 / 2`
    Harmonic { k: f64, r0: f64 },
    /// `4 depth ((sigma/r)^12 - (sigma/r)^6)`
    TruncatedLj { depth: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPotential {
    pub kind: PotentialKind,
    pub cutoff: f64,
    /// Range parameter used by [`Scaling::Boltzmann`] when built from config.
    pub epsilon_scale: f64,
}

/// How a pair interaction is scaled in the particle dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scaling {
    Unit,
    /// Forces divided by the particle number.
    MeanField {
        n: usize,
    },
    /// `phi(r) = U(r / eps) / eps`, cutoff stretched to `eps * cutoff`.
    Boltzmann {
        epsilon: f64,
    },
}

impl PairPotential {
    pub fn new(kind: PotentialKind, cutoff: f64) -> Result<Self, OmdError> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(OmdError::InvalidPotential(format!(
                "cutoff must be positive, got {cutoff}"
            )));
        }
        match kind {
            PotentialKind::InversePower { alpha, .. } if alpha <= 0.0 => {
                return Err(OmdError::InvalidPotential(format!(
                    "alpha must be positive, got {alpha}"
                )))
            }
            PotentialKind::TruncatedLj { sigma, .. } if sigma <= 0.0 => {
                return Err(OmdError::InvalidPotential(format!(
                    "sigma must be positive, got {sigma}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            cutoff,
            epsilon_scale: 1.0,
        })
    }

    pub fn with_epsilon_scale(mut self, eps: f64) -> Self {
        self.epsilon_scale = eps;
        self
    }

    fn raw_energy(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::InversePower { alpha, strength } => strength * r.powf(-alpha),
            PotentialKind::Harmonic { k, r0 } => 0.5 * k * (r - r0).powi(2),
            PotentialKind::TruncatedLj { depth, sigma } => {
                let s6 = (sigma / r).powi(6);
                4.0 * depth * (s6 * s6 - s6)
            }
        }
    }

    /// Shifted energy `U(r) - U(cutoff)`, zero beyond the cutoff.
    pub fn energy(&self, r: f64) -> f64 {
        if r >= self.cutoff {
            0.0
        } else {
            self.raw_energy(r) - self.raw_energy(self.cutoff)
        }
    }

    /// `dU/dr`, zero beyond the cutoff.
    pub fn derivative(&self, r: f64) -> f64 {
        if r >= self.cutoff {
            return 0.0;
        }
        match self.kind {
            PotentialKind::InversePower { alpha, strength } => {
                -alpha * strength * r.powf(-alpha - 1.0)
            }
            PotentialKind::Harmonic { k, r0 } => k * (r - r0),
            PotentialKind::TruncatedLj { depth, sigma } => {
                let s6 = (sigma / r).powi(6);
                4.0 * depth * (-12.0 * s6 * s6 + 6.0 * s6) / r
            }
        }
    }

    /// `d^2U/dr^2`, zero beyond the cutoff.
    pub fn second_derivative(&self, r: f64) -> f64 {
        if r >= self.cutoff {
            return 0.0;
        }
        match self.kind {
            PotentialKind::InversePower { alpha, strength } => {
                alpha * (alpha + 1.0) * strength * r.powf(-alpha - 2.0)
            }
            PotentialKind::Harmonic { k, .. } => k,
            PotentialKind::TruncatedLj { depth, sigma } => {
                let s6 = (sigma / r).powi(6);
                4.0 * depth * (156.0 * s6 * s6 - 42.0 * s6) / (r * r)
            }
        }
    }

    pub fn effective_cutoff(&self, scaling: Scaling) -> f64 {
        match scaling {
            Scaling::Boltzmann { epsilon } => epsilon * self.cutoff,
            _ => self.cutoff,
        }
    }

    /// Scaled `dphi/dr` at distance `r`.
    pub fn scaled_derivative(&self, r: f64, scaling: Scaling) -> f64 {
        match scaling {
            Scaling::Unit => self.derivative(r),
            Scaling::MeanField { n } => self.derivative(r) / n as f64,
            Scaling::Boltzmann { epsilon } => self.derivative(r / epsilon) / (epsilon * epsilon),
        }
    }

    /// Scaled pair energy at distance `r`.
    pub fn scaled_energy(&self, r: f64, scaling: Scaling) -> f64 {
        match scaling {
            Scaling::Unit => self.energy(r),
            Scaling::MeanField { n } => self.energy(r) / n as f64,
            Scaling::Boltzmann { epsilon } => self.energy(r / epsilon) / epsilon,
        }
    }
}
