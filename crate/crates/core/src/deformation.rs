//! Homogeneous deformations `x -> (I + tA) x` and the associated velocity
//! gradient `L(t) = A (I + tA)^{-1}`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Below this `|det(I + tA)|` the deformation is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;
/// Default horizon scanned when locating the blow-up time.
pub const DEFAULT_SCAN_HORIZON: f64 = 1e3;
const SCAN_SAMPLES: usize = 200_000;
const ROOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeformationError {
    #[error("deformation is singular at t = {t}: det(I + tA) = {det:e}")]
    Singular { t: f64, det: f64 },
    #[error("time {t} is at or beyond the blow-up time {t_star}")]
    PastBlowUp { t: f64, t_star: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("reversed interval [{t0}, {t1}]")]
    ReversedInterval { t0: f64, t1: f64 },
    #[error("non-finite entry in deformation matrix")]
    NonFinite,
}

/// A constant matrix `A` together with its earliest singular time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationMatrix {
    a: Matrix3<f64>,
    t_star: Option<f64>,
    // coefficients of det(I + tA) = 1 + c1 t + c2 t^2 + c3 t^3
    coeffs: [f64; 3],
}

impl DeformationMatrix {
    pub fn new(a: Matrix3<f64>) -> Result<Self, DeformationError> {
        Self::with_scan_horizon(a, DEFAULT_SCAN_HORIZON)
    }

    /// Blow-up times beyond `horizon` are reported as `None`.
    pub fn with_scan_horizon(a: Matrix3<f64>, horizon: f64) -> Result<Self, DeformationError> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(DeformationError::NonFinite);
        }
        let c1 = a.trace();
        let c2 = 0.5 * (c1 * c1 - (a * a).trace());
        let c3 = a.determinant();
        let mut def = Self {
            a,
            t_star: None,
            coeffs: [c1, c2, c3],
        };
        def.t_star = def.find_t_star(horizon);
        Ok(def)
    }

    pub fn from_row_major(entries: &[f64; 9]) -> Result<Self, DeformationError> {
        Self::new(Matrix3::from_row_slice(entries))
    }

    pub fn zero() -> Self {
        Self {
            a: Matrix3::zeros(),
            t_star: None,
            coeffs: [0.0; 3],
        }
    }

    /// `A = K e_1 e_2^T`.
    pub fn simple_shear(k: f64) -> Self {
        let mut a = Matrix3::zeros();
        a[(0, 1)] = k;
        Self {
            a,
            t_star: None,
            coeffs: [0.0; 3],
        }
    }

    pub fn a(&self) -> &Matrix3<f64> {
        &self.a
    }

    pub fn row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = self.a[(r, c)];
            }
        }
        out
    }

    /// Earliest `t > 0` with `det(I + tA) = 0`, if any within the scan horizon.
    pub fn t_star(&self) -> Option<f64> {
        self.t_star
    }

    /// Shear rate `K` when `A` has a single nonzero entry, off the diagonal.
    pub fn shear_rate(&self) -> Option<f64> {
        let nz: Vec<(usize, usize)> = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .filter(|&(r, c)| self.a[(r, c)] != 0.0)
            .collect();
        match nz.as_slice() {
            [(r, c)] if r != c => Some(self.a[(*r, *c)]),
            _ => None,
        }
    }

    pub fn det(&self, t: f64) -> f64 {
        let [c1, c2, c3] = self.coeffs;
        1.0 + t * (c1 + t * (c2 + t * c3))
    }

    fn det_prime(&self, t: f64) -> f64 {
        let [c1, c2, c3] = self.coeffs;
        c1 + t * (2.0 * c2 + 3.0 * t * c3)
    }

    /// `I + tA`.
    pub fn gradient(&self, t: f64) -> Matrix3<f64> {
        Matrix3::identity() + self.a * t
    }

    fn find_t_star(&self, horizon: f64) -> Option<f64> {
        if self.coeffs.iter().all(|&c| c == 0.0) {
            return None;
        }
        let h = horizon / SCAN_SAMPLES as f64;
        let mut t_prev = 0.0;
        let mut p_prev = self.det(0.0);
        let mut d_prev = self.det_prime(0.0);
        for k in 1..=SCAN_SAMPLES {
            let t = k as f64 * h;
            let p = self.det(t);
            if p <= 0.0 {
                return Some(if p == 0.0 {
                    t
                } else {
                    bisect(|s| self.det(s), t_prev, t)
                });
            }
            let d = self.det_prime(t);
            if d_prev < 0.0 && d >= 0.0 {
                // local minimum of a positive cubic: a touching (double) root?
                let tm = bisect(|s| self.det_prime(s), t_prev, t);
                if self.det(tm).abs() <= SINGULAR_DET {
                    return Some(tm);
                }
            }
            t_prev = t;
            p_prev = p;
            d_prev = d;
        }
        let _ = p_prev;
        None
    }

    fn check_time(&self, t: f64) -> Result<(), DeformationError> {
        if t < 0.0 {
            return Err(DeformationError::NegativeTime(t));
        }
        if let Some(ts) = self.t_star {
            if t >= ts {
                return Err(DeformationError::PastBlowUp { t, t_star: ts });
            }
        }
        let det = self.det(t);
        if det.abs() < SINGULAR_DET {
            return Err(DeformationError::Singular { t, det });
        }
        Ok(())
    }

    /// Velocity gradient `L(t) = A (I + tA)^{-1}`.
    pub fn l_at(&self, t: f64) -> Result<Matrix3<f64>, DeformationError> {
        self.check_time(t)?;
        // (I + tA)^T L^T = A^T
        let lu = self.gradient(t).transpose().lu();
        let lt = lu
            .solve(&self.a.transpose())
            .ok_or(DeformationError::Singular {
                t,
                det: self.det(t),
            })?;
        Ok(lt.transpose())
    }

    /// Flow map `M(t0, t1) = (I + t1 A)^{-1} (I + t0 A)` of `dw/dt = -L w`.
    pub fn flow_map(&self, t0: f64, t1: f64) -> Result<Matrix3<f64>, DeformationError> {
        if t1 < t0 {
            return Err(DeformationError::ReversedInterval { t0, t1 });
        }
        self.check_time(t0)?;
        self.check_time(t1)?;
        self.gradient(t1)
            .lu()
            .solve(&self.gradient(t0))
            .ok_or(DeformationError::Singular {
                t: t1,
                det: self.det(t1),
            })
    }

    /// `v = w + L(t) x`.
    pub fn velocity(
        &self,
        x: &Vector3<f64>,
        w: &Vector3<f64>,
        t: f64,
    ) -> Result<Vector3<f64>, DeformationError> {
        Ok(w + self.l_at(t)? * x)
    }

    /// `w = v - L(t) x`.
    pub fn peculiar(
        &self,
        x: &Vector3<f64>,
        v: &Vector3<f64>,
        t: f64,
    ) -> Result<Vector3<f64>, DeformationError> {
        Ok(v - self.l_at(t)? * x)
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo_pos = f(lo) > 0.0;
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == f_lo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
