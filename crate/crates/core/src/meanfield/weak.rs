//! Weak form of the mean-field equation tested against smooth functions.

use nalgebra::Vector3;

use super::{particle_forces, MeanFieldError};
use crate::deformation::DeformationMatrix;
use crate::measure::{EmpiricalMeasure, Point};
use crate::omd::potential::PairPotential;

pub trait TestFunction {
    fn value(&self, p: &Point) -> f64;
    fn gradient(&self, p: &Point) -> Point;
}

/// `exp(1 - 1 / (1 - |p - c|^2 / R^2))` inside the ball, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
}

impl Bump {
    fn s(&self, p: &Point) -> f64 {
        p.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (self.radius * self.radius)
    }
}

impl TestFunction for Bump {
    fn value(&self, p: &Point) -> f64 {
        let s = self.s(p);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }

    fn gradient(&self, p: &Point) -> Point {
        let s = self.s(p);
        if s >= 1.0 {
            return [0.0; 6];
        }
        let f = self.value(p) * (-1.0 / (1.0 - s).powi(2)) * 2.0 / (self.radius * self.radius);
        std::array::from_fn(|k| f * (p[k] - self.center[k]))
    }
}

/// `<g, phi>`.
pub fn weak_form_pairing<T: TestFunction + ?Sized>(m: &EmpiricalMeasure, phi: &T) -> f64 {
    m.points()
        .iter()
        .zip(m.weights())
        .map(|(p, w)| w * phi.value(p))
        .sum()
}

/// `<g, grad_x phi . (w + L x) + grad_w phi . (E[g] - L w)>` at time `t`.
pub fn weak_form_rhs<T: TestFunction + ?Sized>(
    m: &EmpiricalMeasure,
    pot: Option<&PairPotential>,
    def: &DeformationMatrix,
    t: f64,
    phi: &T,
) -> Result<f64, MeanFieldError> {
    let l = def.l_at(t)?;
    let xs: Vec<Vector3<f64>> = (0..m.len()).map(|i| m.x(i)).collect();
    let mut f = vec![Vector3::zeros(); m.len()];
    particle_forces(&xs, m.weights(), pot, &mut f);
    let mut total = 0.0;
    for (i, fi) in f.iter().enumerate() {
        let g = phi.gradient(&m.points()[i]);
        let (x, w) = (m.x(i), m.w(i));
        let dx = w + l * x;
        let dw = fi - l * w;
        total += m.weights()[i]
            * (g[0] * dx[0]
                + g[1] * dx[1]
                + g[2] * dx[2]
                + g[3] * dw[0]
                + g[4] * dw[1]
                + g[5] * dw[2]);
    }
    Ok(total)
}
