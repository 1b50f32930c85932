//! Closed second-moment system of the homo-energetic equation with a BGK
//! relaxation operator `nu (M[rho, theta] - g)`.

use nalgebra::Matrix3;

use super::{BoltzmannError, MomentSeries, Moments};
use crate::deformation::DeformationMatrix;

/// `(d rho / dt, dP / dt)` at time `t`.
pub fn bgk_rhs(
    def: &DeformationMatrix,
    nu: f64,
    t: f64,
    rho: f64,
    p: &Matrix3<f64>,
) -> Result<(f64, Matrix3<f64>), BoltzmannError> {
    let l = def.l_at(t)?;
    let tr = l.trace();
    let theta = p.trace() / (3.0 * rho);
    let dp = -(l * p + p * l.transpose()) - p * tr - (p - Matrix3::identity() * (rho * theta)) * nu;
    Ok((-tr * rho, dp))
}

/// RK4 integration of the moment system, one sample per step.
pub fn bgk_moment_oracle(
    initial: &Moments,
    def: &DeformationMatrix,
    nu: f64,
    dt: f64,
    horizon: f64,
) -> Result<MomentSeries, BoltzmannError> {
    if !(dt > 0.0) || !(horizon >= 0.0) || !(nu >= 0.0) {
        return Err(BoltzmannError::Invalid(format!(
            "dt = {dt}, horizon = {horizon}, nu = {nu}"
        )));
    }
    let n = ((horizon / dt).round() as usize).max(1);
    let h = horizon / n as f64;
    let t0 = initial.t;
    let (mut rho, mut p) = (initial.rho, initial.p);
    let mut out = MomentSeries {
        samples: vec![Moments::from_stress(t0, rho, p)],
    };
    for s in 0..n {
        let t = t0 + s as f64 * h;
        let (r1, p1) = bgk_rhs(def, nu, t, rho, &p)?;
        let (r2, p2) = bgk_rhs(
            def,
            nu,
            t + 0.5 * h,
            rho + 0.5 * h * r1,
            &(p + p1 * (0.5 * h)),
        )?;
        let (r3, p3) = bgk_rhs(
            def,
            nu,
            t + 0.5 * h,
            rho + 0.5 * h * r2,
            &(p + p2 * (0.5 * h)),
        )?;
        let (r4, p4) = bgk_rhs(def, nu, t + h, rho + h * r3, &(p + p3 * h))?;
        rho += h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
        p += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0);
        out.samples
            .push(Moments::from_stress(t0 + (s + 1) as f64 * h, rho, p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn relaxation_without_deformation_is_exponential() {
        let p0 = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, -0.1, 0.0, -0.1, 0.5);
        let m0 = Moments::from_stress(0.0, 1.2, p0);
        let nu = 1.7;
        let s = bgk_moment_oracle(&m0, &DeformationMatrix::zero(), nu, 1e-3, 2.0).unwrap();
        let iso = Matrix3::identity() * (m0.rho * m0.theta);
        for m in &s.samples {
            let exact = iso + (p0 - iso) * (-nu * m.t).exp();
            assert!((m.p - exact).amax() < 1e-8);
        }
    }

    #[test]
    fn energy_balance_holds_along_solution() {
        let def =
            DeformationMatrix::new(Matrix3::new(0.1, 0.8, 0.0, 0.0, -0.2, 0.3, 0.1, 0.0, 0.05))
                .unwrap();
        let m0 = Moments::from_stress(
            0.0,
            1.0,
            Matrix3::from_diagonal(&Vector3::new(1.5, 1.0, 0.8)),
        );
        let s = bgk_moment_oracle(&m0, &def, 3.0, 1e-3, 1.0).unwrap();
        // d(rho e)/dt + (Tr L) rho e + P:L = 0 with e = Tr P / (2 rho)
        for w in s.samples.windows(3).step_by(97) {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let de = (c.rho * c.e - a.rho * a.e) / (c.t - a.t);
            let l = def.l_at(b.t).unwrap();
            let r = de + l.trace() * b.rho * b.e + b.p.component_mul(&l).sum();
            assert!(r.abs() < 1e-6, "{r}");
        }
    }
}
