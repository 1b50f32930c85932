use approx::assert_abs_diff_eq;
use homokin::deformation::{DeformationError, DeformationMatrix};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = [f64; 9]> {
    prop::array::uniform9(-1.0f64..1.0)
}

/// Largest time we probe: 0.9 t_star, or `cap` when there is no blow-up.
fn horizon(def: &DeformationMatrix, cap: f64) -> f64 {
    def.t_star().map_or(cap, |ts| (0.9 * ts).min(cap))
}

fn rk4_propagator(def: &DeformationMatrix, t1: f64, n: usize) -> Matrix3<f64> {
    // columns of M(0, t) solve w' = -L(t) w
    let h = t1 / n as f64;
    let f = |t: f64, m: &Matrix3<f64>| -(def.l_at(t).unwrap() * m);
    let mut m = Matrix3::identity();
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = f(t, &m);
        let k2 = f(t + h / 2.0, &(m + k1 * (h / 2.0)));
        let k3 = f(t + h / 2.0, &(m + k2 * (h / 2.0)));
        let k4 = f(t + h, &(m + k3 * h));
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    m
}

#[test]
fn hand_examples() {
    let shear = DeformationMatrix::simple_shear(1.0);
    assert_eq!(shear.l_at(5.0).unwrap(), *shear.a());
    assert_eq!(shear.det(3.7), 1.0);
    assert_eq!(shear.t_star(), None);
    let m = shear.flow_map(0.0, 0.4).unwrap();
    assert_abs_diff_eq!(m, Matrix3::identity() - shear.a() * 0.4, epsilon = 1e-15);

    let id = DeformationMatrix::new(Matrix3::identity()).unwrap();
    assert_abs_diff_eq!(
        id.l_at(1.0).unwrap(),
        Matrix3::identity() * 0.5,
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(id.det(1.0), 8.0, epsilon = 1e-14);
    assert_abs_diff_eq!(
        id.flow_map(0.0, 1.0).unwrap(),
        Matrix3::identity() * 0.5,
        epsilon = 1e-15
    );
    assert_eq!(id.flow_map(0.3, 0.3).unwrap(), Matrix3::identity());

    let zero = DeformationMatrix::zero();
    assert_eq!(zero.l_at(12.0).unwrap(), Matrix3::zeros());

    let neg = DeformationMatrix::new(-Matrix3::identity()).unwrap();
    assert_abs_diff_eq!(neg.t_star().unwrap(), 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(neg.det(0.999), 1e-9, epsilon = 1e-15);
    assert!(matches!(
        neg.l_at(1.5),
        Err(DeformationError::PastBlowUp { .. })
    ));
    assert!(matches!(
        neg.flow_map(0.5, 0.2),
        Err(DeformationError::ReversedInterval { .. })
    ));
}

#[test]
fn peculiar_and_lab_velocities_invert() {
    let def = DeformationMatrix::from_row_major(&[0.3, 0.5, 0.0, -0.2, 0.1, 0.4, 0.0, 0.0, -0.3])
        .unwrap();
    let x = Vector3::new(0.2, -1.0, 0.7);
    let w = Vector3::new(1.5, 0.1, -0.4);
    let v = def.velocity(&x, &w, 0.8).unwrap();
    assert_abs_diff_eq!(def.peculiar(&x, &v, 0.8).unwrap(), w, epsilon = 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn l_inverts_the_gradient(a in matrix(), fr in prop::array::uniform10(0.0f64..1.0)) {
        let def = DeformationMatrix::from_row_major(&a).unwrap();
        let tmax = horizon(&def, 10.0);
        for f in fr {
            let t = f * tmax;
            let r = def.l_at(t).unwrap() * def.gradient(t) - def.a();
            prop_assert!(r.amax() <= 1e-12, "t = {t}, residual {}", r.amax());
        }
    }

    #[test]
    fn flow_maps_compose(a in matrix(), f in prop::array::uniform3(0.0f64..1.0)) {
        let def = DeformationMatrix::from_row_major(&a).unwrap();
        let mut s = f.map(|v| v * horizon(&def, 5.0));
        s.sort_by(f64::total_cmp);
        let direct = def.flow_map(s[0], s[2]).unwrap();
        let composed = def.flow_map(s[1], s[2]).unwrap() * def.flow_map(s[0], s[1]).unwrap();
        prop_assert!((direct - composed).amax() <= 1e-10 * direct.amax().max(1.0));
    }

    #[test]
    fn log_det_derivative_is_trace_l(a in matrix(), f in 0.05f64..0.95) {
        let def = DeformationMatrix::from_row_major(&a).unwrap();
        let t = f * horizon(&def, 5.0);
        let h = 1e-5 * horizon(&def, 5.0);
        let fd = (def.det(t + h).ln() - def.det(t - h).ln()) / (2.0 * h);
        let tr = def.l_at(t).unwrap().trace();
        prop_assert!((fd - tr).abs() <= 1e-6 * tr.abs().max(1.0), "fd {fd} vs trace {tr}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn riccati_residual_is_second_order(a in matrix(), f in 0.1f64..0.5) {
        let def = DeformationMatrix::from_row_major(&a).unwrap();
        let scale = horizon(&def, 2.0);
        let t = f * scale;
        let err = |h: f64| {
            let dl = (def.l_at(t + h).unwrap() - def.l_at(t - h).unwrap()) / (2.0 * h);
            let l = def.l_at(t).unwrap();
            (dl + l * l).amax()
        };
        let h = 0.02 * scale;
        let (e1, e2) = (err(h), err(h / 2.0));
        if e1 > 1e-9 {
            let ratio = e1 / e2;
            prop_assert!((3.5..4.5).contains(&ratio), "ratio {ratio} (errors {e1}, {e2})");
        } else {
            prop_assert!(e2 <= 1e-9);
        }
    }

    #[test]
    fn flow_map_solves_the_peculiar_ode(a in matrix()) {
        let def = DeformationMatrix::from_row_major(&a).unwrap();
        prop_assume!(def.t_star().is_none_or(|ts| ts > 4.0));
        let rk = rk4_propagator(&def, 2.0, 2000);
        let exact = def.flow_map(0.0, 2.0).unwrap();
        prop_assert!((rk - exact).amax() <= 1e-8, "deviation {}", (rk - exact).amax());
    }
}
