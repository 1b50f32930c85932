use approx::assert_abs_diff_eq;
use homokin::deformation::DeformationMatrix;
use homokin::omd::{self, ImageLattice, PairPotential, ParticleSystem, PotentialKind, Scaling};
use nalgebra::Vector3;
use proptest::prelude::*;

type V3 = Vector3<f64>;

fn harmonic() -> PairPotential {
    PairPotential::new(PotentialKind::Harmonic { k: 1.0, r0: 0.3 }, 10.0).unwrap()
}

fn lj() -> PairPotential {
    PairPotential::new(
        PotentialKind::TruncatedLj {
            depth: 1.0,
            sigma: 0.3,
        },
        0.75,
    )
    .unwrap()
}

/// RK4 on `x' = w + L x`, `w' = -L w`.
fn rk4_free(def: &DeformationMatrix, x: V3, w: V3, t1: f64, n: usize) -> (V3, V3) {
    let h = t1 / n as f64;
    let f = |t: f64, x: &V3, w: &V3| {
        let l = def.l_at(t).unwrap();
        (w + l * x, -(l * w))
    };
    let (mut x, mut w) = (x, w);
    for k in 0..n {
        let t = k as f64 * h;
        let (a1, b1) = f(t, &x, &w);
        let (a2, b2) = f(t + h / 2.0, &(x + a1 * (h / 2.0)), &(w + b1 * (h / 2.0)));
        let (a3, b3) = f(t + h / 2.0, &(x + a2 * (h / 2.0)), &(w + b2 * (h / 2.0)));
        let (a4, b4) = f(t + h, &(x + a3 * h), &(w + b3 * h));
        x += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        w += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
    }
    (x, w)
}

#[test]
fn harmonic_pair_at_rest_length_feels_no_force() {
    let sys = ParticleSystem::new(
        vec![V3::zeros(), V3::new(0.3, 0.0, 0.0)],
        vec![V3::zeros(); 2],
        0.0,
        DeformationMatrix::zero(),
    )
    .unwrap();
    let f = sys
        .forces(&harmonic(), &ImageLattice::new(0), Scaling::Unit)
        .unwrap();
    assert!(f[0].norm() < 1e-15 && f[1].norm() < 1e-15);
}

#[test]
fn inverse_power_force_magnitude() {
    let pot = PairPotential::new(
        PotentialKind::InversePower {
            alpha: 2.0,
            strength: 1.0,
        },
        10.0,
    )
    .unwrap();
    let sys = ParticleSystem::new(
        vec![V3::zeros(), V3::new(0.0, 2.0, 0.0)],
        vec![V3::zeros(); 2],
        0.0,
        DeformationMatrix::zero(),
    )
    .unwrap();
    let f = sys
        .forces(&pot, &ImageLattice::new(0), Scaling::Unit)
        .unwrap();
    // repulsive: particle 0 is pushed away from particle 1
    assert_abs_diff_eq!(f[0], V3::new(0.0, -0.25, 0.0), epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], V3::new(0.0, 0.25, 0.0), epsilon = 1e-15);
}

#[test]
fn lattice_symmetry_cancels_image_forces() {
    let pot = PairPotential::new(
        PotentialKind::InversePower {
            alpha: 3.0,
            strength: 0.5,
        },
        5.0,
    )
    .unwrap();
    let sys = ParticleSystem::new(
        vec![V3::new(0.3, 0.1, 0.7)],
        vec![V3::zeros()],
        0.0,
        DeformationMatrix::simple_shear(0.7),
    )
    .unwrap();
    for extent in 1..=2 {
        let f = sys
            .forces(&pot, &ImageLattice::new(extent), Scaling::Unit)
            .unwrap();
        assert!(f[0].amax() < 1e-12, "extent {extent}: {:?}", f[0]);
    }
}

#[test]
fn free_shear_hand_example() {
    let mut sys = ParticleSystem::new(
        vec![V3::zeros()],
        vec![V3::new(0.0, 1.0, 0.0)],
        0.0,
        DeformationMatrix::simple_shear(1.0),
    )
    .unwrap();
    let pot = harmonic();
    let lat = ImageLattice::new(0);
    for _ in 0..10 {
        sys.step(&pot, &lat, 0.1, Scaling::Unit).unwrap();
    }
    assert_abs_diff_eq!(sys.w[0], V3::new(-1.0, 1.0, 0.0), epsilon = 1e-14);
}

#[test]
fn zero_force_indistinguishability_is_exact() {
    let def = DeformationMatrix::simple_shear(0.5);
    let sys = ParticleSystem::new(
        vec![V3::new(0.1, 0.2, 0.3), V3::new(0.6, 0.5, 0.4)],
        vec![V3::new(0.1, -0.2, 0.05), V3::new(-0.1, 0.2, -0.05)],
        0.0,
        def,
    )
    .unwrap();
    // cutoff below every pair distance: no forces anywhere
    let pot = PairPotential::new(PotentialKind::Harmonic { k: 1.0, r0: 0.0 }, 0.05).unwrap();
    let r = omd::verify_indistinguishability(
        &sys,
        &pot,
        &ImageLattice::new(1),
        1e-3,
        1.0,
        Scaling::Unit,
        (1, [0, 1, 1]),
    )
    .unwrap();
    assert!(
        r.max_position_deviation <= 1e-10 && r.max_peculiar_deviation <= 1e-10,
        "{r:?}"
    );
}

#[test]
fn images_share_peculiar_velocity_along_a_run() {
    let def = DeformationMatrix::from_row_major(&[0.1, 0.5, 0.0, 0.0, -0.05, 0.0, 0.2, 0.0, 0.0])
        .unwrap();
    let mut sys = ParticleSystem::new(
        vec![
            V3::new(0.1, 0.2, 0.3),
            V3::new(0.6, 0.5, 0.4),
            V3::new(0.3, 0.8, 0.6),
        ],
        vec![
            V3::new(0.1, -0.2, 0.05),
            V3::new(-0.1, 0.2, -0.05),
            V3::new(0.0, 0.0, 0.1),
        ],
        0.0,
        def,
    )
    .unwrap();
    let lat = ImageLattice::new(1);
    let pot = lj();
    for _ in 0..200 {
        sys.step(&pot, &lat, 1e-3, Scaling::Unit).unwrap();
        let l = def.l_at(sys.t).unwrap();
        let v = sys.velocities().unwrap();
        for (i, vi) in v.iter().enumerate() {
            for &nu in lat.offsets() {
                let x_img = sys.x[i] + def.gradient(sys.t) * lat.vector(nu);
                let v_img = def.velocity(&x_img, &sys.w[i], sys.t).unwrap();
                let rel = (v_img - vi) - l * (x_img - sys.x[i]);
                assert!(rel.amax() <= 1e-10);
                assert!((def.peculiar(&x_img, &v_img, sys.t).unwrap() - sys.w[i]).amax() <= 1e-12);
            }
        }
    }
}

fn energy_drift(dt: f64) -> f64 {
    let mut sys = ParticleSystem::new(
        vec![
            V3::new(0.1, 0.1, 0.1),
            V3::new(0.5, 0.45, 0.5),
            V3::new(0.2, 0.6, 0.8),
        ],
        vec![
            V3::new(0.4, 0.0, -0.2),
            V3::new(-0.2, 0.2, 0.0),
            V3::new(0.0, -0.1, 0.2),
        ],
        0.0,
        DeformationMatrix::zero(),
    )
    .unwrap();
    let (pot, lat) = (lj(), ImageLattice::new(1));
    let e0 = sys.energy(&pot, &lat, Scaling::Unit);
    let steps = (1.0 / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        sys.step(&pot, &lat, dt, Scaling::Unit).unwrap();
        worst = worst.max((sys.energy(&pot, &lat, Scaling::Unit) - e0).abs());
    }
    worst
}

#[test]
fn energy_error_is_second_order_without_deformation() {
    let (e1, e2) = (energy_drift(2e-3), energy_drift(1e-3));
    let ratio = e1 / e2;
    assert!(
        (3.5..4.5).contains(&ratio),
        "energy errors {e1}, {e2}, ratio {ratio}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_flight_matches_rk4(a in prop::array::uniform9(-0.5f64..0.5), x in prop::array::uniform3(-1.0f64..1.0), w in prop::array::uniform3(-1.0f64..1.0)) {
        let def = DeformationMatrix::from_row_major(&a).unwrap();
        prop_assume!(def.t_star().is_none_or(|ts| ts > 2.0));
        let (x0, w0) = (V3::from(x), V3::from(w));
        let mut sys = ParticleSystem::new(vec![x0], vec![w0], 0.0, def).unwrap();
        let pot = PairPotential::new(PotentialKind::Harmonic { k: 1.0, r0: 0.0 }, 1.0).unwrap();
        let lat = ImageLattice::new(0);
        for _ in 0..37 {
            sys.step(&pot, &lat, 1.0 / 37.0, Scaling::Unit).unwrap();
        }
        let (xr, wr) = rk4_free(&def, x0, w0, 1.0, 1000);
        prop_assert!((sys.x[0] - xr).amax() <= 1e-8 && (sys.w[0] - wr).amax() <= 1e-8);
        prop_assert!((sys.w[0] - def.flow_map(0.0, 1.0).unwrap() * w0).amax() <= 1e-12);
    }
}
