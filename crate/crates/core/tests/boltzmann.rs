use homokin::boltzmann::{
    bgk_moment_oracle, bgk_rhs, collision_substep, deformation_substep, moments, run_homoenergetic,
    selfsimilar_diagnostic, BoltzmannError, CollisionKernel, KernelKind, MomentSeries, Moments,
    VelocityEnsemble,
};
use homokin::deformation::DeformationMatrix;
use homokin::meanfield::exact_transport;
use homokin::measure::EmpiricalMeasure;
use nalgebra::{Matrix3, Vector3};

type V3 = Vector3<f64>;

fn maxwell(lambda: f64) -> CollisionKernel {
    CollisionKernel::maxwell_with_relaxation_rate(lambda, 1.0, 1.0).unwrap()
}

fn anisotropic() -> Matrix3<f64> {
    Matrix3::new(2.0, 0.6, 0.0, 0.6, 0.8, 0.1, 0.0, 0.1, 0.5)
}

fn deviator(m: &Moments) -> f64 {
    (m.p - Matrix3::identity() * (m.rho * m.theta)).norm()
}

#[test]
fn gaussian_sample_moments() {
    let n = 100_000;
    let ens =
        VelocityEnsemble::gaussian(n, &Matrix3::from_diagonal(&V3::new(2.0, 1.0, 1.0)), 1.0, 3)
            .unwrap();
    let m = moments(&ens);
    let sd = (2.0f64 / n as f64).sqrt();
    assert!(
        (m.theta - 4.0 / 3.0).abs() < 3.0 * 2.0 * sd,
        "theta {}",
        m.theta
    );
    assert!((m.p - Matrix3::from_diagonal(&V3::new(2.0, 1.0, 1.0))).amax() < 3.0 * 2.0 * sd);
    // third moments of a centred Gaussian: sd of q_i is about sqrt(15 * 8 / n)
    assert!(m.q.amax() < 3.0 * (120.0 / n as f64).sqrt());

    let frozen = VelocityEnsemble::new(vec![V3::new(1.0, 2.0, 3.0); 5], 1.0, 0.0, 0).unwrap();
    let m = moments(&frozen);
    assert_eq!(m.theta, 0.0);
    assert_eq!(m.p, Matrix3::zeros());
}

#[test]
fn deformation_substep_is_the_exact_transport_pushforward() {
    let def =
        DeformationMatrix::from_row_major(&[0.2, 1.0, 0.0, 0.0, -0.1, 0.3, 0.1, 0.0, 0.0]).unwrap();
    let mut ens = VelocityEnsemble::gaussian(500, &anisotropic(), 1.0, 8).unwrap();
    let zeros = vec![V3::zeros(); ens.len()];
    let g0 = EmpiricalMeasure::from_phase(&zeros, &ens.w).unwrap();
    deformation_substep(&mut ens, &def, 0.7).unwrap();
    let pushed = exact_transport(&g0, &def, 0.7).unwrap();
    for (i, w) in ens.w.iter().enumerate() {
        assert_eq!(*w, pushed.w(i));
    }
    assert!((ens.number_density - 1.0 / def.det(0.7)).abs() < 1e-14);
}

#[test]
fn maxwellian_is_an_equilibrium() {
    let n = 2000;
    let mut ens = VelocityEnsemble::gaussian(n, &Matrix3::identity(), 1.0, 21).unwrap();
    let k = maxwell(1.0);
    let m0 = moments(&ens);
    let sd = (2.0f64 / n as f64).sqrt();
    for step in 1..=10_000 {
        collision_substep(&mut ens, &k, 0.01).unwrap();
        if step % 1000 == 0 {
            let m = moments(&ens);
            assert!((m.theta - m0.theta).abs() < 1e-12);
            assert!((m.u_w - m0.u_w).amax() < 1e-12);
            assert_eq!(m.rho, m0.rho);
            // diagonal variance about 2 theta^2 / n, off-diagonal theta^2 / n
            assert!(
                deviator(&m) < 4.0 * 3.0 * sd,
                "step {step}: {}",
                deviator(&m)
            );
        }
    }
    assert!(ens.stats.collisions > 50_000);
}

#[test]
fn stress_relaxes_monotonically_and_conserves_energy() {
    for kind in [
        KernelKind::Maxwell { b0: 0.3 },
        KernelKind::HardSphere { diameter: 0.6 },
    ] {
        let k = CollisionKernel::new(kind, 1.0).unwrap();
        let mut ens = VelocityEnsemble::gaussian(50_000, &anisotropic(), 1.0, 4).unwrap();
        let series =
            run_homoenergetic(&mut ens, &DeformationMatrix::zero(), &k, 0.05, 4.0, 2).unwrap();
        let e0 = series.samples[0].e;
        let noise = 5.0 * series.samples[0].theta * (2.0 / 50_000f64).sqrt();
        for p in series.samples.windows(2) {
            assert!((p[1].e - e0).abs() <= 1e-12 * e0);
            if deviator(&p[0]) > noise {
                assert!(
                    deviator(&p[1]) < deviator(&p[0]),
                    "{kind:?} at t = {}",
                    p[1].t
                );
            }
        }
        assert!(deviator(series.samples.last().unwrap()) < 0.1 * deviator(&series.samples[0]));
        assert!(ens.stats.max_momentum_error <= 1e-12 && ens.stats.max_energy_error <= 1e-12);
    }
}

#[test]
fn mean_peculiar_velocity_stays_within_noise() {
    let n = 20_000;
    let mut ens = VelocityEnsemble::gaussian(n, &Matrix3::identity(), 1.0, 6).unwrap();
    let series = run_homoenergetic(
        &mut ens,
        &DeformationMatrix::simple_shear(1.0),
        &maxwell(1.0),
        0.1,
        3.0,
        1,
    )
    .unwrap();
    for m in &series.samples {
        for i in 0..3 {
            let sd = (m.p[(i, i)] / m.rho / n as f64).sqrt();
            assert!(m.u_w[i].abs() < 3.0 * sd * 1.5, "t = {}: {:?}", m.t, m.u_w);
        }
    }
}

#[test]
fn shear_stress_opposes_shear_in_dsmc_and_bgk() {
    let def = DeformationMatrix::simple_shear(1.0);
    let lambda = 1.0;
    let mut ens = VelocityEnsemble::gaussian(100_000, &Matrix3::identity(), 1.0, 12).unwrap();
    let dsmc = run_homoenergetic(&mut ens, &def, &maxwell(lambda), 0.05, 3.0, 10).unwrap();
    let bgk = bgk_moment_oracle(&Moments::ideal(0.0, 1.0, 1.0), &def, lambda, 0.005, 3.0).unwrap();
    for m in dsmc.samples.iter().skip(1) {
        assert!(m.p[(0, 1)] < 0.0, "dsmc P12 at t = {}", m.t);
        let b = bgk
            .samples
            .iter()
            .find(|b| (b.t - m.t).abs() < 1e-9)
            .unwrap();
        assert!(b.p[(0, 1)] < 0.0);
        // Maxwell molecules: same stress to Monte Carlo accuracy
        assert!(
            (m.normalized_stress() - b.normalized_stress()).amax() < 0.03,
            "t = {}",
            m.t
        );
    }
}

#[test]
fn bgk_moment_system_matches_kinetic_quadrature() {
    // moments of  d_t g = (L w) . grad g + nu (M - g)  for a Gaussian g, by brute-force quadrature
    let def = DeformationMatrix::from_row_major(&[0.3, 0.8, 0.0, -0.2, 0.1, 0.4, 0.0, 0.5, -0.2])
        .unwrap();
    let (t, nu, rho) = (0.4, 1.7, 1.3);
    let c = anisotropic();
    let l = def.l_at(t).unwrap();
    let ci = c.try_inverse().unwrap();
    let norm = rho / ((2.0 * std::f64::consts::PI).powf(1.5) * c.determinant().sqrt());
    let theta = c.trace() / 3.0;
    let gauss = |w: &V3| norm * (-0.5 * w.dot(&(ci * w))).exp();
    let maxw = |w: &V3| {
        rho / (2.0 * std::f64::consts::PI * theta).powf(1.5)
            * (-0.5 * w.norm_squared() / theta).exp()
    };
    let (h, half) = (0.15, 90i32);
    let (mut d_rho, mut d_p) = (0.0, Matrix3::zeros());
    for i in -half..=half {
        for j in -half..=half {
            for k in -half..=half {
                let w = V3::new(i as f64, j as f64, k as f64) * h;
                let g = gauss(&w);
                let grad = -(ci * w) * g;
                let rhs = (l * w).dot(&grad) + nu * (maxw(&w) - g);
                d_rho += rhs;
                d_p += w * w.transpose() * rhs;
            }
        }
    }
    let vol = h * h * h;
    let (r, p) = bgk_rhs(&def, nu, t, rho, &(c * rho)).unwrap();
    assert!((d_rho * vol - r).abs() < 1e-8, "{} vs {r}", d_rho * vol);
    assert!((d_p * vol - p).amax() < 1e-8, "{} vs {p}", d_p * vol);
}

#[test]
fn zero_shear_keeps_temperature() {
    let mut ens = VelocityEnsemble::gaussian(10_000, &anisotropic(), 1.0, 2).unwrap();
    let s = run_homoenergetic(
        &mut ens,
        &DeformationMatrix::zero(),
        &maxwell(2.0),
        0.1,
        5.0,
        5,
    )
    .unwrap();
    let th0 = s.samples[0].theta;
    assert!(s
        .samples
        .iter()
        .all(|m| (m.theta - th0).abs() <= 1e-12 * th0));
    assert!(matches!(
        selfsimilar_diagnostic(&s),
        Err(BoltzmannError::InsufficientGrowth { .. })
    ));
}

#[test]
fn shear_heats_the_gas() {
    let mut ens = VelocityEnsemble::gaussian(20_000, &Matrix3::identity(), 1.0, 5).unwrap();
    let s = run_homoenergetic(
        &mut ens,
        &DeformationMatrix::simple_shear(1.0),
        &maxwell(1.0),
        0.1,
        4.0,
        1,
    )
    .unwrap();
    let th = s.thetas();
    let tt = s.times();
    let fit = homokin::stats::linear_fit(&tt[10..], &th[10..]).unwrap();
    assert!(fit.slope > 0.0 && th.last().unwrap() > &th[0]);
}

#[test]
fn moment_csv_round_trip() {
    let mut ens = VelocityEnsemble::gaussian(1000, &anisotropic(), 1.0, 1).unwrap();
    let s = run_homoenergetic(
        &mut ens,
        &DeformationMatrix::simple_shear(0.5),
        &maxwell(1.0),
        0.1,
        1.0,
        2,
    )
    .unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,rho,theta,e,P11,P12,P13,P22,P23,P33,q1,q2,q3\n"));
    let back = MomentSeries::read_csv(&buf[..]).unwrap();
    assert_eq!(back.samples.len(), s.samples.len());
    for (a, b) in back.samples.iter().zip(&s.samples) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.p, b.p);
        assert_eq!(a.theta, b.theta);
    }
}
