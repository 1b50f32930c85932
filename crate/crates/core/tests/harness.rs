use std::path::Path;
use std::process::Command;

use homokin::harness::{
    self, compare, Arm, ArmData, ExperimentConfig, HarnessError, Level, MetricKind,
};

const HYDRO: &str = r#"
level = "hydro"
dt = 0.01
horizon = 1.0
stride = 5
seeds = [0]
output_dir = "unused"

[deformation]
A = [0.5, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, -0.1]

[hydro]
rho0 = 1.0
theta0 = 1.0
"#;

const DSMC: &str = r#"
level = "dsmc"
dt = 0.1
horizon = 1.0
seeds = [3, 4]
output_dir = "unused"

[deformation]
A = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]

[dsmc]
n_particles = 2000
knudsen = 1.0

[dsmc.kernel]
kind = "hard_sphere"
diameter = 0.5
"#;

const TRANSPORT: &str = r#"
level = "compare"
dt = 0.01
horizon = 1.5
seeds = [9]
output_dir = "unused"

[deformation]
A = [0.2, 1.0, 0.0, 0.0, -0.1, 0.3, 0.1, 0.0, 0.0]

[meanfield]
study = "evolve"
n_particles = 64

[compare]
arm_a = "exact_transport"
arm_b = "deformation_substep"
metric = "w1"
tolerance = 1e-10
"#;

fn config(text: &str, dir: &Path, extra: &[&str]) -> ExperimentConfig {
    let mut sets: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    sets.push(format!("output_dir=\"{}\"", dir.display()));
    ExperimentConfig::from_toml_str(text, &sets).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn runs_are_deterministic() {
    for text in [HYDRO, DSMC, TRANSPORT] {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let a = harness::run(&config(text, d1.path(), &[])).unwrap();
        let b = harness::run(&config(text, d2.path(), &[])).unwrap();
        assert_eq!(a.manifest.artifacts, b.manifest.artifacts);
        assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
        assert_eq!(a.manifest.seeds, b.manifest.seeds);
        assert_eq!(a.comparison, b.comparison);
        for name in &a.manifest.artifacts {
            if name == "config.toml" {
                continue;
            }
            assert_eq!(
                read(d1.path(), name),
                read(d2.path(), name),
                "{name} differs"
            );
        }
        assert!(d1.path().join("manifest.json").exists());
    }
}

#[test]
fn dsmc_run_writes_per_seed_and_mean_moments() {
    let d = tempfile::tempdir().unwrap();
    let out = harness::run(&config(DSMC, d.path(), &[])).unwrap();
    for name in [
        "moments_seed3.csv",
        "moments_seed4.csv",
        "moments_mean.csv",
        "residual.csv",
        "config.toml",
    ] {
        assert!(
            out.manifest.artifacts.iter().any(|a| a == name),
            "{name} missing"
        );
    }
    let mean = String::from_utf8(read(d.path(), "moments_mean.csv")).unwrap();
    assert_eq!(mean.lines().count(), 12);
    // hard spheres conserve energy to rounding, so residuals are pure finite-difference error
    let res = String::from_utf8(read(d.path(), "residual.csv")).unwrap();
    assert_eq!(res.lines().next(), Some("t,r1,r3"));
}

#[test]
fn written_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(DSMC, d.path(), &[]);
    harness::run(&cfg).unwrap();
    let text = std::fs::read_to_string(d.path().join("config.toml")).unwrap();
    let back = ExperimentConfig::from_toml_str(&text, &[]).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(
        ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), &[]).unwrap(),
        cfg
    );
}

#[test]
fn overrides_reach_nested_fields() {
    let cfg = ExperimentConfig::from_toml_str(
        DSMC,
        &[
            "dsmc.n_particles=500".into(),
            "dsmc.kernel.diameter=0.25".into(),
            "level=\"hydro\"".into(),
        ],
    )
    .unwrap();
    let dc = cfg.dsmc.as_ref().unwrap();
    assert_eq!(dc.n_particles, 500);
    assert_eq!(cfg.level, Some(Level::Hydro));
    assert_ne!(
        cfg.hash(),
        ExperimentConfig::from_toml_str(DSMC, &[]).unwrap().hash()
    );
    assert!(ExperimentConfig::from_toml_str(DSMC, &["no_equals_sign".into()]).is_err());
}

#[test]
fn invalid_configurations_are_rejected() {
    let bad_key = ExperimentConfig::from_toml_str(DSMC, &["dsmc.particles=10".into()]);
    assert!(matches!(bad_key, Err(HarnessError::Config(_))));

    let d = tempfile::tempdir().unwrap();
    // A = -I blows up at t = 1
    let past = config(
        HYDRO,
        d.path(),
        &["deformation.A=[-1.0,0,0,0,-1.0,0,0,0,-1.0]", "horizon=1.5"],
    );
    assert!(past.validate().is_err());
    let missing = config(HYDRO, d.path(), &["level=\"dsmc\""]);
    assert!(matches!(missing.validate(), Err(HarnessError::Config(m)) if m.contains("dsmc")));
    for set in ["dt=0.0", "stride=0", "seeds=[]", "horizon=-1.0"] {
        assert!(config(HYDRO, d.path(), &[set]).validate().is_err(), "{set}");
    }
    let wrong_metric = config(TRANSPORT, d.path(), &["compare.metric=\"sup_rel_dev\""]);
    assert!(wrong_metric.validate().is_err());
    // nothing is written for a rejected configuration
    assert!(harness::run(&past).is_err());
    assert!(!d.path().join("manifest.json").exists());
}

#[test]
fn identical_arms_have_zero_deviation() {
    let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let y: Vec<f64> = t.iter().map(|s| 1.0 + s * s).collect();
    let arm = |name: &str| Arm {
        name: name.into(),
        data: ArmData::Scalar {
            t: t.clone(),
            y: y.clone(),
        },
    };
    let r = compare(&arm("a"), &arm("b"), MetricKind::SupRelDev, 0.0).unwrap();
    assert!(r.pass && r.max_deviation == 0.0 && r.points == 50);
    assert!(compare(&arm("a"), &arm("b"), MetricKind::W1, 1.0).is_err());
}

#[test]
fn exact_transport_matches_repeated_substeps() {
    let d = tempfile::tempdir().unwrap();
    let out = harness::run(&config(TRANSPORT, d.path(), &[])).unwrap();
    let r = out.comparison.unwrap();
    assert!(r.pass && r.max_deviation <= 1e-10, "{r:?}");
    assert_eq!(r.points, 64);
    let json: serde_json::Value =
        serde_json::from_slice(&read(d.path(), "comparison.json")).unwrap();
    assert_eq!(json["provenance"]["seeds"], serde_json::json!([9]));
    assert_eq!(
        json["provenance"]["config_hash"],
        serde_json::json!(out.manifest.config_hash)
    );
}

#[test]
fn euler_and_navier_stokes_agree_at_small_knudsen() {
    let text = format!(
        "{HYDRO}\n[compare]\narm_a = \"euler\"\narm_b = \"navier_stokes\"\nmetric = \"sup_rel_dev\"\ntolerance = 0.05\n"
    )
    .replace("level = \"hydro\"", "level = \"compare\"");
    let d = tempfile::tempdir().unwrap();
    let visc = [
        "hydro.viscosity.mu0=1.0",
        "hydro.viscosity.omega_exp=1.0",
        "hydro.viscosity.epsilon=0.1",
    ];
    let out = harness::run(&config(&text, d.path(), &visc)).unwrap();
    let r = out.comparison.unwrap();
    assert!(r.pass && r.max_deviation > 0.0, "{r:?}");
    assert!(
        d.path().join("arm_euler.csv").exists() && d.path().join("arm_navier_stokes.csv").exists()
    );
}

fn cli(level: &str, cfg: &Path, sets: &[&str]) -> Option<i32> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_homokin"));
    cmd.arg(level).arg("--config").arg(cfg);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap().status.code()
}

#[test]
fn cli_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let file = d.path().join("transport.toml");
    let out_dir = format!("output_dir=\"{}\"", d.path().join("out").display());
    std::fs::write(&file, TRANSPORT).unwrap();
    assert_eq!(cli("compare", &file, &[&out_dir]), Some(0));
    assert!(d.path().join("out/manifest.json").exists());
    // a substep grid that misses the horizon by construction cannot meet 1e-10
    assert_eq!(cli("compare", &file, &[&out_dir, "dt=0.4"]), Some(2));
    assert_eq!(cli("compare", &file, &[&out_dir, "bogus=1"]), Some(1));
    assert_eq!(cli("hydro", &file, &[&out_dir]), Some(1));
    assert_eq!(cli("compare", &d.path().join("absent.toml"), &[]), Some(1));
}
