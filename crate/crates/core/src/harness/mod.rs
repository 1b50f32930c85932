//! Experiment harness: load a configuration, run one level, write CSV/JSON
//! artifacts and a manifest, and compare observables across levels.

pub mod compare;
pub mod config;

use std::fs::File;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::Vector3;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;
use thiserror::Error;

use crate::boltzmann::{
    self, bgk_moment_oracle, deformation_substep, run_homoenergetic, selfsimilar_diagnostic,
    BoltzmannError, MomentSeries, Moments, VelocityEnsemble,
};
use crate::deformation::{DeformationError, DeformationMatrix};
use crate::hydro::{
    self, calibrate_viscosity, conservation_residual, HydroError, HydroSeries, HydroState,
    ViscosityLaw,
};
use crate::meanfield::{
    convergence_study, evolve_particles, exact_transport, stability_check, ConvergenceConfig,
    MeanFieldError, ProbeSpec, Reference,
};
use crate::measure::{join, EmpiricalMeasure, MeasureError};
use crate::omd::{self, ImageLattice, OmdError, ParticleSystem, Scaling};
use crate::rng::{self, Rng};

pub use compare::{compare, Arm, ArmData, ComparisonReport, Provenance};
pub use config::{ArmKind, ExperimentConfig, Level, MetricKind};

use config::{MeanfieldConfig, MeanfieldStudy, ReferenceConfig, ScalingConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("time grids overlap on only {:.0}% of the longer span", overlap * 100.0)]
    GridMismatch { overlap: f64 },
    #[error(transparent)]
    Deformation(#[from] DeformationError),
    #[error(transparent)]
    Omd(#[from] OmdError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Boltzmann(#[from] BoltzmannError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub level: Level,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub wall_time_seconds: f64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub comparison: Option<ComparisonReport>,
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Writer {
    fn create(&mut self, name: &str) -> Result<File, HarnessError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|source| HarnessError::Io { path, source })?;
        self.artifacts.push(name.to_string());
        Ok(f)
    }

    fn io<T>(&self, name: &str, r: std::io::Result<T>) -> Result<T, HarnessError> {
        r.map_err(|source| HarnessError::Io {
            path: self.dir.join(name),
            source,
        })
    }

    fn csv<F>(&mut self, name: &str, write: F) -> Result<(), HarnessError>
    where
        F: FnOnce(File) -> std::io::Result<()>,
    {
        let f = self.create(name)?;
        self.io(name, write(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        let f = self.create(name)?;
        let r = serde_json::to_writer_pretty(f, value).map_err(std::io::Error::other);
        self.io(name, r)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        let r = std::fs::write(&path, body);
        self.artifacts.push(name.to_string());
        self.io(name, r)
    }
}

fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance {
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Validate `cfg`, run its level, and write artifacts plus `manifest.json`
/// to `cfg.output_dir`. Artifact contents depend only on the configuration.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let level = cfg.level()?;
    let start = Instant::now();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut out = Writer {
        dir: dir.clone(),
        artifacts: Vec::new(),
    };
    out.text("config.toml", &cfg.to_toml_string()?)?;
    log::info!("running level {} into {}", level.name(), dir.display());

    let def = cfg.deformation()?;
    let comparison = match level {
        Level::Omd => run_omd(cfg, &def, &mut out).map(|_| None)?,
        Level::Meanfield => run_meanfield(cfg, &def, &mut out).map(|_| None)?,
        Level::Dsmc => {
            let series = dsmc_series(cfg, &def, Some(&mut out))?;
            let residual = conservation_residual(&series, &def)?;
            out.csv("residual.csv", |f| residual.write_csv(f))?;
            if cfg.dsmc.as_ref().is_some_and(|d| d.selfsimilar) {
                out.json("selfsimilar.json", &selfsimilar_diagnostic(&series)?)?;
            }
            None
        }
        Level::Hydro => {
            let h = cfg.hydro.as_ref().expect("validated");
            let series = hydro_series(cfg, &def, h.viscosity.as_ref())?;
            out.csv("hydro.csv", |f| series.write_csv(f))?;
            let residual = conservation_residual(&series.to_moments(), &def)?;
            out.csv("residual.csv", |f| residual.write_csv(f))?;
            None
        }
        Level::Compare => Some(run_compare(cfg, &def, &mut out)?),
    };

    let finished_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut artifacts = out.artifacts.clone();
    artifacts.sort();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        level,
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        artifacts,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        finished_unix,
    };
    out.json("manifest.json", &manifest)?;
    Ok(RunOutcome {
        output_dir: dir,
        manifest,
        comparison,
    })
}

fn run_omd(
    cfg: &ExperimentConfig,
    def: &DeformationMatrix,
    out: &mut Writer,
) -> Result<(), HarnessError> {
    let oc = cfg.omd.as_ref().expect("validated");
    let pot = cfg.potential.as_ref().expect("validated").build()?;
    let lat = ImageLattice::new(oc.lattice_extent);
    for &seed in &cfg.seeds {
        let mut r = rng::stream(seed, 0);
        let x: Vec<Vector3<f64>> = match (&oc.x, oc.n_particles) {
            (Some(x), _) => x.iter().map(|p| Vector3::from(*p)).collect(),
            (None, Some(n)) => {
                let u = Uniform::new(0.0, 1.0).expect("valid range");
                (0..n)
                    .map(|_| Vector3::new(u.sample(&mut r), u.sample(&mut r), u.sample(&mut r)))
                    .collect()
            }
            (None, None) => return Err(HarnessError::Config("omd needs x or n_particles".into())),
        };
        let w: Vec<Vector3<f64>> = match &oc.w {
            Some(w) => w.iter().map(|p| Vector3::from(*p)).collect(),
            None => {
                let nd = Normal::new(0.0, oc.temperature.sqrt())
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                (0..x.len())
                    .map(|_| Vector3::new(nd.sample(&mut r), nd.sample(&mut r), nd.sample(&mut r)))
                    .collect()
            }
        };
        let scaling = match oc.scaling {
            ScalingConfig::Unit => Scaling::Unit,
            ScalingConfig::MeanField => Scaling::MeanField { n: x.len() },
            ScalingConfig::Boltzmann => Scaling::Boltzmann {
                epsilon: pot.epsilon_scale,
            },
        };
        let sys = ParticleSystem::new(x, w, 0.0, *def)?;
        let traj = omd::run(
            &mut sys.clone(),
            &pot,
            &lat,
            cfg.dt,
            cfg.horizon,
            scaling,
            cfg.stride,
        )?;
        let name = format!("trajectory_seed{seed}.csv");
        let f = out.create(&name)?;
        traj.write_csv(f)?;
        if let Some([i, n1, n2, n3]) = oc.verify_image {
            let i = usize::try_from(i)
                .map_err(|_| HarnessError::Config(format!("verify_image particle {i}")))?;
            let nu = [n1, n2, n3].map(|v| v as i32);
            let report = omd::verify_indistinguishability(
                &sys,
                &pot,
                &lat,
                cfg.dt,
                cfg.horizon,
                scaling,
                (i, nu),
            )?;
            out.json(&format!("indistinguishability_seed{seed}.json"), &report)?;
        }
    }
    Ok(())
}

/// Independent Gaussians `x ~ N(0, x_std^2 I)`, `w ~ N(0, w_std^2 I)`.
fn gaussian_phase_sample(
    mc: &MeanfieldConfig,
    r: &mut Rng,
    n: usize,
) -> Result<EmpiricalMeasure, MeanFieldError> {
    let nx = Normal::new(0.0, mc.x_std).map_err(|e| MeanFieldError::Invalid(e.to_string()))?;
    let nw = Normal::new(0.0, mc.w_std).map_err(|e| MeanFieldError::Invalid(e.to_string()))?;
    let pts = (0..n)
        .map(|_| {
            let x = Vector3::new(nx.sample(r), nx.sample(r), nx.sample(r));
            let w = Vector3::new(nw.sample(r), nw.sample(r), nw.sample(r));
            join(&x, &w)
        })
        .collect();
    Ok(EmpiricalMeasure::uniform(pts)?)
}

fn run_meanfield(
    cfg: &ExperimentConfig,
    def: &DeformationMatrix,
    out: &mut Writer,
) -> Result<(), HarnessError> {
    let mc = cfg.meanfield.as_ref().expect("validated");
    let pot = cfg.potential.as_ref().map(|p| p.build()).transpose()?;
    match mc.study {
        MeanfieldStudy::Evolve => {
            for &seed in &cfg.seeds {
                let g0 = gaussian_phase_sample(mc, &mut rng::stream(seed, 0), mc.n_particles)?;
                let path =
                    evolve_particles(&g0, pot.as_ref(), def, 0.0, cfg.dt, cfg.horizon, usize::MAX)?;
                let name = format!("measure_seed{seed}.csv");
                let f = out.create(&name)?;
                path.last_measure()?.write_csv(f)?;
            }
        }
        MeanfieldStudy::Stability => {
            for &seed in &cfg.seeds {
                let mut r = rng::stream(seed, 0);
                let g0 = gaussian_phase_sample(mc, &mut r, mc.n_particles)?;
                let np = Normal::new(0.0, mc.perturbation)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let h0 = g0.map_points(|x, w| {
                    (
                        x + Vector3::new(np.sample(&mut r), np.sample(&mut r), np.sample(&mut r)),
                        w + Vector3::new(np.sample(&mut r), np.sample(&mut r), np.sample(&mut r)),
                    )
                });
                let probe = ProbeSpec {
                    seed,
                    ..ProbeSpec::default()
                };
                let report = stability_check(
                    &g0,
                    &h0,
                    pot.as_ref(),
                    def,
                    cfg.dt,
                    cfg.horizon,
                    cfg.stride,
                    mc.tolerance,
                    &probe,
                )?;
                out.csv(&format!("stability_seed{seed}.csv"), |f| {
                    use std::io::Write;
                    let mut f = std::io::BufWriter::new(f);
                    writeln!(f, "t,W1,bound")?;
                    for s in &report.samples {
                        writeln!(f, "{},{},{}", s.t, s.w1, s.bound)?;
                    }
                    f.flush()
                })?;
                out.json(&format!("stability_seed{seed}.json"), &report)?;
            }
        }
        MeanfieldStudy::Convergence => {
            let reference = match (
                mc.reference.unwrap_or(ReferenceConfig::ExactTransport),
                mc.n_ref,
            ) {
                (ReferenceConfig::ExactTransport, _) => Reference::ExactTransport,
                (ReferenceConfig::HighN, Some(n_ref)) => Reference::HighN {
                    n_ref,
                    seed: cfg.seeds[0],
                },
                (ReferenceConfig::HighN, None) => {
                    return Err(HarnessError::Config(
                        "meanfield.n_ref is required for high_n".into(),
                    ))
                }
            };
            let cc = ConvergenceConfig {
                n_list: mc.n_list.clone().expect("validated"),
                t_eval: cfg.horizon,
                dt: cfg.dt,
                seeds: cfg.seeds.clone(),
                reference,
            };
            let table = convergence_study(
                |r, n| gaussian_phase_sample(mc, r, n),
                pot.as_ref(),
                def,
                &cc,
            )?;
            out.csv("convergence.csv", |f| table.write_csv(f))?;
            out.json("convergence.json", &table.summary_json())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DsmcMeta<'a> {
    seed: u64,
    kernel: &'a boltzmann::KernelKind,
    knudsen: f64,
    dt: f64,
    horizon: f64,
    n_particles: usize,
    collisions: &'a boltzmann::CollisionStats,
}

/// Run DSMC for every seed and return the ensemble mean; per-seed series and
/// metadata are written when `out` is given.
fn dsmc_series(
    cfg: &ExperimentConfig,
    def: &DeformationMatrix,
    mut out: Option<&mut Writer>,
) -> Result<MomentSeries, HarnessError> {
    let dc = cfg.dsmc.as_ref().expect("validated");
    let kernel = dc.kernel()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut ens =
            VelocityEnsemble::gaussian(dc.n_particles, &dc.covariance(), dc.number_density, seed)?;
        let series = run_homoenergetic(&mut ens, def, &kernel, cfg.dt, cfg.horizon, cfg.stride)?;
        if let Some(w) = out.as_deref_mut() {
            w.csv(&format!("moments_seed{seed}.csv"), |f| series.write_csv(f))?;
            let meta = DsmcMeta {
                seed,
                kernel: &dc.kernel,
                knudsen: dc.knudsen,
                dt: cfg.dt,
                horizon: cfg.horizon,
                n_particles: dc.n_particles,
                collisions: &ens.stats,
            };
            w.json(&format!("moments_seed{seed}.json"), &meta)?;
        }
        runs.push(series);
    }
    let mean = MomentSeries::ensemble_mean(&runs)?;
    if let Some(w) = out {
        w.csv("moments_mean.csv", |f| mean.write_csv(f))?;
    }
    Ok(mean)
}

fn hydro_series(
    cfg: &ExperimentConfig,
    def: &DeformationMatrix,
    visc: Option<&ViscosityLaw>,
) -> Result<HydroSeries, HarnessError> {
    let h = cfg.hydro.as_ref().expect("validated");
    let s0 = HydroState {
        rho: h.rho0,
        theta: h.theta0,
        t: 0.0,
    };
    let full = match visc {
        Some(v) => hydro::navier_stokes_solve(s0, def, v, cfg.dt, cfg.horizon)?,
        None => hydro::euler_solve(s0, def, cfg.dt, cfg.horizon)?,
    };
    let last = full.samples.len() - 1;
    let samples = full
        .samples
        .iter()
        .enumerate()
        .filter(|(k, _)| k % cfg.stride == 0 || *k == last)
        .map(|(_, s)| *s)
        .collect();
    Ok(HydroSeries { samples })
}

fn scalar_arm(kind: ArmKind, t: Vec<f64>, y: Vec<f64>) -> Arm {
    Arm {
        name: kind.name().to_string(),
        data: ArmData::Scalar { t, y },
    }
}

fn write_theta(out: &mut Writer, kind: ArmKind, t: &[f64], y: &[f64]) -> Result<(), HarnessError> {
    out.csv(&format!("arm_{}.csv", kind.name()), |f| {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(f);
        writeln!(f, "t,theta")?;
        for (a, b) in t.iter().zip(y) {
            writeln!(f, "{a},{b}")?;
        }
        f.flush()
    })
}

fn run_compare(
    cfg: &ExperimentConfig,
    def: &DeformationMatrix,
    out: &mut Writer,
) -> Result<ComparisonReport, HarnessError> {
    let cc = cfg.compare.as_ref().expect("validated");

    let calibrated = match &cc.calibration {
        Some(cal) => {
            let train_def = DeformationMatrix::simple_shear(cal.k);
            let train_cfg = ExperimentConfig {
                horizon: cal.horizon,
                ..cfg.clone()
            };
            let series = dsmc_series(&train_cfg, &train_def, None)?;
            let epsilon = cfg.dsmc.as_ref().expect("validated").knudsen;
            let c = calibrate_viscosity(&series, &train_def, cal.omega_exp, epsilon, cal.t_min)?;
            out.json("calibration.json", &c)?;
            Some(c.law()?)
        }
        None => None,
    };

    let mut initial_w: Option<EmpiricalMeasure> = None;
    let mut build = |kind: ArmKind, out: &mut Writer| -> Result<Arm, HarnessError> {
        let arm = match kind {
            ArmKind::Dsmc => {
                let s = dsmc_series(cfg, def, Some(&mut *out))?;
                scalar_arm(kind, s.times(), s.thetas())
            }
            ArmKind::Bgk => {
                let dc = cfg.dsmc.as_ref().expect("validated");
                let kernel = dc.kernel()?;
                let nu = kernel
                    .maxwell_relaxation_rate(dc.number_density)
                    .ok_or_else(|| HarnessError::Config("bgk arm needs a maxwell kernel".into()))?;
                let m0 = Moments::from_stress(
                    0.0,
                    dc.number_density,
                    dc.covariance() * dc.number_density,
                );
                let s = bgk_moment_oracle(&m0, def, nu, cfg.dt, cfg.horizon)?;
                scalar_arm(kind, s.times(), s.thetas())
            }
            ArmKind::Euler | ArmKind::NavierStokes => {
                let visc = match kind {
                    ArmKind::Euler => None,
                    _ => calibrated.or(cfg.hydro.as_ref().and_then(|h| h.viscosity)),
                };
                let s = hydro_series(cfg, def, visc.as_ref())?;
                scalar_arm(
                    kind,
                    s.samples.iter().map(|h| h.t).collect(),
                    s.samples.iter().map(|h| h.theta).collect(),
                )
            }
            ArmKind::ExactTransport | ArmKind::DeformationSubstep => {
                let mc = cfg.meanfield.as_ref().expect("validated");
                let g0 = match &initial_w {
                    Some(g) => g.clone(),
                    None => {
                        let g = gaussian_phase_sample(
                            mc,
                            &mut rng::stream(cfg.seeds[0], 0),
                            mc.n_particles,
                        )?;
                        let g = g.map_points(|_, w| (Vector3::zeros(), w));
                        initial_w = Some(g.clone());
                        g
                    }
                };
                let m = if kind == ArmKind::ExactTransport {
                    exact_transport(&g0, def, cfg.horizon)?.map_points(|_, w| (Vector3::zeros(), w))
                } else {
                    let w: Vec<Vector3<f64>> = (0..g0.len()).map(|i| g0.w(i)).collect();
                    let mut ens = VelocityEnsemble::new(w, 1.0, 0.0, cfg.seeds[0])?;
                    let steps = (cfg.horizon / cfg.dt).round() as usize;
                    for _ in 0..steps {
                        deformation_substep(&mut ens, def, cfg.dt)?;
                    }
                    let x = vec![Vector3::zeros(); ens.len()];
                    EmpiricalMeasure::from_phase(&x, &ens.w)?
                };
                let name = format!("arm_{}.csv", kind.name());
                let f = out.create(&name)?;
                m.write_csv(f)?;
                return Ok(Arm {
                    name: kind.name().to_string(),
                    data: ArmData::Distribution(m),
                });
            }
        };
        if let ArmData::Scalar { t, y } = &arm.data {
            write_theta(out, kind, t, y)?;
        }
        Ok(arm)
    };
    let a = build(cc.arm_a, out)?;
    let b = build(cc.arm_b, out)?;
    let mut report = compare(&a, &b, cc.metric, cc.tolerance)?;
    report.provenance = Some(provenance(cfg));
    out.json("comparison.json", &report)?;
    Ok(report)
}
