//! End-to-end runs. Each function reproduces its outputs exactly from a
//! [`RunConfig`]: data are regenerated (or re-imported) from the config and
//! seed rather than passed between commands.
//!
//! Files written under the output directory:
//!
//! | command | files |
//! |---|---|
//! | simulate | `trajectory.csv`, `trajectory.json` |
//! | select | `ami.csv`, `fnn.csv`, `config.json` |
//! | train | `config.json`, `losses.csv`, `teacher.{json,bin}`, `student.{json,bin}` |
//! | forecast | `forecasts/case_NNN.csv`, `forecasts/case_NNN_truth.csv` |
//! | evaluate | `report.json`, `report.csv`, plus the forecast files |

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dynamics::{
    advance, build_dataset, estimate_mle, integrate_sampled, lyapunov_stride, DatasetSplit, OdeSystem,
    SimulatedTests, SplitConfig, Standardizer, TestCase, TestSource, Trajectory,
};
use crate::embedding::{select_embedding, EmbeddingSelection};
use crate::error::{Error, Result};
use crate::io::{curves_csv, trajectory_csv, write_json, write_text, write_trajectory, TrajectoryMeta};
use crate::metrics::{self, Forecaster, MetricsReport, ModelForecaster, OracleForecaster, PersistenceForecaster};
use crate::model::{load_model, save_model, Model};
use crate::training::{train_student_forcing, train_teacher_forcing, TrainingLog};

pub const TEACHER_CHECKPOINT: &str = "teacher.json";
pub const STUDENT_CHECKPOINT: &str = "student.json";

/// Component removals, one per command-line flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// No phase-space reconstruction: patches of the raw series.
    NoPir,
    NoRs,
    NoMpp,
    NoSf,
    NoMmd,
    EncoderOriented,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::NoPir,
        Ablation::NoRs,
        Ablation::NoMpp,
        Ablation::NoSf,
        Ablation::NoMmd,
        Ablation::EncoderOriented,
    ];

    pub fn flag(self) -> &'static str {
        match self {
            Ablation::NoPir => "no-pir",
            Ablation::NoRs => "no-rs",
            Ablation::NoMpp => "no-mpp",
            Ablation::NoSf => "no-sf",
            Ablation::NoMmd => "no-mmd",
            Ablation::EncoderOriented => "encoder-oriented",
        }
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Ablation::NoPir => cfg.embedding.enabled = false,
            Ablation::NoRs => cfg.model.rs_enabled = false,
            Ablation::NoMpp => cfg.model.mpp_depth = 0,
            Ablation::NoSf => cfg.training.sf_enabled = false,
            Ablation::NoMmd => cfg.training.mmd_enabled = false,
            Ablation::EncoderOriented => cfg.model.encoder_oriented = true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub system: OdeSystem,
    pub dt: f64,
    pub lyapunov_exponent: f64,
    /// Integration steps per recorded sample.
    pub stride: usize,
    pub trajectory: Trajectory,
    pub meta: TrajectoryMeta,
}

/// λ_max from the config, or estimated after `mle_transient_time`.
pub fn lyapunov_exponent(cfg: &RunConfig, system: &OdeSystem, dt: f64) -> Result<f64> {
    let d = &cfg.data;
    if let Some(l) = d.lyapunov_exponent {
        return Ok(l);
    }
    let mut x = d.initial_state.clone().unwrap_or_else(|| system.default_initial_state());
    advance(system, &mut x, dt, (d.mle_transient_time / dt).round() as usize)?;
    let horizon = (d.mle_time / dt).round() as usize;
    let lambda = estimate_mle(system, &x, dt, horizon, d.mle_renorm_interval)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "estimated λ_max = {lambda} is not positive; the system is not chaotic at these parameters"
        )));
    }
    Ok(lambda)
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let d = &cfg.data;
    let system = d.ode_system()?;
    let dt = d.dt_or_default(&system);
    let lambda = lyapunov_exponent(cfg, &system, dt)?;
    let stride = lyapunov_stride(lambda, d.points_per_tl, dt)?;
    let x0 = d.initial_state.clone().unwrap_or_else(|| system.default_initial_state());
    let transient = d.transient_tl * d.points_per_tl * stride;
    let trajectory = integrate_sampled(&system, &x0, dt, d.steps, stride, transient, cfg.seed, d.noise_sigma)?
        .with_steps_per_lyapunov_time(Some(d.points_per_tl));
    let meta = TrajectoryMeta {
        dt: trajectory.dt(),
        steps_per_lyapunov_time: Some(d.points_per_tl),
        system: Some(system.kind().name().to_string()),
        params: system.params().clone(),
        seed: cfg.seed,
    };
    Ok(Simulation {
        system,
        dt,
        lyapunov_exponent: lambda,
        stride,
        trajectory,
        meta,
    })
}

pub fn run_simulate(cfg: &RunConfig) -> Result<Simulation> {
    let sim = simulate(cfg)?;
    write_trajectory(&cfg.output_dir.join("trajectory.csv"), &sim.trajectory, Some(&sim.meta))?;
    Ok(sim)
}

/// The recorded series and where its test cases come from.
fn source(cfg: &RunConfig) -> Result<(Trajectory, TestSource)> {
    let d = &cfg.data;
    if let Some(imp) = &d.import {
        let full = crate::io::read_trajectory(&imp.path)?.with_steps_per_lyapunov_time(Some(imp.steps_per_tl));
        let n_test = (full.len() as f64 * imp.test_fraction).round() as usize;
        if n_test == 0 || n_test >= full.len() {
            return Err(Error::DatasetTooShort {
                required: 2,
                actual: full.len(),
            });
        }
        let cut = full.len() - n_test;
        let tests = TestSource::Windows {
            traj: full.window(cut, full.len())?,
            n_cases: d.test_cases,
        };
        return Ok((full.window(0, cut)?, tests));
    }
    let sim = simulate(cfg)?;
    let tests = TestSource::Simulated(SimulatedTests {
        system: sim.system.clone(),
        dt: sim.dt,
        stride: sim.stride,
        n_ics: d.test_cases,
        transient_steps: d.transient_tl * d.points_per_tl * sim.stride,
        noise_sigma: d.noise_sigma,
    });
    Ok((sim.trajectory, tests))
}

pub fn split_config(cfg: &RunConfig) -> SplitConfig {
    let d = &cfg.data;
    SplitConfig {
        points_per_tl: d.steps_per_tl(),
        tf_window_len: d.tf_window_len,
        val_steps: d.val_steps,
        context_tl: d.context_tl,
        target_tl: d.target_tl,
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub split: SplitConfig,
    pub data: DatasetSplit,
    /// Statistics of the training part (validation tail excluded).
    pub standardizer: Standardizer,
    pub dim: usize,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (traj, tests) = source(cfg)?;
    let split = split_config(cfg);
    if traj.len() <= split.val_steps {
        return Err(Error::DatasetTooShort {
            required: split.val_steps + 1,
            actual: traj.len(),
        });
    }
    let standardizer = Standardizer::fit(&traj.window(0, traj.len() - split.val_steps)?);
    let data = build_dataset(&traj, &split, tests, cfg.seed)?;
    Ok(Prepared {
        split,
        data,
        standardizer,
        dim: traj.dim(),
    })
}

/// Freshly initialised model for `cfg`.
pub fn build_model(cfg: &RunConfig, prepared: &Prepared) -> Result<Model> {
    let context_patches = prepared.split.context_len() / cfg.embedding.patch_size;
    Model::new(
        cfg.model.clone(),
        cfg.embedding,
        prepared.dim,
        context_patches,
        prepared.standardizer.clone(),
        cfg.seed,
    )
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainingLog,
    /// Written checkpoints, teacher first.
    pub checkpoints: Vec<PathBuf>,
}

fn checkpoint_extra(cfg: &RunConfig, stage: &str) -> serde_json::Value {
    serde_json::json!({ "config_hash": cfg.hash(), "stage": stage })
}

/// Teacher forcing then (unless disabled) student forcing. With
/// `from_teacher` the first stage is skipped and its checkpoint loaded instead.
pub fn run_train(cfg: &RunConfig, from_teacher: Option<&Path>) -> Result<TrainOutcome> {
    let out = &cfg.output_dir;
    let prepared = prepare(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.save(&out.join("config.json"))?;
    let mut checkpoints = Vec::new();
    let (mut model, teacher) = match from_teacher {
        Some(path) => {
            let (model, _) = load_model(path)?;
            if model.config != cfg.model || model.embedding != cfg.embedding {
                return Err(Error::Config(format!(
                    "{} was trained with a different model or embedding section",
                    path.display()
                )));
            }
            (model, Default::default())
        }
        None => {
            let mut model = build_model(cfg, &prepared)?;
            let log = train_teacher_forcing(&mut model, &prepared.data, &cfg.training)?;
            let path = out.join(TEACHER_CHECKPOINT);
            save_model(&model, &path, checkpoint_extra(cfg, "teacher"))?;
            checkpoints.push(path);
            (model, log)
        }
    };
    let student = train_student_forcing(&mut model, &prepared.data, &cfg.training)?;
    if student.is_some() {
        let path = out.join(STUDENT_CHECKPOINT);
        save_model(&model, &path, checkpoint_extra(cfg, "student"))?;
        checkpoints.push(path);
    }
    let log = TrainingLog { teacher, student };
    write_text(&out.join("losses.csv"), &log.to_csv())?;
    Ok(TrainOutcome {
        model,
        log,
        checkpoints,
    })
}

/// What produces the forecasts being scored.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Checkpoint(PathBuf),
    /// The latest checkpoint in the output directory.
    Latest,
    Oracle,
    Persistence,
}

/// The student checkpoint when present, else the teacher one.
pub fn latest_checkpoint(out: &Path) -> Result<PathBuf> {
    let student = out.join(STUDENT_CHECKPOINT);
    if student.exists() {
        return Ok(student);
    }
    let teacher = out.join(TEACHER_CHECKPOINT);
    if teacher.exists() {
        return Ok(teacher);
    }
    Err(Error::io(
        teacher,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no checkpoint found; run `train` first"),
    ))
}

enum Loaded {
    Model(Box<Model>, String),
    Oracle,
    Persistence,
}

fn params_digest(model: &Model) -> String {
    let mut h = Sha256::new();
    for (name, t) in model.params.names().iter().zip(model.params.tensors()) {
        h.update(name.as_bytes());
        for x in t.data() {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn load_source(cfg: &RunConfig, source: &Source) -> Result<Loaded> {
    let path = match source {
        Source::Oracle => return Ok(Loaded::Oracle),
        Source::Persistence => return Ok(Loaded::Persistence),
        Source::Checkpoint(p) => p.clone(),
        Source::Latest => latest_checkpoint(&cfg.output_dir)?,
    };
    if !path.exists() {
        return Err(Error::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    let (model, _) = load_model(&path)?;
    let digest = params_digest(&model);
    Ok(Loaded::Model(Box::new(model), digest))
}

impl Loaded {
    fn forecaster(&self, envelope: f64) -> Box<dyn Forecaster + '_> {
        match self {
            Loaded::Model(m, _) => Box::new(ModelForecaster { model: m, envelope }),
            Loaded::Oracle => Box::new(OracleForecaster),
            Loaded::Persistence => Box::new(PersistenceForecaster),
        }
    }

    fn identity(&self) -> String {
        match self {
            Loaded::Model(_, digest) => digest.clone(),
            Loaded::Oracle => "oracle".into(),
            Loaded::Persistence => "persistence".into(),
        }
    }
}

/// Metrics plus provenance of the run that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub metrics: MetricsReport,
    pub config_hash: String,
    /// Short content hash of config, forecaster and metrics, in the style of a commit id.
    pub run_id: String,
}

impl RunReport {
    /// The metrics fields with `config_hash` and `run_id` alongside them.
    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.metrics).expect("report serializes");
        let o = v.as_object_mut().expect("report is an object");
        o.insert("config_hash".into(), self.config_hash.clone().into());
        o.insert("run_id".into(), self.run_id.clone().into());
        v
    }

    pub fn from_value(mut v: serde_json::Value) -> Result<Self> {
        let bad = |m: String| Error::Parse {
            path: PathBuf::from("report.json"),
            message: m,
        };
        let o = v.as_object_mut().ok_or_else(|| bad("not an object".into()))?;
        let mut take = |k: &str| match o.remove(k) {
            Some(serde_json::Value::String(s)) => Ok(s),
            _ => Err(bad(format!("missing {k}"))),
        };
        let config_hash = take("config_hash")?;
        let run_id = take("run_id")?;
        let metrics = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            metrics,
            config_hash,
            run_id,
        })
    }
}

fn run_id(config_hash: &str, identity: &str, metrics: &MetricsReport) -> String {
    let mut h = Sha256::new();
    h.update(config_hash.as_bytes());
    h.update(b"\n");
    h.update(identity.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(metrics).expect("report serializes"));
    hex::encode(h.finalize())[..12].to_string()
}

struct ForecastFiles {
    written: Vec<usize>,
    diverged: Vec<usize>,
}

fn write_forecasts(out: &Path, f: &dyn Forecaster, cases: &[TestCase]) -> Result<ForecastFiles> {
    let dir = out.join("forecasts");
    let mut files = ForecastFiles {
        written: Vec::new(),
        diverged: Vec::new(),
    };
    for (k, case) in cases.iter().enumerate() {
        let t0 = case.context.len() as f64 * case.context.dt();
        match f.forecast(case, case.target.len()) {
            Ok(pred) => {
                write_text(&dir.join(format!("case_{k:03}.csv")), &trajectory_csv(&pred, t0))?;
                write_text(&dir.join(format!("case_{k:03}_truth.csv")), &trajectory_csv(&case.target, t0))?;
                files.written.push(k);
            }
            Err(e @ Error::RolloutDiverged { .. }) => {
                log::warn!("case {k}: {e}; no forecast file written");
                files.diverged.push(k);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(files)
}

/// Writes per-case forecast and truth CSVs; returns the case indices written.
pub fn run_forecast(cfg: &RunConfig, source: &Source) -> Result<Vec<usize>> {
    let loaded = load_source(cfg, source)?;
    let prepared = prepare(cfg)?;
    let f = loaded.forecaster(cfg.training.envelope);
    let files = write_forecasts(&cfg.output_dir, f.as_ref(), &prepared.data.test_cases)?;
    Ok(files.written)
}

/// Library-level evaluation of one source, without writing anything.
pub fn evaluate_source(cfg: &RunConfig, source: &Source) -> Result<RunReport> {
    let loaded = load_source(cfg, source)?;
    let prepared = prepare(cfg)?;
    score(cfg, &loaded, &prepared)
}

fn score(cfg: &RunConfig, loaded: &Loaded, prepared: &Prepared) -> Result<RunReport> {
    let standardizer = match loaded {
        Loaded::Model(m, _) => &m.standardizer,
        _ => &prepared.standardizer,
    };
    let f = loaded.forecaster(cfg.training.envelope);
    let metrics = metrics::evaluate(f.as_ref(), &prepared.data.test_cases, &cfg.metrics, standardizer, cfg.seed)?;
    let config_hash = cfg.hash();
    let run_id = run_id(&config_hash, &loaded.identity(), &metrics);
    Ok(RunReport {
        metrics,
        config_hash,
        run_id,
    })
}

/// Scores `source` on the test cases and writes the report and forecast files.
pub fn run_evaluate(cfg: &RunConfig, source: &Source) -> Result<RunReport> {
    let loaded = load_source(cfg, source)?;
    let prepared = prepare(cfg)?;
    let report = score(cfg, &loaded, &prepared)?;
    let out = &cfg.output_dir;
    write_json(&out.join("report.json"), &report.to_value())?;
    write_text(&out.join("report.csv"), &report.metrics.to_csv())?;
    let f = loaded.forecaster(cfg.training.envelope);
    write_forecasts(out, f.as_ref(), &prepared.data.test_cases)?;
    Ok(report)
}

/// Delay parameters chosen from `traj` (the config's training series when
/// `None`), written back into the config saved in the output directory.
pub fn run_select(cfg: &RunConfig, traj: Option<&Trajectory>) -> Result<(EmbeddingSelection, RunConfig)> {
    let owned;
    let traj = match traj {
        Some(t) => t,
        None => {
            let (t, _) = source(cfg)?;
            let keep = t.len().saturating_sub(cfg.data.val_steps).max(1);
            owned = t.window(0, keep)?;
            &owned
        }
    };
    let sel = select_embedding(traj, &cfg.selection)?;
    let out = &cfg.output_dir;
    let ami: Vec<Vec<f64>> = sel.per_variable.iter().map(|v| v.ami.clone()).collect();
    let fnn: Vec<Vec<f64>> = sel.per_variable.iter().map(|v| v.fnn.clone()).collect();
    write_text(&out.join("ami.csv"), &curves_csv("tau", 1, &ami))?;
    write_text(&out.join("fnn.csv"), &curves_csv("m", 1, &fnn))?;
    let mut updated = cfg.clone();
    updated.embedding.m = sel.m;
    updated.embedding.tau = sel.tau;
    updated.validate()?;
    updated.save(&out.join("config.json"))?;
    Ok((sel, updated))
}
