//! `chaoscast`: simulate, select embeddings, train, forecast and evaluate.
//!
//! Every command reads a run config (`--config`, else `<out>/config.json`,
//! else the defaults), applies the command-line overrides and calls into
//! [`chaoscast::pipeline`]. Exit codes: 2 config or paths, 3 data or
//! simulation, 4 training, 5 evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use chaoscast::config::{ImportConfig, RunConfig};
use chaoscast::dynamics::SystemKind;
use chaoscast::pipeline::{self, Ablation, Source};
use chaoscast::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "chaoscast", version, about = "Long-horizon forecasting of chaotic systems")]
struct Cli {
    /// Run config JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for test-case evaluation and simulation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use a recorded CSV series instead of simulating.
    #[arg(long, global = true, requires = "steps_per_tl")]
    import: Option<PathBuf>,
    /// Samples per Lyapunov time of the imported series.
    #[arg(long, global = true, requires = "import")]
    steps_per_tl: Option<usize>,
    #[command(flatten)]
    ablations: AblationFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct AblationFlags {
    /// Patch the raw series instead of the delay embedding.
    #[arg(long, global = true)]
    no_pir: bool,
    /// Only the last trunk layer decodes.
    #[arg(long, global = true)]
    no_rs: bool,
    #[arg(long, global = true)]
    no_mpp: bool,
    #[arg(long, global = true)]
    no_sf: bool,
    #[arg(long, global = true)]
    no_mmd: bool,
    /// Flatten-and-project window head instead of next-patch decoding.
    #[arg(long, global = true)]
    encoder_oriented: bool,
}

impl AblationFlags {
    fn selected(&self) -> Vec<Ablation> {
        let on = [
            self.no_pir,
            self.no_rs,
            self.no_mpp,
            self.no_sf,
            self.no_mmd,
            self.encoder_oriented,
        ];
        Ablation::ALL.into_iter().zip(on).filter(|(_, on)| *on).map(|(a, _)| a).collect()
    }
}

#[derive(Args, Debug, Default)]
struct SourceFlags {
    /// Checkpoint manifest; defaults to the latest one in the output directory.
    #[arg(long, conflicts_with_all = ["oracle", "persistence"])]
    checkpoint: Option<PathBuf>,
    /// Score the ground truth itself (debugging).
    #[arg(long, conflicts_with = "persistence")]
    oracle: bool,
    /// Score the repeat-last-state baseline.
    #[arg(long)]
    persistence: bool,
}

impl SourceFlags {
    fn source(&self) -> Source {
        match (&self.checkpoint, self.oracle, self.persistence) {
            (Some(p), _, _) => Source::Checkpoint(p.clone()),
            (None, true, _) => Source::Oracle,
            (None, _, true) => Source::Persistence,
            _ => Source::Latest,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the configured system and write `trajectory.csv`.
    Simulate {
        #[arg(long)]
        system: Option<SystemKind>,
        /// Recorded samples.
        #[arg(long)]
        steps: Option<usize>,
        /// Observation noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Choose (m, τ) and write them into `<out>/config.json`.
    SelectEmbedding {
        /// Series to analyse; defaults to the configured training series.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Teacher forcing, then student forcing.
    Train {
        /// Skip teacher forcing and start from this checkpoint.
        #[arg(long)]
        from_teacher: Option<PathBuf>,
    },
    /// Write per-case forecast CSVs.
    Forecast {
        #[command(flatten)]
        source: SourceFlags,
    },
    /// Score forecasts and write `report.json` and `report.csv`.
    Evaluate {
        #[command(flatten)]
        source: SourceFlags,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let out = cli.out.clone().unwrap_or_else(|| RunConfig::default().output_dir);
            let saved = out.join("config.json");
            if saved.exists() {
                RunConfig::load(&saved)?
            } else {
                RunConfig::default()
            }
        }
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let (Some(path), Some(k)) = (&cli.import, cli.steps_per_tl) {
        let test_fraction = cfg.data.import.as_ref().map_or(0.2, |i| i.test_fraction);
        cfg.data.import = Some(ImportConfig {
            path: path.clone(),
            steps_per_tl: k,
            test_fraction,
        });
    }
    for a in cli.ablations.selected() {
        a.apply(&mut cfg);
    }
    if let Command::Simulate { system, steps, noise, dt } = &cli.command {
        if let Some(s) = system {
            if *s != cfg.data.system {
                cfg.data.dim = None;
                cfg.data.params = None;
                cfg.data.initial_state = None;
                cfg.data.lyapunov_exponent = None;
            }
            cfg.data.system = *s;
        }
        if let Some(n) = steps {
            cfg.data.steps = *n;
        }
        if let Some(n) = noise {
            cfg.data.noise_sigma = *n;
        }
        if dt.is_some() {
            cfg.data.dt = *dt;
        }
    }
    cfg.sync_seed();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate { .. } => {
            if cfg.data.import.is_some() {
                return Err(Error::Config("simulate does not read --import".into()));
            }
            let sim = pipeline::run_simulate(&cfg)?;
            println!("lambda_max {}", sim.lyapunov_exponent);
            println!("stride {}", sim.stride);
            println!("wrote {} rows to {}", sim.trajectory.len(), cfg.output_dir.join("trajectory.csv").display());
        }
        Command::SelectEmbedding { trajectory } => {
            let traj = trajectory.as_deref().map(chaoscast::io::read_trajectory).transpose()?;
            let (sel, _) = pipeline::run_select(&cfg, traj.as_ref())?;
            for name in ["ami.csv", "fnn.csv"] {
                let p = cfg.output_dir.join(name);
                print!("{}", std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p, source: e })?);
            }
            println!("m {}", sel.m);
            println!("tau {}", sel.tau);
        }
        Command::Train { from_teacher } => {
            let out = pipeline::run_train(&cfg, from_teacher.as_deref())?;
            println!("parameters {}", out.model.parameter_count());
            for p in &out.checkpoints {
                println!("checkpoint {}", p.display());
            }
            println!("losses {}", cfg.output_dir.join("losses.csv").display());
        }
        Command::Forecast { source } => {
            let written = pipeline::run_forecast(&cfg, &source.source())?;
            println!("wrote {} forecasts to {}", written.len(), cfg.output_dir.join("forecasts").display());
        }
        Command::Evaluate { source } => {
            let r = pipeline::run_evaluate(&cfg, &source.source())?;
            let m = &r.metrics;
            println!("forecaster {}", m.forecaster);
            println!("vpt_tl {} ± {}", m.vpt_tl, m.ci95.vpt_tl);
            for (h, v) in &m.smape_at {
                println!("smape_at_{h} {v}");
            }
            println!("d_frac {}", m.d_frac);
            println!("d_stsp {}", m.d_stsp);
            println!("cases {} excluded {}", m.n_test_cases, m.n_excluded);
            println!("run_id {}", r.run_id);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
