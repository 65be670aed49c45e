//! `ccc`: generate corpora, estimate spectra, tune controllers and run the experiments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ccc_core::freq::stability_region;
use ccc_core::harness::{
    cross_evaluate, delay_benefit_study, generate_corpus, ingest_external, leader_parameters, leader_sweep, read_corpus,
    write_corpus, write_delay_benefits, write_leader_sweep, CrossEvalPlan, Dataset, ExperimentConfig, Metric, Pipeline,
};
use ccc_core::spectral::EstimatorKind;
use ccc_core::traffic::{simulate_truck_linear, simulate_truck_nonlinear, PreparedInputs};
use ccc_core::trajectory::SpeedTrajectory;
use ccc_core::tuner::{Mode, TuneResult};

#[derive(Parser)]
#[command(name = "ccc", version, about = "Energy-optimal connected cruise control from speed spectra")]
struct Cli {
    /// TOML experiment configuration; missing keys take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// experiment seed, overrides the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// spectral estimator: oracle, periodogram or welch
    #[arg(long, global = true)]
    estimator: Option<EstimatorKind>,
    /// controller family: acc, ccc or ccc-delay
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// worker threads, overrides the configuration (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus as interchange CSV files
    Generate {
        /// number of datasets, overrides the configuration
        #[arg(long)]
        count: Option<usize>,
    },
    /// Validate an external CSV and write it on a uniform time base
    Ingest {
        /// record CSV with columns t,v_1,...
        input: PathBuf,
    },
    /// Estimate (cross) spectra of a record
    Estimate {
        /// record CSV with columns t,v_1,...
        input: PathBuf,
        /// vehicles to include
        #[arg(long, value_delimiter = ',', default_value = "1,8")]
        vehicles: Vec<usize>,
    },
    /// Tune a controller on a record and print the parameters as JSON
    Tune {
        /// record CSV with columns t,v_1,...
        input: PathBuf,
        /// connected leader, overrides the configuration
        #[arg(long)]
        leader: Option<usize>,
    },
    /// Simulate the truck behind a record with tuned parameters
    Simulate {
        /// record CSV with columns t,v_1,...
        input: PathBuf,
        /// JSON written by `tune`
        #[arg(long)]
        params: PathBuf,
    },
    /// Tune on every observation dataset and evaluate on every other dataset
    CrossEval(CorpusArgs),
    /// Energy saved by the tuned information delay
    DelayStudy(CorpusArgs),
    /// Parameters and energies as the connected leader moves away
    LeaderSweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// tune only, skipping the energy evaluation
        #[arg(long)]
        tune_only: bool,
    },
    /// Plant-stability interval of the gain sum and its boundary over the actuation delay
    Stability {
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        #[arg(long, default_value_t = 0.6)]
        kappa: f64,
        #[arg(long, default_value_t = 0.6)]
        sigma: f64,
        /// largest delay on the boundary curve, s
        #[arg(long, default_value_t = 1.5)]
        sigma_max: f64,
        #[arg(long, default_value_t = 150)]
        points: usize,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// read the corpus written by `generate` instead of regenerating it
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// use only the first N datasets for observation
    #[arg(long)]
    observations: Option<usize>,
    /// use only the first N datasets for testing
    #[arg(long)]
    tests: Option<usize>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Generate { count } => {
            if let Some(n) = count {
                cfg.datasets = *n;
            }
            cfg.validate()?;
            let data = generate_corpus(&cfg)?;
            let dir = cli.out.join("datasets");
            write_corpus(&data, &dir)?;
            std::fs::write(cli.out.join("config.toml"), cfg.to_toml()?)?;
            let rejected: usize = data.iter().map(|d| d.rejected).sum();
            log::info!("wrote {} datasets to {} ({rejected} colliding draws regenerated)", data.len(), dir.display());
        }
        Command::Ingest { input } => {
            let traj = ingest_external(input)?;
            let name = input.file_name().map(|s| s.to_os_string()).unwrap_or_else(|| "ingested.csv".into());
            let path = cli.out.join(name);
            traj.write_csv_path(&path)?;
            print_json(&json!({
                "t0": traj.t0,
                "dt": traj.dt,
                "samples": traj.len(),
                "vehicles": traj.vehicles().collect::<Vec<_>>(),
                "written": path,
            }))?;
        }
        Command::Estimate { input, vehicles } => {
            let traj = ingest_external(input)?;
            let pipeline = Pipeline::new(&cfg)?;
            let kind = cli.estimator.unwrap_or(EstimatorKind::Welch);
            let spec = pipeline.estimate(&traj, kind, vehicles)?;
            let path = cli.out.join(format!("spectra_{kind}.csv"));
            spec.write_csv_path(&path)?;
            log::info!("wrote {} bins for vehicles {vehicles:?} to {}", spec.omegas.len(), path.display());
        }
        Command::Tune { input, leader } => {
            let traj = ingest_external(input)?;
            let pipeline = Pipeline::new(&cfg)?;
            let leader = leader.unwrap_or(cfg.leader);
            let kind = cli.estimator.unwrap_or(EstimatorKind::Welch);
            let mode = cli.mode.unwrap_or(Mode::CccDelay);
            let spec = pipeline.estimate(&traj, kind, &[1, leader])?;
            let result = pipeline.tune(spec, mode, leader)?;
            let text = result.to_json()?;
            std::fs::write(cli.out.join("tune.json"), &text)?;
            println!("{text}");
        }
        Command::Simulate { input, params } => {
            let traj = ingest_external(input)?;
            let result: TuneResult = serde_json::from_str(&std::fs::read_to_string(params)?)?;
            simulate(&cfg, &traj, &result, &cli.out)?;
        }
        Command::CrossEval(args) => {
            let (data, plan) = corpus_and_plan(&cfg, &cli, args)?;
            let pipeline = Pipeline::new(&cfg)?;
            let report = cross_evaluate(&pipeline, &data, &plan)?;
            let dir = cli.out.join("cross_eval");
            report.write(&dir)?;
            for s in &report.summaries {
                let saving = |m| report.saving_vs_acc(s.estimator, s.mode, m).map(|v| format!("{:+.2}%", -100.0 * v));
                log::info!(
                    "{:<11} {:<9} wbar {:.3} kJ/kg ({}), w {:.3} kJ/kg ({}), invalid {}",
                    s.estimator.as_str(),
                    s.mode.as_str(),
                    s.mean_wbar / 1e3,
                    saving(Metric::Linear).unwrap_or_default(),
                    s.mean_w / 1e3,
                    saving(Metric::Nonlinear).unwrap_or_default(),
                    s.invalid
                );
            }
            for mode in &plan.modes {
                let pw = (
                    (EstimatorKind::Periodogram, *mode),
                    (EstimatorKind::Welch, *mode),
                );
                if plan.estimators.contains(&pw.0 .0) && plan.estimators.contains(&pw.1 .0) {
                    let lin = report.relative_difference(pw.0, pw.1, Metric::Linear).stats;
                    let non = report.relative_difference(pw.0, pw.1, Metric::Nonlinear).stats;
                    log::info!(
                        "{mode}: periodogram vs Welch {:+.2}% linear, {:+.2}% nonlinear over {} pairs",
                        100.0 * lin.mean,
                        100.0 * non.mean,
                        lin.count
                    );
                }
            }
            log::info!("wrote {} rows to {} (checksum {})", report.rows.len(), dir.display(), report.checksum);
        }
        Command::DelayStudy(args) => {
            let (data, plan) = corpus_and_plan(&cfg, &cli, args)?;
            let pipeline = Pipeline::new(&cfg)?;
            let (report, benefits) = delay_benefit_study(&pipeline, &data, &plan)?;
            let dir = cli.out.join("delay_study");
            report.write(&dir)?;
            write_delay_benefits(&benefits, &dir)?;
            for b in &benefits {
                log::info!(
                    "{}: delay saves {:.2}% linear, {:.2}% nonlinear on average",
                    b.estimator,
                    100.0 * b.linear.mean,
                    100.0 * b.nonlinear.mean
                );
            }
        }
        Command::LeaderSweep { corpus, tune_only } => {
            let mut args = CorpusArgs {
                corpus: corpus.corpus.clone(),
                observations: corpus.observations.or(Some(cfg.sweep.observations)),
                tests: corpus.tests.or(Some(cfg.sweep.tests)),
            };
            if *tune_only {
                args.tests = Some(1);
            }
            let (data, plan) = corpus_and_plan(&cfg, &cli, &args)?;
            let pipeline = Pipeline::new(&cfg)?;
            let points = if *tune_only {
                leader_parameters(&pipeline, &data, &plan, &cfg.sweep.leaders)?
            } else {
                leader_sweep(&pipeline, &data, &plan, &cfg.sweep.leaders)?
            };
            let dir = cli.out.join("leader_sweep");
            write_leader_sweep(&points, &dir)?;
            log::info!("wrote {} sweep points to {}", points.len(), dir.display());
        }
        Command::Stability {
            alpha,
            kappa,
            sigma,
            sigma_max,
            points,
        } => {
            let region = stability_region(*alpha, *kappa, *sigma)?;
            let path = cli.out.join("stability_boundary.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["sigma", "lower", "upper", "omega_low", "omega_high"])?;
            for k in 1..=*points {
                let s = sigma_max * k as f64 / *points as f64;
                match stability_region(*alpha, *kappa, s) {
                    Ok(r) => w.write_record([s, r.lower, r.upper, r.omega_low, r.omega_high].map(|v| v.to_string()))?,
                    Err(_) => break,
                }
            }
            w.flush()?;
            print_json(&serde_json::to_value(region)?)?;
        }
    }
    Ok(())
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn corpus_and_plan(cfg: &ExperimentConfig, cli: &Cli, args: &CorpusArgs) -> Result<(Vec<Dataset>, CrossEvalPlan)> {
    let data = match &args.corpus {
        Some(dir) => read_corpus(dir).with_context(|| format!("reading corpus {}", dir.display()))?,
        None => {
            let data = generate_corpus(cfg)?;
            write_corpus(&data, cli.out.join("datasets"))?;
            data
        }
    };
    if data.len() < 2 {
        bail!("cross evaluation needs at least two datasets, found {}", data.len());
    }
    let indices: Vec<usize> = data.iter().map(|d| d.index).collect();
    let take = |n: Option<usize>| indices.iter().copied().take(n.unwrap_or(indices.len())).collect::<Vec<_>>();
    let plan = CrossEvalPlan {
        estimators: cli.estimator.map_or_else(|| EstimatorKind::ALL.to_vec(), |e| vec![e]),
        modes: cli.mode.map_or_else(|| Mode::ALL.to_vec(), |m| vec![m]),
        leader: cfg.leader,
        observations: take(args.observations),
        tests: take(args.tests),
    };
    Ok((data, plan))
}

fn simulate(cfg: &ExperimentConfig, traj: &SpeedTrajectory<f64>, params: &TuneResult, out: &Path) -> Result<()> {
    let t = &cfg.truck;
    let ctrl = params.controller(t.policy)?;
    let vehicles: Vec<usize> = ctrl.indices().collect();
    let v_star = cfg.gp.mean_speed;
    let linear = PreparedInputs::new(traj, &vehicles, cfg.integrator, true)?;
    let lin = simulate_truck_linear(&linear, &ctrl, t.plant.actuation_delay, v_star)?;
    let nonlinear = PreparedInputs::new(traj, &vehicles, cfg.integrator, false)?;
    let (w, collision) = match simulate_truck_nonlinear(&nonlinear, &t.plant, &ctrl, v_star, None) {
        Ok(run) => {
            let path = out.join("truck.csv");
            run.to_trajectory(traj.t0, traj.dt)?.write_csv_path(&path)?;
            log::info!("wrote the truck speed to {}", path.display());
            (run.report.w, None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = json!({
        "w": w,
        "wbar": lin.report.wbar,
        "t0": lin.report.t0,
        "tf": lin.report.tf,
        "plant_stable": lin.report.plant_stable,
        "collision": collision,
    });
    std::fs::write(out.join("energy.json"), serde_json::to_string_pretty(&summary)?)?;
    print_json(&summary)
}
