//! Command-line front end: train, certify, evaluate, defend, generate data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use smile::bench::{
    accuracy, counterfactual_variation, gen_monotonic, load_csv, r2, rejection_defense, synthetic_fairness_csv,
    FAIRNESS_SCHEMA,
    two_moons, Dataset, DefenseVerdict, Schema, Task,
};
use smile::milp::{generate, monotonicity_big_m, GeneratorConfig, MilpStatus};
use smile::training::{init_model, train, LossKind, TrainConfig};
use smile::{Error, PropertySpec, SmileModel};

#[derive(Parser)]
#[command(name = "smile", version, about = "Train and certify networks with global relational properties")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pretrain / train / posttrain pipeline.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Column schema for mixed tabular data; without it the CSV must be numeric with the target last.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        property: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        telemetry: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the generator to completion on a saved model.
    Certify {
        #[arg(long)]
        model: PathBuf,
        /// Overrides the property stored in the model.
        #[arg(long)]
        property: Option<PathBuf>,
        /// Work limit in nominal seconds; unbounded when absent.
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Score a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, value_enum)]
        metrics: Metric,
        /// Protected column for `cfvar`; defaults to the first protected or binary feature.
        #[arg(long)]
        protected: Option<usize>,
    },
    /// Per-row rejection verdicts as CSV.
    Defend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        eps: f64,
    },
    /// Write a synthetic benchmark dataset.
    GenData {
        #[arg(long, value_enum)]
        task: GenTask,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.6)]
        omega: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    R2,
    Acc,
    Cfvar,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenTask {
    Monotonic,
    Moons,
    Fairness,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TrainingAbort(_) | Error::Solver(_) => 3,
        _ => 2,
    }
}

fn load_data(path: &Path, schema: Option<&Path>, task: Task, model: Option<&SmileModel>) -> smile::Result<Dataset> {
    match schema {
        Some(s) => load_csv(path, &Schema::load(s)?),
        None => Dataset::read_numeric_csv(path, task, model.and_then(|m| m.meta.input_box.clone())),
    }
}

fn run(cmd: Cmd) -> smile::Result<u8> {
    match cmd {
        Cmd::Train {
            config,
            data,
            schema,
            property,
            out,
            report,
            telemetry,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str::<TrainConfig>(&std::fs::read_to_string(p)?)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let task = match cfg.loss {
                LossKind::Mse => Task::Regression,
                LossKind::Bce => Task::Binary,
            };
            let ds = load_data(&data, schema.as_deref(), task, None)?;
            let mut spec = PropertySpec::load(&property)?;
            if spec.protected.is_none() && !ds.protected().is_empty() {
                spec.protected = Some(ds.protected());
            }
            let model = init_model(ds.dim(), &cfg);
            let prop = spec.resolve(&ds.bx, Some(monotonicity_big_m(&model, &ds.bx)))?;
            let rep = train(model, &ds.x, &ds.y, &prop, &ds.bx, &cfg)?;
            let mut model = rep.model.clone();
            if spec.big_m.is_none() && spec.kind == smile::PropertyKind::Monotonicity {
                spec.big_m = Some(-prop.eps_low);
            }
            model.meta.property = Some(spec);
            model.save(&out)?;
            if let Some(p) = report {
                std::fs::write(p, rep.to_json()?)?;
            }
            if let Some(p) = telemetry {
                std::fs::write(p, rep.telemetry_csv()?)?;
            }
            println!("status {:?} violBound {}", rep.final_status, rep.viol_bound);
            Ok(0)
        }
        Cmd::Certify { model, property, t_max } => {
            let model = SmileModel::load(&model)?;
            let bx = model
                .meta
                .input_box
                .clone()
                .ok_or_else(|| Error::Data("model carries no input box".into()))?;
            let spec = match property {
                Some(p) => PropertySpec::load(p)?,
                None => model
                    .meta
                    .property
                    .clone()
                    .ok_or_else(|| Error::Data("model carries no property; pass --property".into()))?,
            };
            let prop = spec.resolve(&bx, Some(monotonicity_big_m(&model, &bx)))?;
            let cfg = GeneratorConfig {
                t_max: t_max.unwrap_or(f64::INFINITY),
                to_optimality: true,
                ..GeneratorConfig::default()
            };
            let res = generate(&model, &prop, &bx, cfg)?;
            println!("status {:?} violBound {}", res.status(), res.viol_bound());
            Ok(if res.status() == MilpStatus::Infeasible { 0 } else { 4 })
        }
        Cmd::Eval {
            model,
            data,
            schema,
            metrics,
            protected,
        } => {
            let model = SmileModel::load(&model)?;
            let task = match metrics {
                Metric::R2 => Task::Regression,
                Metric::Acc | Metric::Cfvar => Task::Binary,
            };
            let ds = load_data(&data, schema.as_deref(), task, Some(&model))?;
            let pred = model.predict_rows(&ds.x)?;
            let value = match metrics {
                Metric::R2 => r2(&ds.y, &pred)?,
                Metric::Acc => accuracy(&ds.y, &pred, 0.0)?,
                Metric::Cfvar => {
                    let p = protected
                        .or_else(|| ds.protected().first().copied())
                        .or_else(|| ds.bx.binary.first().copied())
                        .ok_or_else(|| Error::Data("no binary column to flip".into()))?;
                    counterfactual_variation(&model, &ds, p)?
                }
            };
            println!("{value}");
            Ok(0)
        }
        Cmd::Defend { model, data, schema, eps } => {
            let model = SmileModel::load(&model)?;
            let ds = load_data(&data, schema.as_deref(), Task::Binary, Some(&model))?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["row", "verdict", "label"])?;
            for r in 0..ds.len() {
                let (verdict, label) = match rejection_defense(&model, ds.x.row(r), eps)? {
                    DefenseVerdict::Certified(l) => ("certified", l.to_string()),
                    DefenseVerdict::Warning => ("warning", String::new()),
                };
                w.write_record([r.to_string(), verdict.to_string(), label])?;
            }
            w.flush()?;
            Ok(0)
        }
        Cmd::GenData {
            task,
            alpha,
            omega,
            n,
            noise,
            seed,
            out,
        } => {
            match task {
                GenTask::Monotonic => gen_monotonic(alpha, omega, n, -10.0, 10.0, seed)?.write_csv(&out)?,
                GenTask::Moons => two_moons(n, noise, seed)?.write_csv(&out)?,
                GenTask::Fairness => {
                    std::fs::write(&out, synthetic_fairness_csv(n, seed))?;
                    std::fs::write(out.with_extension("schema.json"), FAIRNESS_SCHEMA)?;
                }
            }
            Ok(0)
        }
    }
}
