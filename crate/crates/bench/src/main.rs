use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cwgp::metrics::PointEstimate;
use cwgp::train::{OptimizerKind, TrainConfig};
use cwgp::{PredictOptions, SampleOptions};
use cwgp_bench::approx::{self, ApproxArgs};
use cwgp_bench::benchmark::{self, BenchmarkArgs};
use cwgp_bench::commands::{cmd_fit, cmd_predict, cmd_sample, FitArgs, PredictArgs, SampleArgs};
use cwgp_bench::robustness::{self, Component, RobustnessArgs};
use cwgp_bench::spec::ModelSpec;
use cwgp_bench::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "cwgp", version, about = "Compositionally-warped Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gauss-Hermite order for predictive means.
    #[arg(long, default_value_t = 20)]
    gh_order: usize,
    /// Upper percentile of the predictive interval.
    #[arg(long, default_value_t = 0.975)]
    percentile: f64,
    /// Directory holding the dataset registry.
    #[arg(long, default_value = "data")]
    data_root: PathBuf,
}

#[derive(Args, Clone)]
struct Training {
    /// bfgs, powell or both.
    #[arg(long, default_value = "bfgs")]
    optimizer: String,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 3)]
    random_starts: usize,
}

impl Training {
    fn config(&self, seed: u64) -> CliResult<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "bfgs" => OptimizerKind::Bfgs,
            "powell" => OptimizerKind::Powell,
            "both" => OptimizerKind::Both,
            o => return Err(CliError::usage(format!("unknown optimizer `{o}`"))),
        };
        Ok(TrainConfig {
            optimizer,
            max_iters: self.max_iters,
            n_random_starts: self.random_starts,
            seed,
            ..Default::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model with the multi-start protocol.
    Fit {
        /// CSV path or registry dataset name.
        #[arg(long)]
        data: String,
        /// Model spec file (TOML).
        #[arg(long, conflicts_with = "code")]
        model: Option<PathBuf>,
        /// Model code such as GP, WGP3, SA or BC-L-SA.
        #[arg(long)]
        code: Option<String>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Training report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated feature columns.
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
        /// Share of rows held out to choose among starts (0 selects by NLL).
        #[arg(long, default_value_t = 0.0)]
        validation_fraction: f64,
        /// Keep features in their original units.
        #[arg(long)]
        no_standardize: bool,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        training: Training,
    },
    /// Predictive median, quadrature mean and interval at new inputs.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add the log predictive density of the target column.
        #[arg(long)]
        with_density: bool,
        /// Exclude observation noise from the interval.
        #[arg(long)]
        latent: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Joint posterior sample paths at new inputs.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_paths: usize,
        #[arg(long)]
        with_noise: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run a benchmark suite: abalone, ailerons, creep, sunspots, tbill or all.
    Benchmark {
        #[arg(long, default_value = "tbill")]
        suite: String,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Full training set sizes.
        #[arg(long)]
        paper_scale: bool,
        /// Also time the prediction pass of WGP against a closed-form model.
        #[arg(long)]
        timing: bool,
        /// Comma-separated model codes (default: all fourteen).
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// Score the quadrature mean instead of the median.
        #[arg(long)]
        gh_mean: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        training: Training,
    },
    /// Approximate a tanh-mixture warping with stacks of SAL layers.
    Approx {
        #[arg(long, default_value_t = 1)]
        min_layers: usize,
        #[arg(long, default_value_t = 7)]
        max_layers: usize,
        /// Target spec file (TOML) with a single tanh_mix warping.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Terms of the random target.
        #[arg(long, default_value_t = 5)]
        terms: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sunspot scores as identity-initialised layers are added.
    Robustness {
        /// sa or bc.
        #[arg(long, default_value = "sa")]
        component: String,
        #[arg(long, default_value_t = 6)]
        max_depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn predict_options(c: &Common, include_noise: bool) -> PredictOptions {
    PredictOptions {
        percentile: c.percentile,
        gh_order: c.gh_order,
        include_noise,
        ..Default::default()
    }
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> CliResult<()> {
    if let Some(p) = path {
        fs::write(p, serde_json::to_string_pretty(value).expect("report serializes"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit {
            data,
            model,
            code,
            out,
            report,
            target,
            features,
            validation_fraction,
            no_standardize,
            common,
            training,
        } => {
            let r = cmd_fit(&FitArgs {
                data,
                data_root: common.data_root.clone(),
                target,
                features,
                model_spec: model,
                code,
                out,
                report,
                train: training.config(common.seed)?,
                validation_fraction,
                standardize: !no_standardize,
            })?;
            println!(
                "fitted {} on {} points: NLL {:.6} (start {})",
                r.warping_code, r.n_train, r.train.best_nll, r.train.best_index
            );
        }
        Command::Predict {
            model,
            data,
            out,
            with_density,
            latent,
            common,
        } => {
            let csv = cmd_predict(&PredictArgs {
                model,
                data,
                out: out.clone(),
                opts: predict_options(&common, !latent),
                with_density,
            })?;
            if out.is_none() {
                print!("{csv}");
            }
        }
        Command::Sample {
            model,
            data,
            out,
            n_paths,
            with_noise,
            common,
        } => {
            let csv = cmd_sample(&SampleArgs {
                model,
                data,
                out: out.clone(),
                opts: SampleOptions {
                    n_paths,
                    seed: common.seed,
                    include_noise: with_noise,
                    ..Default::default()
                },
            })?;
            if out.is_none() {
                print!("{csv}");
            }
        }
        Command::Benchmark {
            suite,
            reps,
            paper_scale,
            timing,
            models,
            gh_mean,
            out,
            common,
            training,
        } => {
            let reports = benchmark::cmd_benchmark(&BenchmarkArgs {
                suite,
                data_root: common.data_root.clone(),
                reps,
                seed: common.seed,
                paper_scale,
                timing,
                models,
                train: training.config(common.seed)?,
                predict: predict_options(&common, true),
                point: if gh_mean { PointEstimate::GhMean } else { PointEstimate::Median },
            })?;
            for r in &reports {
                print!("{}", benchmark::format_table(r));
            }
            write_json(&out, &reports)?;
        }
        Command::Approx {
            min_layers,
            max_layers,
            target,
            terms,
            out,
            common,
        } => {
            let target = match target {
                Some(p) => {
                    let spec = ModelSpec::from_toml(&fs::read_to_string(p)?)?;
                    Some(spec.build(1)?.warping)
                }
                None => None,
            };
            let r = approx::cmd_approx(&ApproxArgs {
                min_depth: min_layers,
                max_depth: max_layers,
                target,
                n_terms: terms,
                seed: common.seed,
                ..Default::default()
            })?;
            print!("{}", approx::format_table(&r));
            write_json(&out, &r)?;
        }
        Command::Robustness {
            component,
            max_depth,
            out,
            common,
        } => {
            let r = robustness::cmd_robustness(&RobustnessArgs {
                data_root: common.data_root.clone(),
                component: component.parse::<Component>()?,
                max_depth,
                seed: common.seed,
                predict: predict_options(&common, true),
                ..Default::default()
            })?;
            print!("{}", robustness::format_table(&r));
            write_json(&out, &r)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
