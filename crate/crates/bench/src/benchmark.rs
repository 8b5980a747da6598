//! Benchmark suites: repeated random splits, fourteen models per split,
//! training and evaluation wall times, point and density scores.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cwgp::data::{split_indices, Dataset, Registry, Scaler, SplitSpec};
use cwgp::gaussian::gp_condition;
use cwgp::kernels::SPECTRAL_MIXTURE_CONVENTION;
use cwgp::metrics::{mae, nlpd, rmse, EvalResult, PointEstimate, WallTimes};
use cwgp::model::{fit_cache, predict, summarize_latent};
use cwgp::quadrature::gh_rule;
use cwgp::train::{multi_start_train, SelectionCriterion, TrainConfig};
use cwgp::warpings::NrmStats;
use cwgp::{ElementaryWarping, Model, PredictOptions, Warping};

use crate::error::{CliError, CliResult};
use crate::spec::{KernelSpec, ModelSpec, BENCHMARK_MODELS, CODE_CONVENTION};

pub const SUITES: [&str; 5] = ["abalone", "ailerons", "creep", "sunspots", "tbill"];

/// How one suite splits its data and which kernel it uses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteDef {
    pub name: &'static str,
    pub kernel: &'static str,
    pub train_n_desk: usize,
    pub train_n_paper: usize,
    /// Training set halved into fit and validation parts for start selection.
    pub validation: bool,
    pub protocol: &'static str,
}

pub fn suite_def(name: &str) -> CliResult<SuiteDef> {
    let d = |name, kernel, desk, full, validation, protocol| SuiteDef {
        name,
        kernel,
        train_n_desk: desk,
        train_n_paper: full,
        validation,
        protocol,
    };
    Ok(match name {
        "abalone" => d("abalone", "ard_se", 300, 1000, true, "random split; training set halved into fit and validation parts"),
        "ailerons" => d("ailerons", "ard_se", 300, 1000, true, "random split; training set halved into fit and validation parts"),
        "creep" => d("creep", "ard_se", 240, 800, true, "random split; training set halved into fit and validation parts"),
        "tbill" => d("tbill", "se", 40, 40, false, "random 40 quarters for fitting, remaining quarters for testing; starts selected by NLL"),
        "sunspots" => d(
            "sunspots",
            "sm",
            131,
            131,
            false,
            "random half of 1700-1961 for fitting; other half (reconstruction) and 1962-2008 (forecast) for testing; starts selected by NLL",
        ),
        other => return Err(CliError::usage(format!("unknown suite `{other}`; expected one of {SUITES:?} or all"))),
    })
}

#[derive(Clone, Debug)]
pub struct BenchmarkArgs {
    pub suite: String,
    pub data_root: PathBuf,
    pub reps: usize,
    pub seed: u64,
    pub paper_scale: bool,
    pub timing: bool,
    pub models: Option<Vec<String>>,
    pub train: TrainConfig,
    pub predict: PredictOptions,
    pub point: PointEstimate,
}

impl Default for BenchmarkArgs {
    fn default() -> Self {
        BenchmarkArgs {
            suite: "tbill".into(),
            data_root: PathBuf::from("data"),
            reps: 10,
            seed: 0,
            paper_scale: false,
            timing: false,
            models: None,
            train: TrainConfig::default(),
            predict: PredictOptions::default(),
            point: PointEstimate::Median,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub rep: usize,
    pub seed: u64,
    pub model: String,
    pub warping_code: String,
    /// Failure message; metrics are absent when set.
    pub error: Option<String>,
    pub eval: Option<EvalResult>,
    /// RMSE of the quadrature mean, for comparison with the median.
    pub rmse_gh_mean: Option<f64>,
    pub best_start: Option<usize>,
    pub nrm: NrmStats,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_train_s: f64,
    pub mean_eval_s: f64,
    pub mean_rmse: f64,
    pub mean_mae: f64,
    pub mean_nlpd: f64,
    pub mean_nll: f64,
    pub nlpd_quantiles: Quantiles,
    pub rmse_quantiles: Quantiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub n_points: usize,
    pub gh_order: usize,
    pub repeats: usize,
    pub wgp_code: String,
    pub cwgp_code: String,
    /// Best-of-repeats wall time of the full prediction pass.
    pub wgp_s: f64,
    pub cwgp_s: f64,
    pub ratio: f64,
    pub wgp_nrm: NrmStats,
    pub cwgp_nrm: NrmStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub seed: u64,
    pub reps: usize,
    pub paper_scale: bool,
    pub train_n: usize,
    pub crate_version: &'static str,
    pub code_convention: &'static str,
    pub kernel_convention: &'static str,
    pub point_estimate: PointEstimate,
    pub train_config: TrainConfig,
    pub predict: PredictOptions,
    pub suite: SuiteDef,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub suite: String,
    /// `ok`, or why the suite could not run.
    pub status: String,
    pub environment: Environment,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<Aggregate>,
    pub timing: Option<TimingResult>,
}

/// Fit / validation / test partition of one repetition, features scaled
/// with fit-set statistics.
#[derive(Clone, Debug)]
pub struct RepData {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Dataset,
    pub scaler: Scaler,
}

fn scale_all(mut train: Dataset, mut validation: Option<Dataset>, mut test: Dataset) -> RepData {
    let s = Scaler::fit(train.inputs.view());
    train.inputs = s.transform(train.inputs.view());
    test.inputs = s.transform(test.inputs.view());
    if let Some(v) = validation.as_mut() {
        v.inputs = s.transform(v.inputs.view());
    }
    RepData {
        train,
        validation,
        test,
        scaler: s,
    }
}

/// Index of the last sunspot year used for fitting and reconstruction.
pub const SUNSPOT_LAST_HISTORIC_YEAR: f64 = 1961.0;

/// Sunspot split: `(train, reconstruction, forecast)` row indices.
pub fn sunspot_indices(data: &Dataset, seed: u64) -> CliResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let year = data
        .feature_names
        .iter()
        .position(|f| f == "year")
        .ok_or_else(|| CliError::data("sunspots data needs a `year` feature"))?;
    let hist: Vec<usize> = (0..data.len())
        .filter(|&i| data.inputs[[i, year]] <= SUNSPOT_LAST_HISTORIC_YEAR)
        .collect();
    let fore: Vec<usize> = (0..data.len())
        .filter(|&i| data.inputs[[i, year]] > SUNSPOT_LAST_HISTORIC_YEAR)
        .collect();
    let s = split_indices(hist.len(), &SplitSpec { train_n: hist.len() / 2, validation_fraction: 0.0, seed })?;
    let mut train: Vec<usize> = s.train.iter().map(|&i| hist[i]).collect();
    let mut recon: Vec<usize> = s.test.iter().map(|&i| hist[i]).collect();
    train.sort_unstable();
    recon.sort_unstable();
    Ok((train, recon, fore))
}

pub fn prepare_rep(def: &SuiteDef, data: &Dataset, train_n: usize, seed: u64) -> CliResult<RepData> {
    if def.name == "sunspots" {
        let (tr, rec, fore) = sunspot_indices(data, seed)?;
        let test: Vec<usize> = rec.into_iter().chain(fore).collect();
        return Ok(scale_all(data.subset(&tr), None, data.subset(&test)));
    }
    let spec = SplitSpec {
        train_n,
        validation_fraction: if def.validation { 0.5 } else { 0.0 },
        seed,
    };
    let idx = split_indices(data.len(), &spec)?;
    let val = (!idx.validation.is_empty()).then(|| data.subset(&idx.validation));
    Ok(scale_all(data.subset(&idx.train), val, data.subset(&idx.test)))
}

/// Kernel specification for a suite, sized to the scaled training inputs.
pub fn suite_kernel(def: &SuiteDef, rep: &RepData) -> KernelSpec {
    match def.kernel {
        "sm" => {
            // Sunspot cycle of about 11 years plus a slow component, in
            // cycles per standardised input unit.
            let sd = rep.scaler.scale[0];
            let fast = sd / 11.0;
            let slow = sd / 100.0;
            KernelSpec {
                kind: "sm".into(),
                components: Some(vec![[0.5, fast, (0.1 * fast).powi(2)], [0.5, slow, (0.5 * slow).powi(2)]]),
                ..Default::default()
            }
        }
        k => KernelSpec {
            kind: k.into(),
            ..Default::default()
        },
    }
}

fn quantiles(mut v: Vec<f64>) -> Quantiles {
    if v.is_empty() {
        return Quantiles::default();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Quantiles {
        q25: q(0.25),
        q50: q(0.5),
        q75: q(0.75),
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn aggregate(models: &[String], rows: &[BenchRow]) -> Vec<Aggregate> {
    models
        .iter()
        .map(|m| {
            let ok: Vec<&EvalResult> = rows.iter().filter(|r| &r.model == m).filter_map(|r| r.eval.as_ref()).collect();
            let n_failed = rows.iter().filter(|r| &r.model == m && r.eval.is_none()).count();
            let col = |f: fn(&EvalResult) -> f64| ok.iter().map(|e| f(e)).collect::<Vec<f64>>();
            Aggregate {
                model: m.clone(),
                n_ok: ok.len(),
                n_failed,
                mean_train_s: mean(&col(|e| e.wall_times.train_s)),
                mean_eval_s: mean(&col(|e| e.wall_times.eval_s)),
                mean_rmse: mean(&col(|e| e.rmse)),
                mean_mae: mean(&col(|e| e.mae)),
                mean_nlpd: mean(&col(|e| e.nlpd)),
                mean_nll: mean(&col(|e| e.nll)),
                nlpd_quantiles: quantiles(col(|e| e.nlpd)),
                rmse_quantiles: quantiles(col(|e| e.rmse)),
            }
        })
        .collect()
}

/// Trains one model and scores it on the test set.
pub struct ModelRun {
    pub model: Model,
    pub eval: EvalResult,
    pub rmse_gh_mean: f64,
    pub best_start: usize,
    pub nrm: NrmStats,
}

pub fn run_model(
    template: &Model,
    rep: &RepData,
    prelearned: Option<&Model>,
    cfg: &TrainConfig,
    popts: &PredictOptions,
    point: PointEstimate,
) -> cwgp::Result<ModelRun> {
    let t0 = Instant::now();
    let mut cfg = cfg.clone();
    if rep.validation.is_none() {
        cfg.selection = SelectionCriterion::Nll;
    }
    let report = multi_start_train(
        template,
        rep.train.inputs.view(),
        rep.train.targets.view(),
        rep.validation.as_ref().map(|v| (v.inputs.view(), v.targets.view())),
        prelearned,
        &cfg,
    )?;
    let train_s = t0.elapsed().as_secs_f64();
    let model = report.best_model;
    let t1 = Instant::now();
    let cache = fit_cache(&model, rep.train.inputs.view(), rep.train.targets.view())?;
    let s = predict(&model, &cache, rep.test.inputs.view(), popts, Some(rep.test.targets.view()))?;
    let eval_s = t1.elapsed().as_secs_f64();
    let y = rep.test.targets.view();
    let point_pred = match point {
        PointEstimate::Median => &s.median,
        PointEstimate::GhMean => &s.gh_mean,
    };
    let eval = EvalResult {
        rmse: rmse(y, point_pred.view())?,
        mae: mae(y, point_pred.view())?,
        nlpd: nlpd(s.log_density.as_ref().expect("targets given").view())?,
        nll: cache.nll(),
        n: y.len(),
        wall_times: WallTimes { train_s, eval_s },
    };
    Ok(ModelRun {
        rmse_gh_mean: rmse(y, s.gh_mean.view())?,
        model,
        eval,
        best_start: report.best_index,
        nrm: s.nrm,
    })
}

/// Times the full prediction pass (median, interval, quadrature mean) of
/// two warpings on the same latent Gaussian marginals; best of `repeats`.
pub fn time_prediction_pass(
    wgp: &Warping,
    cwgp: &Warping,
    latent_mean: ArrayView1<f64>,
    latent_sd: ArrayView1<f64>,
    opts: &PredictOptions,
    repeats: usize,
) -> cwgp::Result<TimingResult> {
    let rule = gh_rule::<f64>(opts.gh_order)?;
    let run = |w: &Warping| -> cwgp::Result<(f64, NrmStats)> {
        let mut best = f64::INFINITY;
        let mut stats = NrmStats::default();
        for _ in 0..repeats.max(1) {
            let t = Instant::now();
            let s = summarize_latent(w, latent_mean, latent_sd, opts, &rule)?;
            best = best.min(t.elapsed().as_secs_f64());
            stats = s.nrm;
        }
        Ok((best, stats))
    };
    let (wgp_s, wgp_nrm) = run(wgp)?;
    let (cwgp_s, cwgp_nrm) = run(cwgp)?;
    Ok(TimingResult {
        n_points: latent_mean.len(),
        gh_order: opts.gh_order,
        repeats,
        wgp_code: wgp.code(),
        cwgp_code: cwgp.code(),
        wgp_s,
        cwgp_s,
        ratio: wgp_s / cwgp_s.max(1e-12),
        wgp_nrm,
        cwgp_nrm,
    })
}

/// A seeded synthetic workload: latent marginals plus a three-term tanh
/// warping and a two-layer sinh-arcsinh/affine composition.
pub fn synthetic_timing(n_points: usize, opts: &PredictOptions, seed: u64) -> cwgp::Result<TimingResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Array1::from_shape_fn(n_points, |_| rng.random_range(-2.0..2.0));
    let s = Array1::from_shape_fn(n_points, |_| rng.random_range(0.2..1.0));
    let wgp: Warping = ElementaryWarping::tanh_mix(&[(1.0, 1.0, -1.0), (0.5, 2.0, 0.0), (2.0, 0.5, 1.0)])?.into();
    let cwgp = Warping::new(vec![
        ElementaryWarping::sinh_arcsinh(0.3, 1.2)?,
        ElementaryWarping::affine(0.1, 0.9)?,
        ElementaryWarping::sinh_arcsinh(-0.2, 0.8)?,
        ElementaryWarping::affine(0.0, 1.1)?,
    ]);
    time_prediction_pass(&wgp, &cwgp, m.view(), s.view(), opts, 3)
}

fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

pub fn load_suite_data(def: &SuiteDef, root: &std::path::Path) -> CliResult<Option<Dataset>> {
    let reg = Registry::new(root);
    if !reg.contains(def.name) {
        return Ok(None);
    }
    Ok(Some(reg.load(def.name)?.0))
}

pub fn run_suite(name: &str, args: &BenchmarkArgs) -> CliResult<BenchmarkReport> {
    let def = suite_def(name)?;
    let train_n = if args.paper_scale { def.train_n_paper } else { def.train_n_desk };
    let models: Vec<String> = match &args.models {
        Some(m) => m.clone(),
        None => BENCHMARK_MODELS.iter().map(|s| s.to_string()).collect(),
    };
    let mut env = Environment {
        seed: args.seed,
        reps: args.reps,
        paper_scale: args.paper_scale,
        train_n,
        crate_version: env!("CARGO_PKG_VERSION"),
        code_convention: CODE_CONVENTION,
        kernel_convention: SPECTRAL_MIXTURE_CONVENTION,
        point_estimate: args.point,
        train_config: args.train.clone(),
        predict: args.predict.clone(),
        suite: def.clone(),
        notes: vec![
            "plain GP is trained first in each repetition and supplies the prelearned start of every warped model".into(),
            "train_s excludes that shared GP fit for warped models".into(),
        ],
    };
    let Some(data) = load_suite_data(&def, &args.data_root)? else {
        return Ok(BenchmarkReport {
            suite: name.into(),
            status: format!("dataset not vendored: expected {}/{}/data.csv", args.data_root.display(), def.name),
            environment: env,
            rows: Vec::new(),
            aggregates: Vec::new(),
            timing: None,
        });
    };
    if !data.levels.is_empty() {
        env.notes.push(format!("one-hot encoded columns: {:?}", data.levels));
    }
    let mut rows = Vec::new();
    let mut timing = None;
    for r in 0..args.reps {
        let seed = rep_seed(args.seed, r);
        let rep = prepare_rep(&def, &data, train_n, seed)?;
        let kernel = suite_kernel(&def, &rep);
        let cfg = TrainConfig {
            seed,
            ..args.train.clone()
        };
        let mut gp: Option<Model> = None;
        let mut latents: Option<(Array1<f64>, Array1<f64>)> = None;
        let mut trained: Vec<(String, Model)> = Vec::new();
        let order: Vec<&String> = models
            .iter()
            .filter(|m| m.as_str() == "GP")
            .chain(models.iter().filter(|m| m.as_str() != "GP"))
            .collect();
        for code in order {
            let row = |error: Option<String>, run: Option<&ModelRun>, wcode: String| BenchRow {
                rep: r,
                seed,
                model: code.clone(),
                warping_code: wcode,
                error,
                eval: run.map(|x| x.eval.clone()),
                rmse_gh_mean: run.map(|x| x.rmse_gh_mean),
                best_start: run.map(|x| x.best_start),
                nrm: run.map(|x| x.nrm).unwrap_or_default(),
            };
            let template = match ModelSpec::from_code(code, kernel.clone()).and_then(|s| s.build(data.dim())) {
                Ok(t) => t,
                Err(e) => {
                    rows.push(row(Some(e.message), None, String::new()));
                    continue;
                }
            };
            let wcode = template.warping.code();
            let train_cfg = if code == "GP" && def.kernel == "sm" {
                TrainConfig {
                    optimizer: cwgp::train::OptimizerKind::Both,
                    ..cfg.clone()
                }
            } else {
                cfg.clone()
            };
            match run_model(&template, &rep, gp.as_ref(), &train_cfg, &args.predict, args.point) {
                Ok(run) => {
                    if code == "GP" {
                        gp = Some(run.model.clone());
                        if let Ok(c) = fit_cache(&run.model, rep.train.inputs.view(), rep.train.targets.view()) {
                            let post = gp_condition(
                                rep.train.inputs.view(),
                                c.train_latents.view(),
                                rep.test.inputs.view(),
                                &run.model.kernel,
                                &run.model.mean,
                                run.model.noise_var(),
                                false,
                            );
                            if let Ok(p) = post {
                                let sd = p.var.mapv(|v| (v + run.model.noise_var()).sqrt());
                                latents = Some((p.mean, sd));
                            }
                        }
                    }
                    trained.push((code.clone(), run.model.clone()));
                    rows.push(row(None, Some(&run), wcode));
                }
                Err(e) => rows.push(row(Some(e.to_string()), None, wcode)),
            }
        }
        if args.timing && r == 0 {
            timing = timing_from_trained(&trained, latents.as_ref(), &args.predict);
        }
    }
    let aggregates = aggregate(&models, &rows);
    Ok(BenchmarkReport {
        suite: name.into(),
        status: "ok".into(),
        environment: env,
        rows,
        aggregates,
        timing,
    })
}

/// Timing on repetition 0: the GP's latent marginals at the test inputs,
/// pushed through the trained WGP3 warping and the trained closed-form
/// composition with the most layers.
fn timing_from_trained(
    trained: &[(String, Model)],
    latents: Option<&(Array1<f64>, Array1<f64>)>,
    opts: &PredictOptions,
) -> Option<TimingResult> {
    let (m, s) = latents?;
    let wgp = trained
        .iter()
        .filter(|(c, _)| c.starts_with("WGP"))
        .max_by_key(|(_, m)| m.warping.n_params())?;
    let cwgp = trained
        .iter()
        .filter(|(_, m)| !m.warping.is_empty() && m.warping.has_closed_form_inverse())
        .max_by_key(|(_, m)| m.warping.len())?;
    time_prediction_pass(&wgp.1.warping, &cwgp.1.warping, m.view(), s.view(), opts, 3).ok()
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult<Vec<BenchmarkReport>> {
    let names: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else {
        vec![args.suite.as_str()]
    };
    names.into_iter().map(|n| run_suite(n, args)).collect()
}

/// Human-readable table of aggregate means.
pub fn format_table(report: &BenchmarkReport) -> String {
    let mut out = format!("suite {} ({})\n", report.suite, report.status);
    if report.aggregates.is_empty() {
        return out;
    }
    out.push_str(&format!(
        "{:<10} {:>4} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "model", "ok", "TimeT", "TimeE", "RMSE", "MAE", "NLPD"
    ));
    for a in &report.aggregates {
        out.push_str(&format!(
            "{:<10} {:>4} {:>9.3} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            a.model, a.n_ok, a.mean_train_s, a.mean_eval_s, a.mean_rmse, a.mean_mae, a.mean_nlpd
        ));
    }
    if let Some(t) = &report.timing {
        out.push_str(&format!(
            "timing: {} {:.4}s vs {} {:.4}s on {} points (ratio {:.1})\n",
            t.wgp_code, t.wgp_s, t.cwgp_code, t.cwgp_s, t.n_points, t.ratio
        ));
    }
    out
}
