//! Sunspot robustness: training and held-out scores as elementary layers
//! are added one at a time.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use cwgp::data::{Dataset, Scaler};
use cwgp::metrics::{nlpd, rmse};
use cwgp::model::{fit_cache, nll, predict};
use cwgp::train::{multi_start_train, optimize_model, OptimizerKind, SelectionCriterion, TrainConfig};
use cwgp::{ElementaryWarping, Model, PredictOptions};

use crate::benchmark::{load_suite_data, suite_def, suite_kernel, sunspot_indices, RepData};
use crate::error::{CliError, CliResult};
use crate::spec::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    SinhArcsinh,
    /// Box-Cox layers between unit shifts, so zero counts stay in the domain.
    BoxCox,
}

impl std::str::FromStr for Component {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa" | "sinh_arcsinh" => Ok(Component::SinhArcsinh),
            "bc" | "box_cox" => Ok(Component::BoxCox),
            other => Err(CliError::usage(format!("unknown component `{other}`; expected sa or bc"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RobustnessArgs {
    pub data_root: PathBuf,
    pub component: Component,
    pub max_depth: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub predict: PredictOptions,
}

impl Default for RobustnessArgs {
    fn default() -> Self {
        RobustnessArgs {
            data_root: PathBuf::from("data"),
            component: Component::SinhArcsinh,
            max_depth: 6,
            seed: 0,
            train: TrainConfig {
                optimizer: OptimizerKind::Both,
                powell_max_iters: 20,
                ..Default::default()
            },
            predict: PredictOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustnessRow {
    pub depth: usize,
    pub warping_code: String,
    pub nll: Option<f64>,
    pub nlpd_reconstruction: Option<f64>,
    pub nlpd_forecast: Option<f64>,
    pub rmse_reconstruction: Option<f64>,
    pub train_s: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustnessReport {
    pub component: Component,
    pub seed: u64,
    pub n_train: usize,
    pub n_reconstruction: usize,
    pub n_forecast: usize,
    pub protocol: &'static str,
    pub rows: Vec<RobustnessRow>,
}

const PROTOCOL: &str = "depth 0 is a plain GP trained with the multi-start protocol; depth k starts from the trained \
depth k-1 model with one identity-initialised layer appended and is retrained with BFGS followed by Powell";

fn unit_shift() -> ElementaryWarping {
    ElementaryWarping::affine(1.0, 1.0).expect("valid affine")
}

/// Appends one identity-initialised layer. Frozen unit shifts keep Box-Cox
/// inputs at or above one.
fn deepen(model: &Model, component: Component) -> Model {
    let mut m = model.clone();
    match component {
        Component::SinhArcsinh => m.warping.push(ElementaryWarping::sinh_arcsinh(0.0, 1.0).expect("identity")),
        Component::BoxCox => {
            if m.warping.is_empty() {
                m.warping.push(unit_shift());
                m.mean.value += 1.0;
                let base = m.warping_layer_offset(0);
                m.freeze_warping_param(base);
                m.freeze_warping_param(base + 1);
            }
            m.warping.push(ElementaryWarping::box_cox(1.0).expect("identity"));
            m.warping.push(unit_shift());
            let last = m.warping.len() - 1;
            let base = m.warping_layer_offset(last);
            m.freeze_warping_param(base);
            m.freeze_warping_param(base + 1);
        }
    }
    m
}

struct Parts {
    rep: RepData,
    forecast: Dataset,
    n_recon: usize,
}

fn sunspot_parts(data: &Dataset, seed: u64) -> CliResult<Parts> {
    let (tr, rec, fore) = sunspot_indices(data, seed)?;
    let mut train = data.subset(&tr);
    let mut recon = data.subset(&rec);
    let mut forecast = data.subset(&fore);
    let s = Scaler::fit(train.inputs.view());
    for d in [&mut train, &mut recon, &mut forecast] {
        d.inputs = s.transform(d.inputs.view());
    }
    Ok(Parts {
        n_recon: recon.len(),
        rep: RepData {
            train,
            validation: None,
            test: recon,
            scaler: s,
        },
        forecast,
    })
}

fn score(model: &Model, parts: &Parts, opts: &PredictOptions) -> cwgp::Result<(f64, f64, f64, f64)> {
    let tr = &parts.rep.train;
    let cache = fit_cache(model, tr.inputs.view(), tr.targets.view())?;
    let rec = predict(model, &cache, parts.rep.test.inputs.view(), opts, Some(parts.rep.test.targets.view()))?;
    let fc = predict(model, &cache, parts.forecast.inputs.view(), opts, Some(parts.forecast.targets.view()))?;
    Ok((
        cache.nll(),
        nlpd(rec.log_density.as_ref().expect("targets given").view())?,
        nlpd(fc.log_density.as_ref().expect("targets given").view())?,
        rmse(parts.rep.test.targets.view(), rec.median.view())?,
    ))
}

pub fn cmd_robustness(args: &RobustnessArgs) -> CliResult<RobustnessReport> {
    let def = suite_def("sunspots")?;
    let data = load_suite_data(&def, &args.data_root)?
        .ok_or_else(|| CliError::data(format!("sunspots not found under {}", args.data_root.display())))?;
    let parts = sunspot_parts(&data, args.seed)?;
    let template = ModelSpec {
        kernel: suite_kernel(&def, &parts.rep),
        ..Default::default()
    }
    .build(1)?;
    let cfg = TrainConfig {
        seed: args.seed,
        selection: SelectionCriterion::Nll,
        ..args.train.clone()
    };
    let (x, y) = (parts.rep.train.inputs.view(), parts.rep.train.targets.view());
    let mut rows = Vec::new();
    let mut current: Option<Model> = None;
    for depth in 0..=args.max_depth {
        let t0 = Instant::now();
        let trained = match &current {
            None => multi_start_train(&template, x, y, None, None, &cfg).map(|r| r.best_model),
            Some(prev) => {
                let start = deepen(prev, args.component);
                optimize_model(&start, x, y, &cfg).map(|(m, _)| m)
            }
        };
        let train_s = t0.elapsed().as_secs_f64();
        match trained.and_then(|m| score(&m, &parts, &args.predict).map(|s| (m, s))) {
            Ok((m, (f, rec, fc, r))) => {
                rows.push(RobustnessRow {
                    depth,
                    warping_code: m.warping.code(),
                    nll: Some(f),
                    nlpd_reconstruction: Some(rec),
                    nlpd_forecast: Some(fc),
                    rmse_reconstruction: Some(r),
                    train_s,
                    error: None,
                });
                current = Some(m);
            }
            Err(e) => {
                rows.push(RobustnessRow {
                    depth,
                    warping_code: String::new(),
                    nll: None,
                    nlpd_reconstruction: None,
                    nlpd_forecast: None,
                    rmse_reconstruction: None,
                    train_s,
                    error: Some(e.to_string()),
                });
                // deeper models need a trained predecessor
                if current.is_none() {
                    break;
                }
                current = current.map(|m| deepen(&m, args.component));
            }
        }
    }
    Ok(RobustnessReport {
        component: args.component,
        seed: args.seed,
        n_train: parts.rep.train.len(),
        n_reconstruction: parts.n_recon,
        n_forecast: parts.forecast.len(),
        protocol: PROTOCOL,
        rows,
    })
}

/// NLL change from appending one identity-initialised layer to `model`.
pub fn identity_append_delta(model: &Model, component: Component, data: &Dataset) -> cwgp::Result<f64> {
    let before = nll(model, data.inputs.view(), data.targets.view())?;
    let after = nll(&deepen(model, component), data.inputs.view(), data.targets.view())?;
    Ok((after - before).abs())
}

pub fn format_table(r: &RobustnessReport) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut out = format!(
        "{:>5} {:>12} {:>12} {:>12} {:>12}  {}\n",
        "depth", "NLL", "NLPD recon", "NLPD fcast", "RMSE recon", "warping"
    );
    for row in &r.rows {
        out.push_str(&format!(
            "{:>5} {:>12} {:>12} {:>12} {:>12}  {}\n",
            row.depth,
            f(row.nll),
            f(row.nlpd_reconstruction),
            f(row.nlpd_forecast),
            f(row.rmse_reconstruction),
            row.error.as_deref().unwrap_or(&row.warping_code)
        ));
    }
    out
}
