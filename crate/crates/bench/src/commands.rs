//! `fit`, `predict` and `sample`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use cwgp::data::{load_csv, load_inputs, split_indices, CsvOptions, Dataset, Registry, Scaler, SplitSpec};
use cwgp::model::{fit_cache, predict, sample};
use cwgp::train::{multi_start_train, SelectionCriterion, TrainConfig};
use cwgp::{Model, PredictOptions, SampleOptions, TrainReport};

use crate::error::{CliError, CliResult};
use crate::spec::{KernelSpec, ModelSpec, CODE_CONVENTION};

const MODEL_FORMAT: u32 = 1;

/// A trained model together with everything prediction needs: the
/// training data (in scaled feature units) and the feature pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: u32,
    pub target: String,
    /// Raw CSV columns used as features.
    pub features: Vec<String>,
    #[serde(default)]
    pub categorical: BTreeMap<String, Vec<String>>,
    pub scaler: Option<Scaler>,
    pub model: Model,
    pub train_inputs: Array2<f64>,
    pub train_targets: Array1<f64>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let s = toml::to_string(self).map_err(|e| CliError::usage(format!("cannot serialize model: {e}")))?;
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let s = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let m: ModelFile = toml::from_str(&s).map_err(|e| CliError::data(format!("model file: {e}")))?;
        if m.format != MODEL_FORMAT {
            return Err(CliError::data(format!("unsupported model file format {}", m.format)));
        }
        Ok(m)
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            features: Some(self.features.clone()),
            categorical: self.categorical.keys().cloned().collect(),
            levels: self.categorical.clone(),
            ..Default::default()
        }
    }

    pub fn scale(&self, x: Array2<f64>) -> Array2<f64> {
        match &self.scaler {
            Some(s) => s.transform(x.view()),
            None => x,
        }
    }
}

/// Where a dataset lives: a CSV path, or a name in the registry.
pub struct DataSource {
    pub path: PathBuf,
    pub target: String,
    pub opts: CsvOptions,
}

fn header(path: &Path) -> CliResult<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(rdr
        .headers()
        .map_err(|e| CliError::data(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

/// Resolves `--data`: an existing file is read directly (target defaults to
/// the last column); otherwise the name is looked up in `data_root`.
pub fn resolve_data(data: &str, data_root: &Path, target: Option<&str>, features: Option<Vec<String>>) -> CliResult<DataSource> {
    let path = PathBuf::from(data);
    if path.is_file() {
        let target = match target {
            Some(t) => t.to_string(),
            None => header(&path)?
                .pop()
                .ok_or_else(|| CliError::data("CSV has no columns"))?,
        };
        return Ok(DataSource {
            path,
            target,
            opts: CsvOptions {
                features,
                ..Default::default()
            },
        });
    }
    let reg = Registry::new(data_root);
    if !reg.contains(data) {
        return Err(CliError::data(format!(
            "`{data}` is neither a file nor a dataset under {}",
            data_root.display()
        )));
    }
    let meta = reg.meta(data)?;
    Ok(DataSource {
        path: data_root.join(data).join("data.csv"),
        target: target.map(str::to_string).unwrap_or(meta.target),
        opts: CsvOptions {
            features: features.or(meta.features),
            categorical: meta.categorical,
            ..Default::default()
        },
    })
}

impl DataSource {
    pub fn load(&self) -> CliResult<Dataset> {
        Ok(load_csv(&self.path, &self.target, &self.opts)?)
    }

    fn raw_features(&self) -> CliResult<Vec<String>> {
        match &self.opts.features {
            Some(f) => Ok(f.clone()),
            None => Ok(header(&self.path)?.into_iter().filter(|h| *h != self.target).collect()),
        }
    }
}

pub struct FitArgs {
    pub data: String,
    pub data_root: PathBuf,
    pub target: Option<String>,
    pub features: Option<Vec<String>>,
    pub model_spec: Option<PathBuf>,
    pub code: Option<String>,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
    pub train: TrainConfig,
    /// Share of the data held out for start selection; zero selects by NLL.
    pub validation_fraction: f64,
    pub standardize: bool,
}

#[derive(Serialize)]
pub struct FitReport {
    pub dataset: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub dropped_rows: usize,
    pub warping_code: String,
    pub code_convention: &'static str,
    pub param_names: Vec<String>,
    pub config: TrainConfig,
    pub train: TrainReport,
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<FitReport> {
    let src = resolve_data(&args.data, &args.data_root, args.target.as_deref(), args.features.clone())?;
    let data = src.load()?;
    let spec = match (&args.model_spec, &args.code) {
        (Some(p), None) => ModelSpec::from_toml(&fs::read_to_string(p)?)?,
        (None, Some(c)) => ModelSpec::from_code(c, KernelSpec::default())?,
        (None, None) => ModelSpec::from_code("GP", KernelSpec::default())?,
        (Some(_), Some(_)) => return Err(CliError::usage("give either --model or --code, not both")),
    };
    let template = spec.build(data.dim())?;
    let idx = split_indices(
        data.len(),
        &SplitSpec {
            train_n: data.len(),
            validation_fraction: args.validation_fraction,
            seed: args.train.seed,
        },
    )?;
    let (mut train, mut val) = if idx.validation.is_empty() {
        (data.clone(), None)
    } else {
        (data.subset(&idx.train), Some(data.subset(&idx.validation)))
    };
    let scaler = if args.standardize {
        let s = Scaler::fit(train.inputs.view());
        train.inputs = s.transform(train.inputs.view());
        if let Some(v) = val.as_mut() {
            v.inputs = s.transform(v.inputs.view());
        }
        Some(s)
    } else {
        None
    };
    let mut cfg = args.train.clone();
    if val.is_none() {
        cfg.selection = SelectionCriterion::Nll;
    }
    let report = multi_start_train(
        &template,
        train.inputs.view(),
        train.targets.view(),
        val.as_ref().map(|v| (v.inputs.view(), v.targets.view())),
        None,
        &cfg,
    )?;
    let file = ModelFile {
        format: MODEL_FORMAT,
        target: src.target.clone(),
        features: src.raw_features()?,
        categorical: data.levels.clone(),
        scaler,
        model: report.best_model.clone(),
        train_inputs: train.inputs.clone(),
        train_targets: train.targets.clone(),
    };
    file.save(&args.out)?;
    let out = FitReport {
        dataset: args.data.clone(),
        n_train: train.len(),
        n_validation: val.as_ref().map_or(0, |v| v.len()),
        dropped_rows: data.dropped_rows,
        warping_code: report.best_model.warping.code(),
        code_convention: CODE_CONVENTION,
        param_names: report.best_model.param_names(),
        config: cfg,
        train: report,
    };
    if let Some(p) = &args.report {
        fs::write(p, serde_json::to_string_pretty(&out).expect("report serializes"))?;
    }
    Ok(out)
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: Option<PathBuf>,
    pub opts: PredictOptions,
    pub with_density: bool,
}

/// Writes `row,median,mean,lower,upper` and, with densities,
/// `log_density`. Returns the CSV text.
pub fn cmd_predict(args: &PredictArgs) -> CliResult<String> {
    let mf = ModelFile::load(&args.model)?;
    let opts = mf.csv_options();
    let (x, y) = if args.with_density {
        let d = load_csv(&args.data, &mf.target, &opts)?;
        (d.inputs, Some(d.targets))
    } else {
        (load_inputs(&args.data, &opts)?.inputs, None)
    };
    let x = mf.scale(x);
    let cache = fit_cache(&mf.model, mf.train_inputs.view(), mf.train_targets.view())?;
    let s = predict(&mf.model, &cache, x.view(), &args.opts, y.as_ref().map(|y| y.view()))?;
    let mut csv = String::from("row,median,mean,lower,upper");
    if args.with_density {
        csv.push_str(",log_density");
    }
    csv.push('\n');
    for i in 0..s.median.len() {
        write!(csv, "{i},{},{},{},{}", s.median[i], s.gh_mean[i], s.lower[i], s.upper[i]).unwrap();
        if let Some(ld) = &s.log_density {
            write!(csv, ",{}", ld[i]).unwrap();
        }
        csv.push('\n');
    }
    if let Some(p) = &args.out {
        fs::write(p, &csv)?;
    }
    Ok(csv)
}

pub struct SampleArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: Option<PathBuf>,
    pub opts: SampleOptions,
}

/// One row per path, one column per input row.
pub fn cmd_sample(args: &SampleArgs) -> CliResult<String> {
    let mf = ModelFile::load(&args.model)?;
    let x = mf.scale(load_inputs(&args.data, &mf.csv_options())?.inputs);
    let cache = fit_cache(&mf.model, mf.train_inputs.view(), mf.train_targets.view())?;
    let (paths, _) = sample(&mf.model, &cache, x.view(), &args.opts)?;
    let mut csv = (0..paths.ncols()).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for row in paths.rows() {
        csv.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    if let Some(p) = &args.out {
        fs::write(p, &csv)?;
    }
    Ok(csv)
}
