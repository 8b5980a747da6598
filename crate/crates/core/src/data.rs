//! CSV ingestion, train/validation/test splits, feature scaling and the
//! on-disk dataset registry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Features and targets in their original units; all entries finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Rows discarded at load time for missing or non-numeric cells.
    pub dropped_rows: usize,
    /// Levels of one-hot encoded columns, in indicator order.
    #[serde(default)]
    pub levels: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>, feature_names: Vec<String>, target_name: String) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if targets.is_empty() || inputs.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Dataset {
            inputs,
            targets,
            feature_names,
            target_name,
            dropped_rows: 0,
            levels: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            dropped_rows: 0,
            levels: self.levels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Input columns; `None` takes every column except the target.
    pub features: Option<Vec<String>>,
    /// Columns one-hot encoded, one indicator per distinct value in sorted order.
    pub categorical: Vec<String>,
    /// Fixed levels for categorical columns; rows with other values are
    /// dropped. Columns absent here take their levels from the file.
    pub levels: BTreeMap<String, Vec<String>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            features: None,
            categorical: Vec::new(),
            levels: BTreeMap::new(),
        }
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_csv(path: impl AsRef<Path>, target: &str, opts: &CsvOptions) -> Result<Dataset> {
    load_csv_reader(open(path.as_ref())?, target, opts)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a headed CSV. Rows holding an empty, non-numeric or non-finite cell
/// in a used column are dropped and counted; a row with the wrong number of
/// fields is a parse error.
pub fn load_csv_reader<R: Read>(reader: R, target: &str, opts: &CsvOptions) -> Result<Dataset> {
    let t = read_table(reader, Some(target), opts)?;
    Ok(Dataset {
        inputs: t.inputs,
        targets: t.targets.expect("target requested"),
        feature_names: t.names,
        target_name: target.to_string(),
        dropped_rows: t.dropped,
        levels: t.levels,
    })
}

/// Input features of a CSV without a target column.
#[derive(Clone, Debug, PartialEq)]
pub struct InputTable {
    pub inputs: Array2<f64>,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
}

/// Like [`load_csv`] for prediction inputs; `opts.features` should name the
/// training features.
pub fn load_inputs(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<InputTable> {
    let t = read_table(open(path.as_ref())?, None, opts)?;
    Ok(InputTable {
        inputs: t.inputs,
        feature_names: t.names,
        dropped_rows: t.dropped,
    })
}

struct Table {
    inputs: Array2<f64>,
    targets: Option<Array1<f64>>,
    names: Vec<String>,
    dropped: usize,
    levels: BTreeMap<String, Vec<String>>,
}

fn read_table<R: Read>(reader: R, target: Option<&str>, opts: &CsvOptions) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target_idx = target.map(col).transpose()?;
    let features: Vec<String> = match &opts.features {
        Some(f) => f.clone(),
        None => header.iter().filter(|h| Some(h.as_str()) != target).cloned().collect(),
    };
    let feature_idx: Vec<usize> = features.iter().map(|f| col(f)).collect::<Result<_>>()?;
    for c in &opts.categorical {
        if !features.contains(c) {
            return Err(Error::MissingColumn(c.clone()));
        }
    }

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        records.push(rec);
    }

    let mut levels = BTreeMap::new();
    for c in &opts.categorical {
        let l = match opts.levels.get(c) {
            Some(l) => l.clone(),
            None => {
                let j = col(c)?;
                let set: BTreeSet<String> = records
                    .iter()
                    .map(|r| r[j].trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                set.into_iter().collect()
            }
        };
        levels.insert(c.clone(), l);
    }

    let mut names = Vec::new();
    for f in &features {
        match levels.get(f) {
            Some(l) => names.extend(l.iter().map(|v| format!("{f}={v}"))),
            None => names.push(f.clone()),
        }
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0;
    'rows: for rec in &records {
        let y = match target_idx {
            Some(j) => match parse_cell(&rec[j]) {
                Some(y) => Some(y),
                None => {
                    dropped += 1;
                    continue;
                }
            },
            None => None,
        };
        let mut row = Vec::with_capacity(names.len());
        for (f, &j) in features.iter().zip(&feature_idx) {
            match levels.get(f) {
                Some(l) => {
                    let v = rec[j].trim();
                    if !l.iter().any(|x| x == v) {
                        dropped += 1;
                        continue 'rows;
                    }
                    row.extend(l.iter().map(|x| if x == v { 1.0 } else { 0.0 }));
                }
                None => match parse_cell(&rec[j]) {
                    Some(v) => row.push(v),
                    None => {
                        dropped += 1;
                        continue 'rows;
                    }
                },
            }
        }
        rows.extend(row);
        targets.extend(y);
    }
    let n = rows.len() / names.len().max(1);
    if n == 0 || names.is_empty() {
        return Err(Error::EmptyInput);
    }
    let inputs = Array2::from_shape_vec((n, names.len()), rows).expect("row width is fixed");
    Ok(Table {
        inputs,
        targets: target.map(|_| Array1::from(targets)),
        names,
        dropped,
        levels,
    })
}

/// The first `train_n` points of a seeded permutation form the training set,
/// itself split into an evaluation part and a validation part; the rest is
/// the test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_n: usize,
    /// Share of the training set held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Training set halved into evaluation and validation parts.
    pub fn halves(train_n: usize, seed: u64) -> Self {
        SplitSpec {
            train_n,
            validation_fraction: 0.5,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if spec.train_n > n {
        return Err(Error::InvalidSpec(format!("train_n {} exceeds {n} points", spec.train_n)));
    }
    if !(0.0..1.0).contains(&spec.validation_fraction) {
        return Err(Error::InvalidSpec(format!(
            "validation fraction must lie in [0, 1), got {}",
            spec.validation_fraction
        )));
    }
    let n_val = (spec.train_n as f64 * spec.validation_fraction).round() as usize;
    let n_fit = spec.train_n - n_val;
    if n_fit == 0 {
        return Err(Error::InvalidSpec("evaluation part would be empty".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok(SplitIndices {
        train: perm[..n_fit].to_vec(),
        validation: perm[n_fit..spec.train_n].to_vec(),
        test: perm[spec.train_n..].to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub indices: SplitIndices,
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let indices = split_indices(data.len(), spec)?;
    Ok(Split {
        train: data.subset(&indices.train),
        validation: data.subset(&indices.validation),
        test: data.subset(&indices.test),
        indices,
    })
}

/// Per-feature centring and scaling with training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

const MIN_SCALE: f64 = 1e-12;

impl Scaler {
    /// Population statistics; near-constant features keep scale 1.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for c in x.axis_iter(Axis(1)) {
            let m = c.sum() / n;
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            mean.push(m);
            scale.push(if sd < MIN_SCALE { 1.0 } else { sd });
        }
        Scaler { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut c) in out.axis_iter_mut(Axis(1)).enumerate() {
            c.mapv_inplace(|v| (v - self.mean[j]) / self.scale[j]);
        }
        out
    }

    pub fn inverse_transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut c) in out.axis_iter_mut(Axis(1)).enumerate() {
            c.mapv_inplace(|v| v * self.scale[j] + self.mean[j]);
        }
        out
    }
}

/// Standardises `train` features in place and applies the same map to
/// `others`. Targets are left untouched.
pub fn standardize_features(train: &mut Dataset, others: &mut [&mut Dataset]) -> Scaler {
    let s = Scaler::fit(train.inputs.view());
    train.inputs = s.transform(train.inputs.view());
    for o in others.iter_mut() {
        o.inputs = s.transform(o.inputs.view());
    }
    s
}

/// Contents of `data/<name>/meta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub target: String,
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub provenance: String,
}

/// A directory holding `<name>/data.csv` and `<name>/meta` per dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registry {
    pub root: PathBuf,
}

impl Registry {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Registry { root: root.into() }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.root.join(name).join("data.csv").is_file()
    }

    pub fn meta(&self, name: &str) -> Result<DatasetMeta> {
        let p = self.root.join(name).join("meta");
        let s = fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        toml::from_str(&s).map_err(|e| Error::Parse {
            row: 0,
            column: "meta".into(),
            message: e.to_string(),
        })
    }

    pub fn load(&self, name: &str) -> Result<(Dataset, DatasetMeta)> {
        let meta = self.meta(name)?;
        let opts = CsvOptions {
            features: meta.features.clone(),
            categorical: meta.categorical.clone(),
            ..Default::default()
        };
        let d = load_csv(self.root.join(name).join("data.csv"), &meta.target, &opts)?;
        Ok((d, meta))
    }
}
