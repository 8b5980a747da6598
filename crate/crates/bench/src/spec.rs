//! Model specification files and the short model codes used in benchmark
//! tables.

use serde::{Deserialize, Serialize};

use cwgp::{ElementaryWarping, Kernel, Model, Warping};

use crate::error::{CliError, CliResult};

/// Order in which codes are read: left to right as applied from observations
/// to the latent space.
pub const CODE_CONVENTION: &str =
    "codes list layers left to right in the order applied from y to x; S is an affine layer with unit scale";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Trainable {
    All(bool),
    Each(Vec<bool>),
}

impl Default for Trainable {
    fn default() -> Self {
        Trainable::All(true)
    }
}

impl Trainable {
    fn flags(&self, n: usize) -> CliResult<Vec<bool>> {
        match self {
            Trainable::All(b) => Ok(vec![*b; n]),
            Trainable::Each(v) if v.len() == n => Ok(v.clone()),
            Trainable::Each(v) => Err(CliError::usage(format!("expected {n} trainable flags, got {}", v.len()))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanSpec {
    #[serde(default)]
    pub value: f64,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec {
            value: 0.0,
            trainable: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    /// `se`, `ard_se` or `sm`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub variance: Option<f64>,
    #[serde(default)]
    pub lengthscale: Option<f64>,
    #[serde(default)]
    pub lengthscales: Option<Vec<f64>>,
    /// Spectral mixture components as `[weight, frequency, bandwidth]`.
    #[serde(default)]
    pub components: Option<Vec<[f64; 3]>>,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: "ard_se".into(),
            variance: None,
            lengthscale: None,
            lengthscales: None,
            components: None,
            trainable: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "default_noise")]
    pub variance: f64,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            variance: default_noise(),
            trainable: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    /// `affine`, `log`, `arcsinh`, `box_cox`, `sinh_arcsinh` or `tanh_mix`.
    pub variant: String,
    /// Natural-scale parameters: affine `[a, b]`, arcsinh `[a, b, c, d]`,
    /// box_cox `[λ]`, sinh_arcsinh `[a, b]`, tanh_mix `[a1, b1, c1, …]`.
    #[serde(default)]
    pub params: Option<Vec<f64>>,
    /// Number of tanh terms when `params` is absent.
    #[serde(default)]
    pub terms: Option<usize>,
    #[serde(default)]
    pub trainable: Trainable,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub mean: MeanSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub warping: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn from_toml(s: &str) -> CliResult<Self> {
        toml::from_str(s).map_err(|e| CliError::usage(format!("model spec: {e}")))
    }

    pub fn from_code(code: &str, kernel: KernelSpec) -> CliResult<Self> {
        Ok(ModelSpec {
            kernel,
            warping: layers_from_code(code)?,
            ..Default::default()
        })
    }

    /// Builds the model for inputs of dimension `dim`.
    pub fn build(&self, dim: usize) -> CliResult<Model> {
        let kernel = build_kernel(&self.kernel, dim)?;
        let mut layers = Vec::new();
        let mut frozen_phi = Vec::new();
        let mut offset = 0;
        for l in &self.warping {
            let layer = build_layer(l)?;
            let n = layer.n_params();
            for (j, t) in l.trainable.flags(n)?.into_iter().enumerate() {
                if !t {
                    frozen_phi.push(offset + j);
                }
            }
            offset += n;
            layers.push(layer);
        }
        let mut m = Model::new(self.mean.value, kernel, self.noise.variance, Warping::new(layers))?;
        let nk = m.kernel.n_params();
        if !self.mean.trainable {
            m.frozen.push(0);
        }
        if !self.kernel.trainable {
            m.frozen.extend(1..1 + nk);
        }
        if !self.noise.trainable {
            m.frozen.push(1 + nk);
        }
        for j in frozen_phi {
            m.freeze_warping_param(j);
        }
        m.frozen.sort_unstable();
        Ok(m)
    }
}

fn build_kernel(k: &KernelSpec, dim: usize) -> CliResult<Kernel> {
    let var = k.variance.unwrap_or(1.0);
    let kernel = match k.kind.as_str() {
        "se" => Kernel::squared_exp(var, k.lengthscale.unwrap_or(1.0))?,
        "ard_se" => {
            let ls = match (&k.lengthscales, k.lengthscale) {
                (Some(v), _) => v.clone(),
                (None, l) => vec![l.unwrap_or(1.0); dim],
            };
            if ls.len() != dim {
                return Err(CliError::data(format!("kernel has {} lengthscales but data has {dim} features", ls.len())));
            }
            Kernel::ard_squared_exp(var, &ls)?
        }
        "sm" => {
            if dim != 1 {
                return Err(CliError::data(format!("spectral mixture kernel needs 1 input, got {dim}")));
            }
            let comps: Vec<(f64, f64, f64)> = match &k.components {
                Some(c) => c.iter().map(|c| (c[0], c[1], c[2])).collect(),
                None => vec![(var / 2.0, 0.1, 0.01), (var / 2.0, 1.0, 0.01)],
            };
            Kernel::spectral_mixture(&comps)?
        }
        other => return Err(CliError::usage(format!("unknown kernel type `{other}`"))),
    };
    Ok(kernel)
}

fn expect(params: &[f64], n: usize, variant: &str) -> CliResult<()> {
    if params.len() == n {
        Ok(())
    } else {
        Err(CliError::usage(format!("{variant} takes {n} parameters, got {}", params.len())))
    }
}

fn build_layer(l: &LayerSpec) -> CliResult<ElementaryWarping> {
    let v = l.variant.as_str();
    let p = l.params.as_deref();
    let w = match v {
        "affine" => {
            let p = p.unwrap_or(&[0.0, 1.0]);
            expect(p, 2, v)?;
            ElementaryWarping::affine(p[0], p[1])?
        }
        "log" => {
            if p.is_some_and(|p| !p.is_empty()) {
                return Err(CliError::usage("log takes no parameters"));
            }
            ElementaryWarping::log()
        }
        "arcsinh" => {
            let p = p.unwrap_or(&[0.0, 1.0, 0.0, 1.0]);
            expect(p, 4, v)?;
            ElementaryWarping::arcsinh(p[0], p[1], p[2], p[3])?
        }
        "box_cox" => {
            let p = p.unwrap_or(&[1.0]);
            expect(p, 1, v)?;
            ElementaryWarping::box_cox(p[0])?
        }
        "sinh_arcsinh" => {
            let p = p.unwrap_or(&[0.0, 1.0]);
            expect(p, 2, v)?;
            ElementaryWarping::sinh_arcsinh(p[0], p[1])?
        }
        "tanh_mix" => {
            let terms: Vec<(f64, f64, f64)> = match p {
                Some(p) if p.len() % 3 == 0 && !p.is_empty() => p.chunks(3).map(|c| (c[0], c[1], c[2])).collect(),
                Some(_) => return Err(CliError::usage("tanh_mix parameters come in (a, b, c) triples")),
                None => {
                    let n = l.terms.unwrap_or(3).max(1);
                    (0..n).map(|j| (0.1, 1.0, j as f64 - 0.5 * (n - 1) as f64)).collect()
                }
            };
            ElementaryWarping::tanh_mix(&terms)?
        }
        other => return Err(CliError::usage(format!("unknown warping variant `{other}`"))),
    };
    Ok(w)
}

fn layer(variant: &str, trainable: Trainable) -> LayerSpec {
    LayerSpec {
        variant: variant.into(),
        params: None,
        terms: None,
        trainable,
    }
}

/// Layers for a model code such as `BC-L-SA`, `GP` or `WGP3`.
pub fn layers_from_code(code: &str) -> CliResult<Vec<LayerSpec>> {
    let code = code.trim().to_ascii_uppercase();
    if code == "GP" {
        return Ok(Vec::new());
    }
    if let Some(n) = code.strip_prefix("WGP") {
        let terms: usize = n
            .parse()
            .map_err(|_| CliError::usage(format!("bad WGP code `{code}`")))?;
        return Ok(vec![LayerSpec {
            terms: Some(terms),
            ..layer("tanh_mix", Trainable::All(true))
        }]);
    }
    code.split('-')
        .map(|tok| {
            Ok(match tok {
                "SA" => layer("sinh_arcsinh", Trainable::All(true)),
                "BC" => layer("box_cox", Trainable::All(true)),
                "A" => layer("arcsinh", Trainable::All(true)),
                "L" => layer("affine", Trainable::All(true)),
                "S" => layer("affine", Trainable::Each(vec![true, false])),
                "LOG" => layer("log", Trainable::All(true)),
                other => return Err(CliError::usage(format!("unknown layer code `{other}` in `{code}`"))),
            })
        })
        .collect()
}

/// The fourteen benchmark models: plain GP, three sum-of-tanh baselines and
/// ten compositions.
pub const BENCHMARK_MODELS: [&str; 14] = [
    "GP", "WGP1", "WGP2", "WGP3", "SA", "BC-L", "A-L", "BC-S", "BC-L-SA", "BC-S-SA", "A-L-BC-L", "BC-L-A-L", "A-L-BC-S",
    "BC-S-A-L",
];
