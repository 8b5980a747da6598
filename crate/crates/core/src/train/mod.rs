//! Hyperparameter optimisation and the six-start training protocol.

pub mod optim;

pub use optim::{
    bfgs_minimize, finite_diff_grad, levenberg_marquardt, powell_minimize, FnObjective, Objective, OptimOptions,
    OptimResult, OptimStatus,
};

use std::time::Instant;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::metrics::rmse;
use crate::model::{fit_cache, nll, nll_and_grad, predict_median, GradientMode, WarpedGp};
use crate::scalar::Scalar;
use crate::warpings::NrmOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Bfgs,
    Powell,
    /// BFGS, then Powell from the BFGS optimum.
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// RMSE of the predictive median on the validation split; falls back to
    /// NLL when no validation data is given.
    ValidationRmse,
    Nll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub max_iters: usize,
    /// Iteration cap for Powell runs, whose iterations are far costlier.
    #[serde(default = "default_powell_iters")]
    pub powell_max_iters: usize,
    pub grad_tol: f64,
    /// Relative-improvement tolerance.
    pub convergence_tol: f64,
    pub gradient: GradientMode,
    pub n_random_starts: usize,
    /// Half-width of the uniform perturbation applied to the data-derived
    /// start for random starts.
    pub random_radius: f64,
    pub seed: u64,
    pub selection: SelectionCriterion,
    /// Every start uses the template parameters unchanged.
    #[serde(default)]
    pub identical_starts: bool,
}

fn default_powell_iters() -> usize {
    100
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Bfgs,
            max_iters: 500,
            powell_max_iters: default_powell_iters(),
            grad_tol: 1e-6,
            convergence_tol: 1e-9,
            gradient: GradientMode::Analytic,
            n_random_starts: 3,
            random_radius: 2.0,
            seed: 0,
            selection: SelectionCriterion::ValidationRmse,
            identical_starts: false,
        }
    }
}

impl TrainConfig {
    pub fn optim_options(&self) -> OptimOptions {
        OptimOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            rel_tol: self.convergence_tol,
        }
    }

    fn powell_options(&self) -> OptimOptions {
        OptimOptions {
            max_iters: self.powell_max_iters,
            ..self.optim_options()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Default,
    DataDerived,
    Prelearned,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub kind: StartKind,
    pub initial_nll: Option<f64>,
    pub final_nll: Option<f64>,
    pub validation_rmse: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Option<OptimStatus>,
    pub wall_time_s: f64,
    /// Why the start was skipped or failed.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport<T> {
    pub best_model: WarpedGp<T>,
    pub best_params: Vec<T>,
    pub best_nll: f64,
    pub best_index: usize,
    pub criterion: SelectionCriterion,
    pub starts: Vec<StartRecord>,
}

/// NLL over the free parameters of a model.
pub struct NllObjective<'a, T: Scalar> {
    pub model: WarpedGp<T>,
    pub inputs: ArrayView2<'a, T>,
    pub targets: ArrayView1<'a, T>,
    pub gradient: GradientMode,
    free: Vec<usize>,
}

impl<'a, T: Scalar> NllObjective<'a, T> {
    pub fn new(model: WarpedGp<T>, inputs: ArrayView2<'a, T>, targets: ArrayView1<'a, T>, gradient: GradientMode) -> Self {
        let free = model.free_indices();
        NllObjective {
            model,
            inputs,
            targets,
            gradient,
            free,
        }
    }
}

impl<T: Scalar> Objective<T> for NllObjective<'_, T> {
    fn value(&mut self, x: &[T]) -> Result<T> {
        self.model.set_free_params(x)?;
        nll(&self.model, self.inputs, self.targets)
    }

    fn value_and_grad(&mut self, x: &[T]) -> Result<(T, Vec<T>)> {
        match self.gradient {
            GradientMode::Analytic => {
                self.model.set_free_params(x)?;
                let (f, g) = nll_and_grad(&self.model, self.inputs, self.targets, GradientMode::Analytic)?;
                Ok((f, self.free.iter().map(|&i| g[i]).collect()))
            }
            GradientMode::FiniteDifference { step } => {
                let f = self.value(x)?;
                let g = finite_diff_grad(|p: &[T]| self.value(p), x, T::lit(step))?;
                self.model.set_free_params(x)?;
                Ok((f, g))
            }
        }
    }
}

/// Optimises the free parameters of `model` from its current values.
pub fn optimize_model<T: Scalar>(
    model: &WarpedGp<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView1<T>,
    config: &TrainConfig,
) -> Result<(WarpedGp<T>, OptimResult<T>)> {
    let x0 = model.free_params();
    let mut obj = NllObjective::new(model.clone(), inputs, targets, config.gradient);
    let opts = config.optim_options();
    let res = match config.optimizer {
        OptimizerKind::Bfgs => bfgs_minimize(&mut obj, &x0, &opts)?,
        OptimizerKind::Powell => powell_minimize(&mut obj, &x0, &config.powell_options())?,
        OptimizerKind::Both => {
            let b = bfgs_minimize(&mut obj, &x0, &opts)?;
            let mut p = powell_minimize(&mut obj, &b.x, &config.powell_options())?;
            p.f0 = b.f0;
            p.iterations += b.iterations;
            p.evaluations += b.evaluations;
            let mut trace = b.trace;
            trace.extend(p.trace.into_iter().skip(1));
            p.trace = trace;
            p
        }
    };
    let mut out = model.clone();
    out.set_free_params(&res.x)?;
    Ok((out, res))
}

fn mean_var<T: Scalar>(v: &[T]) -> (T, T) {
    let n = T::lit(v.len().max(1) as f64);
    let m = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / n;
    (m, var)
}

/// Resets every layer to (near) identity, keeping frozen parameters.
fn identity_warping<T: Scalar>(template: &WarpedGp<T>, targets: ArrayView1<T>) -> Result<WarpedGp<T>> {
    let mut m = template.clone();
    let nx = m.n_latent_params();
    let mut values: Vec<T> = targets.to_vec();
    let mut offset = 0;
    for li in 0..m.warping.layers.len() {
        let k = m.warping.layers[li].n_params();
        let before = m.warping.layers[li].params();
        let (c, v) = mean_var(&values);
        m.warping.layers[li].reset_to_identity(c, v.sqrt());
        let mut after = m.warping.layers[li].params();
        for (j, a) in after.iter_mut().enumerate() {
            if template.is_frozen(nx + offset + j) {
                *a = before[j];
            }
        }
        m.warping.layers[li].set_params(&after)?;
        for (i, y) in values.iter_mut().enumerate() {
            *y = m.warping.layers[li].forward(*y).map_err(|e| e.at_row(i))?;
        }
        offset += k;
    }
    Ok(m)
}

fn set_kernel_scale<T: Scalar>(kernel: &mut Kernel<T>, var: T, sds: &[T]) {
    let floor = T::lit(1e-3);
    let ls = |s: T| if s > floor && s.is_finite() { s } else { T::one() };
    match kernel {
        Kernel::SquaredExp {
            log_variance,
            log_lengthscale,
        } => {
            *log_variance = var.ln();
            let mean_sd = sds.iter().copied().sum::<T>() / T::lit(sds.len().max(1) as f64);
            *log_lengthscale = ls(mean_sd).ln();
        }
        Kernel::ArdSquaredExp {
            log_variance,
            log_lengthscales,
        } => {
            *log_variance = var.ln();
            for (l, &s) in log_lengthscales.iter_mut().zip(sds) {
                *l = ls(s).ln();
            }
        }
        Kernel::SpectralMixture { components } => {
            let q = T::lit(components.len().max(1) as f64);
            for c in components {
                c.log_weight = (var / q).ln();
            }
        }
    }
}

/// Data-derived start: identity warping, mean and variance of `φ(y)`,
/// lengthscales from input spread, noise one tenth of the variance.
pub fn data_derived_start<T: Scalar>(
    template: &WarpedGp<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView1<T>,
) -> Result<WarpedGp<T>> {
    let mut m = identity_warping(template, targets)?;
    let z: Vec<T> = targets
        .iter()
        .enumerate()
        .map(|(i, &y)| m.warping.forward(y).map_err(|e| e.at_row(i)))
        .collect::<Result<_>>()?;
    let (mu, var) = mean_var(&z);
    let var = var.max(T::lit(1e-6));
    let sds: Vec<T> = inputs
        .axis_iter(Axis(1))
        .map(|c| mean_var(&c.to_vec()).1.sqrt())
        .collect();
    let before = template.theta_x();
    m.mean.value = mu;
    set_kernel_scale(&mut m.kernel, var, &sds);
    m.log_noise_var = (T::lit(0.1) * var).ln();
    let mut theta_x = m.theta_x();
    for (i, v) in theta_x.iter_mut().enumerate() {
        if template.is_frozen(i) {
            *v = before[i];
        }
    }
    m.set_theta_x(&theta_x)?;
    Ok(m)
}

/// Prelearned start: latent hyperparameters of a trained plain GP with the
/// warping at identity. Mean and scales are mapped through the identity
/// warping so that `φ(y)` keeps the GP's standardisation.
pub fn prelearned_start<T: Scalar>(
    template: &WarpedGp<T>,
    gp: &WarpedGp<T>,
    targets: ArrayView1<T>,
) -> Result<WarpedGp<T>> {
    if gp.n_latent_params() != template.n_latent_params() {
        return Err(Error::InvalidParameter("prelearned GP has a different kernel shape".into()));
    }
    let mut m = identity_warping(template, targets)?;
    let before = template.theta_x();
    m.set_theta_x(&gp.theta_x())?;
    let y: Vec<T> = targets.to_vec();
    let z: Vec<T> = y.iter().map(|&v| m.warping.forward(v)).collect::<Result<_>>()?;
    let (my, vy) = mean_var(&y);
    let (mz, vz) = mean_var(&z);
    m.mean.value += mz - my;
    if vy > T::zero() && vz > T::zero() {
        let log_ratio = (vz / vy).ln();
        if log_ratio.abs() > T::lit(1e-12) {
            m.log_noise_var += log_ratio;
            match &mut m.kernel {
                Kernel::SquaredExp { log_variance, .. } | Kernel::ArdSquaredExp { log_variance, .. } => {
                    *log_variance += log_ratio
                }
                Kernel::SpectralMixture { components } => {
                    for c in components {
                        c.log_weight += log_ratio;
                    }
                }
            }
        }
    }
    let mut theta_x = m.theta_x();
    for (i, v) in theta_x.iter_mut().enumerate() {
        if template.is_frozen(i) {
            *v = before[i];
        }
    }
    m.set_theta_x(&theta_x)?;
    Ok(m)
}

/// Runs the six-start protocol: default, data-derived, prelearned, and
/// `n_random_starts` random perturbations of the data-derived start.
///
/// The winner has the lowest validation RMSE of the predictive median (or
/// the lowest NLL); ties go to the lower NLL, then the lower index.
pub fn multi_start_train<T: Scalar>(
    template: &WarpedGp<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView1<T>,
    validation: Option<(ArrayView2<T>, ArrayView1<T>)>,
    prelearned: Option<&WarpedGp<T>>,
    config: &TrainConfig,
) -> Result<TrainReport<T>> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts: Vec<(StartKind, std::result::Result<WarpedGp<T>, String>)> = Vec::new();
    if config.identical_starts {
        starts.push((StartKind::Default, Ok(template.clone())));
        starts.push((StartKind::DataDerived, Ok(template.clone())));
        starts.push((StartKind::Prelearned, Ok(template.clone())));
        for _ in 0..config.n_random_starts {
            starts.push((StartKind::Random, Ok(template.clone())));
        }
    } else {
        starts.push((StartKind::Default, Ok(template.clone())));
        let derived = data_derived_start(template, inputs, targets);
        starts.push((StartKind::DataDerived, derived.clone().map_err(|e| e.to_string())));
        let pre = match prelearned {
            Some(gp) => prelearned_start(template, gp, targets).map_err(|e| e.to_string()),
            None if template.warping.is_empty() => Err("template is a plain GP; no prelearning stage".to_string()),
            None => {
                let gp_template = WarpedGp {
                    warping: Default::default(),
                    frozen: template.frozen.iter().copied().filter(|&i| i < template.n_latent_params()).collect(),
                    ..template.clone()
                };
                let gp_config = TrainConfig {
                    n_random_starts: 0,
                    selection: SelectionCriterion::Nll,
                    ..config.clone()
                };
                multi_start_train(&gp_template, inputs, targets, None, None, &gp_config)
                    .and_then(|r| prelearned_start(template, &r.best_model, targets))
                    .map_err(|e| e.to_string())
            }
        };
        starts.push((StartKind::Prelearned, pre));
        for _ in 0..config.n_random_starts {
            let s = match &derived {
                Ok(d) => {
                    let mut m = d.clone();
                    let p: Vec<T> = m
                        .free_params()
                        .into_iter()
                        .map(|v| v + T::lit(rng.random_range(-config.random_radius..=config.random_radius)))
                        .collect();
                    m.set_free_params(&p).map(|_| m).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            };
            starts.push((StartKind::Random, s));
        }
    }

    let mut records = Vec::with_capacity(starts.len());
    let mut results: Vec<Option<(WarpedGp<T>, f64, f64)>> = Vec::with_capacity(starts.len());
    let mut first_error: Option<Error> = None;
    for (index, (kind, start)) in starts.into_iter().enumerate() {
        let t0 = Instant::now();
        let mut rec = StartRecord {
            index,
            kind,
            initial_nll: None,
            final_nll: None,
            validation_rmse: None,
            iterations: 0,
            evaluations: 0,
            status: None,
            wall_time_s: 0.0,
            skipped: None,
        };
        let start = match start {
            Ok(s) => s,
            Err(reason) => {
                rec.skipped = Some(reason);
                records.push(rec);
                results.push(None);
                continue;
            }
        };
        match nll(&start, inputs, targets) {
            Ok(v) => rec.initial_nll = Some(v.as_f64()),
            Err(e) => {
                rec.skipped = Some(e.to_string());
                first_error.get_or_insert(e);
                records.push(rec);
                results.push(None);
                continue;
            }
        }
        match optimize_model(&start, inputs, targets, config) {
            Ok((model, res)) => {
                rec.final_nll = Some(res.f.as_f64());
                rec.iterations = res.iterations;
                rec.evaluations = res.evaluations;
                rec.status = Some(res.status);
                let score = match (config.selection, &validation) {
                    (SelectionCriterion::ValidationRmse, Some((vx, vy))) => {
                        let r = fit_cache(&model, inputs, targets)
                            .and_then(|c| predict_median(&model, &c, *vx, &NrmOptions::default()))
                            .and_then(|(med, _)| rmse(vy.view(), med.view()));
                        match r {
                            Ok(v) if v.is_finite() => {
                                rec.validation_rmse = Some(v.as_f64());
                                v.as_f64()
                            }
                            _ => f64::INFINITY,
                        }
                    }
                    _ => res.f.as_f64(),
                };
                results.push(Some((model, score, res.f.as_f64())));
            }
            Err(e) => {
                rec.skipped = Some(e.to_string());
                first_error.get_or_insert(e);
                results.push(None);
            }
        }
        rec.wall_time_s = t0.elapsed().as_secs_f64();
        records.push(rec);
    }

    let criterion = match (config.selection, &validation) {
        (SelectionCriterion::ValidationRmse, Some(_)) => SelectionCriterion::ValidationRmse,
        _ => SelectionCriterion::Nll,
    };
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some((_, score, f)) = r {
            let better = match best {
                None => true,
                Some((_, bs, bf)) => *score < bs || (*score == bs && *f < bf),
            };
            if better {
                best = Some((i, *score, *f));
            }
        }
    }
    let (best_index, _, best_nll) = best.ok_or_else(|| Error::AllStartsFailed {
        n_starts: records.len(),
        first: Box::new(first_error.unwrap_or(Error::OptimizerFailure("every start was skipped".into()))),
    })?;
    let best_model = results[best_index].take().expect("winner exists").0;
    Ok(TrainReport {
        best_params: best_model.params(),
        best_model,
        best_nll,
        best_index,
        criterion,
        starts: records,
    })
}
