use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::WarpedGp;
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_with_jitter, CholeskyFactor, JitterSchedule};
use crate::scalar::Scalar;
use crate::warpings::CompositeWarping;

/// Everything prediction needs from the training data, factorised once.
#[derive(Clone, Debug)]
pub struct FittedCache<T> {
    /// Factor of `K + σ_n² I`.
    pub chol: CholeskyFactor<T>,
    /// `(K + σ_n² I)⁻¹ (φ(y) − μ)`.
    pub alpha: Array1<T>,
    /// `L⁻¹ (φ(y) − μ)`.
    pub whitened: Array1<T>,
    pub train_inputs: Array2<T>,
    pub train_targets_raw: Array1<T>,
    pub train_latents: Array1<T>,
    /// `Σ ln φ′(y_i)`.
    pub log_jacobian: T,
}

impl<T: Scalar> FittedCache<T> {
    pub fn n_train(&self) -> usize {
        self.train_latents.len()
    }

    /// NLL of the training data under the model the cache was built from.
    pub fn nll(&self) -> T {
        let n = T::lit(self.n_train() as f64);
        let half = T::lit(0.5);
        half * n * T::ln_2pi()
            + half * self.whitened.dot(&self.whitened)
            + half * self.chol.log_det()
            - self.log_jacobian
    }
}

/// Applies the warping to every target; returns latents and per-point
/// `ln φ′(y_i)`. Domain errors carry the offending row.
pub(crate) fn warp_targets<T: Scalar>(
    warping: &CompositeWarping<T>,
    targets: ArrayView1<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    let n = targets.len();
    let mut z = Array1::zeros(n);
    let mut logd = Array1::zeros(n);
    for (i, &y) in targets.iter().enumerate() {
        let (x, l) = warping.forward_with_log_derivative(y).map_err(|e| e.at_row(i))?;
        if !x.is_finite() || !l.is_finite() {
            return Err(Error::domain("warped target is not finite", y.as_f64()).at_row(i));
        }
        z[i] = x;
        logd[i] = l;
    }
    Ok((z, logd))
}

fn check_shapes<T>(inputs: &ArrayView2<T>, targets: &ArrayView1<T>) -> Result<()> {
    if inputs.nrows() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows but {} targets",
            inputs.nrows(),
            targets.len()
        )));
    }
    Ok(())
}

fn training_factor<T: Scalar>(model: &WarpedGp<T>, inputs: ArrayView2<T>) -> Result<CholeskyFactor<T>> {
    let mut k = model.kernel.gram_sym(inputs)?;
    let s2 = model.noise_var();
    if !s2.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    for i in 0..k.nrows() {
        k[[i, i]] += s2;
    }
    cholesky_with_jitter(k.view(), &JitterSchedule::default())
}

pub fn fit_cache<T: Scalar>(
    model: &WarpedGp<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView1<T>,
) -> Result<FittedCache<T>> {
    check_shapes(&inputs, &targets)?;
    let (z, logd) = warp_targets(&model.warping, targets)?;
    let chol = training_factor(model, inputs)?;
    let r = z.mapv(|v| v - model.mean.value);
    let whitened = chol.solve_lower(r.view());
    let alpha = chol.solve_upper(whitened.view());
    Ok(FittedCache {
        chol,
        alpha,
        whitened,
        train_inputs: inputs.to_owned(),
        train_targets_raw: targets.to_owned(),
        train_latents: z,
        log_jacobian: logd.sum(),
    })
}

/// `n ln(2π)/2 + ½ rᵀ(K+σ²I)⁻¹r + ½ ln|K+σ²I| − Σ ln φ′(y_i)`, `r = φ(y) − μ`.
pub fn nll<T: Scalar>(model: &WarpedGp<T>, inputs: ArrayView2<T>, targets: ArrayView1<T>) -> Result<T> {
    check_shapes(&inputs, &targets)?;
    let (z, logd) = warp_targets(&model.warping, targets)?;
    let chol = training_factor(model, inputs)?;
    let r = z.mapv(|v| v - model.mean.value);
    let w = chol.solve_lower(r.view());
    let half = T::lit(0.5);
    let v = half * T::lit(targets.len() as f64) * T::ln_2pi() + half * w.dot(&w) + half * chol.log_det() - logd.sum();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObjective)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum GradientMode {
    /// Closed-form derivatives for the latent hyperparameters; warping
    /// parameters by central differences of the per-point terms only.
    #[default]
    Analytic,
    /// Central differences of the whole NLL with relative step `step`.
    FiniteDifference { step: f64 },
}


/// NLL and its gradient with respect to the full `θ`.
pub fn nll_and_grad<T: Scalar>(
    model: &WarpedGp<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView1<T>,
    mode: GradientMode,
) -> Result<(T, Vec<T>)> {
    match mode {
        GradientMode::FiniteDifference { step } => {
            let f = nll(model, inputs, targets)?;
            let mut m = model.clone();
            let g = crate::train::finite_diff_grad(
                |p: &[T]| {
                    m.set_params(p)?;
                    nll(&m, inputs, targets)
                },
                &model.params(),
                T::lit(step),
            )?;
            Ok((f, g))
        }
        GradientMode::Analytic => analytic(model, inputs, targets),
    }
}

fn analytic<T: Scalar>(model: &WarpedGp<T>, inputs: ArrayView2<T>, targets: ArrayView1<T>) -> Result<(T, Vec<T>)> {
    check_shapes(&inputs, &targets)?;
    let n = targets.len();
    let (z, logd) = warp_targets(&model.warping, targets)?;
    let chol = training_factor(model, inputs)?;
    let r = z.mapv(|v| v - model.mean.value);
    let w = chol.solve_lower(r.view());
    let half = T::lit(0.5);
    let f = half * T::lit(n as f64) * T::ln_2pi() + half * w.dot(&w) + half * chol.log_det() - logd.sum();
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let alpha = chol.solve_upper(w.view());
    let kinv = chol.inverse();
    // ∂f/∂θ = −½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    let mut wmat = kinv;
    wmat.mapv_inplace(|v| -v);
    for i in 0..n {
        for j in 0..n {
            wmat[[i, j]] += alpha[i] * alpha[j];
        }
    }
    let mut grad = Vec::with_capacity(model.n_params());
    grad.push(-alpha.sum());
    for dk in model.kernel.gram_sym_gradients(inputs)? {
        let tr: T = wmat.iter().zip(dk.iter()).map(|(&a, &b)| a * b).sum();
        grad.push(-half * tr);
    }
    let trace_w: T = (0..n).map(|i| wmat[[i, i]]).sum();
    grad.push(-half * trace_w * model.noise_var());

    let phi = model.warping.params();
    if !phi.is_empty() {
        let step = T::lit(1e-6);
        let mut warp = model.warping.clone();
        let mut p = phi.clone();
        for j in 0..phi.len() {
            let h = step * T::one().max(phi[j].abs());
            p[j] = phi[j] + h;
            warp.set_params(&p)?;
            let (zp, lp) = warp_targets(&warp, targets)?;
            p[j] = phi[j] - h;
            warp.set_params(&p)?;
            let (zm, lm) = warp_targets(&warp, targets)?;
            p[j] = phi[j];
            let span = (phi[j] + h) - (phi[j] - h);
            let mut g = T::zero();
            for i in 0..n {
                g += alpha[i] * (zp[i] - zm[i]) / span - (lp[i] - lm[i]) / span;
            }
            grad.push(g);
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    Ok((f, grad))
}
