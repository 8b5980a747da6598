//! The warped GP: a latent GP observed through a composite warping.

mod likelihood;
mod predict;
mod shape;

pub use likelihood::{fit_cache, nll, nll_and_grad, FittedCache, GradientMode};
pub use predict::{predict, predict_median, sample, summarize_latent, PredictOptions, PredictionSummary, SampleOptions};
pub use shape::{lognormal_moment, shape_diagnostics, ShapeDiagnostics};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{ConstantMean, Kernel};
use crate::scalar::Scalar;
use crate::warpings::CompositeWarping;

/// Latent GP (constant mean, kernel, Gaussian noise) plus a warping.
///
/// The flat parameter vector is `θ = (θ_x, θ_φ)` with
/// `θ_x = (mean, kernel params…, ln σ_n²)` and `θ_φ` the warping parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpedGp<T> {
    pub mean: ConstantMean<T>,
    pub kernel: Kernel<T>,
    /// `ln σ_n²`; `−∞` means noise-free.
    pub log_noise_var: T,
    pub warping: CompositeWarping<T>,
    /// Indices into `θ` held fixed during training.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frozen: Vec<usize>,
}

impl<T: Scalar> WarpedGp<T> {
    pub fn new(mean: T, kernel: Kernel<T>, noise_var: T, warping: CompositeWarping<T>) -> Result<Self> {
        if !(noise_var >= T::zero()) || !noise_var.is_finite() {
            return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {noise_var}")));
        }
        Ok(WarpedGp {
            mean: ConstantMean::new(mean),
            kernel,
            log_noise_var: noise_var.ln(),
            warping,
            frozen: Vec::new(),
        })
    }

    /// Plain GP: the warping is the identity.
    pub fn gp(mean: T, kernel: Kernel<T>, noise_var: T) -> Result<Self> {
        Self::new(mean, kernel, noise_var, CompositeWarping::identity())
    }

    pub fn noise_var(&self) -> T {
        self.log_noise_var.exp()
    }

    pub fn n_latent_params(&self) -> usize {
        2 + self.kernel.n_params()
    }

    pub fn n_params(&self) -> usize {
        self.n_latent_params() + self.warping.n_params()
    }

    pub fn theta_x(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.n_latent_params());
        v.push(self.mean.value);
        v.extend(self.kernel.params());
        v.push(self.log_noise_var);
        v
    }

    pub fn theta_phi(&self) -> Vec<T> {
        self.warping.params()
    }

    pub fn set_theta_x(&mut self, p: &[T]) -> Result<()> {
        let k = self.kernel.n_params();
        if p.len() != k + 2 {
            return Err(Error::DimensionMismatch(format!(
                "latent parameters: expected {}, got {}",
                k + 2,
                p.len()
            )));
        }
        self.mean.value = p[0];
        self.kernel.set_params(&p[1..1 + k])?;
        self.log_noise_var = p[1 + k];
        Ok(())
    }

    pub fn set_theta_phi(&mut self, p: &[T]) -> Result<()> {
        self.warping.set_params(p)
    }

    pub fn params(&self) -> Vec<T> {
        let mut v = self.theta_x();
        v.extend(self.theta_phi());
        v
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} parameters, got {}",
                self.n_params(),
                p.len()
            )));
        }
        let nx = self.n_latent_params();
        self.set_theta_x(&p[..nx])?;
        self.set_theta_phi(&p[nx..])
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["mean".to_string()];
        let k = self.kernel.n_params();
        names.extend((0..k).map(|i| format!("kernel.{i}")));
        names.push("log_noise_var".into());
        names.extend(self.warping.param_names().into_iter().map(|n| format!("warping.{n}")));
        names
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen.contains(&i)
    }

    /// Indices of trainable entries of `θ`.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.n_params()).filter(|i| !self.is_frozen(*i)).collect()
    }

    pub fn free_params(&self) -> Vec<T> {
        let p = self.params();
        self.free_indices().into_iter().map(|i| p[i]).collect()
    }

    pub fn set_free_params(&mut self, free: &[T]) -> Result<()> {
        let idx = self.free_indices();
        if free.len() != idx.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} free parameters, got {}",
                idx.len(),
                free.len()
            )));
        }
        let mut p = self.params();
        for (&i, &v) in idx.iter().zip(free) {
            p[i] = v;
        }
        self.set_params(&p)
    }

    /// Freezes warping parameter `j` (index into `θ_φ`).
    pub fn freeze_warping_param(&mut self, j: usize) {
        let i = self.n_latent_params() + j;
        if !self.frozen.contains(&i) {
            self.frozen.push(i);
            self.frozen.sort_unstable();
        }
    }

    /// Offset of warping layer `layer` within `θ_φ`.
    pub fn warping_layer_offset(&self, layer: usize) -> usize {
        self.warping.layers[..layer].iter().map(|l| l.n_params()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warpings::ElementaryWarping;

    fn model() -> WarpedGp<f64> {
        WarpedGp::new(
            0.3,
            Kernel::ard_squared_exp(1.7, &[0.5, 2.0]).unwrap(),
            0.01,
            CompositeWarping::new(vec![
                ElementaryWarping::box_cox(0.4).unwrap(),
                ElementaryWarping::affine(0.2, 1.5).unwrap(),
            ]),
        )
        .unwrap()
    }

    #[test]
    fn params_round_trip_bit_exact() {
        let mut m = model();
        let before = m.clone();
        let p = m.params();
        m.set_params(&p).unwrap();
        assert_eq!(m, before);
        assert_eq!(p.len(), m.n_params());
        assert_eq!(m.param_names().len(), p.len());
        let (x, phi) = (m.theta_x(), m.theta_phi());
        m.set_theta_x(&x).unwrap();
        m.set_theta_phi(&phi).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn frozen_params_untouched() {
        let mut m = model();
        m.freeze_warping_param(2);
        let p = m.params();
        let free = m.free_params();
        assert_eq!(free.len(), p.len() - 1);
        let shifted: Vec<f64> = free.iter().map(|v| v + 1.0).collect();
        m.set_free_params(&shifted).unwrap();
        let q = m.params();
        let fixed = m.n_latent_params() + 2;
        assert_eq!(q[fixed], p[fixed]);
        assert_eq!(q[0], p[0] + 1.0);
    }

    #[test]
    fn negative_noise_rejected() {
        assert!(WarpedGp::gp(0.0, Kernel::squared_exp(1.0, 1.0).unwrap(), -1.0).is_err());
    }
}
