use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::likelihood::FittedCache;
use super::WarpedGp;
use crate::error::{Error, Result};
use crate::gaussian::{condition_with_factor, psd_factor};
use crate::quadrature::{expect_warped, gh_rule, GaussHermiteRule, DEFAULT_GH_ORDER};
use crate::scalar::Scalar;
use crate::warpings::{CompositeWarping, NrmOptions, NrmStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Upper percentile `p`; the interval is `[q_{1−p}, q_p]`.
    pub percentile: f64,
    pub gh_order: usize,
    /// Adds `σ_n²` to the latent variance (observation-level predictions).
    pub include_noise: bool,
    pub nrm: NrmOptions<f64>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            percentile: 0.975,
            gh_order: DEFAULT_GH_ORDER,
            include_noise: true,
            nrm: NrmOptions::default(),
        }
    }
}

impl PredictOptions {
    /// `z_p`, the standard normal quantile at `percentile`.
    pub fn z(&self) -> Result<f64> {
        if !(0.5..1.0).contains(&self.percentile) {
            return Err(Error::InvalidParameter(format!(
                "percentile must lie in [0.5, 1), got {}",
                self.percentile
            )));
        }
        Ok(Normal::standard().inverse_cdf(self.percentile))
    }

    fn nrm_t<T: Scalar>(&self) -> NrmOptions<T> {
        NrmOptions {
            tol: T::lit(self.nrm.tol),
            max_iter: self.nrm.max_iter,
            max_bisect: self.nrm.max_bisect,
            seed_width: T::lit(self.nrm.seed_width),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSummary<T> {
    pub median: Array1<T>,
    pub gh_mean: Array1<T>,
    pub lower: Array1<T>,
    pub upper: Array1<T>,
    pub latent_mean: Array1<T>,
    pub latent_sd: Array1<T>,
    /// `ln p(y_i)` under the predictive density, when targets were given.
    pub log_density: Option<Array1<T>>,
    pub percentile: f64,
    /// Numeric inversions performed (zero for closed-form warpings).
    pub nrm: NrmStats,
}

/// Observation-space summaries of independent Gaussian latents
/// `N(latent_mean_i, latent_sd_i²)` pushed through `φ⁻¹`.
pub fn summarize_latent<T: Scalar>(
    warping: &CompositeWarping<T>,
    latent_mean: ArrayView1<T>,
    latent_sd: ArrayView1<T>,
    opts: &PredictOptions,
    rule: &GaussHermiteRule<T>,
) -> Result<PredictionSummary<T>> {
    if latent_mean.len() != latent_sd.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} latent means but {} standard deviations",
            latent_mean.len(),
            latent_sd.len()
        )));
    }
    let z = T::lit(opts.z()?);
    let nrm = opts.nrm_t::<T>();
    let mut stats = NrmStats::default();
    let n = latent_mean.len();
    let mut median = Array1::zeros(n);
    let mut gh_mean = Array1::zeros(n);
    let mut lower = Array1::zeros(n);
    let mut upper = Array1::zeros(n);
    for i in 0..n {
        let (m, s) = (latent_mean[i], latent_sd[i]);
        median[i] = warping.invert(m, &nrm, &mut stats)?;
        lower[i] = warping.invert(m - z * s, &nrm, &mut stats)?;
        upper[i] = warping.invert(m + z * s, &nrm, &mut stats)?;
        gh_mean[i] = expect_warped(|x| warping.invert(x, &nrm, &mut stats), m, s, rule)?;
    }
    Ok(PredictionSummary {
        median,
        gh_mean,
        lower,
        upper,
        latent_mean: latent_mean.to_owned(),
        latent_sd: latent_sd.to_owned(),
        log_density: None,
        percentile: opts.percentile,
        nrm: stats,
    })
}

fn normal_logpdf<T: Scalar>(x: T, m: T, s: T) -> T {
    let u = (x - m) / s;
    -T::lit(0.5) * (T::ln_2pi() + u * u) - s.ln()
}

/// Posterior predictive summaries at `test_inputs`. `cache` must have been
/// built from `model`.
pub fn predict<T: Scalar>(
    model: &WarpedGp<T>,
    cache: &FittedCache<T>,
    test_inputs: ArrayView2<T>,
    opts: &PredictOptions,
    test_targets: Option<ArrayView1<T>>,
) -> Result<PredictionSummary<T>> {
    if let Some(t) = &test_targets {
        if t.len() != test_inputs.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} test inputs but {} test targets",
                test_inputs.nrows(),
                t.len()
            )));
        }
    }
    let post = condition_with_factor(
        &cache.chol,
        cache.whitened.view(),
        cache.train_inputs.view(),
        test_inputs,
        &model.kernel,
        &model.mean,
        false,
    )?;
    let extra = if opts.include_noise { model.noise_var() } else { T::zero() };
    let sd = post.var.mapv(|v| (v + extra).sqrt());
    let rule = gh_rule::<T>(opts.gh_order)?;
    let mut summary = summarize_latent(&model.warping, post.mean.view(), sd.view(), opts, &rule)?;
    if let Some(t) = test_targets {
        let mut ld = Array1::zeros(t.len());
        for (i, &y) in t.iter().enumerate() {
            let (x, l) = model
                .warping
                .forward_with_log_derivative(y)
                .map_err(|e| e.at_row(i))?;
            ld[i] = l + normal_logpdf(x, post.mean[i], sd[i]);
        }
        summary.log_density = Some(ld);
    }
    Ok(summary)
}

/// Predictive medians `φ⁻¹(μ_*)` only; cheaper than [`predict`].
pub fn predict_median<T: Scalar>(
    model: &WarpedGp<T>,
    cache: &FittedCache<T>,
    test_inputs: ArrayView2<T>,
    nrm: &NrmOptions<f64>,
) -> Result<(Array1<T>, NrmStats)> {
    let post = condition_with_factor(
        &cache.chol,
        cache.whitened.view(),
        cache.train_inputs.view(),
        test_inputs,
        &model.kernel,
        &model.mean,
        false,
    )?;
    let opts = NrmOptions {
        tol: T::lit(nrm.tol),
        max_iter: nrm.max_iter,
        max_bisect: nrm.max_bisect,
        seed_width: T::lit(nrm.seed_width),
    };
    let mut stats = NrmStats::default();
    let med = post
        .mean
        .iter()
        .map(|&m| model.warping.invert(m, &opts, &mut stats))
        .collect::<Result<Vec<T>>>()?;
    Ok((Array1::from(med), stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Adds independent `N(0, σ_n²)` noise to each latent coordinate.
    pub include_noise: bool,
    pub nrm: NrmOptions<f64>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            n_paths: 10,
            seed: 0,
            include_noise: false,
            nrm: NrmOptions::default(),
        }
    }
}

/// Joint posterior paths at `test_inputs`, one per row, in observation units.
///
/// Path `r` is `φ⁻¹(μ + L ε_r)` with `L` a (semi-definite) Cholesky factor of
/// the posterior covariance and `ε_r` the next `n_test` standard normals from
/// a `ChaCha8Rng` seeded with `seed`. With noise enabled, a further
/// `n_test` normals per path scale by `σ_n`.
pub fn sample<T: Scalar>(
    model: &WarpedGp<T>,
    cache: &FittedCache<T>,
    test_inputs: ArrayView2<T>,
    opts: &SampleOptions,
) -> Result<(Array2<T>, NrmStats)> {
    let post = condition_with_factor(
        &cache.chol,
        cache.whitened.view(),
        cache.train_inputs.view(),
        test_inputs,
        &model.kernel,
        &model.mean,
        true,
    )?;
    let cov = post.cov.expect("full covariance requested");
    let l = psd_factor(cov.view());
    let m = test_inputs.nrows();
    let noise_sd = model.noise_var().sqrt();
    let nrm = NrmOptions {
        tol: T::lit(opts.nrm.tol),
        max_iter: opts.nrm.max_iter,
        max_bisect: opts.nrm.max_bisect,
        seed_width: T::lit(opts.nrm.seed_width),
    };
    let mut stats = NrmStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Array2::zeros((opts.n_paths, m));
    let mut eps = Array1::<T>::zeros(m);
    for r in 0..opts.n_paths {
        for e in eps.iter_mut() {
            let v: f64 = StandardNormal.sample(&mut rng);
            *e = T::lit(v);
        }
        let mut latent = &post.mean + &l.dot(&eps);
        if opts.include_noise {
            for v in latent.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += noise_sd * T::lit(e);
            }
        }
        for (j, &x) in latent.iter().enumerate() {
            out[[r, j]] = model.warping.invert(x, &nrm, &mut stats)?;
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::model::fit_cache;
    use crate::warpings::ElementaryWarping;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn z_975() {
        let z = PredictOptions::default().z().unwrap();
        assert!((z - 1.96).abs() < 1e-3);
        let bad = PredictOptions {
            percentile: 0.3,
            ..Default::default()
        };
        assert!(bad.z().is_err());
    }

    #[test]
    fn lognormal_point() {
        let w: CompositeWarping<f64> = ElementaryWarping::log().into();
        let rule = gh_rule(20).unwrap();
        let s = summarize_latent(&w, array![0.0].view(), array![1.0].view(), &PredictOptions::default(), &rule).unwrap();
        let z = PredictOptions::default().z().unwrap();
        assert_abs_diff_eq!(s.median[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lower[0], (-z).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.upper[0], z.exp(), epsilon = 1e-12);
        assert!((s.gh_mean[0] - 0.5f64.exp()).abs() < 1e-4 * 0.5f64.exp());
        assert_eq!(s.nrm.calls, 0);
    }

    #[test]
    fn noise_free_sample_pins_training_point() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = array![0.5, -0.3, 1.2];
        let m = WarpedGp::gp(0.0, Kernel::squared_exp(1.0, 0.8).unwrap(), 0.0).unwrap();
        let c = fit_cache(&m, x.view(), y.view()).unwrap();
        let t = array![[1.0], [1.5]];
        let (paths, _) = sample(&m, &c, t.view(), &SampleOptions { n_paths: 20, ..Default::default() }).unwrap();
        for r in 0..20 {
            assert_abs_diff_eq!(paths[[r, 0]], -0.3, epsilon = 1e-6);
        }
    }

    #[test]
    fn log_samples_positive() {
        let x = array![[0.0], [1.0]];
        let y = array![0.5, 2.0];
        let m = WarpedGp::new(
            0.0,
            Kernel::squared_exp(1.0, 0.8).unwrap(),
            0.1,
            ElementaryWarping::<f64>::log().into(),
        )
        .unwrap();
        let c = fit_cache(&m, x.view(), y.view()).unwrap();
        let t = array![[0.3], [4.0]];
        let (p, _) = sample(&m, &c, t.view(), &SampleOptions { n_paths: 200, seed: 3, ..Default::default() }).unwrap();
        assert!(p.iter().all(|&v| v > 0.0));
    }
}
