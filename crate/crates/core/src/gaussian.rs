//! Dense Gaussian machinery: jittered Cholesky factorization, multivariate
//! normal log-density and GP posterior conditioning.
//!
//! Every covariance solve goes through a [`CholeskyFactor`]; no explicit
//! inverses are formed except where a caller asks for one.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernels::{ConstantMean, Kernel};
use crate::scalar::Scalar;

/// Diagonal jitter levels tried in order, as multiples of the mean diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct JitterSchedule<T> {
    pub multiples: Vec<T>,
}

impl<T: Scalar> Default for JitterSchedule<T> {
    fn default() -> Self {
        Self {
            multiples: [0.0, 1e-10, 1e-8, 1e-6, 1e-4]
                .iter()
                .map(|&m| T::lit(m))
                .collect(),
        }
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor<T> {
    lower: Array2<T>,
    log_det: T,
    jitter_used: T,
}

impl<T: Scalar> CholeskyFactor<T> {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.lower
    }

    /// `log |A + jitter·I|`.
    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let l = self.lower.as_slice().expect("standard layout");
        let mut z = b.to_owned();
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let mut s = z[i];
            for (k, &lik) in row.iter().enumerate() {
                s -= lik * z[k];
            }
            z[i] = s / l[i * n + i];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        debug_assert_eq!(z.len(), n);
        let l = self.lower.as_slice().expect("standard layout");
        let mut x = z.to_owned();
        for i in (0..n).rev() {
            let xi = x[i] / l[i * n + i];
            x[i] = xi;
            // subtract column i of Lᵀ, i.e. row i of L, from the remaining entries
            for k in 0..i {
                x[k] -= l[i * n + k] * xi;
            }
        }
        x
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: ArrayView1<T>) -> Array1<T> {
        let z = self.solve_lower(b);
        self.solve_upper(z.view())
    }

    /// Solves `L Z = B` for a block of right-hand sides (one per column).
    pub fn solve_lower_mat(&self, b: ArrayView2<T>) -> Array2<T> {
        let n = self.dim();
        debug_assert_eq!(b.nrows(), n);
        let m = b.ncols();
        let l = self.lower.as_slice().expect("standard layout");
        let mut z = b.as_standard_layout().into_owned();
        let zs = z.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let (done, rest) = zs.split_at_mut(i * m);
            let row_i = &mut rest[..m];
            for k in 0..i {
                let lik = l[i * n + k];
                if lik == T::zero() {
                    continue;
                }
                let row_k = &done[k * m..(k + 1) * m];
                for (zi, &zk) in row_i.iter_mut().zip(row_k) {
                    *zi -= lik * zk;
                }
            }
            let d = l[i * n + i];
            for zi in row_i.iter_mut() {
                *zi /= d;
            }
        }
        z
    }

    /// Explicit `(L Lᵀ)⁻¹`; only used where a full inverse is genuinely needed
    /// (trace terms of likelihood gradients).
    pub fn inverse(&self) -> Array2<T> {
        let n = self.dim();
        let linv = self.solve_lower_mat(Array2::eye(n).view());
        linv.t().dot(&linv)
    }

    /// `‖L⁻¹ v‖²`.
    pub fn mahalanobis_sq(&self, v: ArrayView1<T>) -> T {
        let z = self.solve_lower(v);
        z.iter().map(|&zi| zi * zi).sum()
    }
}

fn try_cholesky<T: Scalar>(mat: ArrayView2<T>, jitter: T) -> Option<Array2<T>> {
    let n = mat.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    {
        let ls = l.as_slice_mut().expect("standard layout");
        for i in 0..n {
            for j in 0..=i {
                let mut s = mat[[i, j]];
                if i == j {
                    s += jitter;
                }
                let (ri, rj) = (&ls[i * n..i * n + j], &ls[j * n..j * n + j]);
                for (a, b) in ri.iter().zip(rj) {
                    s -= *a * *b;
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return None;
                    }
                    ls[i * n + i] = s.sqrt();
                } else {
                    ls[i * n + j] = s / ls[j * n + j];
                }
            }
        }
    }
    Some(l)
}

/// Factorizes a symmetric matrix, retrying with increasing diagonal jitter.
pub fn cholesky_with_jitter<T: Scalar>(
    mat: ArrayView2<T>,
    policy: &JitterSchedule<T>,
) -> Result<CholeskyFactor<T>> {
    let n = mat.nrows();
    if mat.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            n,
            mat.ncols()
        )));
    }
    let scale = mat.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale.max(T::min_positive_value());
    for i in 0..n {
        for j in 0..i {
            if (mat[[i, j]] - mat[[j, i]]).abs() > tol {
                return Err(Error::DimensionMismatch(format!(
                    "matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    if n == 0 {
        return Ok(CholeskyFactor {
            lower: Array2::zeros((0, 0)),
            log_det: T::zero(),
            jitter_used: T::zero(),
        });
    }
    let mean_diag = mat.diag().iter().copied().sum::<T>() / T::lit(n as f64);
    let base = if mean_diag > T::zero() { mean_diag } else { T::one() };
    let mut last = T::zero();
    for &m in &policy.multiples {
        let jitter = m * base;
        last = jitter;
        if let Some(lower) = try_cholesky(mat, jitter) {
            let log_det = T::lit(2.0) * lower.diag().iter().map(|d| d.ln()).sum::<T>();
            return Ok(CholeskyFactor {
                lower,
                log_det,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::FactorizationFailed {
        max_jitter: last.as_f64(),
    })
}

/// Lower-triangular `L` with `L Lᵀ ≈ A` for a symmetric positive
/// semi-definite `A`. Pivots at or below `n·ε·max diag` are treated as zero,
/// so directions of zero variance stay exactly zero.
pub fn psd_factor<T: Scalar>(mat: ArrayView2<T>) -> Array2<T> {
    let n = mat.nrows();
    let max_diag = mat.diag().iter().fold(T::zero(), |m, v| m.max(*v));
    let floor = T::lit(n.max(1) as f64) * T::epsilon() * max_diag;
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = mat[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= floor {
            continue;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = mat[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    l
}

/// Multivariate normal log-density `log N(x | mean, L Lᵀ)`.
pub fn mvn_logpdf<T: Scalar>(
    x: ArrayView1<T>,
    mean: ArrayView1<T>,
    chol: &CholeskyFactor<T>,
) -> Result<T> {
    let n = chol.dim();
    if x.len() != n || mean.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x has {}, mean has {}, covariance is {n}x{n}",
            x.len(),
            mean.len()
        )));
    }
    let r = &x - &mean;
    let quad = chol.mahalanobis_sq(r.view());
    let half = T::lit(0.5);
    Ok(-half * T::lit(n as f64) * T::ln_2pi() - half * chol.log_det() - half * quad)
}

/// Latent posterior at a set of test inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior<T> {
    pub mean: Array1<T>,
    /// Marginal variances, clamped at zero.
    pub var: Array1<T>,
    /// Full posterior covariance, when requested.
    pub cov: Option<Array2<T>>,
}

/// Conditions the latent GP on `train_latents` observed at `train_inputs`
/// with additive noise variance `noise_var`.
#[allow(clippy::too_many_arguments)]
pub fn gp_condition<T: Scalar>(
    train_inputs: ArrayView2<T>,
    train_latents: ArrayView1<T>,
    test_inputs: ArrayView2<T>,
    kernel: &Kernel<T>,
    mean_fn: &ConstantMean<T>,
    noise_var: T,
    full_cov: bool,
) -> Result<GaussianPosterior<T>> {
    if train_inputs.nrows() != train_latents.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} training inputs but {} latents",
            train_inputs.nrows(),
            train_latents.len()
        )));
    }
    if noise_var < T::zero() {
        return Err(Error::InvalidParameter("noise variance must be >= 0".into()));
    }
    let n = train_inputs.nrows();
    let mut k_train = kernel.gram_sym(train_inputs)?;
    for i in 0..n {
        k_train[[i, i]] += noise_var;
    }
    let chol = cholesky_with_jitter(k_train.view(), &JitterSchedule::default())?;
    let resid = train_latents.mapv(|v| v - mean_fn.value);
    let z = chol.solve_lower(resid.view());
    condition_with_factor(&chol, z.view(), train_inputs, test_inputs, kernel, mean_fn, full_cov)
}

/// Posterior given an existing factor of `K + σ²I` and `z = L⁻¹ (x − m)`.
pub(crate) fn condition_with_factor<T: Scalar>(
    chol: &CholeskyFactor<T>,
    z: ArrayView1<T>,
    train_inputs: ArrayView2<T>,
    test_inputs: ArrayView2<T>,
    kernel: &Kernel<T>,
    mean_fn: &ConstantMean<T>,
    full_cov: bool,
) -> Result<GaussianPosterior<T>> {
    let m = test_inputs.nrows();
    let prior_diag = kernel.diag(test_inputs)?;
    let mut mean = Array1::from_elem(m, mean_fn.value);
    if chol.dim() == 0 {
        let cov = if full_cov {
            Some(kernel.gram_sym(test_inputs)?)
        } else {
            None
        };
        return Ok(GaussianPosterior {
            mean,
            var: prior_diag,
            cov,
        });
    }
    let k_cross = kernel.gram(train_inputs, test_inputs)?;
    let v = chol.solve_lower_mat(k_cross.view());
    mean += &v.t().dot(&z);
    let var = (&prior_diag - &v.map_axis(Axis(0), |c| c.iter().map(|&x| x * x).sum::<T>()))
        .mapv(|s| s.max(T::zero()));
    let cov = if full_cov {
        let mut c = kernel.gram_sym(test_inputs)? - v.t().dot(&v);
        for i in 0..m {
            c[[i, i]] = c[[i, i]].max(T::zero());
        }
        Some(c)
    } else {
        None
    };
    Ok(GaussianPosterior { mean, var, cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn reconstruct(f: &CholeskyFactor<f64>) -> Array2<f64> {
        f.lower().dot(&f.lower().t())
    }

    #[test]
    fn scalar_matrix() {
        let f = cholesky_with_jitter(array![[4.0]].view(), &JitterSchedule::default()).unwrap();
        assert_eq!(f.lower()[[0, 0]], 2.0);
        assert_abs_diff_eq!(f.log_det(), 4.0_f64.ln(), epsilon = 1e-15);
        assert_eq!(f.jitter_used(), 0.0);
    }

    #[test]
    fn identity_factor() {
        let eye = Array2::<f64>::eye(3);
        let f = cholesky_with_jitter(eye.view(), &JitterSchedule::default()).unwrap();
        assert_eq!(f.lower(), &eye);
        assert_eq!(f.log_det(), 0.0);
    }

    #[test]
    fn rank_deficient_needs_jitter() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let f = cholesky_with_jitter(a.view(), &JitterSchedule::default()).unwrap();
        assert!(f.jitter_used() > 0.0);
        let target = &a + &(Array2::<f64>::eye(2) * f.jitter_used());
        let err = (&reconstruct(&f) - &target).mapv(|v| v * v).sum().sqrt();
        let norm = target.mapv(|v| v * v).sum().sqrt();
        assert!(err / norm < 1e-10);
        // eigen-decomposition oracle: eigenvalues of A are {0, 2}, so the
        // factored matrix has eigenvalues {j, 2 + j} and log-det ln(j(2+j)).
        let j = f.jitter_used();
        assert_abs_diff_eq!(f.log_det(), (j * (2.0 + j)).ln(), epsilon = 1e-6);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = array![[1.0, 0.5], [0.4, 1.0]];
        assert!(matches!(
            cholesky_with_jitter(a.view(), &JitterSchedule::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn negative_definite_fails() {
        let a = array![[-1.0, 0.0], [0.0, -1.0]];
        assert!(matches!(
            cholesky_with_jitter(a.view(), &JitterSchedule::default()),
            Err(Error::FactorizationFailed { .. })
        ));
    }

    #[test]
    fn logpdf_examples() {
        let one = cholesky_with_jitter(array![[1.0]].view(), &JitterSchedule::default()).unwrap();
        let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(
            mvn_logpdf(array![0.0].view(), array![0.0].view(), &one).unwrap(),
            c,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(-c, 0.918_938_533_204_672_7, epsilon = 1e-15);
        assert_abs_diff_eq!(
            mvn_logpdf(array![1.0].view(), array![0.0].view(), &one).unwrap(),
            c - 0.5,
            epsilon = 1e-15
        );
        let eye = cholesky_with_jitter(Array2::<f64>::eye(2).view(), &JitterSchedule::default())
            .unwrap();
        assert_abs_diff_eq!(
            mvn_logpdf(array![1.0, 1.0].view(), array![0.0, 0.0].view(), &eye).unwrap(),
            2.0 * (c - 0.5),
            epsilon = 1e-14
        );
        assert!(matches!(
            mvn_logpdf(array![1.0].view(), array![0.0, 0.0].view(), &eye),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn logpdf_integrates_to_one() {
        let var = 2.3;
        let f = cholesky_with_jitter(array![[var]].view(), &JitterSchedule::default()).unwrap();
        let (lo, hi, n) = (-20.0, 20.0, 20_001);
        let h = (hi - lo) / (n - 1) as f64;
        let mut total = 0.0;
        for i in 0..n {
            let x = lo + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            total += w * mvn_logpdf(array![x].view(), array![0.7].view(), &f).unwrap().exp();
        }
        assert!((total * h - 1.0).abs() < 1e-4);
    }

    #[test]
    fn interpolates_noise_free() {
        let x = array![[0.0], [1.0], [2.5]];
        let y = array![0.3, -1.0, 2.0];
        let k = Kernel::squared_exp(1.0, 1.0).unwrap();
        let m = ConstantMean::new(0.0);
        let post = gp_condition(x.view(), y.view(), array![[1.0]].view(), &k, &m, 0.0, false)
            .unwrap();
        assert_abs_diff_eq!(post.mean[0], -1.0, epsilon = 1e-8);
        assert!(post.var[0] < 1e-8);
    }

    #[test]
    fn empty_training_is_prior() {
        let k = Kernel::squared_exp(1.7, 0.5).unwrap();
        let m = ConstantMean::new(0.4);
        let test = array![[0.0], [0.3]];
        let post = gp_condition(
            Array2::zeros((0, 1)).view(),
            Array1::zeros(0).view(),
            test.view(),
            &k,
            &m,
            0.1,
            true,
        )
        .unwrap();
        assert_eq!(post.mean, array![0.4, 0.4]);
        assert_eq!(post.cov.unwrap(), k.gram_sym(test.view()).unwrap());
    }
}
