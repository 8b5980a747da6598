//! Stationary covariance functions and the constant mean of the latent GP.
//!
//! Positive hyperparameters are stored as natural logarithms so the flat
//! parameter view used by the optimizers is unconstrained and round-trips
//! bit-exactly.
//!
//! Spectral mixture convention: inputs are in their own units, `μ_q` is an
//! ordinary frequency (cycles per input unit) and `v_q` a frequency variance:
//!
//! `k(τ) = Σ_q w_q · exp(−2π² τ² v_q) · cos(2π μ_q τ)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Human-readable statement of the spectral-mixture parameterization, written
/// into reports that use it.
pub const SPECTRAL_MIXTURE_CONVENTION: &str = "k(tau) = sum_q w_q exp(-2 pi^2 tau^2 v_q) cos(2 pi mu_q tau); mu_q in cycles per input unit, v_q a frequency variance";

/// One component of a spectral mixture kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmComponent<T> {
    pub log_weight: T,
    /// Mean frequency; the kernel is even in it, so it is left unconstrained
    /// and reported as `|μ|`.
    pub frequency: T,
    pub log_bandwidth: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Kernel<T> {
    SquaredExp {
        log_variance: T,
        log_lengthscale: T,
    },
    ArdSquaredExp {
        log_variance: T,
        log_lengthscales: Vec<T>,
    },
    SpectralMixture {
        components: Vec<SmComponent<T>>,
    },
}

fn positive<T: Scalar>(name: &str, v: T) -> Result<T> {
    if v > T::zero() && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl<T: Scalar> Kernel<T> {
    pub fn squared_exp(variance: T, lengthscale: T) -> Result<Self> {
        Ok(Kernel::SquaredExp {
            log_variance: positive("variance", variance)?,
            log_lengthscale: positive("lengthscale", lengthscale)?,
        })
    }

    pub fn ard_squared_exp(variance: T, lengthscales: &[T]) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidParameter("ARD kernel needs >= 1 lengthscale".into()));
        }
        Ok(Kernel::ArdSquaredExp {
            log_variance: positive("variance", variance)?,
            log_lengthscales: lengthscales
                .iter()
                .map(|&l| positive("lengthscale", l))
                .collect::<Result<_>>()?,
        })
    }

    /// Components given as `(weight, mean frequency, bandwidth)`.
    pub fn spectral_mixture(components: &[(T, T, T)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("spectral mixture needs >= 1 component".into()));
        }
        Ok(Kernel::SpectralMixture {
            components: components
                .iter()
                .map(|&(w, mu, v)| {
                    if !mu.is_finite() {
                        return Err(Error::InvalidParameter("frequency must be finite".into()));
                    }
                    Ok(SmComponent {
                        log_weight: positive("weight", w)?,
                        frequency: mu,
                        log_bandwidth: positive("bandwidth", v)?,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::SquaredExp { .. } => "squared_exp",
            Kernel::ArdSquaredExp { .. } => "ard_squared_exp",
            Kernel::SpectralMixture { .. } => "spectral_mixture",
        }
    }

    /// Required input dimension, if the kernel fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Kernel::SquaredExp { .. } => None,
            Kernel::ArdSquaredExp {
                log_lengthscales, ..
            } => Some(log_lengthscales.len()),
            Kernel::SpectralMixture { .. } => Some(1),
        }
    }

    /// `k(t, t)`: the sum of the variance terms.
    pub fn variance_sum(&self) -> T {
        match self {
            Kernel::SquaredExp { log_variance, .. } | Kernel::ArdSquaredExp { log_variance, .. } => {
                log_variance.exp()
            }
            Kernel::SpectralMixture { components } => {
                components.iter().map(|c| c.log_weight.exp()).sum()
            }
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self.input_dim() {
            Some(req) if req != d => Err(Error::DimensionMismatch(format!(
                "{} kernel expects {req}-dimensional inputs, got {d}",
                self.name()
            ))),
            _ => Ok(()),
        }
    }

    /// Kernel value as a function of the per-dimension differences `t − t′`.
    fn eval_diff(&self, diff: impl Iterator<Item = T>) -> T {
        let half = T::lit(0.5);
        match self {
            Kernel::SquaredExp {
                log_variance,
                log_lengthscale,
            } => {
                let inv = (-*log_lengthscale).exp();
                let r2: T = diff.map(|d| (d * inv) * (d * inv)).sum();
                (*log_variance - half * r2).exp()
            }
            Kernel::ArdSquaredExp {
                log_variance,
                log_lengthscales,
            } => {
                let r2: T = diff
                    .zip(log_lengthscales)
                    .map(|(d, ll)| {
                        let s = d * (-*ll).exp();
                        s * s
                    })
                    .sum();
                (*log_variance - half * r2).exp()
            }
            Kernel::SpectralMixture { components } => {
                let tau = diff.fold(T::zero(), |_, d| d);
                sm_value(components, tau)
            }
        }
    }

    pub fn eval(&self, t: ArrayView1<T>, t_prime: ArrayView1<T>) -> Result<T> {
        if t.len() != t_prime.len() {
            return Err(Error::DimensionMismatch(format!(
                "inputs of dimension {} and {}",
                t.len(),
                t_prime.len()
            )));
        }
        self.check_dim(t.len())?;
        Ok(self.eval_diff(t.iter().zip(t_prime.iter()).map(|(&a, &b)| a - b)))
    }

    /// Cross-covariance matrix between the rows of `a` and `b`.
    pub fn gram(&self, a: ArrayView2<T>, b: ArrayView2<T>) -> Result<Array2<T>> {
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "column counts {} and {}",
                a.ncols(),
                b.ncols()
            )));
        }
        self.check_dim(a.ncols())?;
        let (n, m) = (a.nrows(), b.nrows());
        let mut out = Array2::zeros((n, m));
        match self {
            Kernel::SpectralMixture { components } => {
                for i in 0..n {
                    for j in 0..m {
                        out[[i, j]] = sm_value(components, a[[i, 0]] - b[[j, 0]]);
                    }
                }
            }
            _ => {
                let sa = self.scaled_inputs(a);
                let sb = self.scaled_inputs(b);
                let lv = self.log_variance();
                let half = T::lit(0.5);
                for i in 0..n {
                    let ri = sa.row(i);
                    for j in 0..m {
                        let r2: T = ri
                            .iter()
                            .zip(sb.row(j).iter())
                            .map(|(&x, &y)| (x - y) * (x - y))
                            .sum();
                        out[[i, j]] = (lv - half * r2).exp();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Symmetric Gram matrix of the rows of `a`; computes the upper triangle only.
    pub fn gram_sym(&self, a: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_dim(a.ncols())?;
        let n = a.nrows();
        let mut out = Array2::zeros((n, n));
        match self {
            Kernel::SpectralMixture { components } => {
                for i in 0..n {
                    for j in i..n {
                        let v = sm_value(components, a[[i, 0]] - a[[j, 0]]);
                        out[[i, j]] = v;
                        out[[j, i]] = v;
                    }
                }
            }
            _ => {
                let sa = self.scaled_inputs(a);
                let lv = self.log_variance();
                let var = lv.exp();
                let half = T::lit(0.5);
                for i in 0..n {
                    out[[i, i]] = var;
                    let ri = sa.row(i);
                    for j in (i + 1)..n {
                        let r2: T = ri
                            .iter()
                            .zip(sa.row(j).iter())
                            .map(|(&x, &y)| (x - y) * (x - y))
                            .sum();
                        let v = (lv - half * r2).exp();
                        out[[i, j]] = v;
                        out[[j, i]] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Prior variances `k(t_i, t_i)`.
    pub fn diag(&self, a: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_dim(a.ncols())?;
        Ok(Array1::from_elem(a.nrows(), self.variance_sum()))
    }

    fn log_variance(&self) -> T {
        match self {
            Kernel::SquaredExp { log_variance, .. } | Kernel::ArdSquaredExp { log_variance, .. } => {
                *log_variance
            }
            Kernel::SpectralMixture { .. } => unreachable!("no single variance"),
        }
    }

    /// Inputs divided by their lengthscales (SE family only).
    fn scaled_inputs(&self, a: ArrayView2<T>) -> Array2<T> {
        match self {
            Kernel::SquaredExp {
                log_lengthscale, ..
            } => {
                let inv = (-*log_lengthscale).exp();
                a.mapv(|v| v * inv)
            }
            Kernel::ArdSquaredExp {
                log_lengthscales, ..
            } => {
                let mut s = a.to_owned();
                for (mut col, ll) in s.columns_mut().into_iter().zip(log_lengthscales) {
                    let inv = (-*ll).exp();
                    col.mapv_inplace(|v| v * inv);
                }
                s
            }
            Kernel::SpectralMixture { .. } => a.to_owned(),
        }
    }

    /// Derivatives of the symmetric Gram matrix with respect to each entry of
    /// [`Kernel::params`].
    pub fn gram_sym_gradients(&self, a: ArrayView2<T>) -> Result<Vec<Array2<T>>> {
        let k = self.gram_sym(a)?;
        let n = a.nrows();
        let mut grads = Vec::with_capacity(self.n_params());
        match self {
            Kernel::SquaredExp {
                log_lengthscale, ..
            } => {
                grads.push(k.clone());
                let inv2 = (T::lit(-2.0) * *log_lengthscale).exp();
                let mut g = Array2::zeros((n, n));
                for i in 0..n {
                    for j in (i + 1)..n {
                        let r2: T = a
                            .row(i)
                            .iter()
                            .zip(a.row(j).iter())
                            .map(|(&x, &y)| (x - y) * (x - y))
                            .sum();
                        let v = k[[i, j]] * r2 * inv2;
                        g[[i, j]] = v;
                        g[[j, i]] = v;
                    }
                }
                grads.push(g);
            }
            Kernel::ArdSquaredExp {
                log_lengthscales, ..
            } => {
                grads.push(k.clone());
                for (d, ll) in log_lengthscales.iter().enumerate() {
                    let inv2 = (T::lit(-2.0) * *ll).exp();
                    let col = a.column(d);
                    let mut g = Array2::zeros((n, n));
                    for i in 0..n {
                        for j in (i + 1)..n {
                            let diff = col[i] - col[j];
                            let v = k[[i, j]] * diff * diff * inv2;
                            g[[i, j]] = v;
                            g[[j, i]] = v;
                        }
                    }
                    grads.push(g);
                }
            }
            Kernel::SpectralMixture { components } => {
                let two_pi = T::lit(std::f64::consts::TAU);
                let two_pi2 = T::lit(2.0 * std::f64::consts::PI * std::f64::consts::PI);
                for c in components {
                    let (w, mu, v) = (c.log_weight.exp(), c.frequency, c.log_bandwidth.exp());
                    let mut gw = Array2::zeros((n, n));
                    let mut gmu = Array2::zeros((n, n));
                    let mut gv = Array2::zeros((n, n));
                    for i in 0..n {
                        for j in i..n {
                            let tau = a[[i, 0]] - a[[j, 0]];
                            let env = (-two_pi2 * tau * tau * v).exp();
                            let arg = two_pi * mu * tau;
                            let term = w * env * arg.cos();
                            let dmu = -w * env * arg.sin() * two_pi * tau;
                            let dv = -term * two_pi2 * tau * tau * v;
                            for (g, val) in [(&mut gw, term), (&mut gmu, dmu), (&mut gv, dv)] {
                                g[[i, j]] = val;
                                g[[j, i]] = val;
                            }
                        }
                    }
                    grads.push(gw);
                    grads.push(gmu);
                    grads.push(gv);
                }
            }
        }
        Ok(grads)
    }

    pub fn n_params(&self) -> usize {
        match self {
            Kernel::SquaredExp { .. } => 2,
            Kernel::ArdSquaredExp {
                log_lengthscales, ..
            } => 1 + log_lengthscales.len(),
            Kernel::SpectralMixture { components } => 3 * components.len(),
        }
    }

    /// Flat unconstrained parameter view.
    pub fn params(&self) -> Vec<T> {
        match self {
            Kernel::SquaredExp {
                log_variance,
                log_lengthscale,
            } => vec![*log_variance, *log_lengthscale],
            Kernel::ArdSquaredExp {
                log_variance,
                log_lengthscales,
            } => std::iter::once(*log_variance)
                .chain(log_lengthscales.iter().copied())
                .collect(),
            Kernel::SpectralMixture { components } => components
                .iter()
                .flat_map(|c| [c.log_weight, c.frequency, c.log_bandwidth])
                .collect(),
        }
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "kernel expects {} parameters, got {}",
                self.n_params(),
                p.len()
            )));
        }
        match self {
            Kernel::SquaredExp {
                log_variance,
                log_lengthscale,
            } => {
                *log_variance = p[0];
                *log_lengthscale = p[1];
            }
            Kernel::ArdSquaredExp {
                log_variance,
                log_lengthscales,
            } => {
                *log_variance = p[0];
                log_lengthscales.copy_from_slice(&p[1..]);
            }
            Kernel::SpectralMixture { components } => {
                for (c, chunk) in components.iter_mut().zip(p.chunks(3)) {
                    c.log_weight = chunk[0];
                    c.frequency = chunk[1];
                    c.log_bandwidth = chunk[2];
                }
            }
        }
        Ok(())
    }
}

fn sm_value<T: Scalar>(components: &[SmComponent<T>], tau: T) -> T {
    let two_pi = T::lit(std::f64::consts::TAU);
    let two_pi2 = T::lit(2.0 * std::f64::consts::PI * std::f64::consts::PI);
    components
        .iter()
        .map(|c| {
            (c.log_weight - two_pi2 * tau * tau * c.log_bandwidth.exp()).exp()
                * (two_pi * c.frequency * tau).cos()
        })
        .sum()
}

/// Constant mean function `m(t) = value` (latent units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantMean<T> {
    pub value: T,
}

impl<T: Scalar> ConstantMean<T> {
    pub fn new(value: T) -> Self {
        Self { value }
    }
}
