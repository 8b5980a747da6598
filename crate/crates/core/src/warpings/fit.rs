use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::composite::{CompositeWarping, Warp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::optim::{levenberg_marquardt, OptimOptions, OptimStatus};

/// L1, L2 and sup-norm of a difference of two functions on a grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub e1: f64,
    pub e2: f64,
    pub e_inf: f64,
}

/// Trapezoidal norms of `a − b` sampled at sorted abscissae `ys`.
pub fn difference_norms(ys: &[f64], a: &[f64], b: &[f64]) -> Norms {
    let diff: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - v).abs()).collect();
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for i in 1..ys.len() {
        let h = ys[i] - ys[i - 1];
        l1 += 0.5 * h * (diff[i] + diff[i - 1]);
        l2 += 0.5 * h * (diff[i] * diff[i] + diff[i - 1] * diff[i - 1]);
    }
    Norms {
        e1: l1,
        e2: l2.sqrt(),
        e_inf: diff.iter().cloned().fold(0.0, f64::max),
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            lo: -10.0,
            hi: 10.0,
            n: 4001,
        }
    }
}

/// Errors between a target warping and an approximation, both on the
/// transformation itself and on the densities they induce on `y` from a
/// common Gaussian latent `N(m, s²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxErrors {
    pub transform: Norms,
    pub density: Norms,
    pub latent_mean: f64,
    pub latent_sd: f64,
}

/// Push-forward density `φ′(y)·N(φ(y) | m, s²)`.
pub fn pushforward_density<T: Scalar, W: Warp<T> + ?Sized>(w: &W, y: T, m: f64, s: f64) -> Result<f64> {
    let x = w.forward(y)?.as_f64();
    let d = w.derivative(y)?.as_f64();
    let z = (x - m) / s;
    Ok(d * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
}

/// Compares `approx` to `target` on `grid`. The latent Gaussian is the
/// empirical mean and standard deviation of the target's values on the grid.
pub fn approximation_errors<T: Scalar, A: Warp<T> + ?Sized, B: Warp<T> + ?Sized>(
    target: &A,
    approx: &B,
    grid: &EvalGrid,
) -> Result<ApproxErrors> {
    let ys = uniform_grid(grid.lo, grid.hi, grid.n);
    let mut ft = Vec::with_capacity(ys.len());
    let mut fa = Vec::with_capacity(ys.len());
    for &y in &ys {
        ft.push(target.forward(T::lit(y))?.as_f64());
        fa.push(approx.forward(T::lit(y))?.as_f64());
    }
    let n = ys.len() as f64;
    let m = ft.iter().sum::<f64>() / n;
    let s = (ft.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt().max(1e-12);
    let mut pt = Vec::with_capacity(ys.len());
    let mut pa = Vec::with_capacity(ys.len());
    for &y in &ys {
        pt.push(pushforward_density(target, T::lit(y), m, s)?);
        pa.push(pushforward_density(approx, T::lit(y), m, s)?);
    }
    Ok(ApproxErrors {
        transform: difference_norms(&ys, &ft, &fa),
        density: difference_norms(&ys, &pt, &pa),
        latent_mean: m,
        latent_sd: s,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresSettings {
    pub optim: OptimOptions,
    /// Extra starts with parameters perturbed uniformly by `±perturbation`.
    pub n_random_starts: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for LeastSquaresSettings {
    fn default() -> Self {
        LeastSquaresSettings {
            optim: OptimOptions {
                max_iters: 300,
                grad_tol: 1e-12,
                rel_tol: 1e-12,
            },
            n_random_starts: 2,
            perturbation: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquaresFit<T> {
    pub warping: CompositeWarping<T>,
    pub sse: f64,
    /// Norms of the residual on the fitting grid.
    pub grid_norms: Norms,
    pub starts: Vec<LeastSquaresStart>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresStart {
    pub sse: Option<f64>,
    pub iterations: usize,
    pub status: Option<OptimStatus>,
    pub error: Option<String>,
}

/// Fits the free parameters of `model` so that `model(y_i) ≈ x_i` on the
/// supplied `(y, x)` grid. Starts from the model's current parameters, then
/// from `n_random_starts` perturbations of them.
pub fn fit_warping_least_squares<T: Scalar>(
    model: &CompositeWarping<T>,
    grid: &[(T, T)],
    settings: &LeastSquaresSettings,
) -> Result<LeastSquaresFit<T>> {
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    if sorted.windows(2).any(|w| !(w[1].1 > w[0].1)) {
        return Err(Error::InvalidParameter("target must be strictly increasing on the grid".into()));
    }
    let p0 = model.params();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut inits = vec![p0.clone()];
    for _ in 0..settings.n_random_starts {
        inits.push(
            p0.iter()
                .map(|&v| v + T::lit(rng.random_range(-settings.perturbation..=settings.perturbation)))
                .collect(),
        );
    }
    let mut starts = Vec::new();
    let mut best: Option<(f64, Vec<T>)> = None;
    for init in inits {
        let mut w = model.clone();
        let res = levenberg_marquardt(
            |p: &[T]| {
                w.set_params(p)?;
                sorted
                    .iter()
                    .map(|&(y, x)| w.forward(y).map(|v| v - x))
                    .collect::<Result<Vec<T>>>()
            },
            &init,
            &settings.optim,
        );
        match res {
            Ok(r) => {
                let sse = r.f.as_f64();
                starts.push(LeastSquaresStart {
                    sse: Some(sse),
                    iterations: r.iterations,
                    status: Some(r.status),
                    error: None,
                });
                if sse.is_finite() && best.as_ref().is_none_or(|(b, _)| sse < *b) {
                    best = Some((sse, r.x));
                }
            }
            Err(e) => starts.push(LeastSquaresStart {
                sse: None,
                iterations: 0,
                status: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (sse, params) = best.ok_or_else(|| {
        Error::OptimizerFailure(format!("none of {} least-squares starts converged", starts.len()))
    })?;
    let mut warping = model.clone();
    warping.set_params(&params)?;
    let ys: Vec<f64> = sorted.iter().map(|p| p.0.as_f64()).collect();
    let xs: Vec<f64> = sorted.iter().map(|p| p.1.as_f64()).collect();
    let fit: Vec<f64> = sorted
        .iter()
        .map(|p| warping.forward(p.0).map(|v| v.as_f64()))
        .collect::<Result<_>>()?;
    Ok(LeastSquaresFit {
        warping,
        sse,
        grid_norms: difference_norms(&ys, &fit, &xs),
        starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warpings::{sal_stack, ElementaryWarping};
    use approx::assert_abs_diff_eq;

    fn grid_of<W: Warp<f64>>(w: &W, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        uniform_grid(lo, hi, n)
            .into_iter()
            .map(|y| (y, w.forward(y).unwrap()))
            .collect()
    }

    #[test]
    fn norms_of_constant_difference() {
        let ys = uniform_grid(0.0, 2.0, 11);
        let a = vec![1.5; 11];
        let b = vec![1.0; 11];
        let n = difference_norms(&ys, &a, &b);
        assert_abs_diff_eq!(n.e1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.e2, (0.5f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(n.e_inf, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn identity_target() {
        let model = sal_stack::<f64>(1);
        let id = CompositeWarping::<f64>::identity();
        let fit = fit_warping_least_squares(&model, &grid_of(&id, -10.0, 10.0, 201), &Default::default()).unwrap();
        let err = approximation_errors(&id, &fit.warping, &EvalGrid::default()).unwrap();
        assert!(err.transform.e_inf < 1e-6);
    }

    #[test]
    fn affine_target() {
        let target = ElementaryWarping::affine(1.0, 2.0).unwrap();
        let model = sal_stack::<f64>(1);
        let fit = fit_warping_least_squares(&model, &grid_of(&target, -3.0, 3.0, 121), &Default::default()).unwrap();
        let err = approximation_errors(
            &target,
            &fit.warping,
            &EvalGrid {
                lo: -3.0,
                hi: 3.0,
                n: 4001,
            },
        )
        .unwrap();
        assert!(err.transform.e_inf < 1e-5, "{:?}", err.transform);
    }

    #[test]
    fn rejects_non_increasing_target() {
        let model = sal_stack::<f64>(1);
        let grid = vec![(0.0, 1.0), (1.0, 1.0)];
        assert!(fit_warping_least_squares(&model, &grid, &Default::default()).is_err());
        assert!(matches!(
            fit_warping_least_squares(&model, &[], &Default::default()),
            Err(Error::EmptyInput)
        ));
    }
}
