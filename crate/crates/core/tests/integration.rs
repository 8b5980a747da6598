use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use cwgp::gaussian::{cholesky_with_jitter, gp_condition, psd_factor, JitterSchedule};
use cwgp::model::{fit_cache, nll, nll_and_grad, predict, sample};
use cwgp::quadrature::gh_rule;
use cwgp::train::{
    bfgs_minimize, multi_start_train, powell_minimize, NllObjective, OptimOptions, SelectionCriterion, StartKind,
    TrainConfig,
};
use cwgp::warpings::{boxcox_limit_check, sal_layer};
use cwgp::{
    ConstantMean, ElementaryWarping, GenericKernel, GenericCompositeWarping, GradientMode, Kernel, Model,
    PredictOptions, SampleOptions, Warping,
};

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0))
}

#[test]
fn conditioning_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_inputs(&mut rng, 3, 1);
    let lat = array![0.3, -1.2, 0.8];
    let t = random_inputs(&mut rng, 4, 1);
    let k = Kernel::squared_exp(1.3, 0.7).unwrap();
    let (m, s2) = (0.2, 0.05);
    let post = gp_condition(x.view(), lat.view(), t.view(), &k, &ConstantMean::new(m), s2, true).unwrap();

    let kxx = to_dmatrix(&k.gram_sym(x.view()).unwrap()) + DMatrix::identity(3, 3) * s2;
    let kxt = to_dmatrix(&k.gram(x.view(), t.view()).unwrap());
    let ktt = to_dmatrix(&k.gram_sym(t.view()).unwrap());
    let inv = kxx.try_inverse().unwrap();
    let r = DVector::from_iterator(3, lat.iter().map(|v| v - m));
    let mean = kxt.transpose() * &inv * r;
    let cov = ktt - kxt.transpose() * &inv * &kxt;
    let pcov = post.cov.unwrap();
    for i in 0..4 {
        assert_abs_diff_eq!(post.mean[i], mean[i] + m, epsilon = 1e-9);
        for j in 0..4 {
            assert_abs_diff_eq!(pcov[[i, j]], cov[(i, j)], epsilon = 1e-9);
        }
    }
}

#[test]
fn rank_deficient_factor_matches_eigen_reconstruction() {
    let a = array![[1.0, 1.0], [1.0, 1.0]];
    let c = cholesky_with_jitter(a.view(), &JitterSchedule::default()).unwrap();
    assert!(c.jitter_used() > 0.0);
    let eig = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]).symmetric_eigen();
    let shifted = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v + c.jitter_used()));
    let oracle = &eig.eigenvectors * shifted * eig.eigenvectors.transpose();
    let l = c.lower();
    let rec = l.dot(&l.t());
    for i in 0..2 {
        for j in 0..2 {
            assert_abs_diff_eq!(rec[[i, j]], oracle[(i, j)], epsilon = 1e-10);
        }
    }
}

#[test]
fn gram_matches_elementwise_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_inputs(&mut rng, 4, 1);
    let b = random_inputs(&mut rng, 3, 1);
    for k in [
        Kernel::squared_exp(1.5, 0.8).unwrap(),
        Kernel::ard_squared_exp(0.7, &[1.2]).unwrap(),
        Kernel::spectral_mixture(&[(1.0, 0.3, 0.5), (0.4, 1.1, 0.2)]).unwrap(),
    ] {
        let g = k.gram(a.view(), b.view()).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_abs_diff_eq!(g[[i, j]], k.eval(a.row(i), b.row(j)).unwrap(), epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn log_warped_nll_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_inputs(&mut rng, 5, 2);
    let y: Array1<f64> = Array1::from_shape_fn(5, |_| rng.random_range(0.2..4.0));
    let k = Kernel::ard_squared_exp(0.9, &[1.1, 0.6]).unwrap();
    let (m, s2) = (0.1, 0.2);
    let model = Model::new(m, k.clone(), s2, ElementaryWarping::log().into()).unwrap();

    let cov = to_dmatrix(&k.gram_sym(x.view()).unwrap()) + DMatrix::identity(5, 5) * s2;
    let z = DVector::from_iterator(5, y.iter().map(|v| v.ln() - m));
    let quad = z.dot(&(cov.clone().try_inverse().unwrap() * &z));
    let det = cov.determinant();
    let gauss = (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(5) * det).sqrt();
    let jac: f64 = y.iter().map(|v| 1.0 / v).product();
    let oracle = -(gauss * jac).ln();
    assert_abs_diff_eq!(nll(&model, x.view(), y.view()).unwrap(), oracle, epsilon = 1e-10);
}

#[test]
fn two_point_rule_matches_jacobi_eigenvalues() {
    let j = DMatrix::from_row_slice(2, 2, &[0.0, 0.5f64.sqrt(), 0.5f64.sqrt(), 0.0]).symmetric_eigen();
    let mut nodes: Vec<f64> = j.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let rule = gh_rule::<f64>(2).unwrap();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    for i in 0..2 {
        assert_abs_diff_eq!(rule.nodes[i], nodes[i], epsilon = 1e-14);
        // weight = √π · (first eigenvector component)²
        let col = j.eigenvalues.iter().position(|&v| (v - nodes[i]).abs() < 1e-12).unwrap();
        assert_abs_diff_eq!(rule.weights[i], sqrt_pi * j.eigenvectors[(0, col)].powi(2), epsilon = 1e-14);
    }
}

#[test]
fn boxcox_near_zero_lambda_matches_series() {
    let y = std::f64::consts::E;
    let lambda = 1e-8;
    let l = y.ln();
    // (y^λ − 1)/λ = ln y + λ ln²y / 2 + O(λ²)
    let series = l + lambda * l * l / 2.0;
    assert_abs_diff_eq!(boxcox_limit_check(lambda, y).unwrap(), series, epsilon = 1e-6);
    assert_abs_diff_eq!(boxcox_limit_check(0.0, y).unwrap(), 1.0, epsilon = 1e-15);
}

fn sal_model() -> (Model, Array2<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64 * 0.5);
    let y = Array1::from_shape_fn(8, |i| (i as f64 * 0.7).sin() * 2.0 + 0.3 * i as f64);
    let w = sal_layer(0.2, 1.5, 0.8, -0.3).unwrap();
    (Model::new(0.0, Kernel::squared_exp(1.0, 1.0).unwrap(), 0.1, w).unwrap(), x, y)
}

#[test]
fn predictive_density_integrates_to_one() {
    let (model, x, y) = sal_model();
    let cache = fit_cache(&model, x.view(), y.view()).unwrap();
    let t = array![[1.25]];
    let (lo, hi, n) = (-60.0, 60.0, 60_001);
    let grid = Array1::linspace(lo, hi, n);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for &g in grid.iter() {
        let s = predict(&model, &cache, t.view(), &PredictOptions::default(), Some(array![g].view())).unwrap();
        let p = s.log_density.unwrap()[0].exp();
        if let Some(q) = prev {
            total += 0.5 * (p + q) * (hi - lo) / (n - 1) as f64;
        }
        prev = Some(p);
    }
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);
}

#[test]
fn log_samples_match_lognormal_mean() {
    let x = array![[0.0], [1.0], [2.0]];
    let y = array![1.0, 2.0, 1.5];
    let model = Model::new(0.0, Kernel::squared_exp(0.5, 1.0).unwrap(), 0.1, ElementaryWarping::log().into()).unwrap();
    let cache = fit_cache(&model, x.view(), y.view()).unwrap();
    let t = array![[3.0]];
    let opts = PredictOptions {
        include_noise: false,
        ..Default::default()
    };
    let s = predict(&model, &cache, t.view(), &opts, None).unwrap();
    let (m, sd) = (s.latent_mean[0], s.latent_sd[0]);
    let (paths, _) = sample(
        &model,
        &cache,
        t.view(),
        &SampleOptions {
            n_paths: 50_000,
            seed: 9,
            ..Default::default()
        },
    )
    .unwrap();
    let col = paths.column(0);
    let mean = col.mean().unwrap();
    let se = col.std(1.0) / (col.len() as f64).sqrt();
    let exact = (m + 0.5 * sd * sd).exp();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn affine_samples_are_linear_push_forward() {
    let (a, b) = (0.7, 2.5);
    let x = array![[0.0], [1.0], [2.5]];
    let y = array![0.4, -0.3, 1.1];
    let k = Kernel::squared_exp(1.0, 1.2).unwrap();
    let warped = Model::new(0.1, k.clone(), 0.05, ElementaryWarping::affine(a, b).unwrap().into()).unwrap();
    let plain = Model::gp(0.1, k, 0.05).unwrap();
    let latent_targets = y.mapv(|v| a + b * v);
    let t = array![[0.5], [3.0]];
    let opts = SampleOptions {
        n_paths: 5,
        seed: 4,
        ..Default::default()
    };
    let cw = fit_cache(&warped, x.view(), y.view()).unwrap();
    let cp = fit_cache(&plain, x.view(), latent_targets.view()).unwrap();
    let (sw, _) = sample(&warped, &cw, t.view(), &opts).unwrap();
    let (sp, _) = sample(&plain, &cp, t.view(), &opts).unwrap();
    for (w, p) in sw.iter().zip(sp.iter()) {
        assert_abs_diff_eq!(*w, (p - a) / b, epsilon = 1e-12);
    }
}

#[test]
fn cache_reproduces_conditioning() {
    let (model, x, y) = sal_model();
    let cache = fit_cache(&model, x.view(), y.view()).unwrap();
    let t = array![[0.3], [2.2], [5.0]];
    let opts = PredictOptions {
        include_noise: false,
        ..Default::default()
    };
    let s = predict(&model, &cache, t.view(), &opts, None).unwrap();
    let post = gp_condition(
        x.view(),
        cache.train_latents.view(),
        t.view(),
        &model.kernel,
        &model.mean,
        model.noise_var(),
        false,
    )
    .unwrap();
    for i in 0..3 {
        assert_abs_diff_eq!(s.latent_mean[i], post.mean[i], epsilon = 1e-10);
        assert_abs_diff_eq!(s.latent_sd[i] * s.latent_sd[i], post.var[i], epsilon = 1e-10);
    }
}

#[test]
fn nll_gradient_matches_fourth_order_stencil() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_inputs(&mut rng, 5, 2);
    let y = Array1::from_shape_fn(5, |_| rng.random_range(0.5..3.0));
    let plain = Model::gp(0.3, Kernel::ard_squared_exp(1.2, &[0.8, 1.4]).unwrap(), 0.1).unwrap();
    let warped = Model::new(
        0.3,
        Kernel::ard_squared_exp(1.2, &[0.8, 1.4]).unwrap(),
        0.1,
        Warping::new(vec![
            ElementaryWarping::box_cox(0.6).unwrap(),
            ElementaryWarping::sinh_arcsinh(0.2, 1.3).unwrap(),
            ElementaryWarping::affine(0.1, 0.9).unwrap(),
        ]),
    )
    .unwrap();
    for model in [plain, warped] {
        let (_, g) = nll_and_grad(&model, x.view(), y.view(), GradientMode::Analytic).unwrap();
        let p0 = model.params();
        let mut m = model.clone();
        let mut f = |p: &[f64]| {
            m.set_params(p).unwrap();
            nll(&m, x.view(), y.view()).unwrap()
        };
        for i in 0..p0.len() {
            let h = 1e-3;
            let at = |d: f64| {
                let mut p = p0.clone();
                p[i] += d;
                p
            };
            let stencil = (-f(&at(2.0 * h)) + 8.0 * f(&at(h)) - 8.0 * f(&at(-h)) + f(&at(-2.0 * h))) / (12.0 * h);
            assert!(
                (g[i] - stencil).abs() <= 1e-3 * stencil.abs().max(1e-3),
                "param {i}: analytic {} vs stencil {stencil}",
                g[i]
            );
        }
    }
}

/// Ten points drawn from a GP with known hyperparameters.
fn synthetic_gp(seed: u64) -> (Model, Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = Model::gp(0.0, Kernel::squared_exp(1.0, 0.8).unwrap(), 0.05).unwrap();
    let x = Array2::from_shape_fn((10, 1), |_| rng.random_range(0.0..5.0));
    let mut k = truth.kernel.gram_sym(x.view()).unwrap();
    for i in 0..10 {
        k[[i, i]] += 0.05;
    }
    let l = psd_factor(k.view());
    let eps: Array1<f64> = Array1::from_shape_fn(10, |_| StandardNormal.sample(&mut rng));
    (truth, x, l.dot(&eps))
}

#[test]
fn bfgs_recovers_at_least_true_likelihood() {
    let (truth, x, y) = synthetic_gp(6);
    let at_truth = nll(&truth, x.view(), y.view()).unwrap();
    let mut obj = NllObjective::new(truth.clone(), x.view(), y.view(), GradientMode::Analytic);
    let r = bfgs_minimize(&mut obj, &truth.free_params(), &OptimOptions::default()).unwrap();
    assert!(r.f <= at_truth + 1e-6);
}

#[test]
fn powell_agrees_with_bfgs_on_smooth_nll() {
    let (truth, x, y) = synthetic_gp(7);
    let start = truth.free_params();
    assert_eq!(start.len(), 4);
    let mut frozen = truth.clone();
    // fix the mean to get a three-parameter problem
    frozen.frozen = vec![0];
    let x0 = frozen.free_params();
    let mut obj = NllObjective::new(frozen.clone(), x.view(), y.view(), GradientMode::Analytic);
    let opts = OptimOptions {
        max_iters: 2000,
        grad_tol: 1e-9,
        rel_tol: 1e-14,
    };
    let b = bfgs_minimize(&mut obj, &x0, &opts).unwrap();
    let p = powell_minimize(&mut obj, &x0, &opts).unwrap();
    assert_abs_diff_eq!(b.f, p.f, epsilon = 1e-3);
}

#[test]
fn selection_never_worse_than_default_start() {
    let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64 / 10.0);
    let y = x.column(0).mapv(|t| 2.0 * t - 1.0);
    let (fit_idx, val_idx): (Vec<usize>, Vec<usize>) = (0..30).partition(|i| i % 2 == 0);
    let pick = |idx: &[usize]| (x.select(ndarray::Axis(0), idx), y.select(ndarray::Axis(0), idx));
    let (xf, yf) = pick(&fit_idx);
    let (xv, yv) = pick(&val_idx);
    let template = Model::gp(0.0, Kernel::squared_exp(1.0, 1.0).unwrap(), 0.1).unwrap();
    let report = multi_start_train(
        &template,
        xf.view(),
        yf.view(),
        Some((xv.view(), yv.view())),
        None,
        &TrainConfig::default(),
    )
    .unwrap();
    let default = report.starts.iter().find(|s| s.kind == StartKind::Default).unwrap();
    let best = &report.starts[report.best_index];
    assert!(best.validation_rmse.unwrap() <= default.validation_rmse.unwrap());
}

#[test]
fn log_warping_recovers_lognormal_process() {
    let mut wins = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 60;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random_range(0.0..8.0));
        let mut k = Kernel::squared_exp(1.0, 1.2).unwrap().gram_sym(x.view()).unwrap();
        for i in 0..n {
            k[[i, i]] += 0.01;
        }
        let eps: Array1<f64> = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
        let y = psd_factor(k.view()).dot(&eps).mapv(f64::exp);
        let cfg = TrainConfig {
            selection: SelectionCriterion::Nll,
            seed,
            ..Default::default()
        };
        let gp = Model::gp(0.0, Kernel::squared_exp(1.0, 1.0).unwrap(), 0.1).unwrap();
        let cw = Model::new(0.0, Kernel::squared_exp(1.0, 1.0).unwrap(), 0.1, ElementaryWarping::log().into()).unwrap();
        let a = multi_start_train(&gp, x.view(), y.view(), None, None, &cfg).unwrap().best_nll;
        let b = multi_start_train(&cw, x.view(), y.view(), None, None, &cfg).unwrap().best_nll;
        if b < a {
            wins += 1;
        }
    }
    assert!(wins >= 9, "log warping won {wins}/10");
}

#[test]
fn single_precision_model_tracks_double() {
    let x64 = array![[0.0], [0.7], [1.9], [3.1]];
    let y64 = array![0.5, 1.7, 0.9, 2.4];
    let m64 = Model::new(
        0.2,
        Kernel::squared_exp(1.1, 0.9).unwrap(),
        0.1,
        Warping::new(vec![ElementaryWarping::sinh_arcsinh(0.1, 1.2).unwrap(), ElementaryWarping::affine(0.3, 1.4).unwrap()]),
    )
    .unwrap();
    let m32 = cwgp::model::WarpedGp::<f32>::new(
        0.2,
        GenericKernel::squared_exp(1.1, 0.9).unwrap(),
        0.1,
        GenericCompositeWarping::new(vec![
            cwgp::GenericElementaryWarping::sinh_arcsinh(0.1, 1.2).unwrap(),
            cwgp::GenericElementaryWarping::affine(0.3, 1.4).unwrap(),
        ]),
    )
    .unwrap();
    let a = nll(&m64, x64.view(), y64.view()).unwrap();
    let b = nll(&m32, x64.mapv(|v| v as f32).view(), y64.mapv(|v| v as f32).view()).unwrap();
    assert_abs_diff_eq!(a, b as f64, epsilon = 1e-4 * a.abs().max(1.0));
}
