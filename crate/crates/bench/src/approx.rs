//! Black-box approximation of a sum-of-tanh warping by stacks of
//! sinh-arcsinh/affine layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cwgp::warpings::{
    approximation_errors, fit_warping_least_squares, sal_stack, uniform_grid, EvalGrid, LeastSquaresSettings, Norms,
};
use cwgp::{ElementaryWarping, Warping};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct ApproxArgs {
    pub min_depth: usize,
    pub max_depth: usize,
    /// Target warping; `None` draws a `n_terms`-term tanh mixture from `seed`.
    pub target: Option<Warping>,
    pub n_terms: usize,
    pub seed: u64,
    /// Least-squares grid.
    pub fit_grid: EvalGrid,
    /// Grid for the reported norms.
    pub eval_grid: EvalGrid,
    pub settings: LeastSquaresSettings,
}

impl Default for ApproxArgs {
    fn default() -> Self {
        ApproxArgs {
            min_depth: 1,
            max_depth: 7,
            target: None,
            n_terms: 5,
            seed: 0,
            fit_grid: EvalGrid {
                lo: -10.0,
                hi: 10.0,
                n: 401,
            },
            eval_grid: EvalGrid::default(),
            settings: LeastSquaresSettings::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxRow {
    pub layers: usize,
    pub tran: Option<Norms>,
    /// Norms of the difference of push-forward densities.
    pub dist: Option<Norms>,
    pub sse: Option<f64>,
    /// `warm` (previous depth plus an identity layer) or `cold` (identity stack).
    pub start: Option<&'static str>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxReport {
    pub target: Warping,
    pub seed: u64,
    pub fit_grid: EvalGrid,
    pub eval_grid: EvalGrid,
    pub latent_mean: Option<f64>,
    pub latent_sd: Option<f64>,
    pub dist_basis: &'static str,
    pub rows: Vec<ApproxRow>,
}

/// Seeded tanh mixture with amplitudes in [1, 4], slopes in [0.5, 3] and
/// centres spread over [-7, 7].
pub fn tanh_target(n_terms: usize, seed: u64) -> CliResult<Warping> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> = (0..n_terms)
        .map(|_| (rng.random_range(1.0..4.0), rng.random_range(0.5..3.0), rng.random_range(-7.0..7.0)))
        .collect();
    Ok(ElementaryWarping::tanh_mix(&terms)?.into())
}

pub fn cmd_approx(args: &ApproxArgs) -> CliResult<ApproxReport> {
    if args.min_depth == 0 || args.min_depth > args.max_depth {
        return Err(CliError::usage("need 1 <= min depth <= max depth"));
    }
    let target = match &args.target {
        Some(t) => t.clone(),
        None => tanh_target(args.n_terms, args.seed)?,
    };
    if !target.layers.iter().all(|l| matches!(l, ElementaryWarping::TanhMix { .. })) {
        return Err(CliError::usage("approximation target must be a tanh mixture"));
    }
    let grid: Vec<(f64, f64)> = uniform_grid(args.fit_grid.lo, args.fit_grid.hi, args.fit_grid.n)
        .into_iter()
        .map(|y| target.forward(y).map(|x| (y, x)))
        .collect::<cwgp::Result<_>>()?;
    let settings = LeastSquaresSettings {
        seed: args.seed,
        ..args.settings.clone()
    };
    let mut rows = Vec::new();
    let mut prev: Option<Warping> = None;
    let mut latent = (None, None);
    for depth in args.min_depth..=args.max_depth {
        let mut best: Option<(f64, Warping, &'static str)> = None;
        let mut last_err = None;
        let mut starts = vec![(sal_stack::<f64>(depth), "cold")];
        if let Some(p) = &prev {
            starts.insert(0, (p.clone().then(sal_stack(1)), "warm"));
        }
        for (init, kind) in starts {
            match fit_warping_least_squares(&init, &grid, &settings) {
                Ok(f) if best.as_ref().is_none_or(|b| f.sse < b.0) => best = Some((f.sse, f.warping, kind)),
                Ok(_) => {}
                Err(e) => last_err = Some(e.to_string()),
            }
        }
        match best {
            Some((sse, w, kind)) => {
                match approximation_errors(&target, &w, &args.eval_grid) {
                    Ok(e) => {
                        latent = (Some(e.latent_mean), Some(e.latent_sd));
                        rows.push(ApproxRow {
                            layers: depth,
                            tran: Some(e.transform),
                            dist: Some(e.density),
                            sse: Some(sse),
                            start: Some(kind),
                            error: None,
                        });
                    }
                    Err(e) => rows.push(ApproxRow {
                        layers: depth,
                        tran: None,
                        dist: None,
                        sse: Some(sse),
                        start: Some(kind),
                        error: Some(e.to_string()),
                    }),
                }
                prev = Some(w);
            }
            None => rows.push(ApproxRow {
                layers: depth,
                tran: None,
                dist: None,
                sse: None,
                start: None,
                error: last_err,
            }),
        }
    }
    Ok(ApproxReport {
        target,
        seed: args.seed,
        fit_grid: args.fit_grid,
        eval_grid: args.eval_grid,
        latent_mean: latent.0,
        latent_sd: latent.1,
        dist_basis: "push-forward densities of N(mean, sd^2) of the target's values on the evaluation grid",
        rows,
    })
}

pub fn format_table(r: &ApproxReport) -> String {
    let mut out = format!(
        "{:>6} {:>11} {:>11} {:>11} {:>9} {:>9} {:>9}\n",
        "layers", "Tran L1", "Tran L2", "Tran Linf", "Dist L1", "Dist L2", "Dist Linf"
    );
    for row in &r.rows {
        match (&row.tran, &row.dist) {
            (Some(t), Some(d)) => out.push_str(&format!(
                "{:>6} {:>11.4} {:>11.4} {:>11.4} {:>9.4} {:>9.4} {:>9.4}\n",
                row.layers, t.e1, t.e2, t.e_inf, d.e1, d.e2, d.e_inf
            )),
            _ => out.push_str(&format!("{:>6} failed: {}\n", row.layers, row.error.as_deref().unwrap_or("unknown"))),
        }
    }
    out
}
