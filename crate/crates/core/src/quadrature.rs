//! Gauss–Hermite rules for `∫ f(x) exp(−x²) dx` and Gaussian expectations
//! of warped quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_GH_ORDER: usize = 20;
pub const MAX_GH_ORDER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussHermiteRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussHermiteRule<T> {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL.
/// `d` holds the diagonal, `e[i]` couples rows `i` and `i + 1`.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, e: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

/// Orthonormal Hermite values `p_0(x) … p_{k}(x)` for the weight `exp(−x²)`.
fn orthonormal_hermite(x: f64, k: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(k + 1);
    p.push(std::f64::consts::PI.powf(-0.25));
    if k >= 1 {
        p.push(std::f64::consts::SQRT_2 * x * p[0]);
    }
    for j in 1..k {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * p[j] - (jf / (jf + 1.0)).sqrt() * p[j - 1];
        p.push(next);
    }
    p
}

/// `k`-point rule: nodes are the roots of `H_k`, weights the Christoffel
/// numbers. Nodes come from the Jacobi matrix eigenvalues and are polished by
/// Newton steps on the three-term recurrence.
pub fn gh_rule<T: Scalar>(k: usize) -> Result<GaussHermiteRule<T>> {
    if !(1..=MAX_GH_ORDER).contains(&k) {
        return Err(Error::InvalidOrder(k));
    }
    let off: Vec<f64> = (1..k).map(|j| (j as f64 / 2.0).sqrt()).collect();
    let mut nodes = tridiagonal_eigenvalues(vec![0.0; k], &off);
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let p = orthonormal_hermite(*x, k);
            let dp = (2.0 * k as f64).sqrt() * p[k - 1];
            if dp != 0.0 {
                *x -= p[k] / dp;
            }
        }
    }
    // exact symmetry
    for i in 0..k / 2 {
        let v = 0.5 * (nodes[k - 1 - i] - nodes[i]);
        nodes[i] = -v;
        nodes[k - 1 - i] = v;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let p = orthonormal_hermite(x, k - 1);
            1.0 / p.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Ok(GaussHermiteRule {
        nodes: nodes.into_iter().map(T::lit).collect(),
        weights: weights.into_iter().map(T::lit).collect(),
    })
}

/// `E[g(x)]` for `x ~ N(m, σ²)`, where `g` is typically `h ∘ φ⁻¹`:
/// `(1/√π) Σ w_i g(√2 σ x_i + m)`. With `σ = 0` this is `g(m)` exactly.
pub fn expect_warped<T: Scalar, G: FnMut(T) -> Result<T>>(
    mut g: G,
    m: T,
    sigma: T,
    rule: &GaussHermiteRule<T>,
) -> Result<T> {
    if sigma < T::zero() || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == T::zero() {
        return g(m);
    }
    let scale = T::lit(std::f64::consts::SQRT_2) * sigma;
    let mut acc = T::zero();
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * g(scale * x + m)?;
    }
    Ok(acc / T::lit(std::f64::consts::PI.sqrt()))
}
