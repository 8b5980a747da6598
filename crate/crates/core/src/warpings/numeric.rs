use serde::{Deserialize, Serialize};

use super::composite::Warp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrmOptions<T> {
    /// Absolute tolerance on `|φ(y) − x|`.
    pub tol: T,
    /// Newton steps after seeding.
    pub max_iter: usize,
    /// Bisection steps used to produce the Newton seed.
    pub max_bisect: usize,
    /// Bisection stops early once the bracket is narrower than this,
    /// relative to `1 + |y|`.
    pub seed_width: T,
}

impl<T: Scalar> Default for NrmOptions<T> {
    fn default() -> Self {
        NrmOptions {
            tol: T::lit(1e-10),
            max_iter: 100,
            max_bisect: 60,
            seed_width: T::lit(1e-2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NrmOutcome<T> {
    pub value: T,
    pub newton_iterations: usize,
    pub bisection_steps: usize,
    pub expansion_steps: usize,
}

/// Running totals of numeric inversions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NrmStats {
    pub calls: u64,
    pub newton_iterations: u64,
    pub bisection_steps: u64,
}

impl NrmStats {
    pub fn record<T>(&mut self, o: &NrmOutcome<T>) {
        self.calls += 1;
        self.newton_iterations += o.newton_iterations as u64;
        self.bisection_steps += (o.bisection_steps + o.expansion_steps) as u64;
    }

    pub fn merge(&mut self, other: &NrmStats) {
        self.calls += other.calls;
        self.newton_iterations += other.newton_iterations;
        self.bisection_steps += other.bisection_steps;
    }
}

const MAX_EXPANSION: usize = 400;

/// Solves `w.forward(y) = x` for strictly increasing `w`.
///
/// The bracket grows by doubling outward from `y = x`; probes outside the
/// domain are pulled back toward the last valid point. Bisection then
/// produces a seed for Newton steps that fall back to bisection whenever
/// they leave the bracket.
pub fn numeric_inverse<T: Scalar, W: Warp<T> + ?Sized>(
    w: &W,
    x: T,
    opts: &NrmOptions<T>,
) -> Result<NrmOutcome<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", opts.tol)));
    }
    if !x.is_finite() {
        return Err(Error::domain("numeric inverse target", x.as_f64()));
    }
    let g = |y: T| w.forward(y).map(|v| v - x);
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut expansions = 0usize;

    let mut anchor = None;
    for cand in [x, T::zero(), T::one(), -T::one()] {
        if let Ok(v) = g(cand) {
            anchor = Some((cand, v));
            break;
        }
    }
    let (y0, g0) = anchor.ok_or_else(|| Error::domain("no valid starting point", x.as_f64()))?;
    if g0 == T::zero() {
        return Ok(NrmOutcome {
            value: y0,
            newton_iterations: 0,
            bisection_steps: 0,
            expansion_steps: 0,
        });
    }

    // (lo, g(lo) < 0) and (hi, g(hi) > 0)
    let (mut lo, glo, mut hi, ghi);
    let toward = if g0 < T::zero() { T::one() } else { -T::one() };
    {
        let mut valid = (y0, g0);
        let mut step = T::one().max(y0.abs());
        let mut invalid: Option<T> = None;
        loop {
            expansions += 1;
            if expansions > MAX_EXPANSION {
                return Err(Error::NoConvergence {
                    iterations: 0,
                    lo: valid.0.as_f64(),
                    hi: valid.0.as_f64(),
                });
            }
            let probe = match invalid {
                Some(bad) => half * (valid.0 + bad),
                None => valid.0 + toward * step,
            };
            match g(probe) {
                Ok(v) if (v < T::zero()) == (g0 < T::zero()) && v != T::zero() => {
                    valid = (probe, v);
                    if invalid.is_none() {
                        step *= two;
                    }
                }
                Ok(v) => {
                    if g0 < T::zero() {
                        lo = valid.0;
                        glo = valid.1;
                        hi = probe;
                        ghi = v;
                    } else {
                        lo = probe;
                        glo = v;
                        hi = valid.0;
                        ghi = valid.1;
                    }
                    break;
                }
                Err(e) if e.is_domain() => invalid = Some(probe),
                Err(e) => return Err(e),
            }
        }
    }
    if glo == T::zero() {
        return Ok(NrmOutcome {
            value: lo,
            newton_iterations: 0,
            bisection_steps: 0,
            expansion_steps: expansions,
        });
    }
    if ghi == T::zero() {
        return Ok(NrmOutcome {
            value: hi,
            newton_iterations: 0,
            bisection_steps: 0,
            expansion_steps: expansions,
        });
    }

    let mut bisections = 0usize;
    while bisections < opts.max_bisect && hi - lo > opts.seed_width * (T::one() + lo.abs().max(hi.abs())) {
        let mid = half * (lo + hi);
        let gm = g(mid)?;
        bisections += 1;
        if gm == T::zero() {
            return Ok(NrmOutcome {
                value: mid,
                newton_iterations: 0,
                bisection_steps: bisections,
                expansion_steps: expansions,
            });
        }
        if gm < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut y = half * (lo + hi);
    let floor = T::lit(4.0) * T::epsilon();
    for it in 1..=opts.max_iter {
        let gy = g(y)?;
        if gy.abs() <= opts.tol {
            return Ok(NrmOutcome {
                value: y,
                newton_iterations: it,
                bisection_steps: bisections,
                expansion_steps: expansions,
            });
        }
        if gy < T::zero() {
            lo = y;
        } else {
            hi = y;
        }
        if hi - lo <= floor * (T::one() + y.abs()) {
            // bracket at machine resolution: best attainable root
            return Ok(NrmOutcome {
                value: y,
                newton_iterations: it,
                bisection_steps: bisections,
                expansion_steps: expansions,
            });
        }
        let d = w.derivative(y)?;
        let newton = y - gy / d;
        y = if d > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            half * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        lo: lo.as_f64(),
        hi: hi.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warpings::ElementaryWarping;
    use approx::assert_abs_diff_eq;

    #[test]
    fn odd_tanh_at_zero() {
        let w = ElementaryWarping::tanh_mix(&[(1.0, 1.0, 0.0)]).unwrap();
        let out = numeric_inverse(&w, 0.0, &NrmOptions::default()).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn tanh_round_trip() {
        let w = ElementaryWarping::<f64>::tanh_mix(&[(0.8, 1.3, -0.4), (2.1, 0.7, 1.9)]).unwrap();
        let x = w.forward(1.3).unwrap();
        let out = numeric_inverse(&w, x, &NrmOptions::default()).unwrap();
        assert!((w.forward(out.value).unwrap() - x).abs() <= 1e-10);
        assert_abs_diff_eq!(out.value, 1.3, epsilon = 1e-9);
        assert!(out.newton_iterations > 0);
    }

    #[test]
    fn affine_cross_check() {
        let w = ElementaryWarping::affine(0.0, 2.0).unwrap();
        let out = numeric_inverse(&w, 4.0, &NrmOptions::default()).unwrap();
        assert_abs_diff_eq!(out.value, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(out.value, w.inverse(4.0).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn restricted_domain() {
        let w = ElementaryWarping::<f64>::log();
        for &x in &[-30.0, -3.0, 0.5, 12.0] {
            let out = numeric_inverse(&w, x, &NrmOptions::default()).unwrap();
            assert!((out.value.ln() - x).abs() <= 1e-10, "x = {x}");
        }
    }

    #[test]
    fn iteration_cap() {
        let w = ElementaryWarping::tanh_mix(&[(5.0, 3.0, 0.0)]).unwrap();
        let opts = NrmOptions {
            max_iter: 1,
            max_bisect: 0,
            seed_width: 0.0,
            ..NrmOptions::default()
        };
        assert!(matches!(
            numeric_inverse(&w, 7.0, &opts),
            Err(Error::NoConvergence { .. })
        ));
    }
}
