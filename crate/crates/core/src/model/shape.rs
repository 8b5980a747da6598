use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::warpings::{CompositeWarping, ElementaryWarping};

/// Closed-form shape quantities of `y = φ⁻¹(x)`, `x ~ N(m, σ²)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeDiagnostics<T> {
    pub mode: Option<T>,
    pub mean: Option<T>,
    pub variance: Option<T>,
}

/// `E[yⁿ] = exp(n m + n² σ² / 2)` for `ln y ~ N(m, σ²)`.
pub fn lognormal_moment<T: Scalar>(m: T, sigma: T, n: i32) -> T {
    let nf = T::lit(n as f64);
    (nf * m + T::lit(0.5) * nf * nf * sigma * sigma).exp()
}

/// Box-Cox mode, Johnson-SU mean and variance, or lognormal mean, variance
/// and mode, depending on the single layer of `warping`.
pub fn shape_diagnostics<T: Scalar>(warping: &CompositeWarping<T>, m: T, sigma: T) -> Result<ShapeDiagnostics<T>> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let layer = match warping.layers.as_slice() {
        [l] => l,
        _ => {
            return Err(Error::UnsupportedVariant(format!(
                "shape diagnostics need a single layer, got {}",
                warping.len()
            )))
        }
    };
    let half = T::lit(0.5);
    let one = T::one();
    match layer {
        ElementaryWarping::BoxCox { log_lambda } => {
            let l = log_lambda.exp();
            if l == T::zero() {
                return shape_diagnostics(&ElementaryWarping::log().into(), m, sigma);
            }
            let a = one + l * m;
            let disc = a * a + T::lit(4.0) * sigma * sigma * l * (l - one);
            if disc < T::zero() {
                return Err(Error::domain("box-cox mode: negative discriminant", disc.as_f64()));
            }
            let base = half * (a + disc.sqrt());
            Ok(ShapeDiagnostics {
                mode: Some(base.powf(l.recip())),
                mean: None,
                variance: None,
            })
        }
        ElementaryWarping::Arcsinh { a, log_b, c, log_d } => {
            if sigma == T::zero() {
                let y = layer.inverse(m)?;
                return Ok(ShapeDiagnostics {
                    mode: Some(y),
                    mean: Some(y),
                    variance: Some(T::zero()),
                });
            }
            // x = m + σz turns y = c + d·sinh((x − a)/b) into the standard
            // Johnson SU form with γ = (a − m)/σ, δ = b/σ.
            let gamma = (*a - m) / sigma;
            let delta = log_b.exp() / sigma;
            let d = log_d.exp();
            let w = (delta * delta).recip().exp();
            let mean = *c - d * w.sqrt() * (gamma / delta).sinh();
            let var = half * d * d * (w - one) * (w * (T::lit(2.0) * gamma / delta).cosh() + one);
            Ok(ShapeDiagnostics {
                mode: None,
                mean: Some(mean),
                variance: Some(var),
            })
        }
        ElementaryWarping::Log => {
            let s2 = sigma * sigma;
            let m1 = lognormal_moment(m, sigma, 1);
            Ok(ShapeDiagnostics {
                mode: Some((m - s2).exp()),
                mean: Some(m1),
                variance: Some(s2.exp_m1() * m1 * m1),
            })
        }
        other => Err(Error::UnsupportedVariant(other.name().to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn boxcox_unit_lambda() {
        let w = ElementaryWarping::box_cox(1.0).unwrap().into();
        for s in [0.1, 1.0, 3.0] {
            let d = shape_diagnostics(&w, 2.0, s).unwrap();
            assert_abs_diff_eq!(d.mode.unwrap(), 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn su_centred_mean() {
        let w = ElementaryWarping::arcsinh(0.0, 1.3, 2.5, 0.7).unwrap().into();
        let d = shape_diagnostics(&w, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(d.mean.unwrap(), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn unsupported() {
        let w = ElementaryWarping::sinh_arcsinh(0.0, 1.0).unwrap().into();
        assert!(matches!(shape_diagnostics(&w, 0.0, 1.0), Err(Error::UnsupportedVariant(_))));
        let empty = CompositeWarping::<f64>::identity();
        assert!(shape_diagnostics(&empty, 0.0, 1.0).is_err());
    }

    #[test]
    fn lognormal_first_moment() {
        assert_abs_diff_eq!(lognormal_moment(0.0, 1.0, 1), 0.5f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(lognormal_moment(0.2, 0.5, 2), (0.4f64 + 0.5).exp(), epsilon = 1e-15);
    }
}
