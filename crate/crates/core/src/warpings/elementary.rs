use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Below this magnitude Box-Cox inputs are rejected: the derivative
/// `|y|^(λ−1)` is singular (λ < 1) or zero (λ > 1) at the origin.
pub const BOXCOX_ZERO_GUARD: f64 = 1e-12;

/// One `a_j tanh(b_j (y + c_j))` term of a sum-of-tanh warping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TanhTerm<T> {
    pub log_a: T,
    pub log_b: T,
    pub c: T,
}

/// A single invertible, strictly increasing map from observation space to
/// latent space. Positive parameters are stored as logarithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ElementaryWarping<T> {
    /// `a + b·y`. The sign of `b` is structural; `|b|` is trained in log space.
    Affine {
        shift: T,
        log_scale: T,
        #[serde(default)]
        negative: bool,
    },
    /// `log(y)`, `y > 0`.
    Log,
    /// `a + b·asinh((y − c)/d)`.
    Arcsinh { a: T, log_b: T, c: T, log_d: T },
    /// `(sgn(y)|y|^λ − 1)/λ`.
    BoxCox { log_lambda: T },
    /// `sinh(b·asinh(y) − a)`.
    SinhArcsinh { skew: T, log_tail: T },
    /// `y + Σ_j a_j tanh(b_j (y + c_j))`; inverted numerically.
    TanhMix { terms: Vec<TanhTerm<T>> },
}

fn pos<T: Scalar>(name: &str, v: T) -> Result<T> {
    if v > T::zero() && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

/// `ln cosh(z)` without overflow.
fn ln_cosh<T: Scalar>(z: T) -> T {
    let a = z.abs();
    a + (T::lit(-2.0) * a).exp().ln_1p() - T::lit(std::f64::consts::LN_2)
}

impl<T: Scalar> ElementaryWarping<T> {
    pub fn affine(a: T, b: T) -> Result<Self> {
        if b == T::zero() || !b.is_finite() || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("affine needs finite a and b != 0, got ({a}, {b})")));
        }
        Ok(ElementaryWarping::Affine {
            shift: a,
            log_scale: b.abs().ln(),
            negative: b < T::zero(),
        })
    }

    pub fn log() -> Self {
        ElementaryWarping::Log
    }

    pub fn arcsinh(a: T, b: T, c: T, d: T) -> Result<Self> {
        Ok(ElementaryWarping::Arcsinh {
            a,
            log_b: pos("arcsinh b", b)?,
            c,
            log_d: pos("arcsinh d", d)?,
        })
    }

    /// `λ = 0` is the pure-log limit; its parameter is `ln 0 = −∞` and
    /// should be kept frozen during training.
    pub fn box_cox(lambda: T) -> Result<Self> {
        let log_lambda = if lambda == T::zero() {
            T::neg_infinity()
        } else {
            pos("box-cox lambda", lambda)?
        };
        Ok(ElementaryWarping::BoxCox { log_lambda })
    }

    /// `sinh(b·asinh(y) − a)`.
    pub fn sinh_arcsinh(a: T, b: T) -> Result<Self> {
        Ok(ElementaryWarping::SinhArcsinh {
            skew: a,
            log_tail: pos("sinh-arcsinh b", b)?,
        })
    }

    /// Terms given as `(a_j, b_j, c_j)` with `a_j, b_j ≥ 0`. A zero `a_j` or
    /// `b_j` is stored as `ln 0 = −∞` and contributes nothing.
    pub fn tanh_mix(terms: &[(T, T, T)]) -> Result<Self> {
        let terms = terms
            .iter()
            .map(|&(a, b, c)| {
                if a < T::zero() || b < T::zero() || !a.is_finite() || !b.is_finite() || !c.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "tanh term needs a, b >= 0, got ({a}, {b}, {c})"
                    )));
                }
                Ok(TanhTerm {
                    log_a: a.ln(),
                    log_b: b.ln(),
                    c,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ElementaryWarping::TanhMix { terms })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ElementaryWarping::Affine { .. } => "affine",
            ElementaryWarping::Log => "log",
            ElementaryWarping::Arcsinh { .. } => "arcsinh",
            ElementaryWarping::BoxCox { .. } => "box_cox",
            ElementaryWarping::SinhArcsinh { .. } => "sinh_arcsinh",
            ElementaryWarping::TanhMix { .. } => "tanh_mix",
        }
    }

    fn scale(shift_sign: bool, log_scale: T) -> T {
        let b = log_scale.exp();
        if shift_sign {
            -b
        } else {
            b
        }
    }

    pub(crate) fn check_domain(&self, y: T) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::domain(format!("{} input", self.name()), y.as_f64()));
        }
        match self {
            ElementaryWarping::Log if y <= T::zero() => {
                Err(Error::domain("log warping requires y > 0", y.as_f64()))
            }
            ElementaryWarping::BoxCox { .. } if y.abs() < T::lit(BOXCOX_ZERO_GUARD) => Err(
                Error::domain("box-cox warping requires |y| >= 1e-12", y.as_f64()),
            ),
            ElementaryWarping::BoxCox { log_lambda } if log_lambda.exp() == T::zero() && y < T::zero() => {
                Err(Error::domain("box-cox with lambda = 0 requires y > 0", y.as_f64()))
            }
            _ => Ok(()),
        }
    }

    /// `φ(y)`.
    pub fn forward(&self, y: T) -> Result<T> {
        self.check_domain(y)?;
        Ok(match self {
            ElementaryWarping::Affine {
                shift,
                log_scale,
                negative,
            } => *shift + Self::scale(*negative, *log_scale) * y,
            ElementaryWarping::Log => y.ln(),
            ElementaryWarping::Arcsinh { a, log_b, c, log_d } => {
                *a + log_b.exp() * ((y - *c) / log_d.exp()).asinh()
            }
            ElementaryWarping::BoxCox { log_lambda } => {
                let lambda = log_lambda.exp();
                if lambda == T::zero() {
                    return Ok(y.ln());
                }
                let p = lambda * y.abs().ln();
                if y > T::zero() {
                    p.exp_m1() / lambda
                } else {
                    (-p.exp() - T::one()) / lambda
                }
            }
            ElementaryWarping::SinhArcsinh { skew, log_tail } => {
                (log_tail.exp() * y.asinh() - *skew).sinh()
            }
            ElementaryWarping::TanhMix { terms } => {
                y + terms
                    .iter()
                    .map(|t| t.log_a.exp() * (t.log_b.exp() * (y + t.c)).tanh())
                    .sum::<T>()
            }
        })
    }

    /// `dφ/dy`, strictly positive on the domain.
    pub fn derivative(&self, y: T) -> Result<T> {
        self.check_domain(y)?;
        Ok(match self {
            ElementaryWarping::Affine { log_scale, .. } => log_scale.exp(),
            ElementaryWarping::Log => y.recip(),
            ElementaryWarping::Arcsinh { log_b, c, log_d, .. } => {
                log_b.exp() / log_d.exp().hypot(y - *c)
            }
            ElementaryWarping::BoxCox { log_lambda } => {
                ((log_lambda.exp() - T::one()) * y.abs().ln()).exp()
            }
            ElementaryWarping::SinhArcsinh { skew, log_tail } => {
                let b = log_tail.exp();
                b * (b * y.asinh() - *skew).cosh() / T::one().hypot(y)
            }
            ElementaryWarping::TanhMix { terms } => {
                T::one()
                    + terms
                        .iter()
                        .map(|t| {
                            let b = t.log_b.exp();
                            let s = (b * (y + t.c)).cosh().recip();
                            t.log_a.exp() * b * s * s
                        })
                        .sum::<T>()
            }
        })
    }

    /// `ln dφ/dy`, evaluated in log space where the variant allows it.
    pub fn log_derivative(&self, y: T) -> Result<T> {
        self.check_domain(y)?;
        Ok(match self {
            ElementaryWarping::Affine { log_scale, .. } => *log_scale,
            ElementaryWarping::Log => -y.ln(),
            ElementaryWarping::Arcsinh { log_b, c, log_d, .. } => {
                *log_b - log_d.exp().hypot(y - *c).ln()
            }
            ElementaryWarping::BoxCox { log_lambda } => {
                (log_lambda.exp() - T::one()) * y.abs().ln()
            }
            ElementaryWarping::SinhArcsinh { skew, log_tail } => {
                let b = log_tail.exp();
                *log_tail + ln_cosh(b * y.asinh() - *skew) - T::one().hypot(y).ln()
            }
            ElementaryWarping::TanhMix { .. } => self.derivative(y)?.ln(),
        })
    }

    pub fn has_closed_form_inverse(&self) -> bool {
        match self {
            ElementaryWarping::TanhMix { terms } => terms
                .iter()
                .all(|t| t.log_a == T::neg_infinity() || t.log_b == T::neg_infinity()),
            _ => true,
        }
    }

    /// `φ⁻¹(x)` in closed form.
    pub fn inverse(&self, x: T) -> Result<T> {
        if !x.is_finite() {
            return Err(Error::domain(format!("{} inverse input", self.name()), x.as_f64()));
        }
        Ok(match self {
            ElementaryWarping::Affine {
                shift,
                log_scale,
                negative,
            } => (x - *shift) / Self::scale(*negative, *log_scale),
            ElementaryWarping::Log => x.exp(),
            ElementaryWarping::Arcsinh { a, log_b, c, log_d } => {
                *c + log_d.exp() * ((x - *a) / log_b.exp()).sinh()
            }
            ElementaryWarping::BoxCox { log_lambda } => {
                let lambda = log_lambda.exp();
                if lambda == T::zero() {
                    return Ok(x.exp());
                }
                let u = lambda * x + T::one();
                if u > T::zero() {
                    ((lambda * x).ln_1p() / lambda).exp()
                } else {
                    -((-u).ln() / lambda).exp()
                }
            }
            ElementaryWarping::SinhArcsinh { skew, log_tail } => {
                ((x.asinh() + *skew) / log_tail.exp()).sinh()
            }
            ElementaryWarping::TanhMix { .. } => {
                if self.has_closed_form_inverse() {
                    x
                } else {
                    return Err(Error::NoClosedFormInverse { layer: 0 });
                }
            }
        })
    }

    pub fn n_params(&self) -> usize {
        match self {
            ElementaryWarping::Affine { .. } => 2,
            ElementaryWarping::Log => 0,
            ElementaryWarping::Arcsinh { .. } => 4,
            ElementaryWarping::BoxCox { .. } => 1,
            ElementaryWarping::SinhArcsinh { .. } => 2,
            ElementaryWarping::TanhMix { terms } => 3 * terms.len(),
        }
    }

    /// Unconstrained parameters in a fixed order per variant.
    pub fn params(&self) -> Vec<T> {
        match self {
            ElementaryWarping::Affine {
                shift, log_scale, ..
            } => vec![*shift, *log_scale],
            ElementaryWarping::Log => vec![],
            ElementaryWarping::Arcsinh { a, log_b, c, log_d } => vec![*a, *log_b, *c, *log_d],
            ElementaryWarping::BoxCox { log_lambda } => vec![*log_lambda],
            ElementaryWarping::SinhArcsinh { skew, log_tail } => vec![*skew, *log_tail],
            ElementaryWarping::TanhMix { terms } => {
                terms.iter().flat_map(|t| [t.log_a, t.log_b, t.c]).collect()
            }
        }
    }

    /// Names matching [`ElementaryWarping::params`].
    pub fn param_names(&self) -> Vec<String> {
        match self {
            ElementaryWarping::Affine { .. } => vec!["shift".into(), "log_scale".into()],
            ElementaryWarping::Log => vec![],
            ElementaryWarping::Arcsinh { .. } => {
                vec!["a".into(), "log_b".into(), "c".into(), "log_d".into()]
            }
            ElementaryWarping::BoxCox { .. } => vec!["log_lambda".into()],
            ElementaryWarping::SinhArcsinh { .. } => vec!["skew".into(), "log_tail".into()],
            ElementaryWarping::TanhMix { terms } => (0..terms.len())
                .flat_map(|j| [format!("log_a{j}"), format!("log_b{j}"), format!("c{j}")])
                .collect(),
        }
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.n_params(),
                p.len()
            )));
        }
        match self {
            ElementaryWarping::Affine {
                shift, log_scale, ..
            } => {
                *shift = p[0];
                *log_scale = p[1];
            }
            ElementaryWarping::Log => {}
            ElementaryWarping::Arcsinh { a, log_b, c, log_d } => {
                *a = p[0];
                *log_b = p[1];
                *c = p[2];
                *log_d = p[3];
            }
            ElementaryWarping::BoxCox { log_lambda } => *log_lambda = p[0],
            ElementaryWarping::SinhArcsinh { skew, log_tail } => {
                *skew = p[0];
                *log_tail = p[1];
            }
            ElementaryWarping::TanhMix { terms } => {
                for (t, ch) in terms.iter_mut().zip(p.chunks(3)) {
                    t.log_a = ch[0];
                    t.log_b = ch[1];
                    t.c = ch[2];
                }
            }
        }
        Ok(())
    }

    /// Resets parameters to (approximately) the identity map for inputs
    /// centred at `center` with spread `scale`.
    ///
    /// Affine, sinh-arcsinh and Box-Cox (up to the unit shift `y − 1`) are
    /// exact; arcsinh is linear to first order around `center`; tanh mixtures
    /// get small amplitudes; log has no parameters.
    pub fn reset_to_identity(&mut self, center: T, scale: T) {
        let scale = if scale > T::zero() && scale.is_finite() {
            scale
        } else {
            T::one()
        };
        match self {
            ElementaryWarping::Affine {
                shift, log_scale, ..
            } => {
                *shift = T::zero();
                *log_scale = T::zero();
            }
            ElementaryWarping::Log => {}
            ElementaryWarping::Arcsinh { a, log_b, c, log_d } => {
                // slope b/d = 1 at y = c, curvature negligible within ±scale
                let width = scale * T::lit(10.0);
                *a = center;
                *c = center;
                *log_b = width.ln();
                *log_d = width.ln();
            }
            ElementaryWarping::BoxCox { log_lambda } => *log_lambda = T::zero(),
            ElementaryWarping::SinhArcsinh { skew, log_tail } => {
                *skew = T::zero();
                *log_tail = T::zero();
            }
            ElementaryWarping::TanhMix { terms } => {
                let n = terms.len();
                for (j, t) in terms.iter_mut().enumerate() {
                    let q = T::lit((j as f64 + 1.0) / (n as f64 + 1.0) * 2.0 - 1.0);
                    t.log_a = (scale * T::lit(0.05)).ln();
                    t.log_b = scale.recip().ln();
                    t.c = -(center + q * scale);
                }
            }
        }
    }
}

/// Box-Cox forward for λ at or near zero, continuous into the `log` limit.
pub fn boxcox_limit_check<T: Scalar>(lambda: T, y: T) -> Result<T> {
    if !(lambda >= T::zero() && lambda <= T::lit(1e-6)) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in [0, 1e-6], got {lambda}"
        )));
    }
    if !(y > T::zero()) || !y.is_finite() {
        return Err(Error::domain("box-cox limit requires y > 0", y.as_f64()));
    }
    if lambda == T::zero() {
        return Ok(y.ln());
    }
    Ok((lambda * y.ln()).exp_m1() / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn forward_examples() {
        assert_eq!(ElementaryWarping::affine(2.0, 3.0).unwrap().forward(1.0).unwrap(), 5.0);
        assert_abs_diff_eq!(
            ElementaryWarping::box_cox(2.0).unwrap().forward(3.0).unwrap(),
            4.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            ElementaryWarping::sinh_arcsinh(0.0, 1.0).unwrap().forward(1.5).unwrap(),
            1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn derivative_examples() {
        assert_abs_diff_eq!(
            ElementaryWarping::box_cox(2.0).unwrap().derivative(3.0).unwrap(),
            3.0,
            epsilon = 1e-14
        );
        assert_eq!(
            ElementaryWarping::arcsinh(0.0, 1.0, 0.0, 1.0).unwrap().derivative(0.0).unwrap(),
            1.0
        );
    }

    #[test]
    fn inverse_examples() {
        assert_abs_diff_eq!(
            ElementaryWarping::box_cox(2.0).unwrap().inverse(4.0).unwrap(),
            3.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            ElementaryWarping::<f64>::log().inverse(1.0).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(ElementaryWarping::affine(2.0, 3.0).unwrap().inverse(5.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn negative_affine() {
        let w = ElementaryWarping::affine(1.0, -2.0).unwrap();
        assert_eq!(w.forward(3.0).unwrap(), -5.0);
        assert_eq!(w.inverse(-5.0).unwrap(), 3.0);
        // |b|: the composite stays a valid change of variables
        assert_eq!(w.derivative(3.0).unwrap(), 2.0);
    }

    #[test]
    fn domain_errors() {
        let log = ElementaryWarping::<f64>::log();
        assert!(matches!(log.forward(0.0), Err(Error::Domain { .. })));
        assert!(matches!(log.derivative(-1.0), Err(Error::Domain { .. })));
        let bc = ElementaryWarping::box_cox(0.5).unwrap();
        assert!(matches!(bc.forward(1e-13), Err(Error::Domain { .. })));
        assert!(matches!(bc.derivative(0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn tanh_mix_has_no_closed_inverse() {
        let w = ElementaryWarping::tanh_mix(&[(1.0, 1.0, 0.0)]).unwrap();
        assert_eq!(w.forward(0.0).unwrap(), 0.0);
        assert!(matches!(w.inverse(0.0), Err(Error::NoClosedFormInverse { .. })));
        let id = ElementaryWarping::<f64>::tanh_mix(&[(0.0, 1.0, 0.5)]).unwrap();
        assert!(id.has_closed_form_inverse());
        assert_eq!(id.inverse(0.3).unwrap(), 0.3);
    }

    #[test]
    fn identity_reversion() {
        let bc = ElementaryWarping::box_cox(1.0).unwrap();
        for &y in &[0.5f64, 1.0, 3.25, 10.0] {
            assert_abs_diff_eq!(bc.forward(y).unwrap(), y - 1.0, epsilon = 1e-14 * y);
        }
        let sa = ElementaryWarping::sinh_arcsinh(0.0, 1.0).unwrap();
        for &y in &[-3.0f64, -0.2, 0.0, 0.7, 4.0] {
            assert_abs_diff_eq!(sa.forward(y).unwrap(), y, epsilon = 1e-14 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn boxcox_limit() {
        assert_eq!(boxcox_limit_check(0.0, std::f64::consts::E).unwrap(), 1.0);
        assert_eq!(boxcox_limit_check(0.0, 1.0).unwrap(), 0.0);
        // series oracle: (y^λ − 1)/λ = ln y + λ ln²y/2 + O(λ²)
        let lam = 1e-8;
        let y = std::f64::consts::E;
        let series = y.ln() + lam * y.ln().powi(2) / 2.0;
        let v = boxcox_limit_check(lam, y).unwrap();
        assert_abs_diff_eq!(v, series, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-6);
        assert!(boxcox_limit_check(1e-3, 2.0).is_err());
        assert!(boxcox_limit_check(0.0, -1.0).is_err());
    }

    #[test]
    fn ln_cosh_stable() {
        assert_abs_diff_eq!(ln_cosh(0.3f64), 0.3f64.cosh().ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(ln_cosh(800.0f64), 800.0 - std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn params_round_trip() {
        let mut w = ElementaryWarping::arcsinh(0.2, 1.5, -0.3, 2.0).unwrap();
        let before = w.clone();
        let p = w.params();
        w.set_params(&p).unwrap();
        assert_eq!(w, before);
        assert_eq!(w.param_names().len(), p.len());
    }
}
