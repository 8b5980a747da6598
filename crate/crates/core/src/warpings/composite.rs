use serde::{Deserialize, Serialize};

use super::elementary::ElementaryWarping;
use super::numeric::{numeric_inverse, NrmOptions, NrmStats};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A strictly increasing map from observation space to latent space.
pub trait Warp<T: Scalar> {
    fn forward(&self, y: T) -> Result<T>;
    fn derivative(&self, y: T) -> Result<T>;
}

impl<T: Scalar> Warp<T> for ElementaryWarping<T> {
    fn forward(&self, y: T) -> Result<T> {
        ElementaryWarping::forward(self, y)
    }
    fn derivative(&self, y: T) -> Result<T> {
        ElementaryWarping::derivative(self, y)
    }
}

/// `φ = φ_d ∘ … ∘ φ_1`, with `layers[0]` applied first. Empty is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeWarping<T> {
    pub layers: Vec<ElementaryWarping<T>>,
}

impl<T> Default for CompositeWarping<T> {
    fn default() -> Self {
        CompositeWarping { layers: Vec::new() }
    }
}

impl<T: Scalar> Warp<T> for CompositeWarping<T> {
    fn forward(&self, y: T) -> Result<T> {
        CompositeWarping::forward(self, y)
    }
    fn derivative(&self, y: T) -> Result<T> {
        CompositeWarping::derivative(self, y)
    }
}

impl<T: Scalar> From<ElementaryWarping<T>> for CompositeWarping<T> {
    fn from(w: ElementaryWarping<T>) -> Self {
        CompositeWarping { layers: vec![w] }
    }
}

impl<T: Scalar> CompositeWarping<T> {
    pub fn new(layers: Vec<ElementaryWarping<T>>) -> Self {
        CompositeWarping { layers }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn push(&mut self, layer: ElementaryWarping<T>) {
        self.layers.push(layer);
    }

    /// Appends `other`'s layers after this warping's.
    pub fn then(mut self, other: CompositeWarping<T>) -> Self {
        self.layers.extend(other.layers);
        self
    }

    pub fn forward(&self, y: T) -> Result<T> {
        self.layers.iter().try_fold(y, |v, l| l.forward(v))
    }

    /// Returns `(φ(y), ln φ′(y))` in one pass along the chain.
    pub fn forward_with_log_derivative(&self, y: T) -> Result<(T, T)> {
        let mut v = y;
        let mut logd = T::zero();
        for l in &self.layers {
            logd += l.log_derivative(v)?;
            v = l.forward(v)?;
        }
        Ok((v, logd))
    }

    pub fn log_derivative(&self, y: T) -> Result<T> {
        Ok(self.forward_with_log_derivative(y)?.1)
    }

    pub fn derivative(&self, y: T) -> Result<T> {
        let mut v = y;
        let mut d = T::one();
        for l in &self.layers {
            d *= l.derivative(v)?;
            v = l.forward(v)?;
        }
        Ok(d)
    }

    pub fn has_closed_form_inverse(&self) -> bool {
        self.layers.iter().all(|l| l.has_closed_form_inverse())
    }

    /// Closed-form inverse along the reversed chain.
    pub fn inverse(&self, x: T) -> Result<T> {
        self.layers
            .iter()
            .enumerate()
            .rev()
            .try_fold(x, |v, (i, l)| {
                l.inverse(v).map_err(|e| match e {
                    Error::NoClosedFormInverse { .. } => Error::NoClosedFormInverse { layer: i },
                    e => e,
                })
            })
    }

    /// Inverse that falls back to the numeric solver on layers without a
    /// closed form; every fallback is recorded in `stats`.
    pub fn invert(&self, x: T, opts: &NrmOptions<T>, stats: &mut NrmStats) -> Result<T> {
        let mut v = x;
        for l in self.layers.iter().rev() {
            v = if l.has_closed_form_inverse() {
                l.inverse(v)?
            } else {
                let out = numeric_inverse(l, v, opts)?;
                stats.record(&out);
                out.value
            };
        }
        Ok(v)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.n_params()).sum()
    }

    pub fn params(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Parameter names prefixed with the layer index, e.g. `1.skew`.
    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.param_names().into_iter().map(move |n| format!("{i}.{n}")))
            .collect()
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "warping expects {} parameters, got {}",
                self.n_params(),
                p.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let k = l.n_params();
            l.set_params(&p[off..off + k])?;
            off += k;
        }
        Ok(())
    }

    /// Short code such as `BC-L-SA`, read left to right in application order.
    pub fn code(&self) -> String {
        if self.layers.is_empty() {
            return "ID".into();
        }
        self.layers
            .iter()
            .map(|l| match l {
                ElementaryWarping::Affine { .. } => "L",
                ElementaryWarping::Log => "LOG",
                ElementaryWarping::Arcsinh { .. } => "A",
                ElementaryWarping::BoxCox { .. } => "BC",
                ElementaryWarping::SinhArcsinh { .. } => "SA",
                ElementaryWarping::TanhMix { .. } => "T",
            })
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// `a + b·sinh(c·asinh(y) − d)` as a sinh-arcsinh layer followed by an affine one.
pub fn sal_layer<T: Scalar>(a: T, b: T, c: T, d: T) -> Result<CompositeWarping<T>> {
    if !(b > T::zero()) || !(c > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "SAL layer needs b > 0 and c > 0, got b = {b}, c = {c}"
        )));
    }
    Ok(CompositeWarping::new(vec![
        ElementaryWarping::sinh_arcsinh(d, c)?,
        ElementaryWarping::affine(a, b)?,
    ]))
}

/// `depth` identity SAL layers.
pub fn sal_stack<T: Scalar>(depth: usize) -> CompositeWarping<T> {
    let mut w = CompositeWarping::identity();
    for _ in 0..depth {
        w = w.then(sal_layer(T::zero(), T::one(), T::one(), T::zero()).expect("identity SAL"));
    }
    w
}
