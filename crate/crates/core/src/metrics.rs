//! Point and density scores for test-set evaluation.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check<T>(y: &ArrayView1<T>, y_hat: &ArrayView1<T>) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch(format!("{} targets but {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn rmse<T: Scalar>(y: ArrayView1<T>, y_hat: ArrayView1<T>) -> Result<T> {
    check(&y, &y_hat)?;
    let s: T = y.iter().zip(y_hat.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((s / T::lit(y.len() as f64)).sqrt())
}

pub fn mae<T: Scalar>(y: ArrayView1<T>, y_hat: ArrayView1<T>) -> Result<T> {
    check(&y, &y_hat)?;
    let s: T = y.iter().zip(y_hat.iter()).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(s / T::lit(y.len() as f64))
}

/// Negative mean of per-point log predictive densities.
pub fn nlpd<T: Scalar>(log_densities: ArrayView1<T>) -> Result<T> {
    if log_densities.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s: T = log_densities.iter().copied().sum();
    Ok(-s / T::lit(log_densities.len() as f64))
}

/// Which predictive summary feeds RMSE and MAE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    #[default]
    Median,
    GhMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub train_s: f64,
    pub eval_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub mae: f64,
    pub nlpd: f64,
    /// Training NLL of the fitted model.
    pub nll: f64,
    pub n: usize,
    pub wall_times: WallTimes,
}
