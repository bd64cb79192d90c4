use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ForecastError, Month};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub mape: f64,
    pub rmse: f64,
}

/// MAPE (in percent) and RMSE.
pub fn evaluate(predictions: &[f64], actuals: &[f64]) -> Result<Accuracy, ForecastError> {
    evaluate_inner(predictions, actuals, |i| format!("index {i}"))
}

/// As [`evaluate`], naming the offending month on a zero actual.
pub fn evaluate_months(
    predictions: &[f64],
    actuals: &[f64],
    months: &[Month],
) -> Result<Accuracy, ForecastError> {
    if months.len() != actuals.len() {
        return Err(ForecastError::LengthMismatch {
            left: actuals.len(),
            right: months.len(),
        });
    }
    evaluate_inner(predictions, actuals, |i| months[i].to_string())
}

fn evaluate_inner(
    predictions: &[f64],
    actuals: &[f64],
    at: impl Fn(usize) -> String,
) -> Result<Accuracy, ForecastError> {
    if predictions.len() != actuals.len() {
        return Err(ForecastError::LengthMismatch {
            left: predictions.len(),
            right: actuals.len(),
        });
    }
    if actuals.is_empty() {
        return Err(ForecastError::Config("nothing to evaluate".into()));
    }
    if let Some(i) = actuals.iter().position(|&a| a == 0.0) {
        return Err(ForecastError::ZeroActual { at: at(i) });
    }
    let n = actuals.len() as f64;
    let mut ape = 0.0;
    let mut se = 0.0;
    for (p, a) in predictions.iter().zip(actuals) {
        ape += ((a - p) / a).abs();
        se += (a - p).powi(2);
    }
    Ok(Accuracy {
        mape: 100.0 * ape / n,
        rmse: (se / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Squared,
    AbsolutePercentage,
}

impl Loss {
    pub fn losses(self, predictions: &[f64], actuals: &[f64]) -> Vec<f64> {
        predictions
            .iter()
            .zip(actuals)
            .map(|(p, a)| match self {
                Loss::Squared => (a - p).powi(2),
                Loss::AbsolutePercentage => 100.0 * ((a - p) / a).abs(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// Corrected statistic; positive when `loss_a` is larger on average.
    pub statistic: f64,
    pub p_value: f64,
}

/// Diebold-Mariano test of equal predictive accuracy with the
/// Harvey-Leybourne-Newbold correction, two-sided against t(T-1).
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], horizon: usize) -> Result<DmResult, ForecastError> {
    if loss_a.len() != loss_b.len() {
        return Err(ForecastError::LengthMismatch {
            left: loss_a.len(),
            right: loss_b.len(),
        });
    }
    let t = loss_a.len();
    if horizon == 0 || t < horizon + 2 {
        return Err(ForecastError::TooShort { len: t, horizon });
    }
    if loss_a.iter().chain(loss_b).any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite("loss series".into()));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().all(|&v| v == 0.0) {
        return Err(ForecastError::DegenerateDm);
    }
    let tf = t as f64;
    let mean = d.iter().sum::<f64>() / tf;
    let autocov = |k: usize| -> f64 {
        (k..t).map(|i| (d[i] - mean) * (d[i - k] - mean)).sum::<f64>() / tf
    };
    let v = autocov(0) + 2.0 * (1..horizon).map(autocov).sum::<f64>();
    if !(v > 0.0) {
        return Err(ForecastError::NonPositiveVariance);
    }
    let h = horizon as f64;
    let dm = mean / (v / tf).sqrt();
    let statistic = dm * ((tf + 1.0 - 2.0 * h + h * (h - 1.0) / tf) / tf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, tf - 1.0).expect("t >= 3 gives positive degrees of freedom");
    let p_value = (2.0 * dist.sf(statistic.abs())).min(1.0);
    Ok(DmResult { statistic, p_value })
}
