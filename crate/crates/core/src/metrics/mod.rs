//! Error metrics for fit and prediction quality.
//!
//! Each metric is reported on its own scale; nothing here aggregates
//! across metrics.

mod projection;

pub use projection::{nearest_point_on_curve, ortho_sum, CurveProjector, GRID_SAMPLES, PARAM_TOLERANCE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{massflow_at, pressure_at, BetaVector, OperatingPoint, DOMAIN_TOLERANCE};

/// Truth values with magnitude at or below this are skipped by [`mape`].
pub const MAPE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {truth} truth values vs {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("MAPE undefined: all {0} truth values are near zero")]
    MapeUndefined(usize),
    #[error("invalid beta vector: {0}")]
    InvalidBeta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rmse,
    Mape,
    ResidualSd,
    Ortho,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::Mape => "mape",
            MetricKind::ResidualSd => "residual_sd",
            MetricKind::Ortho => "ortho",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rmse" => Ok(MetricKind::Rmse),
            "mape" => Ok(MetricKind::Mape),
            "residual_sd" | "sd" => Ok(MetricKind::ResidualSd),
            "ortho" => Ok(MetricKind::Ortho),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

/// Which coordinate is predicted from the other during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Predict pressure ratio at the measured mass flow.
    #[default]
    Pressure,
    /// Predict mass flow at the measured pressure ratio.
    Massflow,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pressure" => Ok(EvalMode::Pressure),
            "massflow" => Ok(EvalMode::Massflow),
            other => Err(format!("unknown evaluation mode '{other}'")),
        }
    }
}

/// One metric over one set of points.
///
/// `value` is the metric itself (RMSE, MAPE in percent, residual SD, or the
/// orthogonal-distance sum). `mean` and `sd` describe the per-point
/// contributions behind it: absolute errors for RMSE, percentage errors for
/// MAPE, signed residuals for residual SD, squared distances for ortho.
/// Undefined quantities are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub value: f64,
    pub mean: f64,
    pub sd: f64,
    pub n_valid: usize,
    pub n_skipped: usize,
    pub has_nonfinite: bool,
}

impl ErrorSummary {
    fn from_contributions(value: f64, contrib: &[f64], n_skipped: usize, has_nonfinite: bool) -> Self {
        let (mean, sd) = mean_sd(contrib);
        Self {
            value,
            mean,
            sd,
            n_valid: contrib.len(),
            n_skipped,
            has_nonfinite,
        }
    }
}

/// Mean and sample SD (NaN where undefined).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Median; NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<(), MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(truth, pred)?;
    if truth.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mse = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / truth.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    /// Mean absolute percentage error over the kept points.
    pub percent: f64,
    pub n_skipped: usize,
}

/// Mean absolute percentage error; truth values with `|t| <= MAPE_EPSILON`
/// are skipped rather than imputed.
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<Mape, MetricError> {
    check_pair(truth, pred)?;
    let ape = percentage_errors(truth, pred);
    if ape.is_empty() {
        return Err(MetricError::MapeUndefined(truth.len()));
    }
    Ok(Mape {
        percent: ape.iter().sum::<f64>() / ape.len() as f64,
        n_skipped: truth.len() - ape.len(),
    })
}

fn percentage_errors(truth: &[f64], pred: &[f64]) -> Vec<f64> {
    truth
        .iter()
        .zip(pred)
        .filter(|(t, _)| t.abs() > MAPE_EPSILON)
        .map(|(t, p)| 100.0 * (t - p).abs() / t.abs())
        .collect()
}

/// Sample standard deviation (n - 1 denominator).
pub fn residual_sd(residuals: &[f64]) -> Result<f64, MetricError> {
    if residuals.len() < 2 {
        return Err(MetricError::InsufficientData {
            needed: 2,
            got: residuals.len(),
        });
    }
    Ok(mean_sd(residuals).1)
}

/// All metrics for one beta against one set of measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mode: EvalMode,
    pub rmse: ErrorSummary,
    pub mape: ErrorSummary,
    pub residual: ErrorSummary,
    pub ortho: ErrorSummary,
    /// `ortho.value / ortho.n_valid`, comparable across speedlines.
    pub ortho_per_point: f64,
    pub max_abs_error: f64,
    /// Points whose coordinate fell outside the curve span and were clamped.
    pub out_of_domain: Vec<bool>,
}

impl Evaluation {
    pub fn out_of_domain_count(&self) -> usize {
        self.out_of_domain.iter().filter(|&&f| f).count()
    }

    pub fn summary(&self, kind: MetricKind) -> &ErrorSummary {
        match kind {
            MetricKind::Rmse => &self.rmse,
            MetricKind::Mape => &self.mape,
            MetricKind::ResidualSd => &self.residual,
            MetricKind::Ortho => &self.ortho,
        }
    }
}

/// Clamps `value` into the span starting at `origin`, flagging clamps.
fn clamp_to_span(value: f64, origin: f64, span: f64) -> (f64, bool) {
    let t = (value - origin) / span;
    let outside = !(-DOMAIN_TOLERANCE..=1.0 + DOMAIN_TOLERANCE).contains(&t);
    (origin + span * t.clamp(0.0, 1.0), outside)
}

/// Compares `beta` with measured points in the given mode.
///
/// Measured coordinates outside the curve span are clamped to the nearest
/// endpoint and flagged. Non-finite predictions are skipped and set
/// `has_nonfinite` instead of failing.
pub fn evaluate_prediction(
    beta: &BetaVector,
    measured: &[OperatingPoint],
    mode: EvalMode,
) -> Result<Evaluation, MetricError> {
    if measured.is_empty() {
        return Err(MetricError::Empty);
    }
    beta.validate()
        .map_err(|e| MetricError::InvalidBeta(e.to_string()))?;

    let mut truth = Vec::with_capacity(measured.len());
    let mut pred = Vec::with_capacity(measured.len());
    let mut out_of_domain = Vec::with_capacity(measured.len());
    let mut skipped = 0;
    for p in measured {
        let (t, y, flag) = match mode {
            EvalMode::Pressure => {
                let (m, flag) = clamp_to_span(p.m_dot, beta.m_zs, beta.mass_span());
                (p.pi, pressure_at(beta, m).unwrap_or(f64::NAN), flag)
            }
            EvalMode::Massflow => {
                let (pi, flag) = clamp_to_span(p.pi, beta.pi_ch, beta.pressure_span());
                (p.m_dot, massflow_at(beta, pi).unwrap_or(f64::NAN), flag)
            }
        };
        out_of_domain.push(flag);
        if t.is_finite() && y.is_finite() {
            truth.push(t);
            pred.push(y);
        } else {
            skipped += 1;
        }
    }
    let pred_nonfinite = skipped > 0;

    let residuals: Vec<f64> = truth.iter().zip(&pred).map(|(t, p)| t - p).collect();
    let abs_err: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let rmse_value = if residuals.is_empty() {
        f64::NAN
    } else {
        (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
    };
    let ape = percentage_errors(&truth, &pred);
    let mape_value = if ape.is_empty() {
        f64::NAN
    } else {
        ape.iter().sum::<f64>() / ape.len() as f64
    };
    let (_, sd) = mean_sd(&residuals);

    let proj = CurveProjector::new(beta);
    let d2_all = proj.squared_distances(measured);
    let d2: Vec<f64> = d2_all.iter().copied().filter(|d| d.is_finite()).collect();
    let ortho_skipped = d2_all.len() - d2.len();
    let ortho_value: f64 = d2.iter().sum();

    Ok(Evaluation {
        mode,
        rmse: ErrorSummary::from_contributions(rmse_value, &abs_err, skipped, pred_nonfinite),
        mape: ErrorSummary::from_contributions(
            mape_value,
            &ape,
            measured.len() - ape.len(),
            pred_nonfinite,
        ),
        residual: ErrorSummary::from_contributions(sd, &residuals, skipped, pred_nonfinite),
        ortho: ErrorSummary::from_contributions(ortho_value, &d2, ortho_skipped, ortho_skipped > 0),
        ortho_per_point: if d2.is_empty() {
            f64::NAN
        } else {
            ortho_value / d2.len() as f64
        },
        max_abs_error: abs_err.iter().copied().fold(f64::NAN, f64::max),
        out_of_domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(m_dot: f64, pi: f64) -> OperatingPoint {
        OperatingPoint { m_dot, pi }
    }

    fn unit() -> BetaVector {
        BetaVector::new(0.0, 1.0, 1.0, 0.0, 2.0).unwrap()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[1.0], &[4.0]).unwrap(), 3.0);
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch { truth: 1, pred: 2 })
        );
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[2.0, 4.0], &[2.0, 4.0]).unwrap().percent, 0.0);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap().percent, 50.0);
        let m = mape(&[1e-15, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.percent, 0.0);
        assert_eq!(m.n_skipped, 1);
        assert_eq!(mape(&[0.0, 1e-13], &[1.0, 1.0]), Err(MetricError::MapeUndefined(2)));
    }

    #[test]
    fn residual_sd_examples() {
        assert_eq!(residual_sd(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((residual_sd(&[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((residual_sd(&[-1.0, 0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            residual_sd(&[1.0]),
            Err(MetricError::InsufficientData { needed: 2, got: 1 })
        );
    }

    #[test]
    fn permutation_invariance() {
        let t = [1.0, 2.5, 3.0, 0.4];
        let p = [1.1, 2.0, 3.3, 0.5];
        let tr = [0.4, 3.0, 1.0, 2.5];
        let pr = [0.5, 3.3, 1.1, 2.0];
        assert!((rmse(&t, &p).unwrap() - rmse(&tr, &pr).unwrap()).abs() < 1e-15);
        assert!((mape(&t, &p).unwrap().percent - mape(&tr, &pr).unwrap().percent).abs() < 1e-12);
    }

    #[test]
    fn evaluation_on_curve_is_zero() {
        let b = BetaVector::new(0.1, 2.5, 0.9, 1.2, 3.0).unwrap();
        let pts = crate::model::sample_curve(&b, 15);
        for mode in [EvalMode::Pressure, EvalMode::Massflow] {
            let ev = evaluate_prediction(&b, &pts, mode).unwrap();
            assert!(ev.rmse.value < 1e-10, "{mode:?} {}", ev.rmse.value);
            assert!(ev.ortho.value < 1e-10);
            assert!(ev.mape.value < 1e-8);
            assert_eq!(ev.out_of_domain_count(), 0);
        }
    }

    #[test]
    fn evaluation_single_offset_point() {
        let ev = evaluate_prediction(&unit(), &[pt(0.6, 0.9)], EvalMode::Pressure).unwrap();
        assert!((ev.rmse.value - 0.1).abs() < 1e-12);
        assert_eq!(ev.rmse.n_valid, 1);
        assert!(ev.residual.value.is_nan());
    }

    #[test]
    fn evaluation_clamps_out_of_domain() {
        let ev = evaluate_prediction(&unit(), &[pt(1.5, 0.0), pt(0.6, 0.8)], EvalMode::Pressure).unwrap();
        assert_eq!(ev.out_of_domain, vec![true, false]);
        // clamped to choke, predicted pressure 0 matches truth 0
        assert!(ev.rmse.value < 1e-12);
        // truth 0 is skipped by MAPE
        assert_eq!(ev.mape.n_skipped, 1);
        assert_eq!(ev.mape.n_valid + ev.mape.n_skipped, 2);
    }

    #[test]
    fn evaluation_rejects_empty_and_invalid() {
        assert_eq!(evaluate_prediction(&unit(), &[], EvalMode::Pressure), Err(MetricError::Empty));
        let bad = BetaVector::from_array([1.0, 1.0, 0.0, 0.0, 2.0]);
        assert!(matches!(
            evaluate_prediction(&bad, &[pt(0.5, 0.5)], EvalMode::Pressure),
            Err(MetricError::InvalidBeta(_))
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
