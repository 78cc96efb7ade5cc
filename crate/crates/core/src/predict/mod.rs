//! Beta-vector regression over speed and hold-out prediction of unseen
//! speedlines.

mod holdout;

pub use holdout::{
    fit_all_speedlines, holdout_predict, loo_crossval, CrossValidation, KindSummary, MetricAggregate, MetricSet,
    PredictionReport, ReportFlags, ReportStatus,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalMode;
use crate::model::BetaVector;
use crate::optimize::{FitError, FitResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("need at least {needed} entries, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("table speeds must be strictly increasing and finite")]
    UnsortedSpeeds,
    #[error("invalid prediction at speed {speed}: {reason} (raw beta {raw:?})")]
    InvalidPrediction { speed: f64, reason: String, raw: [f64; 5] },
    #[error("no speedline at speed {0}")]
    MissingTarget(f64),
    #[error("fit failed for speedline at speed {speed}: {source}")]
    Fit {
        speed: f64,
        #[source]
        source: FitError,
    },
    #[error("invalid prediction configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionConfig {
    pub degree: usize,
    pub normalize_speed: bool,
    /// Predicted curvature is raised to at least this value.
    pub enforce_cur_min: f64,
    /// Clamp predicted surge/choke coordinates to be non-negative.
    pub enforce_nonneg: bool,
    pub eval_mode: EvalMode,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            normalize_speed: true,
            enforce_cur_min: 2.0,
            enforce_nonneg: true,
            eval_mode: EvalMode::Pressure,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.degree < 1 {
            return Err("degree must be at least 1".into());
        }
        if !self.enforce_cur_min.is_finite() {
            return Err("enforce_cur_min must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PredictionKind {
    Interpolation,
    Extrapolation,
}

impl PredictionKind {
    pub fn label(self) -> &'static str {
        match self {
            PredictionKind::Interpolation => "INTERPOLATION",
            PredictionKind::Extrapolation => "EXTRAPOLATION",
        }
    }
}

/// Interpolation iff `target` lies within `[min, max]` of `remaining`.
pub fn classify(target: f64, remaining: &[f64]) -> PredictionKind {
    let (lo, hi) = remaining
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if target >= lo && target <= hi {
        PredictionKind::Interpolation
    } else {
        PredictionKind::Extrapolation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEntry {
    pub speed: f64,
    pub beta: BetaVector,
    pub fit: Option<FitResult>,
}

/// Fitted betas keyed by strictly increasing speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTable {
    entries: Vec<BetaEntry>,
}

impl BetaTable {
    pub fn new(entries: Vec<BetaEntry>) -> Result<Self, PredictError> {
        if entries.iter().any(|e| !e.speed.is_finite())
            || entries.windows(2).any(|w| w[1].speed <= w[0].speed)
        {
            return Err(PredictError::UnsortedSpeeds);
        }
        Ok(Self { entries })
    }

    pub fn from_betas(pairs: impl IntoIterator<Item = (f64, BetaVector)>) -> Result<Self, PredictError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(speed, beta)| BetaEntry { speed, beta, fit: None })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[BetaEntry] {
        &self.entries
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.speed).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Affine map from speed to the regression variable `x = (speed - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedScaling {
    pub offset: f64,
    pub scale: f64,
}

impl SpeedScaling {
    pub const IDENTITY: Self = Self { offset: 0.0, scale: 1.0 };

    pub fn apply(&self, speed: f64) -> f64 {
        (speed - self.offset) / self.scale
    }

    pub fn invert(&self, x: f64) -> f64 {
        x * self.scale + self.offset
    }
}

/// One least-squares polynomial per beta component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyModel {
    /// Ascending-power coefficients in the scaled speed variable, in beta order.
    pub coeffs: [Vec<f64>; 5],
    pub scaling: SpeedScaling,
    pub degree: usize,
    pub requested_degree: usize,
    pub n_entries: usize,
}

impl PolyModel {
    pub fn degree_reduced(&self) -> bool {
        self.degree < self.requested_degree
    }

    /// Raw polynomial values at `speed`, before any constraint repair.
    pub fn evaluate(&self, speed: f64) -> [f64; 5] {
        let x = self.scaling.apply(speed);
        std::array::from_fn(|k| self.coeffs[k].iter().rev().fold(0.0, |acc, &c| acc * x + c))
    }
}

/// Least-squares polynomial fit of each beta component over speed.
///
/// The degree drops to `entries - 1` when the table is too short. Solved by
/// Householder QR on the column-equilibrated Vandermonde matrix.
pub fn fit_beta_polynomials(table: &BetaTable, cfg: &PredictionConfig) -> Result<PolyModel, PredictError> {
    cfg.validate().map_err(PredictError::Config)?;
    let n = table.len();
    if n < 2 {
        return Err(PredictError::InsufficientData { needed: 2, got: n });
    }
    let degree = cfg.degree.min(n - 1);
    let speeds = table.speeds();
    let scaling = if cfg.normalize_speed {
        let lo = speeds[0];
        let hi = speeds[n - 1];
        SpeedScaling { offset: lo, scale: hi - lo }
    } else {
        SpeedScaling::IDENTITY
    };
    let xs: Vec<f64> = speeds.iter().map(|&s| scaling.apply(s)).collect();
    let p = degree + 1;
    let mut vander = DMatrix::from_fn(n, p, |i, j| xs[i].powi(j as i32));
    let col_norms: Vec<f64> = (0..p).map(|j| vander.column(j).norm()).collect();
    for (j, &norm) in col_norms.iter().enumerate() {
        vander.column_mut(j).scale_mut(1.0 / norm);
    }
    let qr = vander.qr();
    let q = qr.q();
    let r = qr.r();

    let coeffs = std::array::from_fn(|k| {
        let y = DVector::from_iterator(n, table.entries().iter().map(|e| e.beta.to_array()[k]));
        let rhs = q.transpose() * y;
        let sol = r
            .solve_upper_triangular(&rhs)
            .unwrap_or_else(|| DVector::from_element(p, f64::NAN));
        sol.iter().zip(&col_norms).map(|(c, norm)| c / norm).collect()
    });

    Ok(PolyModel {
        coeffs,
        scaling,
        degree,
        requested_degree: cfg.degree,
        n_entries: n,
    })
}

/// Which constraint repairs were applied to a predicted beta.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairFlags {
    pub cur_raised: bool,
    pub m_zs_clamped: bool,
    pub pi_zs_clamped: bool,
    pub m_ch_clamped: bool,
    pub pi_ch_clamped: bool,
}

impl RepairFlags {
    pub fn count(&self) -> usize {
        [
            self.cur_raised,
            self.m_zs_clamped,
            self.pi_zs_clamped,
            self.m_ch_clamped,
            self.pi_ch_clamped,
        ]
        .iter()
        .filter(|&&f| f)
        .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrediction {
    pub beta: BetaVector,
    pub raw: [f64; 5],
    pub repairs: RepairFlags,
}

/// Evaluates the polynomials at `speed` and applies the curvature floor and
/// non-negativity clamps. Orderings broken after repair are reported as
/// [`PredictError::InvalidPrediction`], never repaired.
pub fn predict_beta(model: &PolyModel, speed: f64, cfg: &PredictionConfig) -> Result<BetaPrediction, PredictError> {
    let raw = model.evaluate(speed);
    let invalid = |reason: String| PredictError::InvalidPrediction { speed, reason, raw };
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite polynomial value".into()));
    }
    let mut x = raw;
    let mut repairs = RepairFlags::default();
    if x[4] < cfg.enforce_cur_min {
        x[4] = cfg.enforce_cur_min;
        repairs.cur_raised = true;
    }
    if cfg.enforce_nonneg {
        let flags = [
            &mut repairs.m_zs_clamped,
            &mut repairs.pi_zs_clamped,
            &mut repairs.m_ch_clamped,
            &mut repairs.pi_ch_clamped,
        ];
        for (value, flag) in x.iter_mut().zip(flags) {
            if *value < 0.0 {
                *value = 0.0;
                *flag = true;
            }
        }
    }
    let beta = BetaVector::from_array(x);
    beta.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(BetaPrediction { beta, raw, repairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn beta(m_zs: f64, pi_zs: f64, m_ch: f64, pi_ch: f64, cur: f64) -> BetaVector {
        BetaVector::from_array([m_zs, pi_zs, m_ch, pi_ch, cur])
    }

    fn linear_table(speeds: &[f64]) -> BetaTable {
        BetaTable::from_betas(
            speeds
                .iter()
                .map(|&s| (s, beta(0.1 + 0.2 * s, 2.0 + 0.5 * s, 1.0 + 0.3 * s, 0.5, 3.0))),
        )
        .unwrap()
    }

    #[test]
    fn degree_four_through_five_linear_entries() {
        let table = linear_table(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let model = fit_beta_polynomials(&table, &PredictionConfig::default()).unwrap();
        assert_eq!(model.degree, 4);
        for e in table.entries() {
            let got = model.evaluate(e.speed);
            assert!((got[0] - e.beta.m_zs).abs() < 1e-9);
        }
        let at = model.evaluate(0.6);
        assert!((at[0] - (0.1 + 0.2 * 0.6)).abs() < 1e-9);
    }

    #[test]
    fn degree_reduces_with_few_entries() {
        let table = BetaTable::from_betas([
            (1.0, beta(0.1, 2.0, 1.0, 0.5, 3.0)),
            (2.0, beta(0.3, 2.5, 1.2, 0.6, 2.5)),
            (3.0, beta(0.2, 2.7, 1.5, 0.4, 4.0)),
        ])
        .unwrap();
        let model = fit_beta_polynomials(&table, &PredictionConfig::default()).unwrap();
        assert_eq!(model.degree, 2);
        assert!(model.degree_reduced());
        for e in table.entries() {
            let got = model.evaluate(e.speed);
            for (g, w) in got.iter().zip(e.beta.to_array()) {
                assert!((g - w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_betas_have_flat_polynomials() {
        let b = beta(0.1, 2.0, 1.0, 0.5, 3.0);
        let table = BetaTable::from_betas((0..6).map(|i| (300.0 + 50.0 * i as f64, b))).unwrap();
        let model = fit_beta_polynomials(&table, &PredictionConfig::default()).unwrap();
        for (k, c) in model.coeffs.iter().enumerate() {
            assert!((c[0] - b.to_array()[k]).abs() < 1e-9);
            assert!(c[1..].iter().all(|v| v.abs() < 1e-9), "{c:?}");
        }
    }

    #[test]
    fn too_few_entries() {
        let table = linear_table(&[1.0]);
        assert_eq!(
            fit_beta_polynomials(&table, &PredictionConfig::default()),
            Err(PredictError::InsufficientData { needed: 2, got: 1 })
        );
    }

    #[test]
    fn table_requires_increasing_speeds() {
        let b = beta(0.1, 2.0, 1.0, 0.5, 3.0);
        assert_eq!(BetaTable::from_betas([(2.0, b), (1.0, b)]), Err(PredictError::UnsortedSpeeds));
    }

    #[test]
    fn prediction_at_node_reproduces_entry() {
        let table = linear_table(&[300.0, 350.0, 400.0, 450.0, 500.0]);
        let cfg = PredictionConfig::default();
        let model = fit_beta_polynomials(&table, &cfg).unwrap();
        let pred = predict_beta(&model, 400.0, &cfg).unwrap();
        assert_eq!(pred.repairs.count(), 0);
        for (g, w) in pred.beta.to_array().iter().zip(table.entries()[2].beta.to_array()) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn curvature_floor_is_applied() {
        let table = BetaTable::from_betas([
            (0.0, beta(0.1, 2.0, 1.0, 0.5, 1.3)),
            (1.0, beta(0.1, 2.0, 1.0, 0.5, 1.3)),
        ])
        .unwrap();
        let cfg = PredictionConfig::default();
        let model = fit_beta_polynomials(&table, &cfg).unwrap();
        let pred = predict_beta(&model, 0.5, &cfg).unwrap();
        assert_eq!(pred.beta.cur, 2.0);
        assert!(pred.repairs.cur_raised);
        assert!((pred.raw[4] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn negative_values_are_clamped() {
        let table = BetaTable::from_betas([
            (0.0, beta(0.2, 2.0, 1.0, 0.1, 3.0)),
            (1.0, beta(0.1, 2.0, 1.0, 0.05, 3.0)),
        ])
        .unwrap();
        let cfg = PredictionConfig::default();
        let model = fit_beta_polynomials(&table, &cfg).unwrap();
        let pred = predict_beta(&model, 4.0, &cfg).unwrap();
        assert!(pred.repairs.m_zs_clamped && pred.repairs.pi_ch_clamped);
        assert_eq!(pred.beta.m_zs, 0.0);
        assert_eq!(pred.beta.pi_ch, 0.0);
    }

    #[test]
    fn ordering_violation_is_an_error() {
        let table = BetaTable::from_betas([
            (0.0, beta(0.1, 2.0, 1.0, 0.5, 3.0)),
            (1.0, beta(0.5, 2.0, 0.8, 0.5, 3.0)),
        ])
        .unwrap();
        let cfg = PredictionConfig::default();
        let model = fit_beta_polynomials(&table, &cfg).unwrap();
        match predict_beta(&model, 5.0, &cfg) {
            Err(PredictError::InvalidPrediction { raw, .. }) => assert!(raw[2] < raw[0]),
            other => panic!("expected invalid prediction, got {other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        let remaining = [300.0, 350.0, 400.0, 450.0, 500.0, 525.0, 550.0];
        assert_eq!(classify(475.0, &remaining), PredictionKind::Interpolation);
        let remaining = [300.0, 350.0, 400.0, 450.0, 475.0, 500.0, 525.0, 550.0];
        assert_eq!(classify(250.0, &remaining), PredictionKind::Extrapolation);
        assert_eq!(classify(300.0, &remaining), PredictionKind::Interpolation);
        assert_eq!(classify(550.5, &remaining), PredictionKind::Extrapolation);
    }

    proptest! {
        #[test]
        fn classification_ignores_order(mut speeds in prop::collection::vec(0.0..1000.0f64, 1..10), target in 0.0..1000.0f64) {
            let a = classify(target, &speeds);
            speeds.reverse();
            prop_assert_eq!(a, classify(target, &speeds));
            speeds.sort_by(f64::total_cmp);
            prop_assert_eq!(a, classify(target, &speeds));
        }

        #[test]
        fn normalization_does_not_change_predictions(
            lo in 100.0..500.0f64,
            width in 200.0..500.0f64,
            n in 5usize..9,
            seed in any::<u64>(),
            at in 0.0..1.0f64,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let speeds: Vec<f64> = (0..n).map(|i| lo + width * i as f64 / (n - 1) as f64).collect();
            let table = BetaTable::from_betas(speeds.iter().map(|&s| {
                let x: [f64; 5] = std::array::from_fn(|_| rng.gen_range(0.5..1.5));
                (s, BetaVector::from_array(x))
            })).unwrap();
            let on = PredictionConfig { degree: 3, ..PredictionConfig::default() };
            let off = PredictionConfig { normalize_speed: false, ..on.clone() };
            let a = fit_beta_polynomials(&table, &on).unwrap();
            let b = fit_beta_polynomials(&table, &off).unwrap();
            let s = lo + width * at;
            for (x, y) in a.evaluate(s).iter().zip(b.evaluate(s)) {
                prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
            }
        }
    }
}
