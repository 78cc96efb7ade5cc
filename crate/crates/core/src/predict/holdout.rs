use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    classify, fit_beta_polynomials, predict_beta, BetaEntry, BetaTable, PredictError, PredictionConfig,
    PredictionKind, RepairFlags,
};
use crate::metrics::{evaluate_prediction, mean_sd, median, EvalMode, Evaluation, MetricKind};
use crate::model::{BetaVector, CompressorMap};
use crate::optimize::{derive_seed, fit_speedline, FitConfig, FitError, FitResult};

/// Fits every speedline of `map` in parallel. Each line gets a seed derived
/// from the base seed and its speed, so results do not depend on which
/// other lines are present.
pub fn fit_all_speedlines(map: &CompressorMap, cfg: &FitConfig) -> Vec<Result<FitResult, FitError>> {
    map.speedlines()
        .par_iter()
        .map(|line| {
            let cfg = FitConfig {
                seed: derive_seed(cfg.seed, line.speed.to_bits()),
                ..cfg.clone()
            };
            fit_speedline(line, &cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum ReportStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "FAILED")]
    Failed(String),
}

impl ReportStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ReportStatus::Ok => "OK",
            ReportStatus::Failed(_) => "FAILED",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    pub repairs: RepairFlags,
    pub out_of_domain_pressure: usize,
    pub out_of_domain_massflow: usize,
    pub effective_degree: usize,
    pub degree_reduced: bool,
    /// Remaining lines whose fit had fewer than five points.
    pub underdetermined_fits: usize,
    /// Remaining lines whose fit needed the fallback solver.
    pub fallback_fits: usize,
}

impl ReportFlags {
    /// Short tokens for tabular export, `;`-separated, empty when clean.
    pub fn tokens(&self) -> String {
        let mut out = Vec::new();
        let r = &self.repairs;
        for (set, name) in [
            (r.cur_raised, "cur_raised"),
            (r.m_zs_clamped, "m_zs_clamped"),
            (r.pi_zs_clamped, "pi_zs_clamped"),
            (r.m_ch_clamped, "m_ch_clamped"),
            (r.pi_ch_clamped, "pi_ch_clamped"),
        ] {
            if set {
                out.push(name.to_string());
            }
        }
        if self.out_of_domain_pressure > 0 {
            out.push(format!("ood_pressure={}", self.out_of_domain_pressure));
        }
        if self.out_of_domain_massflow > 0 {
            out.push(format!("ood_massflow={}", self.out_of_domain_massflow));
        }
        if self.degree_reduced {
            out.push(format!("degree_reduced={}", self.effective_degree));
        }
        if self.underdetermined_fits > 0 {
            out.push(format!("underdetermined_fits={}", self.underdetermined_fits));
        }
        if self.fallback_fits > 0 {
            out.push(format!("fallback_fits={}", self.fallback_fits));
        }
        out.join(";")
    }

    fn is_clean(&self) -> bool {
        self.repairs.count() == 0 && self.out_of_domain_pressure == 0 && self.out_of_domain_massflow == 0
    }
}

/// Outcome of predicting one held-out speedline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    /// Position of the target line in the map.
    pub index: usize,
    pub target_speed: f64,
    pub kind: PredictionKind,
    #[serde(flatten)]
    pub status: ReportStatus,
    pub predicted_beta: Option<BetaVector>,
    /// Polynomial values before repair, when they could be evaluated.
    pub raw_beta: Option<[f64; 5]>,
    pub eval_mode: EvalMode,
    pub pressure: Option<Evaluation>,
    pub massflow: Option<Evaluation>,
    pub flags: ReportFlags,
}

impl PredictionReport {
    pub fn is_ok(&self) -> bool {
        self.status == ReportStatus::Ok
    }

    /// Evaluation in the configured headline mode.
    pub fn headline(&self) -> Option<&Evaluation> {
        match self.eval_mode {
            EvalMode::Pressure => self.pressure.as_ref(),
            EvalMode::Massflow => self.massflow.as_ref(),
        }
    }

    /// Headline metric value, `None` for failed reports.
    pub fn metric(&self, kind: MetricKind) -> Option<f64> {
        self.headline().map(|e| e.summary(kind).value)
    }
}

/// Predicts the speedline at `target_speed` from all other lines of `map`.
///
/// Fit and prediction failures produce a report with failed status; only
/// unmet preconditions are errors.
pub fn holdout_predict(
    map: &CompressorMap,
    target_speed: f64,
    fit_cfg: &FitConfig,
    pred_cfg: &PredictionConfig,
) -> Result<PredictionReport, PredictError> {
    let index = map
        .speedlines()
        .iter()
        .position(|l| l.speed == target_speed)
        .ok_or(PredictError::MissingTarget(target_speed))?;
    check_preconditions(map, pred_cfg, 3)?;
    let fits = fit_all_speedlines(&without(map, index), fit_cfg);
    let mut fits = fits.into_iter();
    let all: Vec<Option<Result<FitResult, FitError>>> = (0..map.speedlines().len())
        .map(|i| if i == index { None } else { fits.next() })
        .collect();
    Ok(predict_held_out(map, index, &all, pred_cfg))
}

fn without(map: &CompressorMap, index: usize) -> CompressorMap {
    let lines = map
        .speedlines()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != index)
        .map(|(_, l)| l.clone())
        .collect();
    CompressorMap::new(map.id.clone(), map.type_label.clone(), lines).expect("subset of a valid map")
}

fn check_preconditions(map: &CompressorMap, pred_cfg: &PredictionConfig, needed: usize) -> Result<(), PredictError> {
    pred_cfg.validate().map_err(PredictError::Config)?;
    let got = map.speedlines().len();
    if got < needed {
        return Err(PredictError::InsufficientData { needed, got });
    }
    Ok(())
}

/// Shared by hold-out and LOO: `fits[i]` is the fit of line `i`, `None`
/// for the target.
fn predict_held_out(
    map: &CompressorMap,
    index: usize,
    fits: &[Option<Result<FitResult, FitError>>],
    pred_cfg: &PredictionConfig,
) -> PredictionReport {
    let lines = map.speedlines();
    let target = &lines[index];
    let remaining: Vec<f64> = lines
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != index)
        .map(|(_, l)| l.speed)
        .collect();
    let mut report = PredictionReport {
        index,
        target_speed: target.speed,
        kind: classify(target.speed, &remaining),
        status: ReportStatus::Ok,
        predicted_beta: None,
        raw_beta: None,
        eval_mode: pred_cfg.eval_mode,
        pressure: None,
        massflow: None,
        flags: ReportFlags::default(),
    };
    let fail = |mut report: PredictionReport, reason: String| {
        report.status = ReportStatus::Failed(reason);
        report.predicted_beta = None;
        report.pressure = None;
        report.massflow = None;
        report
    };

    let mut entries = Vec::with_capacity(remaining.len());
    for (line, fit) in lines.iter().zip(fits) {
        match fit {
            None => continue,
            Some(Ok(fit)) => {
                report.flags.underdetermined_fits += fit.underdetermined as usize;
                report.flags.fallback_fits += fit.used_fallback as usize;
                entries.push(BetaEntry {
                    speed: line.speed,
                    beta: fit.beta,
                    fit: Some(fit.clone()),
                });
            }
            Some(Err(e)) => {
                return fail(report, format!("fit failed for speedline at speed {}: {e}", line.speed));
            }
        }
    }

    let model = match BetaTable::new(entries).and_then(|t| fit_beta_polynomials(&t, pred_cfg)) {
        Ok(m) => m,
        Err(e) => return fail(report, e.to_string()),
    };
    report.flags.effective_degree = model.degree;
    report.flags.degree_reduced = model.degree_reduced();

    let prediction = match predict_beta(&model, target.speed, pred_cfg) {
        Ok(p) => p,
        Err(e) => {
            if let PredictError::InvalidPrediction { raw, .. } = &e {
                report.raw_beta = Some(*raw);
            }
            return fail(report, e.to_string());
        }
    };
    report.raw_beta = Some(prediction.raw);
    report.flags.repairs = prediction.repairs;
    report.predicted_beta = Some(prediction.beta);

    let eval = |mode| evaluate_prediction(&prediction.beta, target.points(), mode);
    match (eval(EvalMode::Pressure), eval(EvalMode::Massflow)) {
        (Ok(p), Ok(m)) => {
            report.flags.out_of_domain_pressure = p.out_of_domain_count();
            report.flags.out_of_domain_massflow = m.out_of_domain_count();
            report.pressure = Some(p);
            report.massflow = Some(m);
            report
        }
        (Err(e), _) | (_, Err(e)) => fail(report, format!("evaluation failed: {e}")),
    }
}

/// Mean, SD and median of one metric across reports. NaN where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub n: usize,
}

impl MetricAggregate {
    /// Aggregates the finite values, in the order given.
    pub fn from_values(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let (mean, sd) = mean_sd(&finite);
        Self {
            mean,
            sd,
            median: median(&finite),
            n: finite.len(),
        }
    }
}

/// Per-metric aggregates over a set of reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: MetricAggregate,
    pub mape: MetricAggregate,
    pub residual_sd: MetricAggregate,
    pub ortho: MetricAggregate,
}

impl MetricSet {
    fn over<'a>(reports: impl Iterator<Item = &'a PredictionReport> + Clone) -> Self {
        let agg = |kind| {
            let values: Vec<f64> = reports.clone().filter_map(|r| r.metric(kind)).collect();
            MetricAggregate::from_values(&values)
        };
        Self {
            rmse: agg(MetricKind::Rmse),
            mape: agg(MetricKind::Mape),
            residual_sd: agg(MetricKind::ResidualSd),
            ortho: agg(MetricKind::Ortho),
        }
    }

    pub fn get(&self, kind: MetricKind) -> &MetricAggregate {
        match kind {
            MetricKind::Rmse => &self.rmse,
            MetricKind::Mape => &self.mape,
            MetricKind::ResidualSd => &self.residual_sd,
            MetricKind::Ortho => &self.ortho,
        }
    }
}

/// Summary for one prediction kind.
///
/// `all` covers every successful report; `clean` drops those that needed a
/// constraint repair or had out-of-domain points. Failed reports carry no
/// metrics and are only counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: PredictionKind,
    pub total: usize,
    pub failed: usize,
    pub clean: usize,
    pub all_metrics: MetricSet,
    pub clean_metrics: MetricSet,
}

impl KindSummary {
    pub fn from_reports(kind: PredictionKind, reports: &[PredictionReport]) -> Self {
        let of_kind = reports.iter().filter(move |r| r.kind == kind);
        let ok = of_kind.clone().filter(|r| r.is_ok());
        let clean = ok.clone().filter(|r| r.flags.is_clean());
        Self {
            kind,
            total: of_kind.clone().count(),
            failed: of_kind.filter(|r| !r.is_ok()).count(),
            clean: clean.clone().count(),
            all_metrics: MetricSet::over(ok),
            clean_metrics: MetricSet::over(clean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// One report per speedline, in map order.
    pub reports: Vec<PredictionReport>,
    /// Interpolation first, then extrapolation.
    pub summary: [KindSummary; 2],
    /// Fit of every speedline, in map order.
    #[serde(skip)]
    pub fits: Vec<Result<FitResult, FitError>>,
}

/// Leave-one-out cross-validation over every speedline of `map`.
///
/// Each line is fitted once; the hold-out for line `i` uses the fits of all
/// other lines, which are identical to what [`holdout_predict`] would compute.
pub fn loo_crossval(
    map: &CompressorMap,
    fit_cfg: &FitConfig,
    pred_cfg: &PredictionConfig,
) -> Result<CrossValidation, PredictError> {
    check_preconditions(map, pred_cfg, 3)?;
    let fits = fit_all_speedlines(map, fit_cfg);
    let reports: Vec<PredictionReport> = (0..fits.len())
        .into_par_iter()
        .map(|index| {
            let view: Vec<Option<Result<FitResult, FitError>>> = fits
                .iter()
                .enumerate()
                .map(|(i, f)| (i != index).then(|| f.clone()))
                .collect();
            predict_held_out(map, index, &view, pred_cfg)
        })
        .collect();
    let summary = [
        KindSummary::from_reports(PredictionKind::Interpolation, &reports),
        KindSummary::from_reports(PredictionKind::Extrapolation, &reports),
    ];
    Ok(CrossValidation { reports, summary, fits })
}
