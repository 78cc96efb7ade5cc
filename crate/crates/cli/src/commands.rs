use std::path::Path;

use anyhow::{bail, Context, Result};
use cpmfit_core::dataio::{
    export_curve_svg, export_report, export_summary, format_number, group_speedlines, normalize_map, parse_map_csv, ReportFormat,
    ScaleRecord,
};
use cpmfit_core::metrics::{evaluate_prediction, mean_sd, median};
use cpmfit_core::model::{sample_curve, BetaVector, CompressorMap};
use cpmfit_core::optimize::{derive_seed, fit_speedline, FitConfig, FitError, FitResult, InitStrategy};
use cpmfit_core::predict::{
    classify, fit_all_speedlines, fit_beta_polynomials, holdout_predict, loo_crossval, predict_beta, BetaTable,
    PredictionKind, PredictionReport, RepairFlags,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::Artifacts;

pub const EVOLUTION_SAMPLES: usize = 100;
pub const CURVE_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

impl Outcome {
    fn from_failures(failed: usize) -> Self {
        if failed == 0 {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }
}

pub struct LoadedMap {
    pub map: CompressorMap,
    pub scale: Option<ScaleRecord>,
}

pub fn load_map(path: &Path, cfg: &RunConfig) -> Result<LoadedMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = parse_map_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    let map = group_speedlines(&records, cfg.speed_tolerance).with_context(|| format!("grouping {}", path.display()))?;
    let id = path.file_stem().map_or("map".into(), |s| s.to_string_lossy().into_owned());
    let map = CompressorMap::new(id, map.type_label.clone(), map.speedlines().to_vec())?;
    if !cfg.normalize {
        return Ok(LoadedMap { map, scale: None });
    }
    let (map, scale) = normalize_map(&map).with_context(|| format!("normalizing {}", path.display()))?;
    Ok(LoadedMap { map, scale: Some(scale) })
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

fn beta_cells(beta: Option<&BetaVector>) -> Vec<String> {
    match beta {
        Some(b) => b.to_array().iter().map(|&x| format_number(x)).collect(),
        None => vec![String::new(); 5],
    }
}

const BETA_COLUMNS: [&str; 5] = ["m_zs", "pi_zs", "m_ch", "pi_ch", "cur"];

fn beta_table(map: &CompressorMap, fits: &[Result<FitResult, FitError>]) -> Option<BetaTable> {
    let pairs = map
        .speedlines()
        .iter()
        .zip(fits)
        .filter_map(|(l, f)| f.as_ref().ok().map(|f| (l.speed, f.beta)));
    BetaTable::from_betas(pairs).ok().filter(|t| t.len() >= 2)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(Artifacts, Outcome)> {
    let input = cfg.input()?;
    let LoadedMap { map, scale } = load_map(input, cfg)?;
    let fits = fit_all_speedlines(&map, &cfg.fit);
    let failed = fits.iter().filter(|f| f.is_err()).count();

    let lines: Vec<_> = map
        .speedlines()
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (line, fit))| {
            json!({
                "index": i,
                "speed": line.speed,
                "points": line.len(),
                "status": if fit.is_ok() { "OK" } else { "FAILED" },
                "result": fit.as_ref().ok(),
                "error": fit.as_ref().err().map(|e| e.to_string()),
            })
        })
        .collect();
    let results = json!({
        "input": input.display().to_string(),
        "scale": scale,
        "config": cfg.fit,
        "failed": failed,
        "speedlines": lines,
    });

    let mut header = vec!["index", "speed", "status", "objective"];
    header.extend(BETA_COLUMNS);
    header.extend(["used_fallback", "underdetermined", "error"]);
    let rows = map
        .speedlines()
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (line, fit))| {
            let ok = fit.as_ref().ok();
            let mut row = vec![
                i.to_string(),
                format_number(line.speed),
                if ok.is_some() { "OK" } else { "FAILED" }.to_string(),
                opt(ok.map(|f| f.objective)),
            ];
            row.extend(beta_cells(ok.map(|f| &f.beta)));
            row.push(ok.map_or(String::new(), |f| f.used_fallback.to_string()));
            row.push(ok.map_or(String::new(), |f| f.underdetermined.to_string()));
            row.push(fit.as_ref().err().map_or(String::new(), |e| e.to_string()));
            row
        })
        .collect();

    let fitted: Vec<(f64, BetaVector)> = map
        .speedlines()
        .iter()
        .zip(&fits)
        .filter_map(|(l, f)| f.as_ref().ok().map(|f| (l.speed, f.beta)))
        .collect();

    let mut out = Artifacts::default();
    out.add("fit_results.json", json_text(&results));
    out.add("beta_table.csv", csv_text(&header, rows));
    out.add("fit_curves.svg", export_curve_svg(map.speedlines(), &fitted));
    Ok((out, Outcome::from_failures(failed)))
}

fn svg_for_kind(map: &CompressorMap, reports: &[PredictionReport], kind: PredictionKind) -> String {
    let predicted: Vec<(f64, BetaVector)> = reports
        .iter()
        .filter(|r| r.kind == kind)
        .filter_map(|r| r.predicted_beta.map(|b| (r.target_speed, b)))
        .collect();
    export_curve_svg(map.speedlines(), &predicted)
}

pub fn cmd_crossval(cfg: &RunConfig) -> Result<(Artifacts, Outcome)> {
    let input = cfg.input()?;
    let LoadedMap { map, scale } = load_map(input, cfg)?;
    let cv = loo_crossval(&map, &cfg.fit, &cfg.predict).context("cross-validation")?;
    let failed = cv.reports.iter().filter(|r| !r.is_ok()).count();

    let mut evolution = Vec::new();
    for (line, fit) in map.speedlines().iter().zip(&cv.fits) {
        if let Ok(fit) = fit {
            let mut row = vec!["fit".to_string(), format_number(line.speed)];
            row.extend(beta_cells(Some(&fit.beta)));
            evolution.push(row);
        }
    }
    if let Some(table) = beta_table(&map, &cv.fits) {
        let model = fit_beta_polynomials(&table, &cfg.predict)?;
        let speeds = table.speeds();
        let (lo, hi) = (speeds[0], speeds[speeds.len() - 1]);
        for k in 0..EVOLUTION_SAMPLES {
            let s = lo + (hi - lo) * k as f64 / (EVOLUTION_SAMPLES - 1) as f64;
            let mut row = vec!["polynomial".to_string(), format_number(s)];
            row.extend(model.evaluate(s).iter().map(|&x| format_number(x)));
            evolution.push(row);
        }
    }
    let mut header = vec!["source", "speed"];
    header.extend(BETA_COLUMNS);

    let details = json!({
        "input": input.display().to_string(),
        "scale": scale,
        "fit_config": cfg.fit,
        "prediction_config": cfg.predict,
        "reports": cv.reports,
        "summary": cv.summary,
    });

    let mut out = Artifacts::default();
    out.add("crossval_report.csv", export_report(&cv.reports, ReportFormat::Csv));
    out.add("crossval_report.json", export_report(&cv.reports, ReportFormat::Json));
    out.add("crossval_summary.csv", export_summary(&cv.summary, ReportFormat::Csv));
    out.add("crossval_summary.json", export_summary(&cv.summary, ReportFormat::Json));
    out.add("crossval_details.json", json_text(&details));
    out.add("beta_evolution.csv", csv_text(&header, evolution));
    out.add(
        "crossval_interpolation.svg",
        svg_for_kind(&map, &cv.reports, PredictionKind::Interpolation),
    );
    out.add(
        "crossval_extrapolation.svg",
        svg_for_kind(&map, &cv.reports, PredictionKind::Extrapolation),
    );
    Ok((out, Outcome::from_failures(failed)))
}

#[derive(Serialize)]
struct PurePrediction {
    target_speed: f64,
    no_ground_truth: bool,
    kind: PredictionKind,
    status: &'static str,
    error: Option<String>,
    predicted_beta: Option<BetaVector>,
    raw_beta: Option<[f64; 5]>,
    repairs: RepairFlags,
    effective_degree: Option<usize>,
    degree_reduced: bool,
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<(Artifacts, Outcome)> {
    let input = cfg.input()?;
    let Some(target) = cfg.target else {
        bail!("no target speed given (--target or `target` in the config file)");
    };
    let LoadedMap { map, scale } = load_map(input, cfg)?;
    let mut out = Artifacts::default();

    if let Some(index) = map.find_speed(target, cfg.speed_tolerance) {
        let line = &map.speedlines()[index];
        let report = holdout_predict(&map, line.speed, &cfg.fit, &cfg.predict).context("hold-out prediction")?;
        let predicted: Vec<(f64, BetaVector)> = report.predicted_beta.map(|b| (line.speed, b)).into_iter().collect();
        let outcome = Outcome::from_failures(!report.is_ok() as usize);
        out.add(
            "prediction.json",
            json_text(&json!({
                "mode": "holdout",
                "no_ground_truth": false,
                "scale": scale,
                "report": report,
            })),
        );
        out.add("prediction_report.csv", export_report(&[report], ReportFormat::Csv));
        out.add("prediction.svg", export_curve_svg(std::slice::from_ref(line), &predicted));
        return Ok((out, outcome));
    }

    if map.speedlines().len() < 2 {
        bail!("pure prediction needs at least 2 speedlines, got {}", map.speedlines().len());
    }
    let fits = fit_all_speedlines(&map, &cfg.fit);
    let mut result = PurePrediction {
        target_speed: target,
        no_ground_truth: true,
        kind: classify(target, &map.speeds()),
        status: "FAILED",
        error: None,
        predicted_beta: None,
        raw_beta: None,
        repairs: RepairFlags::default(),
        effective_degree: None,
        degree_reduced: false,
    };
    if let Some((line, Err(e))) = map.speedlines().iter().zip(&fits).find(|(_, f)| f.is_err()) {
        result.error = Some(format!("fit failed for speedline at speed {}: {e}", line.speed));
    } else {
        let table = beta_table(&map, &fits).expect("all fits succeeded");
        let model = fit_beta_polynomials(&table, &cfg.predict)?;
        result.effective_degree = Some(model.degree);
        result.degree_reduced = model.degree_reduced();
        match predict_beta(&model, target, &cfg.predict) {
            Ok(p) => {
                result.status = "OK";
                result.predicted_beta = Some(p.beta);
                result.raw_beta = Some(p.raw);
                result.repairs = p.repairs;
            }
            Err(e) => {
                if let cpmfit_core::predict::PredictError::InvalidPrediction { raw, .. } = &e {
                    result.raw_beta = Some(*raw);
                }
                result.error = Some(e.to_string());
            }
        }
    }

    let outcome = Outcome::from_failures((result.status != "OK") as usize);
    let mut curve_rows = Vec::new();
    let mut predicted = Vec::new();
    if let Some(beta) = result.predicted_beta {
        curve_rows = sample_curve(&beta, CURVE_SAMPLES)
            .iter()
            .map(|p| vec![format_number(p.m_dot), format_number(p.pi)])
            .collect();
        predicted.push((target, beta));
    }
    out.add(
        "prediction.json",
        json_text(&json!({
            "mode": "pure",
            "no_ground_truth": true,
            "scale": scale,
            "prediction": result,
        })),
    );
    out.add("prediction_curve.csv", csv_text(&["m_dot", "pi"], curve_rows));
    out.add("prediction.svg", export_curve_svg(map.speedlines(), &predicted));
    Ok((out, outcome))
}

#[derive(Debug, Clone, Serialize)]
struct BenchRun {
    strategy: &'static str,
    solver: &'static str,
    speed: f64,
    repeat: usize,
    seed: u64,
    ok: bool,
    objective: Option<f64>,
    rmse: Option<f64>,
    max_error: Option<f64>,
    ortho: Option<f64>,
    error: Option<String>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const STRATEGIES: [InitStrategy; 3] = [InitStrategy::None, InitStrategy::Pso, InitStrategy::De];

pub fn cmd_bench(cfg: &RunConfig) -> Result<(Artifacts, Outcome)> {
    let input = cfg.input()?;
    let LoadedMap { map, scale } = load_map(input, cfg)?;
    let repeats = cfg.repeats;
    let solver = cfg.fit.local_solver;

    let jobs: Vec<(InitStrategy, usize, usize)> = STRATEGIES
        .iter()
        .flat_map(|&s| (0..map.speedlines().len()).flat_map(move |i| (0..repeats).map(move |r| (s, i, r))))
        .collect();
    let runs: Vec<BenchRun> = jobs
        .par_iter()
        .map(|&(strategy, i, r)| {
            let line = &map.speedlines()[i];
            let seed = derive_seed(derive_seed(cfg.fit.seed, line.speed.to_bits()), r as u64);
            let fit_cfg = FitConfig {
                init_strategy: strategy,
                seed,
                ..cfg.fit.clone()
            };
            let mut run = BenchRun {
                strategy: strategy.name(),
                solver: solver.name(),
                speed: line.speed,
                repeat: r,
                seed,
                ok: false,
                objective: None,
                rmse: None,
                max_error: None,
                ortho: None,
                error: None,
            };
            match fit_speedline(line, &fit_cfg)
                .map_err(|e| e.to_string())
                .and_then(|f| {
                    evaluate_prediction(&f.beta, line.points(), cfg.fit.mode)
                        .map(|e| (f, e))
                        .map_err(|e| e.to_string())
                }) {
                Ok((fit, eval)) => {
                    run.ok = true;
                    run.objective = Some(fit.objective);
                    run.rmse = Some(eval.rmse.value);
                    run.max_error = Some(eval.max_abs_error);
                    run.ortho = Some(eval.ortho.value);
                }
                Err(e) => run.error = Some(e),
            }
            run
        })
        .collect();
    let failed = runs.iter().filter(|r| !r.ok).count();

    let run_rows = runs
        .iter()
        .map(|r| {
            vec![
                r.strategy.to_string(),
                r.solver.to_string(),
                format_number(r.speed),
                r.repeat.to_string(),
                r.seed.to_string(),
                if r.ok { "OK" } else { "FAILED" }.to_string(),
                opt(r.objective),
                opt(r.rmse),
                opt(r.max_error),
                opt(r.ortho),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();

    let metrics: [(&str, fn(&BenchRun) -> Option<f64>); 4] = [
        ("rmse", |r| r.rmse),
        ("max_error", |r| r.max_error),
        ("ortho", |r| r.ortho),
        ("objective", |r| r.objective),
    ];
    let mut summary_rows = Vec::new();
    let mut summary_json = Vec::new();
    for strategy in STRATEGIES {
        for (metric, get) in metrics {
            let mut v: Vec<f64> = runs
                .iter()
                .filter(|r| r.strategy == strategy.name())
                .filter_map(get)
                .filter(|x| x.is_finite())
                .collect();
            v.sort_by(f64::total_cmp);
            let (mean, _) = mean_sd(&v);
            let stats = [
                quantile(&v, 0.0),
                quantile(&v, 0.25),
                median(&v),
                quantile(&v, 0.75),
                quantile(&v, 1.0),
                mean,
            ];
            let mut row = vec![strategy.name().to_string(), solver.name().to_string(), metric.to_string(), v.len().to_string()];
            row.extend(stats.iter().map(|&x| format_number(x)));
            summary_rows.push(row);
            summary_json.push(json!({
                "strategy": strategy.name(),
                "solver": solver.name(),
                "metric": metric,
                "n": v.len(),
                "min": stats[0], "q1": stats[1], "median": stats[2], "q3": stats[3], "max": stats[4], "mean": stats[5],
            }));
        }
    }

    let mut stability_rows = Vec::new();
    for strategy in STRATEGIES {
        for line in map.speedlines() {
            let v: Vec<f64> = runs
                .iter()
                .filter(|r| r.strategy == strategy.name() && r.speed == line.speed)
                .filter_map(|r| r.objective)
                .collect();
            let (mean, sd) = mean_sd(&v);
            let mut row = vec![
                strategy.name().to_string(),
                solver.name().to_string(),
                format_number(line.speed),
                v.len().to_string(),
                if v.is_empty() { String::new() } else { format_number(mean) },
            ];
            if v.len() >= 2 {
                row.extend([format_number(sd), String::new()]);
            } else {
                row.extend([String::new(), "sd_undefined".to_string()]);
            }
            stability_rows.push(row);
        }
    }

    let mut out = Artifacts::default();
    out.add(
        "bench_runs.csv",
        csv_text(
            &[
                "strategy", "solver", "speed", "repeat", "seed", "status", "objective", "rmse", "max_error", "ortho",
                "error",
            ],
            run_rows,
        ),
    );
    out.add(
        "bench_summary.csv",
        csv_text(
            &["strategy", "solver", "metric", "n", "min", "q1", "median", "q3", "max", "mean"],
            summary_rows,
        ),
    );
    out.add(
        "bench_stability.csv",
        csv_text(
            &["strategy", "solver", "speed", "n", "objective_mean", "objective_sd", "flags"],
            stability_rows,
        ),
    );
    out.add(
        "bench.json",
        json_text(&json!({
            "input": input.display().to_string(),
            "scale": scale,
            "repeats": repeats,
            "sd_defined": repeats >= 2,
            "config": cfg.fit,
            "summary": summary_json,
            "runs": runs,
        })),
    );
    Ok((out, Outcome::from_failures(failed)))
}
