use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    differential_evolution, nelder_mead, objective, particle_swarm, projected_gradient, Bounds,
    FitConfig, InitStrategy, LocalSolver, OptimOutcome, Params, MIN_CUR_BOUND, PENALTY,
};
use crate::metrics::MetricKind;
use crate::model::{BetaVector, OperatingPoint, Speedline};

/// Widest curvature exponent searched.
pub const MAX_CUR_BOUND: f64 = 20.0;
/// Fraction of the data span the endpoints may extend beyond the data.
const ENDPOINT_MARGIN: f64 = 0.5;
/// Fewer points than this leave the five parameters under-determined.
pub const WELL_DETERMINED_POINTS: usize = 5;
pub const MIN_POINTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("degenerate {axis} span: all points share the same value")]
    DegenerateSpan { axis: &'static str },
    #[error("need at least {MIN_POINTS} points to fit a speedline, got {0}")]
    TooFewPoints(usize),
    #[error("invalid fit configuration: {0}")]
    Config(String),
    #[error("fit failed validation ({reason}); best objective {objective:e}")]
    FitFailure {
        reason: String,
        best: Params,
        objective: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: BetaVector,
    pub objective: f64,
    pub metric: MetricKind,
    /// Best-so-far objective after each stage.
    pub stage_trace: Vec<StageRecord>,
    pub used_fallback: bool,
    pub seed: u64,
    /// Fewer than five points: the fit passes through the data but is not unique.
    pub underdetermined: bool,
    pub bounds: Bounds,
}

/// Search box derived from the data extent.
///
/// The surge point may sit up to half a span beyond the low-flow /
/// high-pressure data corner, the choke point likewise beyond the
/// high-flow / low-pressure corner; curvature ranges over `[1.05, 20]`.
pub fn default_bounds(points: &[OperatingPoint]) -> Result<Bounds, FitError> {
    if points.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let (m_min, m_max) = extent(points.iter().map(|p| p.m_dot));
    let (p_min, p_max) = extent(points.iter().map(|p| p.pi));
    let dm = m_max - m_min;
    let dp = p_max - p_min;
    if !(dm > 0.0) {
        return Err(FitError::DegenerateSpan { axis: "mass flow" });
    }
    if !(dp > 0.0) {
        return Err(FitError::DegenerateSpan { axis: "pressure ratio" });
    }
    Ok(Bounds {
        lower: [
            m_min - ENDPOINT_MARGIN * dm,
            p_max,
            m_max,
            p_min - ENDPOINT_MARGIN * dp,
            MIN_CUR_BOUND,
        ],
        upper: [
            m_min,
            p_max + ENDPOINT_MARGIN * dp,
            m_max + ENDPOINT_MARGIN * dm,
            p_min,
            MAX_CUR_BOUND,
        ],
    })
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

struct Problem<'a> {
    points: &'a [OperatingPoint],
    bounds: Bounds,
    cfg: &'a FitConfig,
}

impl Problem<'_> {
    fn eval(&self, x: &Params) -> f64 {
        let outside = self.bounds.violation(x);
        if outside > 0.0 {
            return PENALTY + outside;
        }
        objective(&BetaVector::from_array(*x), self.points, self.cfg.metric, self.cfg.mode)
    }

    fn admissible(&self, x: &Params) -> bool {
        self.bounds.contains(x) && BetaVector::from_array(*x).is_valid()
    }

    fn run_local(&self, solver: LocalSolver, x0: &Params) -> OptimOutcome {
        let f = |x: &Params| self.eval(x);
        match solver {
            LocalSolver::NelderMead => nelder_mead(f, x0, &self.bounds, self.cfg),
            LocalSolver::QuasiNewton => projected_gradient(f, x0, &self.bounds, self.cfg),
        }
    }

    /// Projects a local result into the box and re-scores it; `None` marks
    /// a solver failure (non-finite, inadmissible, or no improvement).
    fn accept(&self, out: &OptimOutcome, incumbent: f64) -> Option<(Params, f64)> {
        let x = self.bounds.clamp(&out.x);
        let fx = self.eval(&x);
        if !fx.is_finite() || fx >= PENALTY || !self.admissible(&x) {
            return None;
        }
        if fx < incumbent || incumbent <= self.cfg.objective_tolerance {
            Some((x, fx.min(incumbent)))
        } else {
            None
        }
    }
}

/// Fits one speedline: global initialization, primary local solver,
/// Nelder-Mead fallback when the primary fails, then validation of the
/// best-so-far parameters against the bounds and beta invariants.
pub fn fit_speedline(line: &Speedline, cfg: &FitConfig) -> Result<FitResult, FitError> {
    cfg.validate().map_err(FitError::Config)?;
    let points = line.points();
    let bounds = default_bounds(points)?;
    let problem = Problem { points, bounds, cfg };
    let f = |x: &Params| problem.eval(x);

    let x_init = match cfg.init_strategy {
        InitStrategy::None => {
            let mut mid = bounds.midpoint();
            mid[4] = 2.0;
            mid
        }
        InitStrategy::De => differential_evolution(f, &bounds, cfg, cfg.seed).x,
        InitStrategy::Pso => particle_swarm(f, &bounds, cfg, cfg.seed).x,
    };
    let mut best_x = x_init;
    let mut best_f = problem.eval(&x_init);
    let mut trace = vec![StageRecord {
        stage: format!("init:{}", cfg.init_strategy.name()),
        objective: best_f,
    }];

    let primary = problem.run_local(cfg.local_solver, &best_x);
    let primary_ok = match problem.accept(&primary, best_f) {
        Some((x, fx)) => {
            if fx < best_f {
                best_x = x;
                best_f = fx;
            }
            true
        }
        None => false,
    };
    trace.push(StageRecord {
        stage: format!("local:{}", cfg.local_solver.name()),
        objective: best_f,
    });

    let used_fallback = !primary_ok;
    if used_fallback {
        let fallback = problem.run_local(LocalSolver::NelderMead, &best_x);
        if let Some((x, fx)) = problem.accept(&fallback, best_f) {
            if fx < best_f {
                best_x = x;
                best_f = fx;
            }
        }
        trace.push(StageRecord {
            stage: "fallback:nelder-mead".into(),
            objective: best_f,
        });
    }

    let beta = BetaVector::from_array(best_x);
    let reason = if !best_f.is_finite() || best_f >= PENALTY {
        Some("objective not finite".to_string())
    } else if !bounds.contains(&best_x) {
        Some("parameters outside bounds".to_string())
    } else {
        beta.validate().err().map(|e| e.to_string())
    };
    if let Some(reason) = reason {
        return Err(FitError::FitFailure {
            reason,
            best: best_x,
            objective: best_f,
        });
    }
    trace.push(StageRecord {
        stage: "validate".into(),
        objective: best_f,
    });

    Ok(FitResult {
        beta,
        objective: best_f,
        metric: cfg.metric,
        stage_trace: trace,
        used_fallback,
        seed: cfg.seed,
        underdetermined: points.len() < WELL_DETERMINED_POINTS,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ortho_sum;
    use crate::model::sample_curve;

    fn pt(m_dot: f64, pi: f64) -> OperatingPoint {
        OperatingPoint { m_dot, pi }
    }

    fn line_from(beta: &BetaVector, n: usize) -> Speedline {
        let mut pts = sample_curve(beta, n);
        pts.reverse();
        Speedline::new(100.0, pts).unwrap()
    }

    #[test]
    fn default_bounds_example() {
        let pts = [pt(0.2, 2.0), pt(0.5, 1.6), pt(0.8, 1.0)];
        let b = default_bounds(&pts).unwrap();
        let expect_lo = [-0.1, 2.0, 0.8, 0.5, 1.05];
        let expect_hi = [0.2, 2.5, 1.1, 1.0, 20.0];
        for i in 0..5 {
            assert!((b.lower[i] - expect_lo[i]).abs() < 1e-12, "{b:?}");
            assert!((b.upper[i] - expect_hi[i]).abs() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn default_bounds_degenerate() {
        let flat_m = [pt(0.5, 2.0), pt(0.5, 1.6), pt(0.5, 1.0)];
        assert_eq!(default_bounds(&flat_m), Err(FitError::DegenerateSpan { axis: "mass flow" }));
        let flat_pi = [pt(0.1, 1.0), pt(0.5, 1.0), pt(0.9, 1.0)];
        assert_eq!(default_bounds(&flat_pi), Err(FitError::DegenerateSpan { axis: "pressure ratio" }));
    }

    #[test]
    fn true_beta_inside_default_bounds() {
        let beta = BetaVector::new(0.1, 2.5, 0.9, 1.2, 3.0).unwrap();
        let pts: Vec<_> = sample_curve(&beta, 20)[2..18].to_vec();
        let b = default_bounds(&pts).unwrap();
        assert!(b.contains(&beta.to_array()));
    }

    #[test]
    fn recovers_synthetic_beta() {
        let truth = BetaVector::new(0.1, 2.5, 0.9, 1.2, 3.0).unwrap();
        let line = line_from(&truth, 20);
        let fit = fit_speedline(&line, &FitConfig::default()).unwrap();
        let got = fit.beta.to_array();
        for (g, t) in got.iter().zip(truth.to_array()) {
            assert!(((g - t) / t).abs() < 0.01, "{got:?}");
        }
        assert!(ortho_sum(&fit.beta, line.points()).unwrap() < 1e-6);
        assert!(!fit.underdetermined);
        for w in fit.stage_trace.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
    }

    #[test]
    fn three_points_flagged_underdetermined() {
        let line = Speedline::new(1.0, vec![pt(0.2, 2.0), pt(0.5, 1.8), pt(0.8, 1.0)]).unwrap();
        let fit = fit_speedline(&line, &FitConfig::default()).unwrap();
        assert!(fit.underdetermined);
        assert!(fit.objective < 1e-8, "{}", fit.objective);
        assert!(fit.beta.is_valid());
    }

    #[test]
    fn flat_pressure_is_degenerate() {
        let line = Speedline::new(1.0, vec![pt(0.2, 1.0), pt(0.5, 1.0), pt(0.8, 1.0)]).unwrap();
        assert_eq!(
            fit_speedline(&line, &FitConfig::default()),
            Err(FitError::DegenerateSpan { axis: "pressure ratio" })
        );
    }

    #[test]
    fn too_few_points() {
        let line = Speedline::new(1.0, vec![pt(0.2, 1.0), pt(0.5, 0.9)]).unwrap();
        assert_eq!(fit_speedline(&line, &FitConfig::default()), Err(FitError::TooFewPoints(2)));
    }

    #[test]
    fn deterministic_per_seed() {
        let truth = BetaVector::new(0.2, 1.9, 1.0, 0.7, 4.0).unwrap();
        let line = line_from(&truth, 12);
        for init in [InitStrategy::De, InitStrategy::Pso, InitStrategy::None] {
            let cfg = FitConfig {
                init_strategy: init,
                seed: 77,
                ..FitConfig::default()
            };
            assert_eq!(fit_speedline(&line, &cfg), fit_speedline(&line, &cfg));
        }
    }

    #[test]
    fn quasi_newton_primary_produces_valid_beta() {
        let truth = BetaVector::new(0.2, 1.9, 1.0, 0.7, 2.5).unwrap();
        let line = line_from(&truth, 15);
        let cfg = FitConfig {
            local_solver: LocalSolver::QuasiNewton,
            ..FitConfig::default()
        };
        let fit = fit_speedline(&line, &cfg).unwrap();
        assert!(fit.beta.is_valid());
        assert!(fit.bounds.contains(&fit.beta.to_array()));
        assert!(fit.stage_trace.windows(2).all(|w| w[1].objective <= w[0].objective));
    }

    #[test]
    fn rmse_metric_fit() {
        let truth = BetaVector::new(0.1, 2.5, 0.9, 1.2, 3.0).unwrap();
        let line = line_from(&truth, 20);
        let cfg = FitConfig {
            metric: MetricKind::Rmse,
            ..FitConfig::default()
        };
        let fit = fit_speedline(&line, &cfg).unwrap();
        assert_eq!(fit.metric, MetricKind::Rmse);
        assert!(fit.objective < 1e-4, "{}", fit.objective);
    }
}
