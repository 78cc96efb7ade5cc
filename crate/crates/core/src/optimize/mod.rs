//! Global and local optimizers and the multi-stage speedline fit.
//!
//! The optimizers work on the five beta parameters in the order
//! `[m_zs, pi_zs, m_ch, pi_ch, cur]`. They are exposed for testing and
//! benchmarking but tuned for this problem size.

mod de;
mod nelder_mead;
mod pipeline;
mod pso;
mod quasi_newton;

pub use de::differential_evolution;
pub use nelder_mead::nelder_mead;
pub use pipeline::{default_bounds, fit_speedline, FitError, FitResult, StageRecord};
pub use pso::particle_swarm;
pub use quasi_newton::projected_gradient;

use serde::{Deserialize, Serialize};

use crate::metrics::{evaluate_prediction, CurveProjector, EvalMode, MetricKind};
use crate::model::{BetaVector, OperatingPoint, CUR_EPSILON};

/// Number of beta parameters.
pub const DIM: usize = 5;
pub type Params = [f64; DIM];

/// Base value returned for parameter vectors that violate beta ordering or
/// the bounds box; the violation magnitude is added on top.
pub const PENALTY: f64 = 1e12;

/// Lowest admissible curvature bound.
pub const MIN_CUR_BOUND: f64 = 1.0 + CUR_EPSILON;

/// Box constraints in beta parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Params,
    pub upper: Params,
}

impl Bounds {
    pub fn new(lower: Params, upper: Params) -> Result<Self, String> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), String> {
        for i in 0..DIM {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite()) {
                return Err(format!("bound {i} is not finite"));
            }
            if self.lower[i] >= self.upper[i] {
                return Err(format!(
                    "lower bound {} not below upper bound {} for parameter {i}",
                    self.lower[i], self.upper[i]
                ));
            }
        }
        if self.lower[4] < MIN_CUR_BOUND - 1e-12 {
            return Err(format!("curvature lower bound {} below {MIN_CUR_BOUND}", self.lower[4]));
        }
        Ok(())
    }

    pub fn span(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn midpoint(&self) -> Params {
        std::array::from_fn(|i| 0.5 * (self.lower[i] + self.upper[i]))
    }

    pub fn contains(&self, x: &Params) -> bool {
        (0..DIM).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    pub fn clamp(&self, x: &Params) -> Params {
        std::array::from_fn(|i| x[i].clamp(self.lower[i], self.upper[i]))
    }

    /// Total distance outside the box, summed over coordinates.
    pub fn violation(&self, x: &Params) -> f64 {
        (0..DIM)
            .map(|i| (self.lower[i] - x[i]).max(0.0) + (x[i] - self.upper[i]).max(0.0))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    None,
    Pso,
    #[default]
    De,
}

impl InitStrategy {
    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::None => "none",
            InitStrategy::Pso => "pso",
            InitStrategy::De => "de",
        }
    }
}

impl std::str::FromStr for InitStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(InitStrategy::None),
            "pso" => Ok(InitStrategy::Pso),
            "de" => Ok(InitStrategy::De),
            other => Err(format!("unknown init strategy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalSolver {
    #[default]
    NelderMead,
    /// Projected gradient descent with finite-difference gradients.
    QuasiNewton,
}

impl LocalSolver {
    pub fn name(self) -> &'static str {
        match self {
            LocalSolver::NelderMead => "nelder-mead",
            LocalSolver::QuasiNewton => "quasi-newton",
        }
    }
}

impl std::str::FromStr for LocalSolver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nm" | "nelder_mead" | "nelder-mead" => Ok(LocalSolver::NelderMead),
            "qn" | "quasi_newton" | "quasi-newton" => Ok(LocalSolver::QuasiNewton),
            other => Err(format!("unknown local solver '{other}'")),
        }
    }
}

/// Settings for one speedline fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub init_strategy: InitStrategy,
    pub local_solver: LocalSolver,
    pub metric: MetricKind,
    pub mode: EvalMode,
    pub de_population: usize,
    pub de_max_iters: usize,
    pub pso_particles: usize,
    pub pso_iters: usize,
    pub local_max_iters: usize,
    pub seed: u64,
    pub objective_tolerance: f64,
    pub simplex_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            init_strategy: InitStrategy::De,
            local_solver: LocalSolver::NelderMead,
            metric: MetricKind::Ortho,
            mode: EvalMode::Pressure,
            de_population: 15,
            de_max_iters: 1000,
            pso_particles: 100,
            pso_iters: 50,
            local_max_iters: 5000,
            seed: 0,
            objective_tolerance: 1e-12,
            simplex_tolerance: 1e-10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), String> {
        let counts = [
            ("de_population", self.de_population),
            ("de_max_iters", self.de_max_iters),
            ("pso_particles", self.pso_particles),
            ("pso_iters", self.pso_iters),
            ("local_max_iters", self.local_max_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.de_population < 4 {
            return Err("de_population must be at least 4".into());
        }
        if !(self.objective_tolerance >= 0.0 && self.simplex_tolerance >= 0.0) {
            return Err("tolerances must be non-negative".into());
        }
        Ok(())
    }
}

/// Outcome of a single optimizer run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOutcome {
    pub x: Params,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Fit loss for `beta` against `points`.
///
/// Parameter vectors that break the beta ordering (or curvature floor)
/// return `PENALTY` plus the violation size so population methods can move
/// through them. Undefined metric values also map to `PENALTY`.
pub fn objective(beta: &BetaVector, points: &[OperatingPoint], metric: MetricKind, mode: EvalMode) -> f64 {
    let x = beta.to_array();
    if x.iter().any(|v| !v.is_finite()) {
        return 2.0 * PENALTY;
    }
    let violation = (beta.m_zs - beta.m_ch).max(0.0)
        + (beta.pi_ch - beta.pi_zs).max(0.0)
        + (MIN_CUR_BOUND - beta.cur).max(0.0);
    if !beta.is_valid() {
        return PENALTY + violation;
    }
    if points.is_empty() {
        return PENALTY;
    }
    let value = match metric {
        MetricKind::Ortho => CurveProjector::new(beta).squared_distances(points).iter().sum(),
        other => match evaluate_prediction(beta, points, mode) {
            Ok(ev) => ev.summary(other).value,
            Err(_) => f64::NAN,
        },
    };
    if value.is_finite() {
        value
    } else {
        PENALTY
    }
}

/// SplitMix64 step, used to derive independent seeds from a base seed and a key.
pub fn derive_seed(base: u64, key: u64) -> u64 {
    let mut z = base ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
