use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use cpmfit_core::dataio::DEFAULT_SPEED_TOLERANCE;
use cpmfit_core::metrics::{EvalMode, MetricKind};
use cpmfit_core::optimize::{FitConfig, InitStrategy, LocalSolver};
use cpmfit_core::predict::PredictionConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "CPMFIT_SEED";
pub const DEFAULT_REPEATS: usize = 10;

/// Settings shared by every command, loadable from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// Min-max normalize mass flow and pressure ratio per map before fitting.
    pub normalize: bool,
    pub speed_tolerance: f64,
    pub repeats: usize,
    pub target: Option<f64>,
    pub fit: FitConfig,
    pub predict: PredictionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: PathBuf::from("cpmfit-out"),
            seed: None,
            normalize: true,
            speed_tolerance: DEFAULT_SPEED_TOLERANCE,
            repeats: DEFAULT_REPEATS,
            target: None,
            fit: FitConfig::default(),
            predict: PredictionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input map CSV (`speed,m_dot,pi`)
    pub input: Option<PathBuf>,
    /// JSON configuration file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed (falls back to the config file, then CPMFIT_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit objective: rmse, mape or ortho
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<MetricKind>,
    /// Global initialization: none, pso or de
    #[arg(long, value_parser = parse_from_str::<InitStrategy>)]
    pub init: Option<InitStrategy>,
    /// Local solver: nelder_mead or quasi_newton
    #[arg(long, value_parser = parse_from_str::<LocalSolver>)]
    pub solver: Option<LocalSolver>,
    /// Polynomial degree for the beta regression
    #[arg(long)]
    pub degree: Option<usize>,
    /// Evaluation mode for fitting and prediction
    #[arg(long, value_parser = parse_from_str::<EvalMode>)]
    pub mode: Option<EvalMode>,
    /// Scale speeds to [0, 1] before the beta regression
    #[arg(long, value_name = "BOOL")]
    pub normalize_speed: Option<bool>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    match s.parse()? {
        MetricKind::ResidualSd => Err("residual SD is not a fitting objective; use rmse, mape or ortho".into()),
        kind => Ok(kind),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (if any) overridden by flags, with the seed resolved.
    pub fn resolve(args: &CommonArgs, env_seed: Option<String>) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if args.input.is_some() {
            cfg.input = args.input.clone();
        }
        if let Some(out) = &args.out {
            cfg.out = out.clone();
        }
        if let Some(metric) = args.metric {
            cfg.fit.metric = metric;
        }
        if let Some(init) = args.init {
            cfg.fit.init_strategy = init;
        }
        if let Some(solver) = args.solver {
            cfg.fit.local_solver = solver;
        }
        if let Some(degree) = args.degree {
            cfg.predict.degree = degree;
        }
        if let Some(mode) = args.mode {
            cfg.fit.mode = mode;
            cfg.predict.eval_mode = mode;
        }
        if let Some(flag) = args.normalize_speed {
            cfg.predict.normalize_speed = flag;
        }

        let seed = match (args.seed, cfg.seed, env_seed) {
            (Some(s), _, _) | (None, Some(s), _) => Some(s),
            (None, None, Some(text)) => Some(
                text.trim()
                    .parse()
                    .with_context(|| format!("{SEED_ENV} is not an unsigned integer: `{text}`"))?,
            ),
            (None, None, None) => None,
        };
        if let Some(seed) = seed {
            cfg.seed = Some(seed);
            cfg.fit.seed = seed;
        }

        cfg.fit.validate().map_err(anyhow::Error::msg).context("invalid fit settings")?;
        cfg.predict
            .validate()
            .map_err(anyhow::Error::msg)
            .context("invalid prediction settings")?;
        if !(cfg.speed_tolerance >= 0.0) {
            bail!("speed_tolerance must be non-negative");
        }
        if cfg.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        Ok(cfg)
    }

    pub fn input(&self) -> Result<&Path> {
        match &self.input {
            Some(p) => Ok(p),
            None => bail!("no input file given (positional argument or `input` in the config file)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 5, "fit": {"init_strategy": "pso"}, "predict": {"degree": 3}}"#).unwrap();
        let args = CommonArgs {
            config: Some(path.clone()),
            degree: Some(2),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args, Some("9".into())).unwrap();
        assert_eq!(cfg.fit.seed, 5);
        assert_eq!(cfg.fit.init_strategy, InitStrategy::Pso);
        assert_eq!(cfg.predict.degree, 2);

        let args = CommonArgs {
            config: Some(path),
            seed: Some(11),
            ..CommonArgs::default()
        };
        assert_eq!(RunConfig::resolve(&args, None).unwrap().fit.seed, 11);
    }

    #[test]
    fn env_seed_is_the_fallback() {
        let cfg = RunConfig::resolve(&CommonArgs::default(), Some("42".into())).unwrap();
        assert_eq!(cfg.fit.seed, 42);
        assert!(RunConfig::resolve(&CommonArgs::default(), Some("x".into())).is_err());
        assert_eq!(RunConfig::resolve(&CommonArgs::default(), None).unwrap().fit.seed, 0);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sed": 5}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&args, None).is_err());
    }

    #[test]
    fn residual_sd_is_not_an_objective() {
        assert!(parse_metric("ortho").is_ok());
        assert!(parse_metric("residual_sd").is_err());
    }
}
