//! Speedline geometry: measured points, speedlines, maps and the superellipse
//! beta-vector that encodes one speedline.

mod conic;
mod superellipse;

pub use conic::{fit_direct_conic, ConicCoefficients, EllipseGeometry};
pub use superellipse::{implicit_residual, massflow_at, pressure_at, sample_curve};
pub(crate) use superellipse::complement as superellipse_complement;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower margin on the curvature exponent: `cur >= 1 + CUR_EPSILON`.
pub const CUR_EPSILON: f64 = 0.05;

/// Relative slack (w.r.t. the span) accepted by [`pressure_at`] and [`massflow_at`].
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid beta vector: {0}")]
    InvalidBeta(String),
    #[error("value {value} outside curve domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },
    #[error("speedline points must be strictly increasing in mass flow (speed {speed})")]
    UnsortedPoints { speed: f64 },
    #[error("speedline speeds must be strictly increasing")]
    UnsortedSpeeds,
    #[error("compressor map needs at least one speedline")]
    EmptyMap,
    #[error("conic fit needs at least 6 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate input for conic fit: {0}")]
    DegenerateInput(&'static str),
    #[error("no admissible ellipse eigenvector")]
    NoEllipse,
}

/// One measured (corrected mass flow, pressure ratio) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub m_dot: f64,
    pub pi: f64,
}

impl OperatingPoint {
    pub fn new(m_dot: f64, pi: f64) -> Result<Self, ModelError> {
        if !m_dot.is_finite() || !pi.is_finite() {
            return Err(ModelError::NonFinite("operating point"));
        }
        Ok(Self { m_dot, pi })
    }
}

/// A speed key plus its measurements, ascending in mass flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedline {
    pub speed: f64,
    points: Vec<OperatingPoint>,
}

impl Speedline {
    /// Builds a speedline from points that are already sorted by mass flow.
    /// Ties are rejected.
    pub fn new(speed: f64, points: Vec<OperatingPoint>) -> Result<Self, ModelError> {
        if !speed.is_finite() {
            return Err(ModelError::NonFinite("speed"));
        }
        if points.iter().any(|p| !p.m_dot.is_finite() || !p.pi.is_finite()) {
            return Err(ModelError::NonFinite("operating point"));
        }
        if points.windows(2).any(|w| w[1].m_dot <= w[0].m_dot) {
            return Err(ModelError::UnsortedPoints { speed });
        }
        Ok(Self { speed, points })
    }

    pub fn points(&self) -> &[OperatingPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One compressor performance map: speedlines ordered by speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressorMap {
    pub id: String,
    pub type_label: String,
    speedlines: Vec<Speedline>,
}

impl CompressorMap {
    pub fn new(
        id: impl Into<String>,
        type_label: impl Into<String>,
        speedlines: Vec<Speedline>,
    ) -> Result<Self, ModelError> {
        if speedlines.is_empty() {
            return Err(ModelError::EmptyMap);
        }
        if speedlines.windows(2).any(|w| w[1].speed <= w[0].speed) {
            return Err(ModelError::UnsortedSpeeds);
        }
        Ok(Self {
            id: id.into(),
            type_label: type_label.into(),
            speedlines,
        })
    }

    pub fn speedlines(&self) -> &[Speedline] {
        &self.speedlines
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.speedlines.iter().map(|l| l.speed).collect()
    }

    /// Position of the speedline whose speed matches `speed` within a
    /// relative tolerance.
    pub fn find_speed(&self, speed: f64, rel_tol: f64) -> Option<usize> {
        self.speedlines
            .iter()
            .position(|l| (l.speed - speed).abs() <= rel_tol * l.speed.abs().max(speed.abs()))
    }
}

/// Superellipse encoding of a speedline: surge point, choke point and
/// curvature exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaVector {
    pub m_zs: f64,
    pub pi_zs: f64,
    pub m_ch: f64,
    pub pi_ch: f64,
    pub cur: f64,
}

impl BetaVector {
    /// Checked constructor; see [`BetaVector::validate`].
    pub fn new(m_zs: f64, pi_zs: f64, m_ch: f64, pi_ch: f64, cur: f64) -> Result<Self, ModelError> {
        let beta = Self::from_array([m_zs, pi_zs, m_ch, pi_ch, cur]);
        beta.validate()?;
        Ok(beta)
    }

    /// Unchecked conversion from the optimizer's parameter order
    /// `[m_zs, pi_zs, m_ch, pi_ch, cur]`.
    pub fn from_array(x: [f64; 5]) -> Self {
        Self {
            m_zs: x[0],
            pi_zs: x[1],
            m_ch: x[2],
            pi_ch: x[3],
            cur: x[4],
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.m_zs, self.pi_zs, self.m_ch, self.pi_ch, self.cur]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("beta vector"));
        }
        if self.m_ch <= self.m_zs {
            return Err(ModelError::InvalidBeta(format!(
                "choke mass flow {} not above surge mass flow {}",
                self.m_ch, self.m_zs
            )));
        }
        if self.pi_zs <= self.pi_ch {
            return Err(ModelError::InvalidBeta(format!(
                "surge pressure {} not above choke pressure {}",
                self.pi_zs, self.pi_ch
            )));
        }
        if self.cur < 1.0 + CUR_EPSILON {
            return Err(ModelError::InvalidBeta(format!(
                "curvature {} below {}",
                self.cur,
                1.0 + CUR_EPSILON
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn mass_span(&self) -> f64 {
        self.m_ch - self.m_zs
    }

    pub fn pressure_span(&self) -> f64 {
        self.pi_zs - self.pi_ch
    }

    /// Curve point for the normalized coordinates `u` (mass flow, from
    /// surge) and `v` (pressure, from choke).
    pub(crate) fn denormalize(&self, u: f64, v: f64) -> OperatingPoint {
        OperatingPoint {
            m_dot: self.m_zs + self.mass_span() * u,
            pi: self.pi_ch + self.pressure_span() * v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_invariants() {
        assert!(BetaVector::new(0.0, 1.0, 1.0, 0.0, 2.0).is_ok());
        assert!(BetaVector::new(1.0, 1.0, 0.5, 0.0, 2.0).is_err());
        assert!(BetaVector::new(0.0, 0.0, 1.0, 1.0, 2.0).is_err());
        assert!(BetaVector::new(0.0, 1.0, 1.0, 0.0, 1.04).is_err());
        assert!(BetaVector::new(0.0, 1.0, 1.0, 0.0, 1.05).is_ok());
        assert!(BetaVector::new(f64::NAN, 1.0, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn speedline_rejects_ties_and_disorder() {
        let p = |m, pi| OperatingPoint::new(m, pi).unwrap();
        assert!(Speedline::new(300.0, vec![p(0.1, 1.0), p(0.2, 0.9)]).is_ok());
        assert!(Speedline::new(300.0, vec![p(0.2, 1.0), p(0.2, 0.9)]).is_err());
        assert!(Speedline::new(300.0, vec![p(0.3, 1.0), p(0.2, 0.9)]).is_err());
    }

    #[test]
    fn map_requires_increasing_speeds() {
        let line = |s| Speedline::new(s, vec![]).unwrap();
        assert!(CompressorMap::new("m", "t", vec![line(1.0), line(2.0)]).is_ok());
        assert_eq!(
            CompressorMap::new("m", "t", vec![line(2.0), line(2.0)]),
            Err(ModelError::UnsortedSpeeds)
        );
        assert_eq!(CompressorMap::new("m", "t", vec![]), Err(ModelError::EmptyMap));
    }

    #[test]
    fn operating_point_rejects_nonfinite() {
        assert!(OperatingPoint::new(f64::INFINITY, 1.0).is_err());
        assert!(OperatingPoint::new(0.0, f64::NAN).is_err());
    }
}
