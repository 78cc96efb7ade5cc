//! CSV ingestion, speedline grouping, per-map normalization and export of
//! reports and plots.

mod report;
mod svg;

pub use report::{export_report, export_summary, ReportFormat, ReportRow};
pub use svg::{export_curve_svg, PREDICTED_SAMPLES};

/// Shortest round-trip text for a float, switching to exponent notation
/// for very small or large magnitudes.
pub fn format_number(x: f64) -> String {
    format!("{x:?}")
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CompressorMap, ModelError, OperatingPoint, Speedline};

pub const HEADER: [&str; 3] = ["speed", "m_dot", "pi"];
pub const DEFAULT_SPEED_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing header: expected `speed,m_dot,pi`")]
    MissingHeader,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("no records")]
    Empty,
    #[error("speedline {speed}: duplicate mass flow {m_dot}")]
    DuplicateAbscissa { speed: f64, m_dot: f64 },
    #[error("degenerate {axis} range: all points share the same value")]
    DegenerateSpan { axis: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One CSV row in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub speed: f64,
    pub m_dot: f64,
    pub pi: f64,
}

/// Parses `speed,m_dot,pi` CSV text. Blank lines and lines starting with
/// `#` are skipped; fields may carry surrounding whitespace.
pub fn parse_map_csv(text: &str) -> Result<Vec<RawRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();

    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(csv_error(e)),
        None => return Err(DataError::MissingHeader),
    };
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(DataError::MissingHeader);
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| DataError::Parse { line, message };
        if row.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", row.len())));
        }
        let mut values = [0.0; 3];
        for (slot, (field, name)) in values.iter_mut().zip(row.iter().zip(HEADER)) {
            *slot = field
                .parse::<f64>()
                .map_err(|_| err(format!("invalid {name} value `{field}`")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite {name} value `{field}`")));
            }
        }
        if values[2] <= 0.0 {
            return Err(err(format!("pressure ratio must be positive, got {}", values[2])));
        }
        records.push(RawRecord {
            speed: values[0],
            m_dot: values[1],
            pi: values[2],
        });
    }
    Ok(records)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Groups records into speedlines. Speeds within `speed_tolerance`
/// (relative) of a group's lowest speed join that group, keyed by the
/// group's mean speed. The result does not depend on record order.
pub fn group_speedlines(records: &[RawRecord], speed_tolerance: f64) -> Result<CompressorMap, DataError> {
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        a.speed
            .total_cmp(&b.speed)
            .then(a.m_dot.total_cmp(&b.m_dot))
            .then(a.pi.total_cmp(&b.pi))
    });

    let mut groups: Vec<Vec<RawRecord>> = Vec::new();
    for r in sorted {
        match groups.last_mut() {
            Some(g) if (r.speed - g[0].speed).abs() <= speed_tolerance * g[0].speed.abs().max(r.speed.abs()) => {
                g.push(r)
            }
            _ => groups.push(vec![r]),
        }
    }

    let mut lines = Vec::with_capacity(groups.len());
    for mut g in groups {
        let speed = g.iter().map(|r| r.speed).sum::<f64>() / g.len() as f64;
        g.sort_by(|a, b| a.m_dot.total_cmp(&b.m_dot).then(a.pi.total_cmp(&b.pi)));
        if let Some(w) = g.windows(2).find(|w| w[0].m_dot == w[1].m_dot) {
            return Err(DataError::DuplicateAbscissa { speed, m_dot: w[0].m_dot });
        }
        let points = g.iter().map(|r| OperatingPoint { m_dot: r.m_dot, pi: r.pi }).collect();
        lines.push(Speedline::new(speed, points)?);
    }
    Ok(CompressorMap::new("map", "", lines)?)
}

/// Raw data extent used for min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub m_min: f64,
    pub m_max: f64,
    pub pi_min: f64,
    pub pi_max: f64,
}

impl ScaleRecord {
    pub fn of_map(map: &CompressorMap) -> Result<Self, DataError> {
        let mut s = Self {
            m_min: f64::INFINITY,
            m_max: f64::NEG_INFINITY,
            pi_min: f64::INFINITY,
            pi_max: f64::NEG_INFINITY,
        };
        for p in map.speedlines().iter().flat_map(|l| l.points()) {
            s.m_min = s.m_min.min(p.m_dot);
            s.m_max = s.m_max.max(p.m_dot);
            s.pi_min = s.pi_min.min(p.pi);
            s.pi_max = s.pi_max.max(p.pi);
        }
        if !(s.m_max > s.m_min) {
            return Err(DataError::DegenerateSpan { axis: "mass flow" });
        }
        if !(s.pi_max > s.pi_min) {
            return Err(DataError::DegenerateSpan { axis: "pressure ratio" });
        }
        Ok(s)
    }

    pub fn normalize(&self, p: &OperatingPoint) -> OperatingPoint {
        OperatingPoint {
            m_dot: (p.m_dot - self.m_min) / (self.m_max - self.m_min),
            pi: (p.pi - self.pi_min) / (self.pi_max - self.pi_min),
        }
    }

    pub fn denormalize(&self, p: &OperatingPoint) -> OperatingPoint {
        OperatingPoint {
            m_dot: self.m_min + p.m_dot * (self.m_max - self.m_min),
            pi: self.pi_min + p.pi * (self.pi_max - self.pi_min),
        }
    }

    pub fn denormalize_map(&self, map: &CompressorMap) -> CompressorMap {
        self.apply(map, |p| self.denormalize(p))
    }

    fn apply(&self, map: &CompressorMap, f: impl Fn(&OperatingPoint) -> OperatingPoint) -> CompressorMap {
        let lines = map
            .speedlines()
            .iter()
            .map(|l| {
                let pts = l.points().iter().map(&f).collect();
                Speedline::new(l.speed, pts).expect("affine increasing map keeps order")
            })
            .collect();
        CompressorMap::new(map.id.clone(), map.type_label.clone(), lines).expect("speeds unchanged")
    }
}

/// Min-max normalizes both axes over all points of the map. Extreme points
/// map exactly to 0 and 1.
pub fn normalize_map(map: &CompressorMap) -> Result<(CompressorMap, ScaleRecord), DataError> {
    let scale = ScaleRecord::of_map(map)?;
    Ok((scale.apply(map, |p| scale.normalize(p)), scale))
}

/// Writes a map back out in the input CSV format, speedline by speedline.
pub fn export_map_csv(map: &CompressorMap) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for line in map.speedlines() {
        for p in line.points() {
            w.write_record([format_number(line.speed), format_number(p.m_dot), format_number(p.pi)])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}
