use crate::model::{BetaVector, OperatingPoint};

use super::MetricError;

/// Samples in the coarse scan over the curve parameter.
pub const GRID_SAMPLES: usize = 257;
/// Golden-section stopping width on the curve parameter.
pub const PARAM_TOLERANCE: f64 = 1e-10;
const MAX_REFINED_BASINS: usize = 4;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Projects points onto one superellipse.
///
/// The curve is traversed by a parameter `s` in `[0, 2]`: on `[0, 1]` the
/// pressure coordinate `v = s·k` drives the choke branch, on `[1, 2]` the
/// mass-flow coordinate `u = (2 - s)·k` drives the surge branch, with
/// `k = 2^(-1/cur)` the diagonal point where both branches meet. Each branch
/// is a graph with slope magnitude at most one in normalized coordinates, so
/// the parametrization stays well conditioned even for large `cur`, where the
/// trigonometric form collapses whole legs of the curve into tiny parameter
/// intervals.
#[derive(Debug, Clone)]
pub struct CurveProjector {
    beta: BetaVector,
    knee: f64,
    grid: Vec<OperatingPoint>,
}

impl CurveProjector {
    pub fn new(beta: &BetaVector) -> Self {
        let knee = 0.5f64.powf(1.0 / beta.cur);
        let mut proj = Self {
            beta: *beta,
            knee,
            grid: Vec::with_capacity(GRID_SAMPLES),
        };
        proj.grid = (0..GRID_SAMPLES)
            .map(|i| proj.point(2.0 * i as f64 / (GRID_SAMPLES - 1) as f64))
            .collect();
        proj
    }

    /// Curve point at parameter `s` in `[0, 2]`; `s = 0` is choke, `s = 2` surge.
    pub fn point(&self, s: f64) -> OperatingPoint {
        let cur = self.beta.cur;
        if s <= 1.0 {
            let v = s * self.knee;
            self.beta
                .denormalize(crate::model::superellipse_complement(v, cur), v)
        } else {
            let u = (2.0 - s) * self.knee;
            self.beta
                .denormalize(u, crate::model::superellipse_complement(u, cur))
        }
    }

    fn dist2(&self, s: f64, p: &OperatingPoint) -> f64 {
        let q = self.point(s);
        (q.m_dot - p.m_dot).powi(2) + (q.pi - p.pi).powi(2)
    }

    /// Nearest curve point and its squared distance.
    pub fn project(&self, p: &OperatingPoint) -> (OperatingPoint, f64) {
        let d: Vec<f64> = self
            .grid
            .iter()
            .map(|q| (q.m_dot - p.m_dot).powi(2) + (q.pi - p.pi).powi(2))
            .collect();
        let last = d.len() - 1;
        let mut basins: Vec<usize> = (0..=last)
            .filter(|&i| (i == 0 || d[i] <= d[i - 1]) && (i == last || d[i] <= d[i + 1]))
            .collect();
        basins.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        basins.dedup_by(|a, b| a.abs_diff(*b) <= 1);
        basins.truncate(MAX_REFINED_BASINS);

        let step = 2.0 / last as f64;
        let mut best_s = 2.0 * basins.first().copied().unwrap_or(0) as f64 / last as f64;
        let mut best_d = self.dist2(best_s, p);
        for &i in &basins {
            let lo = (i.saturating_sub(1)) as f64 * step;
            let hi = ((i + 1).min(last)) as f64 * step;
            let (s, ds) = self.golden(lo, hi, p);
            if ds < best_d {
                best_s = s;
                best_d = ds;
            }
        }
        (self.point(best_s), best_d)
    }

    fn golden(&self, mut lo: f64, mut hi: f64, p: &OperatingPoint) -> (f64, f64) {
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = self.dist2(x1, p);
        let mut f2 = self.dist2(x2, p);
        while hi - lo > PARAM_TOLERANCE {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                f1 = self.dist2(x1, p);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                f2 = self.dist2(x2, p);
            }
        }
        // the bracket ends may beat the interior probes at a curve endpoint
        [(x1, f1), (x2, f2), (lo, self.dist2(lo, p)), (hi, self.dist2(hi, p))]
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    /// Per-point squared distances.
    pub fn squared_distances(&self, points: &[OperatingPoint]) -> Vec<f64> {
        points.iter().map(|p| self.project(p).1).collect()
    }
}

/// Curve point nearest to `p` and the squared Euclidean distance to it.
pub fn nearest_point_on_curve(beta: &BetaVector, p: &OperatingPoint) -> (OperatingPoint, f64) {
    CurveProjector::new(beta).project(p)
}

/// Sum of squared orthogonal distances from `points` to the curve.
pub fn ortho_sum(beta: &BetaVector, points: &[OperatingPoint]) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::Empty);
    }
    let proj = CurveProjector::new(beta);
    Ok(proj.squared_distances(points).iter().sum())
}
