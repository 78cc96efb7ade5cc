use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ModelError, OperatingPoint};

/// General conic `a x² + b xy + c y² + d x + e y + f = 0`, stored with unit
/// Euclidean norm and `a > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

/// Center, semi-axes (major first) and major-axis angle of an ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseGeometry {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
}

impl ConicCoefficients {
    /// Rescales to unit norm with a non-negative `a`.
    pub fn canonical(v: [f64; 6]) -> Self {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
        let k = sign / norm;
        Self {
            a: v[0] * k,
            b: v[1] * k,
            c: v[2] * k,
            d: v[3] * k,
            e: v[4] * k,
            f: v[5] * k,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    /// `4ac - b²`; positive for ellipses.
    pub fn discriminant(&self) -> f64 {
        4.0 * self.a * self.c - self.b * self.b
    }

    pub fn is_ellipse(&self) -> bool {
        self.discriminant() > 0.0
    }

    /// Sum of squared algebraic distances over `points`.
    pub fn algebraic_residual(&self, points: &[OperatingPoint]) -> f64 {
        points.iter().map(|p| self.evaluate(p.m_dot, p.pi).powi(2)).sum()
    }

    /// Geometric parameters, or `None` if the conic is not a real ellipse.
    pub fn geometry(&self) -> Option<EllipseGeometry> {
        if !self.is_ellipse() {
            return None;
        }
        let quad = Matrix2::new(2.0 * self.a, self.b, self.b, 2.0 * self.c);
        let rhs = nalgebra::Vector2::new(-self.d, -self.e);
        let center = quad.lu().solve(&rhs)?;
        let (x0, y0) = (center[0], center[1]);
        let f0 = self.evaluate(x0, y0);
        let shape = Matrix2::new(self.a, self.b / 2.0, self.b / 2.0, self.c);
        let eig = shape.symmetric_eigen();
        let (i_major, i_minor) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let major2 = -f0 / eig.eigenvalues[i_major];
        let minor2 = -f0 / eig.eigenvalues[i_minor];
        if major2 <= 0.0 || minor2 <= 0.0 {
            return None;
        }
        let dir = eig.eigenvectors.column(i_major);
        Some(EllipseGeometry {
            center: (x0, y0),
            semi_axes: (major2.sqrt(), minor2.sqrt()),
            angle: dir[1].atan2(dir[0]),
        })
    }
}

/// Direct least-squares ellipse fit with the `4ac - b² = 1` constraint.
///
/// Points are centered and scaled to unit RMS radius, the 6×6 scatter matrix
/// is reduced to the 3×3 problem on the quadratic block
/// `(S11 - S12 S22⁻¹ S21) a1 = λ C1 a1`, and the coefficients are mapped
/// back to the input frame.
pub fn fit_direct_conic(points: &[OperatingPoint]) -> Result<ConicCoefficients, ModelError> {
    let n = points.len();
    if n < 6 {
        return Err(ModelError::TooFewPoints(n));
    }
    let mean_x = points.iter().map(|p| p.m_dot).sum::<f64>() / n as f64;
    let mean_y = points.iter().map(|p| p.pi).sum::<f64>() / n as f64;
    let rms = (points
        .iter()
        .map(|p| (p.m_dot - mean_x).powi(2) + (p.pi - mean_y).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    if !(rms > 0.0) || !rms.is_finite() {
        return Err(ModelError::DegenerateInput("all points coincide"));
    }
    let scale = 1.0 / rms;

    let design = DMatrix::from_fn(n, 6, |i, j| {
        let x = (points[i].m_dot - mean_x) * scale;
        let y = (points[i].pi - mean_y) * scale;
        match j {
            0 => x * x,
            1 => x * y,
            2 => y * y,
            3 => x,
            4 => y,
            _ => 1.0,
        }
    });

    let sv = design.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > smax * 1e-10).count();
    if rank < 5 {
        return Err(ModelError::DegenerateInput("scatter matrix rank below 5"));
    }

    let scatter = design.transpose() * &design;
    let s11: Matrix3<f64> = scatter.fixed_view::<3, 3>(0, 0).into_owned();
    let s12: Matrix3<f64> = scatter.fixed_view::<3, 3>(0, 3).into_owned();
    let s22: Matrix3<f64> = scatter.fixed_view::<3, 3>(3, 3).into_owned();

    let s22_svd = s22.svd(false, false);
    if s22_svd.singular_values.min() <= s22_svd.singular_values.max() * 1e-12 {
        return Err(ModelError::DegenerateInput("points are collinear"));
    }
    let s22_inv = s22
        .try_inverse()
        .ok_or(ModelError::DegenerateInput("points are collinear"))?;
    let linear_map = -s22_inv * s12.transpose();
    let reduced = s11 + s12 * linear_map;

    // C1⁻¹ for C1 = [[0,0,2],[0,-1,0],[2,0,0]]
    let c1_inv = Matrix3::new(0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0);
    let system = c1_inv * reduced;

    let scale_ref = system.norm().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in system.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * scale_ref {
            continue;
        }
        let shifted = system - Matrix3::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = match svd.v_t {
            Some(v) => v,
            None => continue,
        };
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let a1 = v_t.row(imin).transpose();
        let constraint = 4.0 * a1[0] * a1[2] - a1[1] * a1[1];
        if constraint <= 0.0 {
            continue;
        }
        let cost = (a1.transpose() * reduced * a1)[(0, 0)] / constraint;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, a1));
        }
    }
    let (_, a1) = best.ok_or(ModelError::NoEllipse)?;
    let a2 = linear_map * a1;

    let (a, b, c) = (a1[0], a1[1], a1[2]);
    let (d, e, f) = (a2[0], a2[1], a2[2]);
    let s = scale;
    let (mx, my) = (mean_x, mean_y);
    let raw = [
        a * s * s,
        b * s * s,
        c * s * s,
        -2.0 * a * s * s * mx - b * s * s * my + d * s,
        -b * s * s * mx - 2.0 * c * s * s * my + e * s,
        a * s * s * mx * mx + b * s * s * mx * my + c * s * s * my * my - d * s * mx - e * s * my + f,
    ];
    let conic = ConicCoefficients::canonical(raw);
    if !conic.is_ellipse() {
        return Err(ModelError::NoEllipse);
    }
    Ok(conic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64) -> OperatingPoint {
        OperatingPoint { m_dot: x, pi: y }
    }

    #[test]
    fn unit_circle() {
        let pts: Vec<_> = (0..8)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 8.0;
                pt(t.cos(), t.sin())
            })
            .collect();
        let conic = fit_direct_conic(&pts).unwrap();
        let h = 1.0 / 3f64.sqrt();
        let expected = [h, 0.0, h, 0.0, 0.0, -h];
        for (got, want) in conic.to_array().iter().zip(expected) {
            assert!((got - want).abs() < 1e-10, "{conic:?}");
        }
    }

    #[test]
    fn shifted_ellipse() {
        // ((x-2)/3)² + ((y-1)/2)² = 1 expanded by hand:
        // x²/9 + y²/4 - 4x/9 - y/2 + (4/9 + 1/4 - 1) = 0
        let expected =
            ConicCoefficients::canonical([1.0 / 9.0, 0.0, 0.25, -4.0 / 9.0, -0.5, 4.0 / 9.0 + 0.25 - 1.0]);
        let pts: Vec<_> = (0..10)
            .map(|k| {
                let t = 0.3 + k as f64 * std::f64::consts::TAU / 10.0;
                pt(2.0 + 3.0 * t.cos(), 1.0 + 2.0 * t.sin())
            })
            .collect();
        let conic = fit_direct_conic(&pts).unwrap();
        for (got, want) in conic.to_array().iter().zip(expected.to_array()) {
            assert!((got - want).abs() < 1e-10);
        }
        let g = conic.geometry().unwrap();
        assert!((g.center.0 - 2.0).abs() < 1e-8 && (g.center.1 - 1.0).abs() < 1e-8);
        assert!((g.semi_axes.0 - 3.0).abs() < 1e-8 && (g.semi_axes.1 - 2.0).abs() < 1e-8);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<_> = (0..6).map(|k| pt(k as f64, 2.0 * k as f64 + 1.0)).collect();
        assert!(matches!(fit_direct_conic(&pts), Err(ModelError::DegenerateInput(_))));
    }

    #[test]
    fn duplicated_points_are_degenerate() {
        let base = [pt(1.0, 0.0), pt(0.0, 1.0), pt(-1.0, 0.0)];
        let pts: Vec<_> = base.iter().cycle().take(6).copied().collect();
        assert!(matches!(fit_direct_conic(&pts), Err(ModelError::DegenerateInput(_))));
    }

    #[test]
    fn too_few_points() {
        assert_eq!(fit_direct_conic(&[pt(0.0, 0.0)]), Err(ModelError::TooFewPoints(1)));
    }

    #[test]
    fn order_invariance() {
        let mut pts: Vec<_> = (0..12)
            .map(|k| {
                let t = k as f64 * 0.5;
                let noise = 0.01 * ((k * 7919) % 13) as f64 / 13.0;
                pt(1.0 + 2.0 * t.cos() + noise, -0.5 + 0.7 * t.sin() - noise)
            })
            .collect();
        let a = fit_direct_conic(&pts).unwrap();
        pts.reverse();
        pts.swap(2, 7);
        let b = fit_direct_conic(&pts).unwrap();
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
