use std::fmt::Write;

use crate::model::{sample_curve, BetaVector, OperatingPoint, Speedline};

pub const PREDICTED_SAMPLES: usize = 200;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const PAD: f64 = 60.0;
const MARGIN: f64 = 0.05;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn covering<'a>(points: impl Iterator<Item = &'a OperatingPoint>) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for p in points.filter(|p| p.m_dot.is_finite() && p.pi.is_finite()) {
            f.x0 = f.x0.min(p.m_dot);
            f.x1 = f.x1.max(p.m_dot);
            f.y0 = f.y0.min(p.pi);
            f.y1 = f.y1.max(p.pi);
        }
        if !f.x0.is_finite() {
            (f.x0, f.x1, f.y0, f.y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let widen = |lo: &mut f64, hi: &mut f64| {
            let span = if *hi > *lo { *hi - *lo } else { 1.0 };
            *lo -= MARGIN * span;
            *hi += MARGIN * span;
        };
        widen(&mut f.x0, &mut f.x1);
        widen(&mut f.y0, &mut f.y1);
        f
    }

    fn x(&self, m: f64) -> f64 {
        PAD + (m - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * PAD)
    }

    fn y(&self, pi: f64) -> f64 {
        HEIGHT - PAD - (pi - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * PAD)
    }

    fn xy(&self, p: &OperatingPoint) -> String {
        format!("{:.3},{:.3}", self.x(p.m_dot), self.y(p.pi))
    }
}

/// Plots measured speedlines (markers joined by solid lines) and predicted
/// curves (dashed) in the mass flow / pressure ratio plane.
pub fn export_curve_svg(measured: &[Speedline], predicted: &[(f64, BetaVector)]) -> String {
    let curves: Vec<(f64, Vec<OperatingPoint>)> = predicted
        .iter()
        .map(|(speed, beta)| (*speed, sample_curve(beta, PREDICTED_SAMPLES)))
        .collect();
    let frame = Frame::covering(
        measured
            .iter()
            .flat_map(|l| l.points())
            .chain(curves.iter().flat_map(|(_, c)| c)),
    );

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (PAD, WIDTH - PAD, PAD, HEIGHT - PAD);
    let _ = writeln!(
        s,
        r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
    );
    for (t, anchor) in [(0.0, "start"), (1.0, "end")] {
        let m = frame.x0 + t * (frame.x1 - frame.x0);
        let pi = frame.y0 + t * (frame.y1 - frame.y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="{anchor}">{m:.4}</text>"#,
            frame.x(m),
            bottom + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="end">{pi:.4}</text>"#,
            left - 6.0,
            frame.y(pi)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">mass flow</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.3}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {:.3})">pressure ratio</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (i, line) in measured.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="measured" data-speed="{}">"#, line.speed);
        let pts: Vec<String> = line.points().iter().map(|p| frame.xy(p)).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        for p in line.points() {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#,
                frame.x(p.m_dot),
                frame.y(p.pi)
            );
        }
        let _ = writeln!(s, "</g>");
    }

    for (i, (speed, curve)) in curves.iter().enumerate() {
        let color = measured
            .iter()
            .position(|l| l.speed == *speed)
            .map_or(PALETTE[i % PALETTE.len()], |j| PALETTE[j % PALETTE.len()]);
        let mut d = String::new();
        for (k, p) in curve.iter().filter(|p| p.m_dot.is_finite() && p.pi.is_finite()).enumerate() {
            let _ = write!(d, "{}{} ", if k == 0 { "M" } else { "L" }, frame.xy(p));
        }
        let _ = writeln!(
            s,
            r#"<path class="predicted" data-speed="{speed}" d="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            d.trim_end()
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}
