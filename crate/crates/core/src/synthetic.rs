//! Seeded synthetic speedlines and maps with known ground truth, used by the
//! test suites and the benchmark command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::{sample_curve, BetaVector, CompressorMap, OperatingPoint, Speedline};

/// Ranges for randomly drawn beta vectors in normalized map units.
#[derive(Debug, Clone, Copy)]
pub struct BetaBox {
    pub m_zs: (f64, f64),
    pub mass_span: (f64, f64),
    pub pi_ch: (f64, f64),
    pub pressure_span: (f64, f64),
    pub cur: (f64, f64),
}

impl Default for BetaBox {
    fn default() -> Self {
        Self {
            m_zs: (0.05, 0.35),
            mass_span: (0.4, 0.8),
            pi_ch: (0.8, 1.5),
            pressure_span: (0.5, 1.5),
            cur: (2.0, 5.0),
        }
    }
}

impl BetaBox {
    pub fn draw(&self, rng: &mut impl Rng) -> BetaVector {
        let m_zs = rng.gen_range(self.m_zs.0..=self.m_zs.1);
        let pi_ch = rng.gen_range(self.pi_ch.0..=self.pi_ch.1);
        BetaVector {
            m_zs,
            pi_zs: pi_ch + rng.gen_range(self.pressure_span.0..=self.pressure_span.1),
            m_ch: m_zs + rng.gen_range(self.mass_span.0..=self.mass_span.1),
            pi_ch,
            cur: rng.gen_range(self.cur.0..=self.cur.1),
        }
    }
}

/// Sorts by mass flow and drops points whose mass flow ties the previous one.
pub fn to_speedline(speed: f64, mut pts: Vec<OperatingPoint>) -> Speedline {
    pts.sort_by(|a, b| a.m_dot.total_cmp(&b.m_dot));
    pts.dedup_by(|a, b| a.m_dot == b.m_dot);
    Speedline::new(speed, pts).expect("sorted finite points")
}

/// `n` noiseless points along the curve (choke and surge included).
pub fn noiseless_line(beta: &BetaVector, n: usize, speed: f64) -> Speedline {
    to_speedline(speed, sample_curve(beta, n))
}

/// `n` curve points with independent Gaussian noise of SD `sigma` added to
/// both coordinates.
pub fn noisy_line(beta: &BetaVector, n: usize, sigma: f64, speed: f64, rng: &mut impl Rng) -> Speedline {
    let pts = sample_curve(beta, n)
        .into_iter()
        .map(|p| OperatingPoint {
            m_dot: p.m_dot + sigma * rng.sample::<f64, _>(StandardNormal),
            pi: p.pi + sigma * rng.sample::<f64, _>(StandardNormal),
        })
        .collect();
    to_speedline(speed, pts)
}

/// One synthetic fitting case.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub truth: BetaVector,
    pub line: Speedline,
}

/// `count` seeded noiseless cases drawn from `bbox`.
pub fn noiseless_suite(count: usize, points: usize, bbox: &BetaBox, seed: u64) -> Vec<SyntheticCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let truth = bbox.draw(&mut rng);
            SyntheticCase {
                truth,
                line: noiseless_line(&truth, points, 1.0),
            }
        })
        .collect()
}

/// `count` seeded noisy cases drawn from `bbox`.
pub fn noisy_suite(count: usize, points: usize, sigma: f64, bbox: &BetaBox, seed: u64) -> Vec<SyntheticCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let truth = bbox.draw(&mut rng);
            let line = noisy_line(&truth, points, sigma, 1.0, &mut rng);
            SyntheticCase { truth, line }
        })
        .collect()
}

/// Beta components as polynomials in speed: `coeffs[k][j]` multiplies
/// `speed^j` for component `k` (order `m_zs, pi_zs, m_ch, pi_ch, cur`).
#[derive(Debug, Clone)]
pub struct PolynomialBetaLaw {
    pub coeffs: [Vec<f64>; 5],
}

impl PolynomialBetaLaw {
    pub fn beta_at(&self, speed: f64) -> BetaVector {
        let eval = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &a| acc * speed + a);
        BetaVector::from_array(std::array::from_fn(|k| eval(&self.coeffs[k])))
    }

    /// A smooth law over speeds in `[0, 1]` with every component of degree
    /// at most four and all betas valid on that interval.
    pub fn reference() -> Self {
        Self {
            coeffs: [
                vec![0.05, 0.30, -0.10],
                vec![1.20, 1.10, 0.40, -0.30, 0.15],
                vec![0.45, 0.50, -0.05],
                vec![0.90, 0.25, 0.10],
                vec![2.2, 1.5, -0.8, 0.4, -0.2],
            ],
        }
    }

    /// Map with one noiseless speedline per speed.
    pub fn map(&self, speeds: &[f64], points_per_line: usize) -> CompressorMap {
        let lines = speeds
            .iter()
            .map(|&s| noiseless_line(&self.beta_at(s), points_per_line, s))
            .collect();
        CompressorMap::new("synthetic", "polynomial-beta", lines).expect("increasing speeds")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_law_is_valid_on_unit_interval() {
        let law = PolynomialBetaLaw::reference();
        for i in 0..=100 {
            let b = law.beta_at(i as f64 / 100.0);
            assert!(b.is_valid(), "{b:?}");
        }
    }

    #[test]
    fn suites_are_seeded() {
        let a = noisy_suite(3, 10, 0.02, &BetaBox::default(), 5);
        let b = noisy_suite(3, 10, 0.02, &BetaBox::default(), 5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.line, y.line);
        }
    }

    #[test]
    fn noiseless_points_lie_on_curve() {
        for case in noiseless_suite(5, 20, &BetaBox::default(), 1) {
            assert_eq!(case.line.len(), 20);
            for p in case.line.points() {
                assert!(crate::model::implicit_residual(&case.truth, p).abs() < 1e-10);
            }
        }
    }
}
