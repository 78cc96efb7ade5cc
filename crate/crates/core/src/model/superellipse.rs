use std::f64::consts::FRAC_PI_2;

use super::{BetaVector, ModelError, OperatingPoint, DOMAIN_TOLERANCE};

/// `(1 - x^p)^(1/p)` for `x` in `[0, 1]`, evaluated through `expm1` so the
/// complement stays accurate when `x^p` is close to one.
pub(crate) fn complement(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let one_minus = -(p * x.ln()).exp_m1();
    one_minus.powf(1.0 / p)
}

fn normalized(value: f64, origin: f64, span: f64) -> Result<f64, ModelError> {
    let t = (value - origin) / span;
    if !t.is_finite() {
        return Err(ModelError::NonFinite("normalized coordinate"));
    }
    if !(-DOMAIN_TOLERANCE..=1.0 + DOMAIN_TOLERANCE).contains(&t) {
        let (lo, hi) = if span > 0.0 {
            (origin, origin + span)
        } else {
            (origin + span, origin)
        };
        return Err(ModelError::Domain { value, lo, hi });
    }
    Ok(t.clamp(0.0, 1.0))
}

/// Pressure ratio on the speedline at mass flow `m_dot`.
///
/// The curve runs from the surge point `(m_zs, pi_zs)` down to the choke
/// point `(m_ch, pi_ch)`:
/// `pi = pi_ch + (pi_zs - pi_ch) * (1 - u^cur)^(1/cur)` with
/// `u = (m_dot - m_zs) / (m_ch - m_zs)`.
pub fn pressure_at(beta: &BetaVector, m_dot: f64) -> Result<f64, ModelError> {
    let u = normalized(m_dot, beta.m_zs, beta.mass_span())?;
    if u == 0.0 {
        return Ok(beta.pi_zs);
    }
    if u == 1.0 {
        return Ok(beta.pi_ch);
    }
    Ok(beta.pi_ch + beta.pressure_span() * complement(u, beta.cur))
}

/// Mass flow on the speedline at pressure ratio `pi`; inverse of [`pressure_at`].
pub fn massflow_at(beta: &BetaVector, pi: f64) -> Result<f64, ModelError> {
    let v = normalized(pi, beta.pi_ch, beta.pressure_span())?;
    if v == 0.0 {
        return Ok(beta.m_ch);
    }
    if v == 1.0 {
        return Ok(beta.m_zs);
    }
    Ok(beta.m_zs + beta.mass_span() * complement(v, beta.cur))
}

/// `|u|^cur + |v|^cur - 1`; zero on the curve, negative inside.
pub fn implicit_residual(beta: &BetaVector, p: &OperatingPoint) -> f64 {
    let u = (p.m_dot - beta.m_zs) / beta.mass_span();
    let v = (p.pi - beta.pi_ch) / beta.pressure_span();
    u.abs().powf(beta.cur) + v.abs().powf(beta.cur) - 1.0
}

/// `n` curve points, choke first, from the parametric form
/// `u = cos(t)^(2/cur)`, `v = sin(t)^(2/cur)` with `t` uniform on `[0, pi/2]`.
///
/// Panics if `n < 2`.
pub fn sample_curve(beta: &BetaVector, n: usize) -> Vec<OperatingPoint> {
    assert!(n >= 2, "sample_curve needs at least two points");
    let exponent = 2.0 / beta.cur;
    (0..n)
        .map(|i| {
            if i == 0 {
                return beta.denormalize(1.0, 0.0);
            }
            if i == n - 1 {
                return beta.denormalize(0.0, 1.0);
            }
            let t = FRAC_PI_2 * i as f64 / (n - 1) as f64;
            beta.denormalize(t.cos().powf(exponent), t.sin().powf(exponent))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> BetaVector {
        BetaVector::new(0.0, 1.0, 1.0, 0.0, 2.0).unwrap()
    }

    fn shifted() -> BetaVector {
        BetaVector::new(1.0, 3.0, 4.0, 1.0, 3.0).unwrap()
    }

    #[test]
    fn pressure_examples() {
        assert_eq!(pressure_at(&unit(), 0.0).unwrap(), 1.0);
        assert!((pressure_at(&unit(), 0.6).unwrap() - 0.8).abs() < 1e-15);
        // independent check: substitute back into the implicit form
        let pi = pressure_at(&shifted(), 2.5).unwrap();
        assert!((pi - 2.912_931_182_772_389).abs() < 1e-12, "{pi}");
        let lhs = 0.5f64.powi(3) + ((pi - 1.0) / 2.0).powi(3);
        assert!((lhs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn massflow_examples() {
        assert_eq!(massflow_at(&unit(), 1.0).unwrap(), 0.0);
        assert!((massflow_at(&unit(), 0.8).unwrap() - 0.6).abs() < 1e-15);
        let pi = 1.0 + 2.0 * (1.0f64 - 0.125).powf(1.0 / 3.0);
        assert!((massflow_at(&shifted(), pi).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn endpoints_are_exact() {
        let b = shifted();
        assert_eq!(pressure_at(&b, b.m_zs).unwrap(), b.pi_zs);
        assert_eq!(pressure_at(&b, b.m_ch).unwrap(), b.pi_ch);
        assert_eq!(massflow_at(&b, b.pi_zs).unwrap(), b.m_zs);
        assert_eq!(massflow_at(&b, b.pi_ch).unwrap(), b.m_ch);
    }

    #[test]
    fn domain_errors() {
        let b = unit();
        assert!(matches!(pressure_at(&b, 1.1), Err(ModelError::Domain { .. })));
        assert!(matches!(pressure_at(&b, -0.1), Err(ModelError::Domain { .. })));
        assert!(massflow_at(&b, 1.5).is_err());
        // within slack
        assert_eq!(pressure_at(&b, 1.0 + 1e-13).unwrap(), 0.0);
    }

    #[test]
    fn implicit_residual_examples() {
        let b = unit();
        assert!(implicit_residual(&b, &OperatingPoint { m_dot: 0.6, pi: 0.8 }).abs() < 1e-15);
        assert_eq!(implicit_residual(&b, &OperatingPoint { m_dot: 0.0, pi: 0.0 }), -1.0);
        assert_eq!(implicit_residual(&b, &OperatingPoint { m_dot: 1.0, pi: 1.0 }), 1.0);
    }

    #[test]
    fn sample_curve_examples() {
        let pts = sample_curve(&unit(), 3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(pts[0], OperatingPoint { m_dot: 1.0, pi: 0.0 });
        assert!((pts[1].m_dot - h).abs() < 1e-15 && (pts[1].pi - h).abs() < 1e-15);
        assert_eq!(pts[2], OperatingPoint { m_dot: 0.0, pi: 1.0 });

        let pts = sample_curve(&unit(), 2);
        assert_eq!(pts, vec![OperatingPoint { m_dot: 1.0, pi: 0.0 }, OperatingPoint { m_dot: 0.0, pi: 1.0 }]);

        let b = BetaVector::new(1.0, 3.0, 4.0, 1.0, 4.0).unwrap();
        let pts = sample_curve(&b, 5);
        assert_eq!(pts[0], OperatingPoint { m_dot: 4.0, pi: 1.0 });
        assert_eq!(pts[4], OperatingPoint { m_dot: 1.0, pi: 3.0 });
        assert!(pts.iter().all(|p| implicit_residual(&b, p).abs() < 1e-10));
    }

    fn arb_beta() -> impl Strategy<Value = BetaVector> {
        (-2.0..2.0f64, 0.05..3.0f64, -2.0..2.0f64, 0.05..3.0f64, 1.05..20.0f64).prop_map(
            |(m_zs, dm, pi_ch, dpi, cur)| BetaVector {
                m_zs,
                pi_zs: pi_ch + dpi,
                m_ch: m_zs + dm,
                pi_ch,
                cur,
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn pressure_is_monotone(beta in arb_beta()) {
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let m = beta.m_zs + beta.mass_span() * i as f64 / 99.0;
                let pi = pressure_at(&beta, m.min(beta.m_ch)).unwrap();
                prop_assert!(pi <= prev);
                prop_assert!(pi >= beta.pi_ch && pi <= beta.pi_zs);
                prev = pi;
            }
        }

        // The inverse loses information where the curve is flat near surge
        // (u^cur below double resolution), so the round trip is checked where
        // u^cur carries at least four significant digits.
        #[test]
        fn round_trip(beta in arb_beta(), u in 0.0..=1.0f64) {
            prop_assume!(u.powf(beta.cur) >= 1e-4);
            let m = beta.m_zs + beta.mass_span() * u;
            let back = massflow_at(&beta, pressure_at(&beta, m).unwrap()).unwrap();
            prop_assert!((back - m).abs() <= 1e-10 * beta.mass_span(), "{} vs {}", back, m);
        }

        #[test]
        fn samples_lie_on_curve(beta in arb_beta(), n in 2usize..50) {
            for p in sample_curve(&beta, n) {
                prop_assert!(implicit_residual(&beta, &p).abs() < 1e-10);
            }
        }

        #[test]
        fn cur_two_is_quarter_ellipse(beta in arb_beta()) {
            let beta = BetaVector { cur: 2.0, ..beta };
            for p in sample_curve(&beta, 17) {
                let x = (p.m_dot - beta.m_zs) / beta.mass_span();
                let y = (p.pi - beta.pi_ch) / beta.pressure_span();
                prop_assert!((x * x + y * y - 1.0).abs() < 1e-10);
            }
        }
    }
}
