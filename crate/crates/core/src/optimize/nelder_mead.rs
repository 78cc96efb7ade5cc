use super::{Bounds, FitConfig, OptimOutcome, Params, DIM};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
/// Initial simplex edge as a fraction of each bound span.
const INITIAL_STEP: f64 = 0.05;

fn lerp(from: &Params, to: &Params, t: f64) -> Params {
    std::array::from_fn(|i| from[i] + t * (to[i] - from[i]))
}

/// Nelder-Mead simplex search from `x0`.
///
/// The initial simplex steps each coordinate by 5% of its bound span
/// (inward when the step would cross the upper bound). Bounds are otherwise
/// left to the objective's penalty. Stops once both the simplex diameter
/// (max coordinate distance to the best vertex) is below
/// `cfg.simplex_tolerance` and the objective spread is below
/// `cfg.objective_tolerance`, or after `cfg.local_max_iters` iterations.
pub fn nelder_mead<F>(f: F, x0: &Params, bounds: &Bounds, cfg: &FitConfig) -> OptimOutcome
where
    F: Fn(&Params) -> f64,
{
    let mut simplex: Vec<(Params, f64)> = Vec::with_capacity(DIM + 1);
    simplex.push((*x0, f(x0)));
    for i in 0..DIM {
        let mut x = *x0;
        let step = INITIAL_STEP * bounds.span(i);
        x[i] = if x[i] + step > bounds.upper[i] { x[i] - step } else { x[i] + step };
        simplex.push((x, f(&x)));
    }
    let mut evaluations = DIM + 1;
    let mut iterations = 0;
    let mut converged = false;

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, f_best) = simplex[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = simplex[1..]
            .iter()
            .map(|(_, v)| (v - f_best).abs())
            .fold(0.0, f64::max);
        if diameter <= cfg.simplex_tolerance && spread <= cfg.objective_tolerance {
            converged = true;
            break;
        }
        if iterations >= cfg.local_max_iters {
            break;
        }
        iterations += 1;

        let centroid: Params = std::array::from_fn(|i| {
            simplex[..DIM].iter().map(|(x, _)| x[i]).sum::<f64>() / DIM as f64
        });
        let (worst, f_worst) = simplex[DIM];
        let f_second = simplex[DIM - 1].1;

        let xr = lerp(&centroid, &worst, -REFLECT);
        let fr = f(&xr);
        evaluations += 1;

        if fr < f_best {
            let xe = lerp(&centroid, &worst, -REFLECT * EXPAND);
            let fe = f(&xe);
            evaluations += 1;
            simplex[DIM] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[DIM] = (xr, fr);
            continue;
        }
        if fr < f_worst {
            let xc = lerp(&centroid, &xr, CONTRACT);
            let fc = f(&xc);
            evaluations += 1;
            if fc <= fr {
                simplex[DIM] = (xc, fc);
                continue;
            }
        } else {
            let xcc = lerp(&centroid, &worst, CONTRACT);
            let fcc = f(&xcc);
            evaluations += 1;
            if fcc < f_worst {
                simplex[DIM] = (xcc, fcc);
                continue;
            }
        }
        for vertex in simplex.iter_mut().skip(1) {
            let x = lerp(&best, &vertex.0, SHRINK);
            *vertex = (x, f(&x));
            evaluations += 1;
        }
    }

    let (x, value) = simplex[0];
    OptimOutcome {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> Bounds {
        Bounds {
            lower: [-5.0; DIM],
            upper: [5.0; DIM],
        }
    }

    fn shifted_quadratic(x: &Params) -> f64 {
        x.iter().map(|v| (v - 1.0).powi(2)).sum()
    }

    #[test]
    fn converges_on_quadratic() {
        let out = nelder_mead(shifted_quadratic, &[0.0; DIM], &bounds(), &FitConfig::default());
        assert!(out.converged);
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-8), "{:?}", out.x);
    }

    #[test]
    fn start_at_minimum_returns_start() {
        let out = nelder_mead(shifted_quadratic, &[1.0; DIM], &bounds(), &FitConfig::default());
        assert_eq!(out.x, [1.0; DIM]);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn respects_iteration_cap() {
        let cfg = FitConfig {
            local_max_iters: 3,
            ..FitConfig::default()
        };
        let out = nelder_mead(shifted_quadratic, &[0.0; DIM], &bounds(), &cfg);
        assert_eq!(out.iterations, 3);
        assert!(!out.converged);
    }

    #[test]
    fn initial_step_turns_inward_at_upper_bound() {
        // from the upper corner the simplex must still be evaluated inside
        let b = bounds();
        let seen = std::cell::RefCell::new(Vec::new());
        let f = |x: &Params| {
            seen.borrow_mut().push(*x);
            shifted_quadratic(x)
        };
        let cfg = FitConfig {
            local_max_iters: 0,
            ..FitConfig::default()
        };
        nelder_mead(f, &[5.0; DIM], &b, &cfg);
        assert!(seen.borrow().iter().all(|x| b.contains(x)));
    }
}
