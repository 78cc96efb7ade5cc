use super::{Bounds, FitConfig, OptimOutcome, Params, DIM};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
/// Finite-difference step as a fraction of each bound span.
const FD_STEP: f64 = 1e-7;

fn gradient<F: Fn(&Params) -> f64>(f: &F, x: &Params, fx: f64, bounds: &Bounds) -> (Params, usize) {
    let mut g = [0.0; DIM];
    let mut evals = 0;
    for i in 0..DIM {
        let h = FD_STEP * bounds.span(i);
        let mut hi = *x;
        let mut lo = *x;
        hi[i] = (x[i] + h).min(bounds.upper[i]);
        lo[i] = (x[i] - h).max(bounds.lower[i]);
        let (f_hi, f_lo) = match (hi[i] > x[i], lo[i] < x[i]) {
            (true, true) => (f(&hi), f(&lo)),
            (true, false) => (f(&hi), fx),
            (false, true) => (fx, f(&lo)),
            (false, false) => continue,
        };
        evals += (hi[i] > x[i]) as usize + (lo[i] < x[i]) as usize;
        g[i] = (f_hi - f_lo) / (hi[i] - lo[i]);
    }
    (g, evals)
}

/// Projected gradient descent with finite-difference gradients and an
/// Armijo backtracking line search along the projected path.
pub fn projected_gradient<F>(f: F, x0: &Params, bounds: &Bounds, cfg: &FitConfig) -> OptimOutcome
where
    F: Fn(&Params) -> f64,
{
    let mut x = bounds.clamp(x0);
    let mut fx = f(&x);
    let mut evaluations = 1;
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.local_max_iters {
        iterations += 1;
        let (g, n) = gradient(&f, &x, fx, bounds);
        evaluations += n;
        let pg_norm = (0..DIM)
            .map(|i| ((x[i] - g[i]).clamp(bounds.lower[i], bounds.upper[i]) - x[i]).abs())
            .fold(0.0, f64::max);
        if !pg_norm.is_finite() || pg_norm <= cfg.simplex_tolerance {
            converged = pg_norm.is_finite();
            break;
        }

        let mut accepted = None;
        let mut alpha = step * 2.0;
        while alpha > MIN_STEP {
            let trial: Params =
                std::array::from_fn(|i| (x[i] - alpha * g[i]).clamp(bounds.lower[i], bounds.upper[i]));
            let decrease: f64 = (0..DIM).map(|i| g[i] * (x[i] - trial[i])).sum();
            let ft = f(&trial);
            evaluations += 1;
            if ft <= fx - ARMIJO * decrease {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        step = alpha;
        let moved = (0..DIM).map(|i| (trial[i] - x[i]).abs()).fold(0.0, f64::max);
        let gain = fx - ft;
        x = trial;
        fx = ft;
        if moved <= cfg.simplex_tolerance && gain <= cfg.objective_tolerance {
            converged = true;
            break;
        }
    }

    OptimOutcome {
        x,
        value: fx,
        iterations,
        evaluations,
        converged,
    }
}
