use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bounds, FitConfig, OptimOutcome, Params, DIM};

/// Differential weight.
pub const MUTATION: f64 = 0.8;
/// Crossover probability.
pub const CROSSOVER: f64 = 0.9;
/// Population-spread stopping rule: `sd(f) <= CONV_ATOL + CONV_RTOL * |mean(f)|`.
const CONV_RTOL: f64 = 0.01;
const CONV_ATOL: f64 = 0.0;

fn reflect(y: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    let r = if y < lo {
        lo + (lo - y)
    } else if y > hi {
        hi - (y - hi)
    } else {
        return y;
    };
    if (lo..=hi).contains(&r) {
        r
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// DE/rand/1/bin with `F = 0.8`, `CR = 0.9` and a population of
/// `cfg.de_population`. Trial components leaving the box are reflected back
/// into it. Stops on population convergence or after `cfg.de_max_iters`
/// generations.
pub fn differential_evolution<F>(f: F, bounds: &Bounds, cfg: &FitConfig, seed: u64) -> OptimOutcome
where
    F: Fn(&Params) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = cfg.de_population.max(4);
    let mut pop: Vec<Params> = (0..np)
        .map(|_| std::array::from_fn(|i| rng.gen_range(bounds.lower[i]..=bounds.upper[i])))
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(&f).collect();
    let mut evaluations = np;
    let mut converged = false;
    let mut generation = 0;

    while generation < cfg.de_max_iters {
        generation += 1;
        for i in 0..np {
            let (r1, r2, r3) = loop {
                let a = rng.gen_range(0..np);
                let b = rng.gen_range(0..np);
                let c = rng.gen_range(0..np);
                if a != i && b != i && c != i && a != b && b != c && a != c {
                    break (a, b, c);
                }
            };
            let forced = rng.gen_range(0..DIM);
            let mut trial = pop[i];
            for j in 0..DIM {
                if j == forced || rng.gen::<f64>() < CROSSOVER {
                    let y = pop[r1][j] + MUTATION * (pop[r2][j] - pop[r3][j]);
                    trial[j] = reflect(y, bounds.lower[j], bounds.upper[j], &mut rng);
                }
            }
            let ft = f(&trial);
            evaluations += 1;
            if ft <= fit[i] || fit[i].is_nan() {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
        let n = np as f64;
        let mean = fit.iter().sum::<f64>() / n;
        let sd = (fit.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd.is_finite() && sd <= CONV_ATOL + CONV_RTOL * mean.abs() {
            converged = true;
            break;
        }
    }

    let best = (0..np)
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]))
        .expect("non-empty population");
    OptimOutcome {
        x: pop[best],
        value: fit[best],
        iterations: generation,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // optimizer-level tests use plain boxes; the curvature floor only
    // applies to beta bounds
    fn cube(half: f64) -> Bounds {
        Bounds {
            lower: [-half; DIM],
            upper: [half; DIM],
        }
    }

    fn sphere(x: &Params) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_minimum() {
        let out = differential_evolution(sphere, &cube(5.0), &FitConfig::default(), 11);
        assert!(out.x.iter().all(|v| v.abs() < 1e-3), "{:?}", out.x);
    }

    #[test]
    fn constant_function_stays_in_bounds() {
        let bounds = cube(2.0);
        let cfg = FitConfig {
            de_max_iters: 20,
            ..FitConfig::default()
        };
        let out = differential_evolution(|_| 3.0, &bounds, &cfg, 1);
        assert!(bounds.contains(&out.x));
        assert_eq!(out.value, 3.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let bounds = cube(2.0);
        let cfg = FitConfig {
            de_max_iters: 50,
            ..FitConfig::default()
        };
        let a = differential_evolution(sphere, &bounds, &cfg, 42);
        let b = differential_evolution(sphere, &bounds, &cfg, 42);
        let c = differential_evolution(sphere, &bounds, &cfg, 43);
        assert_eq!(a, b);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn reflection_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(reflect(-0.5, 0.0, 1.0, &mut rng), 0.5);
        assert_eq!(reflect(1.25, 0.0, 1.0, &mut rng), 0.75);
        let r = reflect(5.0, 0.0, 1.0, &mut rng);
        assert!((0.0..=1.0).contains(&r));
    }
}
